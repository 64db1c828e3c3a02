"""Analytic benchmark systems: Lagrangians, closed-form oracles, energies.

Each system provides an analytic Lagrangian (as a :class:`ScalarFn`), a
hand-derived closed-form acceleration, and a conserved energy.  The closed
forms were derived on paper from the equations of motion - deliberately
not by running the generic acceleration solve - so they serve as
independent oracles for it.

Systems
-------
ball
    Free fall in a plane: L = m(qd1^2 + qd2^2)/2 - m g q1, aux = (m, g).
double_pendulum
    Unit masses and arm lengths, angles measured from the downward
    vertical:  T = t1d^2 + t2d^2/2 + t1d t2d cos(t1 - t2),
    V = -2 g cos t1 - g cos t2.
relativistic
    One-dimensional particle in a uniform potential with
    L = (1 - qd^2)^(-1/2) - 1 + g q, aux = (g,).  Its canonical momentum
    is qd (1 - qd^2)^(-3/2).
wave1d
    n field values on a periodic unit-length grid; the Lagrangian is a
    density summed over 3-point stencils,
    density = phid_i^2 - ((phi_{i+1} - phi_{i-1}) / (2 dx))^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ScalarFn, cos, sin
from .dynamics import State
from .errors import InvalidArgumentError

__all__ = [
    "SystemSpec",
    "ball",
    "double_pendulum",
    "relativistic",
    "wave1d",
    "default_aux",
    "lagrangian",
    "closed_form_accel",
    "true_energy",
    "to_canonical",
    "from_canonical",
    "canonical_rhs",
    "sample_initial",
    "max_potential_energy",
    "wave_density",
    "sample_wave_field",
]

_NAMES = ("ball", "double_pendulum", "relativistic", "wave1d")


@dataclass(frozen=True)
class SystemSpec:
    name: str
    params: tuple
    dof: int

    def __post_init__(self):
        if self.name not in _NAMES:
            raise InvalidArgumentError(f"unknown system {self.name!r}")
        if not all(np.isfinite(self.params)):
            raise InvalidArgumentError("non-finite system parameters")


def ball(m=1.0, g=9.8):
    if m <= 0:
        raise InvalidArgumentError("mass must be positive")
    return SystemSpec("ball", (float(m), float(g)), 2)


def double_pendulum(g=9.8):
    return SystemSpec("double_pendulum", (float(g),), 2)


def relativistic(g=1.0):
    return SystemSpec("relativistic", (float(g),), 1)


def wave1d(n=100, c=1.0, dx=None):
    if n < 3:
        raise InvalidArgumentError("grid needs at least 3 points")
    if c != 1.0:
        raise InvalidArgumentError("only unit wave speed is supported")
    if dx is None:
        dx = 1.0 / n
    if dx <= 0:
        raise InvalidArgumentError("dx must be positive")
    return SystemSpec("wave1d", (float(c), float(dx)), int(n))


def default_aux(spec):
    """Aux vector the system's ScalarFn expects (empty when baked in)."""
    if spec.name == "ball":
        return np.array(spec.params)
    if spec.name == "relativistic":
        return np.array(spec.params)
    return np.zeros(0)


# -- Lagrangians ---------------------------------------------------------


def lagrangian(spec) -> ScalarFn:
    if spec.name == "ball":

        def ball_lag(q, qd, aux):
            m, g = float(aux[0]), float(aux[1])
            return 0.5 * m * (qd[0] ** 2 + qd[1] ** 2) - m * g * q[0]

        return ScalarFn(ball_lag, d=2, k=2, name="ball")

    if spec.name == "double_pendulum":
        (g,) = spec.params

        def dp_lag(q, qd, aux):
            t = qd[0] ** 2 + 0.5 * qd[1] ** 2 + qd[0] * qd[1] * cos(q[0] - q[1])
            v = -2.0 * g * cos(q[0]) - g * cos(q[1])
            return t - v

        return ScalarFn(dp_lag, d=2, k=0, name="double_pendulum")

    if spec.name == "relativistic":

        def rel_lag(q, qd, aux):
            g = float(aux[0])
            return (1.0 - qd[0] ** 2) ** -0.5 - 1.0 + g * q[0]

        return ScalarFn(rel_lag, d=1, k=1, name="relativistic")

    if spec.name == "wave1d":
        n = spec.dof
        density = wave_density(spec.params[1])

        def total(q, qd, aux):
            out = 0.0
            for i in range(n):
                jm, jp = (i - 1) % n, (i + 1) % n
                out = out + density.eval(
                    (q[jm], q[i], q[jp]), (qd[jm], qd[i], qd[jp]), ()
                )
            return out

        return ScalarFn(total, d=n, k=0, name="wave1d_total")

    raise InvalidArgumentError(f"unknown system {spec.name!r}")


def wave_density(dx) -> ScalarFn:
    """Per-site Lagrangian density over a (left, center, right) stencil."""
    inv2dx = 1.0 / (2.0 * dx)

    def density(q, qd, aux):
        return qd[1] ** 2 - ((q[2] - q[0]) * inv2dx) ** 2

    return ScalarFn(density, d=3, k=0, name="wave_density")


# -- closed-form oracles -------------------------------------------------


def closed_form_accel(spec, s: State, aux=None):
    """Hand-derived acceleration; the independent oracle for the EL solve."""
    aux = default_aux(spec) if aux is None else np.asarray(aux, dtype=float)
    _check_state(spec, s)

    if spec.name == "ball":
        g = aux[1]
        return np.array([-g, 0.0])

    if spec.name == "double_pendulum":
        # Joint equations: 2*a1 + c*a2 = -2 g sin t1 - sn*w2^2
        #                  c*a1 +   a2 =  sn*w1^2 - g sin t2
        (g,) = spec.params
        t1, t2 = s.q
        w1, w2 = s.qd
        c = np.cos(t1 - t2)
        sn = np.sin(t1 - t2)
        b1 = -2.0 * g * np.sin(t1) - sn * w2**2
        b2 = sn * w1**2 - g * np.sin(t2)
        det = 2.0 - c**2
        return np.array([(b1 - c * b2) / det, (2.0 * b2 - c * b1) / det])

    if spec.name == "relativistic":
        g = aux[0]
        v = s.qd[0]
        if abs(v) >= 1.0:
            raise InvalidArgumentError(f"superluminal speed |qd| = {abs(v)} >= 1")
        return np.array([g * (1.0 - v**2) ** 2.5 / (1.0 + 2.0 * v**2)])

    if spec.name == "wave1d":
        # The central-difference density couples next-nearest neighbours,
        # so its exact equation of motion is the Laplacian at spacing 2*dx.
        dx = spec.params[1]
        phi = s.q
        return (np.roll(phi, -2) - 2.0 * phi + np.roll(phi, 2)) / (4.0 * dx**2)

    raise InvalidArgumentError(f"unknown system {spec.name!r}")


def true_energy(spec, s: State, aux=None):
    """Conserved energy (the Legendre transform of the Lagrangian)."""
    aux = default_aux(spec) if aux is None else np.asarray(aux, dtype=float)
    _check_state(spec, s)

    if spec.name == "ball":
        m, g = aux
        return float(0.5 * m * (s.qd @ s.qd) + m * g * s.q[0])

    if spec.name == "double_pendulum":
        (g,) = spec.params
        t1, t2 = s.q
        w1, w2 = s.qd
        t = w1**2 + 0.5 * w2**2 + w1 * w2 * np.cos(t1 - t2)
        v = -2.0 * g * np.cos(t1) - g * np.cos(t2)
        return float(t + v)

    if spec.name == "relativistic":
        g = aux[0]
        v = s.qd[0]
        if abs(v) >= 1.0:
            raise InvalidArgumentError(f"superluminal speed |qd| = {abs(v)} >= 1")
        return float((2.0 * v**2 - 1.0) * (1.0 - v**2) ** -1.5 + 1.0 - g * s.q[0])

    if spec.name == "wave1d":
        dx = spec.params[1]
        grad = (np.roll(s.q, -1) - np.roll(s.q, 1)) / (2.0 * dx)
        return float(np.sum(s.qd**2 + grad**2))

    raise InvalidArgumentError(f"unknown system {spec.name!r}")


# -- canonical coordinates -----------------------------------------------


def to_canonical(spec, s: State, aux=None):
    """Map (q, qd) to (q, p) with p = dL/dqd."""
    aux = default_aux(spec) if aux is None else np.asarray(aux, dtype=float)
    _check_state(spec, s)
    if spec.name == "relativistic":
        v = s.qd[0]
        if abs(v) >= 1.0:
            raise InvalidArgumentError("superluminal state has no momentum")
        return s.q.copy(), np.array([v * (1.0 - v**2) ** -1.5])
    if spec.name == "double_pendulum":
        return s.q.copy(), _dp_mass_matrix(s.q) @ s.qd
    raise InvalidArgumentError(f"no canonical map for {spec.name!r}")


def from_canonical(spec, q, p, aux=None):
    """Invert :func:`to_canonical`; bisection for the momentum map."""
    q = np.asarray(q, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if spec.name == "relativistic":
        return State(q, np.array([_invert_rel_momentum(p[0])]))
    if spec.name == "double_pendulum":
        return State(q, np.linalg.solve(_dp_mass_matrix(q), p))
    raise InvalidArgumentError(f"no canonical map for {spec.name!r}")


def canonical_rhs(spec, s: State, aux=None):
    """True (qdot, pdot) at a state: qdot = qd, pdot = dL/dq."""
    aux = default_aux(spec) if aux is None else np.asarray(aux, dtype=float)
    _check_state(spec, s)
    if spec.name == "relativistic":
        return s.qd.copy(), np.array([aux[0]])
    if spec.name == "double_pendulum":
        (g,) = spec.params
        t1, t2 = s.q
        w1, w2 = s.qd
        sn = np.sin(t1 - t2)
        pdot = np.array(
            [-w1 * w2 * sn - 2.0 * g * np.sin(t1), w1 * w2 * sn - g * np.sin(t2)]
        )
        return s.qd.copy(), pdot
    raise InvalidArgumentError(f"no canonical map for {spec.name!r}")


def _dp_mass_matrix(q):
    c = np.cos(q[0] - q[1])
    return np.array([[2.0, c], [c, 1.0]])


def _invert_rel_momentum(p, tol=1e-14):
    """Solve p = v (1 - v^2)^(-3/2) for v in (-1, 1); p(v) is monotone."""
    lo, hi = -1.0 + 1e-12, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * (1.0 - mid**2) ** -1.5 < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# -- initial conditions and scales ----------------------------------------


def sample_initial(spec, rng):
    """One random state plus its aux vector, from the system's distribution."""
    if spec.name == "ball":
        return State(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)), np.array(spec.params)
    if spec.name == "double_pendulum":
        return State(rng.uniform(-np.pi, np.pi, 2), rng.uniform(-1, 1, 2)), np.zeros(0)
    if spec.name == "relativistic":
        g = rng.uniform(0.5, 2.0)
        return (
            State(rng.uniform(-1, 1, 1), rng.uniform(-0.9, 0.9, 1)),
            np.array([g]),
        )
    if spec.name == "wave1d":
        phi, phid = sample_wave_field(spec.dof, rng)
        return State(phi, phid), np.zeros(0)
    raise InvalidArgumentError(f"unknown system {spec.name!r}")


def sample_wave_field(n, rng, max_modes=3):
    """Random smooth periodic field: a few Fourier modes, unit amplitude.

    Mode amplitudes fall off as 1/k^2 and each mode travels left or right
    at the unit wave speed, fixing the initial rates.  The field is
    rescaled so max|phi| = 1.
    """
    x = np.arange(n) / n
    n_modes = int(rng.integers(1, max_modes + 1))
    ks = rng.choice(np.arange(1, max_modes + 1), size=n_modes, replace=False)
    phi = np.zeros(n)
    phid = np.zeros(n)
    for k in ks:
        amp = rng.uniform(0.3, 1.0) / k**2
        phase = rng.uniform(0.0, 2.0 * np.pi)
        direction = rng.choice([-1.0, 1.0])
        omega = 2.0 * np.pi * k
        phi += amp * np.sin(omega * x + phase)
        phid += -direction * amp * omega * np.cos(omega * x + phase)
    scale = np.max(np.abs(phi))
    if scale > 0:
        phi /= scale
        phid /= scale
    return phi, phid


def max_potential_energy(spec):
    """Potential-energy span used to normalize energy-error metrics."""
    if spec.name == "double_pendulum":
        return 6.0 * spec.params[0]  # both arms up minus hanging
    if spec.name == "ball":
        m, g = spec.params
        return 2.0 * m * g  # q1 span of the sampling box
    if spec.name == "relativistic":
        return 2.0 * spec.params[0]  # q span of the sampling box
    if spec.name == "wave1d":
        dx = spec.params[1]
        phi = np.sin(2.0 * np.pi * np.arange(spec.dof) / spec.dof)
        grad = (np.roll(phi, -1) - np.roll(phi, 1)) / (2.0 * dx)
        return float(np.sum(grad**2))
    raise InvalidArgumentError(f"unknown system {spec.name!r}")


def _check_state(spec, s):
    if s.dof != spec.dof:
        raise InvalidArgumentError(f"{spec.name} expects dof {spec.dof}, got {s.dof}")
