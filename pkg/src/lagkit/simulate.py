"""Fixed-step RK4 integration, rollouts and training-set generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import systems
from .dynamics import State
from .errors import InvalidArgumentError, NumericError

__all__ = [
    "Trajectory",
    "Sample",
    "rk4_step",
    "rollout",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "save_trajectory",
]

# Wave training states are harvested from short rollouts of the analytic
# dynamics rather than sampled i.i.d.; these fix the harvesting grid.
WAVE_DATA_DT = 1e-3
WAVE_STATES_PER_TRAJ = 100


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[State]
    energies: np.ndarray | None = None

    def coords(self):
        return np.stack([s.q for s in self.states])

    def velocities(self):
        return np.stack([s.qd for s in self.states])


@dataclass(frozen=True)
class Sample:
    """One supervised example: a state and its true acceleration."""

    state: State
    qdd_true: np.ndarray
    aux: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "qdd_true", np.asarray(self.qdd_true, dtype=float).ravel())
        object.__setattr__(self, "aux", np.asarray(self.aux, dtype=float).ravel())
        if self.qdd_true.shape != self.state.q.shape:
            raise InvalidArgumentError("qdd_true length must match the state dof")
        if not np.all(np.isfinite(self.qdd_true)):
            raise InvalidArgumentError("non-finite target acceleration")


def rk4_step(accel, s: State, dt):
    """Classical Runge-Kutta step of (q, qd)' = (qd, accel(q, qd))."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    q, v = s.q, s.qd

    def f(qi, vi):
        a = np.asarray(accel(State(qi, vi)), dtype=float)
        if not np.all(np.isfinite(a)):
            raise NumericError(
                "non-finite acceleration during RK4 step",
                index=int(np.flatnonzero(~np.isfinite(a))[0]),
            )
        return a

    k1v = f(q, v)
    k2v = f(q + 0.5 * dt * v, v + 0.5 * dt * k1v)
    q2 = q + 0.5 * dt * (v + 0.5 * dt * k1v)
    k3v = f(q2, v + 0.5 * dt * k2v)
    q3 = q + dt * (v + 0.5 * dt * k2v)
    k4v = f(q3, v + dt * k3v)
    qn = q + dt * v + dt**2 / 6.0 * (k1v + k2v + k3v)
    vn = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return State(qn, vn)


def rollout(accel, s0: State, dt, steps, energy_fn=None):
    """Iterate :func:`rk4_step`; returns steps+1 states including s0."""
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    states = [s0]
    s = s0
    for i in range(steps):
        try:
            s = rk4_step(accel, s, dt)
        except NumericError as exc:
            raise NumericError(f"rollout diverged at step {i + 1}: {exc}", index=i + 1)
        states.append(s)
    times = dt * np.arange(steps + 1)
    energies = None
    if energy_fn is not None:
        energies = np.array([energy_fn(s) for s in states])
    return Trajectory(times, states, energies)


def _sample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_dataset(spec, count, seed):
    """Instantaneous-acceleration samples at random states.

    Particle systems draw i.i.d. states from the system's initial-state
    distribution.  The wave system instead harvests states from short
    analytic rollouts of random smooth fields, WAVE_STATES_PER_TRAJ per
    trajectory.  Each sample has its own PRNG stream keyed by
    (seed, index), so generation order does not affect the result.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    if spec.name == "wave1d":
        return _generate_wave_dataset(spec, count, seed)
    samples = []
    for i in range(count):
        state, aux = systems.sample_initial(spec, _sample_rng(seed, i))
        samples.append(Sample(state, systems.closed_form_accel(spec, state, aux), aux))
    return samples


def _generate_wave_dataset(spec, count, seed):
    accel = lambda s: systems.closed_form_accel(spec, s)
    samples = []
    traj_index = 0
    while len(samples) < count:
        phi, phid = systems.sample_wave_field(spec.dof, _sample_rng(seed, traj_index))
        traj = rollout(accel, State(phi, phid), WAVE_DATA_DT, WAVE_STATES_PER_TRAJ - 1)
        for s in traj.states:
            samples.append(Sample(s, systems.closed_form_accel(spec, s)))
            if len(samples) == count:
                break
        traj_index += 1
    return samples


# -- file formats ----------------------------------------------------------


def save_dataset(samples, path):
    """JSON-lines, one sample per line: {q, qd, qdd, aux}."""
    with open(path, "w") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "q": s.state.q.tolist(),
                        "qd": s.state.qd.tolist(),
                        "qdd": s.qdd_true.tolist(),
                        "aux": s.aux.tolist(),
                    }
                )
            )
            fh.write("\n")


def load_dataset(path):
    samples = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                samples.append(
                    Sample(State(doc["q"], doc["qd"]), doc["qdd"], doc.get("aux", []))
                )
            except (KeyError, ValueError) as exc:
                raise InvalidArgumentError(f"{path}:{line_no}: bad sample ({exc})") from exc
    return samples


def save_trajectory(traj: Trajectory, path):
    """CSV with header t, q1..qd, qd1..qdd, E (E is nan when not computed)."""
    d = traj.states[0].dof
    head = (
        "t,"
        + ",".join(f"q{i + 1}" for i in range(d))
        + ","
        + ",".join(f"qd{i + 1}" for i in range(d))
        + ",E"
    )
    e = traj.energies if traj.energies is not None else np.full(len(traj.states), np.nan)
    body = np.column_stack([traj.times, traj.coords(), traj.velocities(), e])
    np.savetxt(path, body, delimiter=",", header=head, comments="")
