"""Exact first- and second-order differentiation of scalar functions.

The workhorse is :class:`Dual2`, a forward-mode second-order dual number
carrying a value together with its gradient vector and Hessian matrix with
respect to a fixed set of seed coordinates.  One evaluation of a function
written in terms of ``Dual2`` arithmetic therefore yields machine-precision
first and second derivatives; no finite differencing is involved.

Scalar functions of a mechanical state are wrapped in :class:`ScalarFn`,
which fixes the convention used throughout the package: the function takes
``(q, qd, aux)`` where ``q`` and ``qd`` are the generalized coordinates and
velocities (``d`` entries each) and ``aux`` holds non-dynamical parameters
(masses, couplings).  Derivatives are always taken with respect to the
``2d`` dynamical inputs in the order ``[q, qd]``; ``aux`` is held constant.

A central finite-difference oracle (:func:`fd_grad`, :func:`fd_hessian`)
is provided for testing; it evaluates the function only, so it is an
independent check on the dual-number path.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError, NumericError

__all__ = [
    "Dual2",
    "ScalarFn",
    "grad_q",
    "grad_qd",
    "hess_qd_qd",
    "jac_q_of_grad_qd",
    "full_second_order",
    "fd_grad",
    "fd_hessian",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "softplus",
]


class Dual2:
    """Second-order dual number: value, gradient and Hessian w.r.t. m seeds.

    ``h`` is kept exactly symmetric by construction (all update rules are
    built from symmetric outer products).
    """

    __slots__ = ("val", "g", "h")

    def __init__(self, val, g, h):
        self.val = val
        self.g = g
        self.h = h

    @staticmethod
    def constant(val, m):
        return Dual2(float(val), np.zeros(m), np.zeros((m, m)))

    @staticmethod
    def seed(val, index, m):
        """A seed variable: unit first derivative along ``index``."""
        g = np.zeros(m)
        g[index] = 1.0
        return Dual2(float(val), g, np.zeros((m, m)))

    def __repr__(self):
        return f"Dual2({self.val!r}, g={self.g!r})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val + other.val, self.g + other.g, self.h + other.h)
        return Dual2(self.val + other, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val - other.val, self.g - other.g, self.h - other.h)
        return Dual2(self.val - other, self.g, self.h)

    def __rsub__(self, other):
        return Dual2(other - self.val, -self.g, -self.h)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            cross = np.outer(self.g, other.g)
            return Dual2(
                self.val * other.val,
                self.g * other.val + other.g * self.val,
                self.h * other.val + other.h * self.val + cross + cross.T,
            )
        return Dual2(self.val * other, self.g * other, self.h * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            b = other.val
            cross = np.outer(self.g, other.g)
            return Dual2(
                self.val / b,
                self.g / b - self.val * other.g / b**2,
                self.h / b
                - (cross + cross.T) / b**2
                - self.val * other.h / b**2
                + 2.0 * self.val * np.outer(other.g, other.g) / b**3,
            )
        return Dual2(self.val / other, self.g / other, self.h / other)

    def __rtruediv__(self, other):
        b = self.val
        return Dual2(
            other / b,
            -other * self.g / b**2,
            -other * self.h / b**2 + 2.0 * other * np.outer(self.g, self.g) / b**3,
        )

    def __pow__(self, p):
        if isinstance(p, Dual2):
            raise TypeError("dual exponents are not supported; use exp/log")
        v = self.val
        if p == 2:  # common case, avoid pow domain fuss
            return _chain(self, v * v, 2.0 * v, 2.0)
        return _chain(self, v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __neg__(self):
        return Dual2(-self.val, -self.g, -self.h)

    def __pos__(self):
        return self

    def __float__(self):
        return float(self.val)


def _chain(u, f0, f1, f2):
    """Compose a scalar map f with known f(u), f'(u), f''(u) onto a dual."""
    return Dual2(f0, f1 * u.g, f1 * u.h + f2 * np.outer(u.g, u.g))


# -- math functions that accept floats or Dual2 -----------------------


def sin(x):
    if isinstance(x, Dual2):
        s, c = math.sin(x.val), math.cos(x.val)
        return _chain(x, s, c, -s)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual2):
        s, c = math.sin(x.val), math.cos(x.val)
        return _chain(x, c, -s, -c)
    return math.cos(x)


def exp(x):
    if isinstance(x, Dual2):
        e = math.exp(x.val)
        return _chain(x, e, e, e)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual2):
        v = x.val
        return _chain(x, math.log(v), 1.0 / v, -1.0 / v**2)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Dual2):
        r = math.sqrt(x.val)
        return _chain(x, r, 0.5 / r, -0.25 / (r * x.val))
    return math.sqrt(x)


def _softplus_parts(z):
    """(softplus(z), sigmoid(z)) evaluated stably for large |z|."""
    if z > 0:
        return z + math.log1p(math.exp(-z)), 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return math.log1p(e), e / (1.0 + e)


def softplus(x):
    if isinstance(x, Dual2):
        sp, sig = _softplus_parts(x.val)
        return _chain(x, sp, sig, sig * (1.0 - sig))
    return _softplus_parts(x)[0]


# -- scalar function abstraction ---------------------------------------


class ScalarFn:
    """A twice-differentiable scalar function of (q, qd) with aux parameters.

    ``fn(q, qd, aux)`` must be written so that it evaluates on plain floats
    and on :class:`Dual2` entries alike (use the math helpers from this
    module instead of ``math``/``numpy`` ufuncs).  ``d`` is the number of
    degrees of freedom; ``k`` the number of aux parameters.

    Subclasses may override :meth:`second_order` / :meth:`second_order_batch`
    with faster equivalents (the neural-network adapter does); the defaults
    propagate dual numbers through ``fn``.
    """

    def __init__(self, fn, d, k=0, name=None):
        if d < 1 or k < 0:
            raise InvalidArgumentError(f"bad arity: d={d}, k={k}")
        self._fn = fn
        self.d = int(d)
        self.k = int(k)
        self.name = name or getattr(fn, "__name__", "scalar_fn")

    def eval(self, q, qd, aux=()):
        return self._fn(q, qd, aux)

    def value(self, q, qd, aux=()):
        q, qd, aux = _validate_point(self, q, qd, aux)
        out = float(self.eval(q, qd, aux))
        if not math.isfinite(out):
            raise NumericError(f"{self.name} returned a non-finite value")
        return out

    def second_order(self, q, qd, aux=()):
        """Return (value, gradient[2d], hessian[2d, 2d]) at one point."""
        q, qd, aux = _validate_point(self, q, qd, aux)
        d, m = self.d, 2 * self.d
        dq = [Dual2.seed(q[i], i, m) for i in range(d)]
        dqd = [Dual2.seed(qd[i], d + i, m) for i in range(d)]
        out = self.eval(dq, dqd, aux)
        if not isinstance(out, Dual2):  # constant w.r.t. the inputs
            out = Dual2.constant(out, m)
        return float(out.val), np.asarray(out.g, dtype=float), np.asarray(out.h, dtype=float)

    def second_order_batch(self, X, aux=None):
        """Vectorized :meth:`second_order` over rows of X = [q | qd]."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, m = X.shape
        if m != 2 * self.d:
            raise InvalidArgumentError(
                f"{self.name}: expected rows of length {2 * self.d}, got {m}"
            )
        if aux is None:
            aux = np.zeros((B, self.k))
        aux = np.asarray(aux, dtype=float)
        vals = np.empty(B)
        G = np.empty((B, m))
        H = np.empty((B, m, m))
        for b in range(B):
            vals[b], G[b], H[b] = self.second_order(X[b, : self.d], X[b, self.d :], aux[b])
        return vals, G, H


def _validate_point(f, q, qd, aux):
    q = np.asarray(q, dtype=float).ravel()
    qd = np.asarray(qd, dtype=float).ravel()
    aux = np.asarray(aux, dtype=float).ravel()
    if q.shape != (f.d,) or qd.shape != (f.d,):
        raise InvalidArgumentError(
            f"{f.name}: expected q and qd of length {f.d}, got {q.shape} and {qd.shape}"
        )
    if aux.shape != (f.k,):
        raise InvalidArgumentError(f"{f.name}: expected {f.k} aux values, got {aux.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd)) and np.all(np.isfinite(aux))):
        raise InvalidArgumentError(f"{f.name}: non-finite input")
    return q, qd, aux


def _check_finite(arr, what):
    bad = np.flatnonzero(~np.isfinite(np.asarray(arr).ravel()))
    if bad.size:
        raise NumericError(f"non-finite {what}", index=int(bad[0]))


# -- derivative operations ---------------------------------------------


def full_second_order(f, q, qd, aux=()):
    """Value, full gradient and full Hessian w.r.t. the inputs [q, qd]."""
    val, g, h = f.second_order(q, qd, aux)
    if not math.isfinite(val):
        raise NumericError(f"{f.name}: non-finite value")
    _check_finite(g, f"gradient of {f.name}")
    _check_finite(h, f"hessian of {f.name}")
    return val, g, h


def grad_q(f, q, qd, aux=()):
    """Exact partial derivatives of f with respect to the coordinates q."""
    _, g, _ = full_second_order(f, q, qd, aux)
    return g[: f.d]


def grad_qd(f, q, qd, aux=()):
    """Exact partial derivatives with respect to the velocities qd.

    For a Lagrangian this is the canonical momentum vector.
    """
    _, g, _ = full_second_order(f, q, qd, aux)
    return g[f.d :]


def hess_qd_qd(f, q, qd, aux=()):
    """Velocity Hessian, symmetrized as (M + M^T)/2 before returning."""
    _, _, h = full_second_order(f, q, qd, aux)
    block = h[f.d :, f.d :]
    return 0.5 * (block + block.T)


def jac_q_of_grad_qd(f, q, qd, aux=()):
    """Mixed second-derivative block with (i, j) entry d2f/(dq_j dqd_i)."""
    _, _, h = full_second_order(f, q, qd, aux)
    return h[f.d :, : f.d].copy()


# -- finite-difference oracle ------------------------------------------


def _eval_x(f, x, aux):
    d = f.d
    return float(f.eval(x[:d], x[d:], aux))


def fd_grad(f, q, qd, aux=(), step=1e-5):
    """Central finite-difference gradient over [q, qd]; error O(step^2)."""
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    q, qd, aux = _validate_point(f, q, qd, aux)
    x = np.concatenate([q, qd])
    m = x.size
    out = np.empty(m)
    for i in range(m):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (_eval_x(f, xp, aux) - _eval_x(f, xm, aux)) / (2.0 * step)
    return out


def fd_hessian(f, q, qd, aux=(), step=1e-5):
    """Central finite-difference Hessian over [q, qd]; error O(step^2)."""
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    q, qd, aux = _validate_point(f, q, qd, aux)
    x = np.concatenate([q, qd])
    m = x.size
    h = np.empty((m, m))
    f0 = _eval_x(f, x, aux)
    for i in range(m):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        h[i, i] = (_eval_x(f, xp, aux) + _eval_x(f, xm, aux) - 2.0 * f0) / step**2
    for i in range(m):
        for j in range(i + 1, m):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[i, j]] += step
            xmm[[i, j]] -= step
            xpm[i] += step
            xpm[j] -= step
            xmp[i] -= step
            xmp[j] += step
            val = (
                _eval_x(f, xpp, aux)
                - _eval_x(f, xpm, aux)
                - _eval_x(f, xmp, aux)
                + _eval_x(f, xmm, aux)
            ) / (4.0 * step**2)
            h[i, j] = val
            h[j, i] = val
    return h
