"""Accelerations from a black-box Lagrangian, and minimal Hamiltonian flow.

For a scalar function L(q, qd) the equations of motion are solved for the
accelerations as

    qdd = pinv(d2L/dqd dqd) . [ dL/dq - (d2L/dq dqd) qd ]

The Moore-Penrose pseudoinverse (SVD with a relative singular-value
cutoff) replaces the plain inverse so that rank-deficient velocity
Hessians yield the minimum-norm solution instead of an error; such cases
are flagged with :class:`DegenerateHessianWarning`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import full_second_order, grad_q
from .errors import DegenerateHessianWarning, InvalidArgumentError, NumericError

__all__ = ["State", "PinvConfig", "lnn_accel", "lnn_accel_info", "hnn_rhs", "energy"]


@dataclass(frozen=True)
class State:
    """Generalized coordinates and velocities of a d-dof system."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        qd = np.asarray(self.qd, dtype=float).ravel()
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)
        if q.shape != qd.shape:
            raise InvalidArgumentError(f"q and qd lengths differ: {q.shape} vs {qd.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise InvalidArgumentError("non-finite state")

    @property
    def dof(self):
        return self.q.size


@dataclass(frozen=True)
class PinvConfig:
    """Relative singular-value cutoff for the pseudoinverse solve."""

    rcond: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.rcond < 1.0):
            raise InvalidArgumentError(f"rcond must be in (0, 1), got {self.rcond}")


DEFAULT_PINV = PinvConfig()


def pinv_solve(A, rhs, rcond):
    """Minimum-norm solution of A x = rhs via SVD; returns (x, degenerate)."""
    U, s, Vt = np.linalg.svd(A, hermitian=True)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[1]), True
    keep = s > rcond * s[0]
    x = Vt[keep].T @ ((U[:, keep].T @ rhs) / s[keep])
    return x, bool(np.count_nonzero(keep) < s.size)


def accel_from_derivatives(g, h, qd, rcond):
    """Acceleration from the full input gradient/Hessian of L at one state.

    g has length 2d ([dL/dq, dL/dqd]); h is the (2d, 2d) input Hessian.
    The velocity Hessian block is symmetrized before the solve.
    """
    d = qd.size
    A = h[d:, d:]
    A = 0.5 * (A + A.T)
    rhs = g[:d] - h[d:, :d] @ qd
    return pinv_solve(A, rhs, rcond)


def lnn_accel_info(L, s: State, aux=(), cfg: PinvConfig = DEFAULT_PINV):
    """Like :func:`lnn_accel` but also returns the degenerate-Hessian flag."""
    _, g, h = full_second_order(L, s.q, s.qd, aux)
    qdd, degenerate = accel_from_derivatives(g, h, s.qd, cfg.rcond)
    if not np.all(np.isfinite(qdd)):
        raise NumericError("non-finite acceleration", index=int(np.flatnonzero(~np.isfinite(qdd))[0]))
    return qdd, degenerate


def lnn_accel(L, s: State, aux=(), cfg: PinvConfig = DEFAULT_PINV):
    """Acceleration of the system whose Lagrangian is the scalar function L."""
    qdd, degenerate = lnn_accel_info(L, s, aux, cfg)
    if degenerate:
        warnings.warn(
            "velocity Hessian is rank deficient; returning minimum-norm acceleration",
            DegenerateHessianWarning,
            stacklevel=2,
        )
    return qdd


def hnn_rhs(H, q, p, aux=()):
    """Hamilton's equations (qdot, pdot) = (dH/dp, -dH/dq) for a scalar H.

    H is a ScalarFn whose (q, qd) slots are read as (q, p).
    """
    _, g, _ = full_second_order(H, q, p, aux)
    d = H.d
    return g[d:].copy(), -g[:d]


def energy(L, s: State, aux=()):
    """Legendre-transform energy qd . dL/dqd - L of a Lagrangian."""
    val, g, _ = full_second_order(L, s.q, s.qd, aux)
    return float(s.qd @ g[s.dof :] - val)
