"""Lagrangian-density dynamics on a periodic 1D grid.

A scalar density is evaluated on every 3-point stencil
(phi_{i-1}, phi_i, phi_{i+1}, phid_{i-1}, phid_i, phid_{i+1}) and summed
into the total Lagrangian of the grid.  Because each site only couples to
its neighbours, the velocity Hessian of the total is cyclic pentadiagonal
(bandwidth 2 plus periodic corners), and the acceleration solve runs in
O(n): a banded LU on the band plus a rank-4 Woodbury correction for the
corners.  A dense pseudoinverse fallback covers small grids and
rank-deficient systems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .dynamics import DEFAULT_PINV, PinvConfig, pinv_solve
from .errors import DegenerateHessianWarning, InvalidArgumentError, NumericError

__all__ = [
    "GridState",
    "CyclicBanded",
    "total_lagrangian",
    "stencil_hessian",
    "flgn_accel",
    "flgn_accel_info",
    "grid_energy",
    "local_derivatives",
    "stencil_inputs",
    "save_grid_trajectory",
]

DENSE_CUTOFF = 16  # below this the dense pseudoinverse is used outright
_SLOT = np.array([-1, 0, 1])  # grid offsets of the three stencil slots


@dataclass(frozen=True)
class GridState:
    """Field values and rates on an n-point periodic grid with spacing dx."""

    phi: np.ndarray
    phid: np.ndarray
    dx: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).ravel()
        phid = np.asarray(self.phid, dtype=float).ravel()
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phid", phid)
        if phi.size < 3 or phi.shape != phid.shape:
            raise InvalidArgumentError("need matching phi/phid with n >= 3")
        if self.dx <= 0:
            raise InvalidArgumentError("dx must be positive")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(phid))):
            raise InvalidArgumentError("non-finite grid state")

    @property
    def n(self):
        return self.phi.size


@dataclass
class CyclicBanded:
    """Cyclic banded matrix stored as five cyclic diagonals.

    ``diags[2 + o, c]`` holds entry A[(c + o) mod n, c] for offsets
    o in {-2, ..., 2}; the periodic wrap entries live in the same storage.
    """

    diags: np.ndarray  # shape (5, n)

    @property
    def n(self):
        return self.diags.shape[1]

    def to_dense(self):
        n = self.n
        A = np.zeros((n, n))
        cols = np.arange(n)
        for o in range(-2, 3):
            A[(cols + o) % n, cols] += self.diags[2 + o]
        return A

    def matvec(self, x):
        out = np.zeros_like(x)
        for o in range(-2, 3):
            out += np.roll(self.diags[2 + o] * x, o)
        return out


# -- stencil evaluation ---------------------------------------------------


def stencil_inputs(phi, phid):
    """(n, 6) matrix of density inputs, one row per stencil."""
    cols = [np.roll(phi, 1), phi, np.roll(phi, -1), np.roll(phid, 1), phid, np.roll(phid, -1)]
    return np.stack(cols, axis=-1)


def local_derivatives(D, g: GridState):
    """Density value, gradient and Hessian on every stencil of the grid."""
    if D.d != 3 or D.k != 0:
        raise InvalidArgumentError("density must take a 3-site stencil and no aux")
    X = stencil_inputs(g.phi, g.phid)
    try:
        return D.second_order_batch(X)
    except NumericError as exc:
        raise NumericError(f"density derivatives failed at stencil {exc.index}", exc.index)


def total_lagrangian(D, g: GridState):
    """Sum of the density over all n periodic stencils."""
    X = stencil_inputs(g.phi, g.phid)
    total = 0.0
    for i in range(g.n):
        val = float(D.eval(X[i, :3], X[i, 3:], ()))
        if not np.isfinite(val):
            raise NumericError(f"non-finite density at stencil {i}", index=i)
        total += val
    return total


# -- assembly -------------------------------------------------------------


def _rows(n):
    return (np.arange(n)[:, None] + _SLOT[None, :]) % n


def assemble_velocity_hessian(Hloc, n):
    """Scatter the (n, 6, 6) local Hessians' qd blocks into cyclic diagonals."""
    diags = np.zeros((5, n))
    idx = np.arange(n)
    for a in range(3):
        for b in range(3):
            cols = (idx + _SLOT[b]) % n
            np.add.at(diags[2 + (_SLOT[a] - _SLOT[b])], cols, Hloc[:, 3 + a, 3 + b])
    return CyclicBanded(diags)


def assemble_grad_phi(Gloc, n):
    """Scatter the phi-slot gradients into the grid gradient of the total."""
    out = np.zeros(n)
    np.add.at(out, _rows(n), Gloc[:, :3])
    return out


def assemble_grad_phid(Gloc, n):
    out = np.zeros(n)
    np.add.at(out, _rows(n), Gloc[:, 3:])
    return out


def assemble_mixed_matvec(Hloc, phid):
    """(d2L/dphi dphid) @ phid assembled from the local mixed blocks."""
    n = phid.size
    out = np.zeros(n)
    idx = np.arange(n)
    for a in range(3):
        rows = (idx + _SLOT[a]) % n
        for b in range(3):
            cols = (idx + _SLOT[b]) % n
            np.add.at(out, rows, Hloc[:, 3 + a, b] * phid[cols])
    return out


def stencil_hessian(D, g: GridState) -> CyclicBanded:
    """Velocity Hessian of the total Lagrangian in banded form."""
    _, _, Hloc = local_derivatives(D, g)
    return assemble_velocity_hessian(Hloc, g.n)


# -- the cyclic banded solve ----------------------------------------------


def cyclic_banded_solve(cb: CyclicBanded, rhs):
    """Solve A x = rhs for a cyclic pentadiagonal A in O(n).

    The band is factorized with a banded LU; the six periodic corner
    entries are reinstated through a rank-4 Woodbury correction.  Raises
    ``numpy.linalg.LinAlgError`` when the band is singular.
    """
    n = cb.n
    if n < 6:
        raise InvalidArgumentError("cyclic banded solve needs n >= 6")
    diags = cb.diags
    ab = np.zeros((5, n))
    cols = np.arange(n)
    for o in range(-2, 3):
        inside = (cols + o >= 0) & (cols + o < n)
        ab[2 + o, inside] = diags[2 + o, inside]

    # Corner blocks: upper-right R at rows {0,1} x cols {n-2,n-1},
    # lower-left Q at rows {n-2,n-1} x cols {0,1}.
    R = np.array([[diags[4, n - 2], diags[3, n - 1]], [0.0, diags[4, n - 1]]])
    Q = np.array([[diags[0, 0], 0.0], [diags[1, 0], diags[0, 1]]])
    M = np.zeros((4, 4))
    M[:2, :2] = R
    M[2:, 2:] = Q

    W = np.zeros((n, 4))
    W[0, 0] = W[1, 1] = 1.0  # columns e0, e1
    W[n - 2, 2] = W[n - 1, 3] = 1.0  # columns e_{n-2}, e_{n-1}
    zsel = [n - 2, n - 1, 0, 1]  # Z^T y = y[zsel]

    Y = solve_banded((2, 2), ab, np.column_stack([rhs, W]))
    y0, YW = Y[:, 0], Y[:, 1:]
    K = np.eye(4) + YW[zsel] @ M
    t = np.linalg.solve(K, y0[zsel])
    return y0 - YW @ (M @ t)


def _dense_solve(cb_or_dense, rhs, rcond):
    A = cb_or_dense.to_dense() if isinstance(cb_or_dense, CyclicBanded) else cb_or_dense
    return pinv_solve(A, rhs, rcond)


def flgn_solve(cb: CyclicBanded, rhs, cfg: PinvConfig = DEFAULT_PINV):
    """Banded solve with dense-pseudoinverse fallback; returns (x, info)."""
    n = cb.n
    if n >= DENSE_CUTOFF:
        try:
            x = cyclic_banded_solve(cb, rhs)
        except np.linalg.LinAlgError:
            x = None
        if x is not None and np.all(np.isfinite(x)):
            scale = np.abs(cb.diags).max() * max(np.abs(x).max(), 1.0) + np.abs(rhs).max()
            if np.abs(cb.matvec(x) - rhs).max() <= 1e-8 * max(scale, 1.0):
                return x, {"solver": "banded", "degenerate": False}
    x, degenerate = _dense_solve(cb, rhs, cfg.rcond)
    return x, {"solver": "dense", "degenerate": degenerate}


# -- dynamics and energy ---------------------------------------------------


def flgn_accel_info(D, g: GridState, cfg: PinvConfig = DEFAULT_PINV):
    _, Gloc, Hloc = local_derivatives(D, g)
    _check_local(Gloc, Hloc)
    cb = assemble_velocity_hessian(Hloc, g.n)
    rhs = assemble_grad_phi(Gloc, g.n) - assemble_mixed_matvec(Hloc, g.phid)
    accel, info = flgn_solve(cb, rhs, cfg)
    if not np.all(np.isfinite(accel)):
        raise NumericError(
            "non-finite grid acceleration",
            index=int(np.flatnonzero(~np.isfinite(accel))[0]),
        )
    return accel, info


def flgn_accel(D, g: GridState, cfg: PinvConfig = DEFAULT_PINV):
    """Field accelerations from the density's summed Lagrangian."""
    accel, info = flgn_accel_info(D, g, cfg)
    if info["degenerate"]:
        warnings.warn(
            "grid velocity Hessian is rank deficient; minimum-norm solution",
            DegenerateHessianWarning,
            stacklevel=2,
        )
    return accel


def grid_energy(D, g: GridState):
    """Legendre transform of the total Lagrangian over the grid."""
    vals, Gloc, _ = D.second_order_batch(stencil_inputs(g.phi, g.phid))
    return float(g.phid @ assemble_grad_phid(Gloc, g.n) - vals.sum())


def _check_local(Gloc, Hloc):
    for arr, what in ((Gloc, "gradient"), (Hloc, "hessian")):
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1))[0])
            raise NumericError(f"non-finite density {what}", index=bad)


# -- trajectory export -----------------------------------------------------


def save_grid_trajectory(times, phis, phids, energies, path):
    """CSV of t, phi_1..phi_n plus a companion file with rates and energy.

    The companion path is the main path with a ``_rates`` suffix before
    the extension.
    """
    times = np.asarray(times)
    phis = np.asarray(phis)
    phids = np.asarray(phids)
    n = phis.shape[1]
    head = "t," + ",".join(f"phi{i + 1}" for i in range(n))
    np.savetxt(path, np.column_stack([times, phis]), delimiter=",", header=head, comments="")
    stem, dot, ext = str(path).rpartition(".")
    companion = f"{stem}_rates.{ext}" if dot else f"{path}_rates"
    head2 = "t," + ",".join(f"phid{i + 1}" for i in range(n)) + ",E"
    np.savetxt(
        companion,
        np.column_stack([times, phids, np.asarray(energies)]),
        delimiter=",",
        header=head2,
        comments="",
    )
    return companion
