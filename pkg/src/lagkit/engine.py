"""Batched derivative propagation through an affine/softplus stack.

This is the hot path of the package.  A network is a list of
``(W, b)`` pairs; every layer but the last is followed by the activation.
The engine pushes, in one vectorized pass over a batch, the layer values
together with their first (and optionally second) derivatives with respect
to the first ``m`` network inputs ("seed" inputs; trailing inputs such as
aux parameters get zero seeds).  A reverse pass computes parameter
gradients of any scalar functional that is linear in the outputs
(value, output gradient, output Hessian) - which is exactly what the
acceleration-matching losses need.

Forward rules per layer (batch index suppressed; V, J, H are the input
value/derivative blocks, m the seed count):

    Z  = V W^T + b        JZ = W J         HZ = W H
    V' = act(Z)           J' = act'(Z) JZ  H' = act'(Z) HZ + act''(Z) JZ JZ^T

The affine contractions are delegated to BLAS via numpy matmul; the
activation stages go through :mod:`lagkit.kernels` (compiled when
available).
"""

import numpy as np

from . import kernels
from .errors import InvalidArgumentError

_ACTS = ("softplus", "relu")


def _as_batch(X, n_in):
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    if X.shape[1] != n_in:
        raise InvalidArgumentError(f"expected inputs of width {n_in}, got {X.shape[1]}")
    return X


def _act_fns(act, order):
    if act not in _ACTS:
        raise InvalidArgumentError(f"unknown activation {act!r}")
    if order == 1:
        if act == "softplus":
            return kernels.softplus_fwd1, kernels.softplus_bwd1
        return kernels.relu_fwd1, kernels.relu_bwd1
    if act == "softplus":
        return kernels.softplus_fwd2, kernels.softplus_bwd2
    return kernels.relu_fwd2, kernels.relu_bwd2


def _seed_jacobian(B, n_in, m):
    J0 = np.zeros((B, n_in, m))
    idx = np.arange(m)
    J0[:, idx, idx] = 1.0
    return J0


# -- order 0: plain values ----------------------------------------------


def forward0(layers, X, act="softplus"):
    """Values only. Returns (Y, tape) with Y of shape (B, n_out)."""
    V = _as_batch(X, layers[0][0].shape[1])
    tape = []
    last = len(layers) - 1
    for l, (W, b) in enumerate(layers):
        Z = V @ W.T + b
        if l == last:
            tape.append((V, None))
            V = Z
        else:
            if act == "softplus":
                S1 = _sigmoid(Z)
                Vn = np.logaddexp(0.0, Z)
            else:
                S1 = (Z > 0).astype(float)
                Vn = Z * S1
            tape.append((V, S1))
            V = Vn
    return V, tape


def backward0(layers, tape, YB):
    grads = [None] * len(layers)
    last = len(layers) - 1
    VB = YB
    for l in range(last, -1, -1):
        W, _ = layers[l]
        V_in, S1 = tape[l]
        ZB = VB if l == last else VB * S1
        grads[l] = (ZB.T @ V_in, ZB.sum(axis=0))
        if l > 0:
            VB = ZB @ W
    return grads


def _sigmoid(Z):
    out = np.empty_like(Z)
    pos = Z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-Z[pos]))
    ez = np.exp(Z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- order 1: values + input gradients ----------------------------------


def forward1(layers, X, m, act="softplus"):
    """Returns (Y, J, tape); J[b, o, i] = dY[b, o]/dX[b, i] for i < m."""
    fwd, _ = _act_fns(act, 1)
    V = _as_batch(X, layers[0][0].shape[1])
    B = V.shape[0]
    J = _seed_jacobian(B, V.shape[1], m)
    tape = []
    last = len(layers) - 1
    for l, (W, b) in enumerate(layers):
        Z = V @ W.T + b
        JZ = np.matmul(W, J)
        if l == last:
            tape.append((V, J, JZ, None))
            V, J = Z, JZ
        else:
            Vn, Jn, S1 = fwd(Z, JZ)
            tape.append((V, J, JZ, S1))
            V, J = Vn, Jn
    return V, J, tape


def backward1(layers, tape, YB, JB, act="softplus"):
    _, bwd = _act_fns(act, 1)
    grads = [None] * len(layers)
    last = len(layers) - 1
    VB = YB
    for l in range(last, -1, -1):
        W, _ = layers[l]
        V_in, J_in, JZ, S1 = tape[l]
        if l == last:
            ZB, JZB = VB, JB
        else:
            ZB, JZB = bwd(VB, JB, JZ, S1)
        WB = ZB.T @ V_in + _contract_j(JZB, J_in)
        grads[l] = (WB, ZB.sum(axis=0))
        if l > 0:
            VB = ZB @ W
            JB = np.matmul(W.T, JZB)
    return grads


# -- order 2: values + gradients + Hessians ------------------------------


def forward2(layers, X, m, act="softplus"):
    """Returns (Y, J, H, tape); H[b, o] is the m x m input Hessian."""
    fwd, _ = _act_fns(act, 2)
    V = _as_batch(X, layers[0][0].shape[1])
    B, n_in = V.shape
    J = _seed_jacobian(B, n_in, m)
    H = np.zeros((B, n_in, m, m))
    tape = []
    last = len(layers) - 1
    for l, (W, b) in enumerate(layers):
        Z = V @ W.T + b
        JZ = np.matmul(W, J)
        HZ = _mat_h(W, H)
        if l == last:
            tape.append((V, J, H, JZ, HZ, None, None))
            V, J, H = Z, JZ, HZ
        else:
            Vn, Jn, Hn, S1, S2 = fwd(Z, np.ascontiguousarray(JZ), HZ)
            tape.append((V, J, H, JZ, HZ, S1, S2))
            V, J, H = Vn, Jn, Hn
    return V, J, H, tape


def backward2(layers, tape, YB, JB, HB, act="softplus"):
    _, bwd = _act_fns(act, 2)
    grads = [None] * len(layers)
    last = len(layers) - 1
    VB = YB
    for l in range(last, -1, -1):
        W, _ = layers[l]
        V_in, J_in, H_in, JZ, HZ, S1, S2 = tape[l]
        if l == last:
            ZB, JZB, HZB = VB, JB, HB
        else:
            ZB, JZB, HZB = bwd(
                VB,
                np.ascontiguousarray(JB),
                np.ascontiguousarray(HB),
                np.ascontiguousarray(JZ),
                HZ,
                S1,
                S2,
            )
        WB = ZB.T @ V_in + _contract_j(JZB, J_in) + _contract_h(HZB, H_in)
        grads[l] = (WB, ZB.sum(axis=0))
        if l > 0:
            VB = ZB @ W
            JB = np.matmul(W.T, JZB)
            HB = _mat_h(W.T, HZB)
    return grads


def _mat_h(W, H):
    """Contract W over the unit axis of an (B, k, m, m) Hessian block."""
    B, k, m, _ = H.shape
    out = np.matmul(W, H.reshape(B, k, m * m))
    return out.reshape(B, W.shape[0], m, m)


def _contract_j(JZB, J_in):
    # sum_{b,i} JZB[b,o,i] J_in[b,p,i]
    B, o, m = JZB.shape
    p = J_in.shape[1]
    return JZB.transpose(1, 0, 2).reshape(o, B * m) @ J_in.transpose(0, 2, 1).reshape(B * m, p)


def _contract_h(HZB, H_in):
    # sum_{b,i,j} HZB[b,o,i,j] H_in[b,p,i,j]
    B, o, m, _ = HZB.shape
    p = H_in.shape[1]
    return HZB.transpose(1, 0, 2, 3).reshape(o, B * m * m) @ H_in.transpose(0, 2, 3, 1).reshape(
        B * m * m, p
    )
