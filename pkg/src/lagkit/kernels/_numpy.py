"""Pure-numpy activation-stage kernels.

These are the reference implementations of the fused softplus stages used
by the layer-derivative engine.  Shapes: Z is (B, k) pre-activations, JZ is
(B, k, m) first derivatives w.r.t. the m seed inputs, HZ is (B, k, m, m)
second derivatives.  The compiled twin in ``_fast.pyx`` must match these
bit-for-bit in exact arithmetic (same operations, fused loops).

Derivative rules through V = softplus(Z), with S1 = sigmoid(Z),
S2 = S1*(1-S1), S3 = S2*(1-2*S1):

    J  = S1*JZ
    H  = S1*HZ + S2*(JZ outer JZ)

and the adjoints of (V, J, H) -> (Z, JZ, HZ) follow by the product rule.
"""

import numpy as np
from scipy.special import expit


def softplus_fwd1(Z, JZ):
    S1 = expit(Z)
    V = np.logaddexp(0.0, Z)
    J = S1[..., None] * JZ
    return V, J, S1


def softplus_bwd1(VB, JB, JZ, S1):
    S2 = S1 * (1.0 - S1)
    ZB = VB * S1 + S2 * np.einsum("bki,bki->bk", JB, JZ)
    JZB = S1[..., None] * JB
    return ZB, JZB


def softplus_fwd2(Z, JZ, HZ):
    S1 = expit(Z)
    S2 = S1 * (1.0 - S1)
    V = np.logaddexp(0.0, Z)
    J = S1[..., None] * JZ
    H = S1[..., None, None] * HZ + S2[..., None, None] * (
        JZ[..., :, None] * JZ[..., None, :]
    )
    return V, J, H, S1, S2


def softplus_bwd2(VB, JB, HB, JZ, HZ, S1, S2):
    S3 = S2 * (1.0 - 2.0 * S1)
    hj = np.einsum("bkij,bkj->bki", HB, JZ)
    jh = np.einsum("bkji,bkj->bki", HB, JZ)
    ZB = (
        VB * S1
        + S2 * np.einsum("bki,bki->bk", JB, JZ)
        + S2 * np.einsum("bkij,bkij->bk", HB, HZ)
        + S3 * np.einsum("bki,bki->bk", hj, JZ)
    )
    JZB = S1[..., None] * JB + S2[..., None] * (hj + jh)
    HZB = S1[..., None, None] * HB
    return ZB, JZB, HZB


# ReLU variants exist only as a negative control (its second derivative is
# zero almost everywhere); they never get a compiled counterpart.


def relu_fwd1(Z, JZ):
    S1 = (Z > 0).astype(Z.dtype)
    return Z * S1, S1[..., None] * JZ, S1


def relu_bwd1(VB, JB, JZ, S1):
    return VB * S1, S1[..., None] * JB


def relu_fwd2(Z, JZ, HZ):
    S1 = (Z > 0).astype(Z.dtype)
    return Z * S1, S1[..., None] * JZ, S1[..., None, None] * HZ, S1, np.zeros_like(Z)


def relu_bwd2(VB, JB, HB, JZ, HZ, S1, S2):
    ZB = VB * S1
    JZB = S1[..., None] * JB
    HZB = S1[..., None, None] * HB
    return ZB, JZB, HZB
