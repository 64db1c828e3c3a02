"""Supervised training of acceleration models.

Three model families share one Adam loop:

* ``baseline``  - a network regresses accelerations directly.
* ``lnn``       - a network is the Lagrangian; accelerations come from the
  pseudoinverse Euler-Lagrange solve, so the loss contains second input
  derivatives of the network and parameter gradients need third-order
  information.  These are obtained with the implicit-function rule on the
  solved system A qdd = b: holding the solution fixed,
  d(loss)/d(theta) = u . (db - dA qdd) with u = A^+ dl/dqdd, which turns
  into one reverse pass through the second-order forward engine.
* ``hnn``       - a network is the Hamiltonian; the loss matches
  (dH/dp, -dH/dq) against targets.  In ``canonical`` mode the inputs are
  true canonical pairs (q, p) with targets (qd, pdot); in ``arbitrary``
  mode the raw (q, qd, qdd) data is force-fit as if it were canonical,
  which is the deliberately unfair condition the comparisons need.

When the trained system is the periodic grid, the ``lnn`` family switches
to the summed-density model: the same implicit-function rule applies per
grid state with the banded solve from :mod:`lagkit.grid`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine, grid, mlp, systems
from .autodiff import ScalarFn
from .dynamics import PinvConfig, State, lnn_accel_info
from .errors import InvalidArgumentError
from .mlp import InitSpec, NetParams, init_params, save_params

__all__ = [
    "TrainConfig",
    "OptState",
    "init_opt",
    "adam_step",
    "loss",
    "grad_params",
    "train",
    "TrainResult",
    "accel_mse",
    "model_accel_fn",
]

_MODELS = ("lnn", "baseline", "hnn")


@dataclass(frozen=True)
class TrainConfig:
    model: str
    hidden: int = 500
    depth: int = 4
    lr0: float = 1e-3
    decay: float = 0.99997
    batch: int = 32
    steps: int = 2000
    seed: int = 0
    coords: str = "arbitrary"
    rcond: float = 1e-10
    val_frac: float = 0.1
    log_every: int = 250
    ckpt_every: int = 5000
    whiten_init: bool = False
    activation: str = "softplus"

    def __post_init__(self):
        if self.model not in _MODELS:
            raise InvalidArgumentError(f"unknown model {self.model!r}")
        if self.coords not in ("arbitrary", "canonical"):
            raise InvalidArgumentError(f"unknown coords {self.coords!r}")
        if self.lr0 <= 0 or not (0.0 < self.decay <= 1.0) or self.batch < 1:
            raise InvalidArgumentError("need lr0 > 0, 0 < decay <= 1, batch >= 1")
        if self.hidden < 1 or self.depth < 2 or self.steps < 1:
            raise InvalidArgumentError("need hidden >= 1, depth >= 2, steps >= 1")
        if not (0.0 <= self.val_frac < 1.0):
            raise InvalidArgumentError("val_frac must be in [0, 1)")


# -- Adam -------------------------------------------------------------------


@dataclass
class OptState:
    """First/second-moment accumulators mirroring the parameter shapes."""

    m: list
    v: list
    t: int = 0


def init_opt(params: NetParams) -> OptState:
    return OptState(
        m=[(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers],
        v=[(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers],
        t=0,
    )


def adam_step(params: NetParams, grads, opt: OptState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new (params, opt)."""
    if len(grads) != params.n_layers:
        raise InvalidArgumentError("gradient/parameter layer count mismatch")
    t = opt.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_layers, new_m, new_v = [], [], []
    for (W, b), (gW, gb), (mW, mb), (vW, vb) in zip(params.layers, grads, opt.m, opt.v):
        if gW.shape != W.shape or gb.shape != b.shape:
            raise InvalidArgumentError("gradient shape mismatch")
        mW = beta1 * mW + (1 - beta1) * gW
        mb = beta1 * mb + (1 - beta1) * gb
        vW = beta2 * vW + (1 - beta2) * gW**2
        vb = beta2 * vb + (1 - beta2) * gb**2
        Wn = W - lr * (mW / c1) / (np.sqrt(vW / c2) + eps)
        bn = b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        new_layers.append((Wn, bn))
        new_m.append((mW, mb))
        new_v.append((vW, vb))
    return NetParams(new_layers, list(params.widths), params.seed), OptState(new_m, new_v, t)


# -- per-family loss / gradient kernels -------------------------------------


def _baseline_lg(layers, X, QDD, act, want_grad):
    Y, tape = engine.forward0(layers, X, act)
    resid = Y - QDD
    value = float(np.mean(resid**2))
    if not want_grad:
        return value, None
    return value, engine.backward0(layers, tape, (2.0 / resid.size) * resid)


def _lnn_lg(layers, X, QD, QDD, d, rcond, act, want_grad):
    B = X.shape[0]
    Y, J, H, tape = engine.forward2(layers, X, 2 * d, act)
    G = J[:, 0]
    HH = H[:, 0]
    A = HH[:, d:, d:]
    A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
    rhs = G[:, :d] - np.einsum("bij,bj->bi", HH[:, d:, :d], QD)
    Apinv = np.linalg.pinv(A, rcond=rcond, hermitian=True)
    qdd = np.einsum("bij,bj->bi", Apinv, rhs)
    resid = qdd - QDD
    value = float(np.mean(resid**2))
    if not want_grad:
        return value, None, qdd
    u = np.einsum("bij,bj->bi", Apinv, (2.0 / resid.size) * resid)
    JB = np.zeros((B, 1, 2 * d))
    JB[:, 0, :d] = u
    HB = np.zeros((B, 1, 2 * d, 2 * d))
    HB[:, 0, d:, :d] = -u[:, :, None] * QD[:, None, :]
    HB[:, 0, d:, d:] = -0.5 * (u[:, :, None] * qdd[:, None, :] + qdd[:, :, None] * u[:, None, :])
    grads = engine.backward2(layers, tape, np.zeros((B, 1)), JB, HB, act)
    return value, grads, qdd


def _hnn_lg(layers, X, T1, T2, d, act, want_grad):
    B = X.shape[0]
    Y, J, tape = engine.forward1(layers, X, 2 * d, act)
    G = J[:, 0]
    r1 = G[:, d:] - T1  # dH/dp vs qdot target
    r2 = -G[:, :d] - T2  # -dH/dq vs pdot target
    value = float((np.sum(r1**2) + np.sum(r2**2)) / (B * 2 * d))
    if not want_grad:
        return value, None
    scale = 2.0 / (B * 2 * d)
    JB = np.zeros((B, 1, 2 * d))
    JB[:, 0, d:] = scale * r1
    JB[:, 0, :d] = -scale * r2
    return value, engine.backward1(layers, tape, np.zeros((B, 1)), JB, act)


def _stencil_gather(A):
    return np.stack([np.roll(A, 1, axis=1), A, np.roll(A, -1, axis=1)], axis=-1)


def _field_lg(layers, PHI, PHID, QDD, rcond, act, want_grad):
    B, n = PHI.shape
    X6 = np.concatenate([_stencil_gather(PHI), _stencil_gather(PHID)], axis=-1).reshape(B * n, 6)
    Y, J, H, tape = engine.forward2(layers, X6, 6, act)
    G = J[:, 0].reshape(B, n, 6)
    HH = H[:, 0].reshape(B, n, 6, 6)
    cfg = PinvConfig(rcond)
    qdd = np.empty((B, n))
    bands = []
    for b in range(B):
        cb = grid.assemble_velocity_hessian(HH[b], n)
        rhs = grid.assemble_grad_phi(G[b], n) - grid.assemble_mixed_matvec(HH[b], PHID[b])
        qdd[b], _ = grid.flgn_solve(cb, rhs, cfg)
        bands.append(cb)
    resid = qdd - QDD
    value = float(np.mean(resid**2))
    if not want_grad:
        return value, None, qdd
    scale = 2.0 / resid.size
    U = np.empty((B, n))
    for b in range(B):
        U[b], _ = grid.flgn_solve(bands[b], scale * resid[b], cfg)
    Ust = _stencil_gather(U)
    PHIDst = _stencil_gather(PHID)
    QDDst = _stencil_gather(qdd)
    JB = np.zeros((B, n, 1, 6))
    JB[..., 0, :3] = Ust
    HB = np.zeros((B, n, 1, 6, 6))
    HB[..., 0, 3:, :3] = -Ust[..., :, None] * PHIDst[..., None, :]
    HB[..., 0, 3:, 3:] = -Ust[..., :, None] * QDDst[..., None, :]
    grads = engine.backward2(
        layers,
        tape,
        np.zeros((B * n, 1)),
        JB.reshape(B * n, 1, 6),
        HB.reshape(B * n, 1, 6, 6),
        act,
    )
    return value, grads, qdd


# -- data marshalling --------------------------------------------------------


def _stack(samples):
    Q = np.stack([s.state.q for s in samples])
    QD = np.stack([s.state.qd for s in samples])
    QDD = np.stack([s.qdd_true for s in samples])
    AUX = np.stack([s.aux for s in samples])
    return Q, QD, QDD, AUX


def _is_field(system):
    return system is not None and system.name == "wave1d"


def _prepare_arrays(model, samples, cfg, system):
    """Model-specific (inputs, targets, dims) for a sample list."""
    Q, QD, QDD, AUX = _stack(samples)
    d = Q.shape[1]
    k = AUX.shape[1]
    if model == "lnn" and _is_field(system):
        return {"kind": "field", "PHI": Q, "PHID": QD, "QDD": QDD, "d": 3, "k": 0, "d_in": 6}
    X = np.hstack([Q, QD, AUX])
    if model == "baseline":
        return {"kind": "baseline", "X": X, "QDD": QDD, "d": d, "k": k, "d_in": 2 * d + k}
    if model == "lnn":
        return {"kind": "lnn", "X": X, "QD": QD, "QDD": QDD, "d": d, "k": k, "d_in": 2 * d + k}
    if cfg.coords == "arbitrary":
        return {
            "kind": "hnn",
            "X": X,
            "T1": QD,
            "T2": QDD,
            "d": d,
            "k": k,
            "d_in": 2 * d + k,
        }
    if system is None:
        raise InvalidArgumentError("canonical HNN training needs the system spec")
    P = np.empty_like(QD)
    PDOT = np.empty_like(QD)
    for i, s in enumerate(samples):
        _, P[i] = systems.to_canonical(system, s.state, s.aux if k else None)
        _, PDOT[i] = systems.canonical_rhs(system, s.state, s.aux if k else None)
    X = np.hstack([Q, P, AUX])
    return {"kind": "hnn", "X": X, "T1": QD, "T2": PDOT, "d": d, "k": k, "d_in": 2 * d + k}


def _arrays_lg(params, arrays, cfg, idx=None, want_grad=True):
    sel = (lambda a: a if idx is None else a[idx])
    kind = arrays["kind"]
    layers = params.layers
    if kind == "baseline":
        return _baseline_lg(layers, sel(arrays["X"]), sel(arrays["QDD"]), cfg.activation, want_grad)
    if kind == "lnn":
        value, grads, _ = _lnn_lg(
            layers,
            sel(arrays["X"]),
            sel(arrays["QD"]),
            sel(arrays["QDD"]),
            arrays["d"],
            cfg.rcond,
            cfg.activation,
            want_grad,
        )
        return value, grads
    if kind == "field":
        value, grads, _ = _field_lg(
            layers,
            sel(arrays["PHI"]),
            sel(arrays["PHID"]),
            sel(arrays["QDD"]),
            cfg.rcond,
            cfg.activation,
            want_grad,
        )
        return value, grads
    return _hnn_lg(
        layers, sel(arrays["X"]), sel(arrays["T1"]), sel(arrays["T2"]), arrays["d"], cfg.activation, want_grad
    )


# -- public loss / gradient --------------------------------------------------


def loss(model, params, batch, cfg: TrainConfig, system=None):
    """Mean squared error of the model family on a batch of samples.

    ``params`` is normally a :class:`NetParams`; for the ``lnn`` family a
    plain :class:`ScalarFn` Lagrangian is also accepted (the analytic
    zero-loss oracle).
    """
    if not batch:
        raise InvalidArgumentError("empty batch")
    if isinstance(params, ScalarFn):
        if model != "lnn":
            raise InvalidArgumentError("ScalarFn models only make sense for lnn")
        errs = []
        for s in batch:
            qdd, _ = lnn_accel_info(params, s.state, s.aux[: params.k], PinvConfig(cfg.rcond))
            errs.append(qdd - s.qdd_true)
        return float(np.mean(np.square(errs)))
    arrays = _prepare_arrays(model, batch, cfg, system)
    value, _ = _arrays_lg(params, arrays, cfg, want_grad=False)
    return value


def grad_params(model, params, batch, cfg: TrainConfig, system=None):
    """Gradient of :func:`loss` w.r.t. every weight and bias."""
    if not batch:
        raise InvalidArgumentError("empty batch")
    arrays = _prepare_arrays(model, batch, cfg, system)
    _, grads = _arrays_lg(params, arrays, cfg, want_grad=True)
    return grads


# -- the training loop --------------------------------------------------------


@dataclass
class TrainResult:
    params: NetParams
    history: list
    log: list = field(default_factory=list)
    diverged: bool = False


def _whiten_first_layer(params, X):
    """Fold a data-whitening transform into the first layer's init.

    The first layer becomes W (S^-1/2) (x - mu) + b for the training-input
    mean mu and covariance S, which rescales poorly conditioned input
    directions without changing the architecture or checkpoint format.
    """
    mu = X.mean(axis=0)
    S = np.cov(X, rowvar=False) + 1e-8 * np.eye(X.shape[1])
    evals, evecs = np.linalg.eigh(S)
    T = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-10))) @ evecs.T
    W0, b0 = params.layers[0]
    layers = [(W0 @ T, b0 - W0 @ T @ mu)] + [(W.copy(), b.copy()) for W, b in params.layers[1:]]
    return NetParams(layers, list(params.widths), params.seed)


def build_params(cfg: TrainConfig, d_in, d_out=1):
    return init_params(InitSpec(d_in=d_in, n=cfg.hidden, depth=cfg.depth, seed=cfg.seed, d_out=d_out))


def train(cfg: TrainConfig, dataset, system=None, log_path=None, ckpt_path=None):
    """Minibatch Adam with per-step exponential lr decay.

    Shuffles per epoch (seeded), holds out ``val_frac`` of the data for a
    reported-only validation loss, checkpoints every ``ckpt_every`` steps,
    and aborts on a non-finite loss keeping the last good parameters.
    """
    if not dataset:
        raise InvalidArgumentError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(dataset))
    n_val = int(round(cfg.val_frac * len(dataset)))
    val_samples = [dataset[i] for i in order[:n_val]]
    train_samples = [dataset[i] for i in order[n_val:]]
    if len(train_samples) < cfg.batch:
        raise InvalidArgumentError("dataset smaller than one batch after the split")

    arrays = _prepare_arrays(cfg.model, train_samples, cfg, system)
    val_arrays = _prepare_arrays(cfg.model, val_samples, cfg, system) if val_samples else None
    d_out = arrays["QDD"].shape[1] if arrays["kind"] == "baseline" else 1
    params = build_params(cfg, arrays["d_in"], d_out)
    if cfg.whiten_init:
        inputs = arrays["X"] if "X" in arrays else _field_inputs(arrays)
        params = _whiten_first_layer(params, inputs)
    opt = init_opt(params)

    n_train = len(train_samples)
    per_epoch = n_train // cfg.batch
    history = []
    log = []
    diverged = False
    log_fh = open(log_path, "w") if log_path else None
    try:
        t = 0
        while t < cfg.steps and not diverged:
            perm = rng.permutation(n_train)
            for bi in range(per_epoch):
                if t >= cfg.steps:
                    break
                idx = perm[bi * cfg.batch : (bi + 1) * cfg.batch]
                lr = cfg.lr0 * cfg.decay**t
                value, grads = _arrays_lg(params, arrays, cfg, idx=idx, want_grad=True)
                if not np.isfinite(value) or any(
                    not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))) for gW, gb in grads
                ):
                    diverged = True
                    break
                params, opt = adam_step(params, grads, opt, lr)
                history.append(value)
                t += 1
                if t % cfg.log_every == 0 or t == cfg.steps:
                    record = {"step": t, "lr": lr, "train_loss": value}
                    record["val_loss"] = (
                        _arrays_lg(params, val_arrays, cfg, want_grad=False)[0]
                        if val_arrays
                        else None
                    )
                    log.append(record)
                    if log_fh:
                        log_fh.write(json.dumps(record) + "\n")
                        log_fh.flush()
                if ckpt_path and (t % cfg.ckpt_every == 0 or t == cfg.steps):
                    save_params(params, ckpt_path)
    finally:
        if log_fh:
            log_fh.close()
    if ckpt_path:
        save_params(params, ckpt_path)
    return TrainResult(params, history, log, diverged)


def _field_inputs(arrays):
    PHI, PHID = arrays["PHI"], arrays["PHID"]
    B, n = PHI.shape
    return np.concatenate([_stencil_gather(PHI), _stencil_gather(PHID)], axis=-1).reshape(B * n, 6)


# -- evaluation helpers --------------------------------------------------------


def accel_mse(model, params, samples, cfg: TrainConfig, system=None):
    """MSE of the model's acceleration prediction against the true one.

    For the canonical HNN the implied coordinate acceleration is used:
    qdd = H_pq qdot + H_pp pdot along the model's own flow, evaluated at
    the true canonical point of each sample.
    """
    Q, QD, QDD, AUX = _stack(samples)
    pred = predict_accel(model, params, samples, cfg, system)
    return float(np.mean((pred - QDD) ** 2))


def predict_accel(model, params, samples, cfg: TrainConfig, system=None):
    Q, QD, QDD, AUX = _stack(samples)
    d = Q.shape[1]
    act = cfg.activation
    if model == "lnn" and _is_field(system):
        _, _, qdd = _field_lg(params.layers, Q, QD, QDD, cfg.rcond, act, want_grad=False)
        return qdd
    if model == "baseline":
        X = np.hstack([Q, QD, AUX])
        Y, _ = engine.forward0(params.layers, X, act)
        return Y
    if model == "lnn":
        X = np.hstack([Q, QD, AUX])
        _, _, qdd = _lnn_lg(params.layers, X, QD, QDD, d, cfg.rcond, act, want_grad=False)
        return qdd
    if cfg.coords == "arbitrary":
        X = np.hstack([Q, QD, AUX])
        _, J, _ = engine.forward1(params.layers, X, 2 * d, act)
        return -J[:, 0, :d]
    if system is None:
        raise InvalidArgumentError("canonical HNN evaluation needs the system spec")
    P = np.empty_like(QD)
    for i, s in enumerate(samples):
        _, P[i] = systems.to_canonical(system, s.state, s.aux if s.aux.size else None)
    X = np.hstack([Q, P, AUX])
    _, J, H, _ = engine.forward2(params.layers, X, 2 * d, act)
    G = J[:, 0]
    HH = H[:, 0]
    qdot = G[:, d:]
    pdot = -G[:, :d]
    return np.einsum("bij,bj->bi", HH[:, d:, :d], qdot) + np.einsum(
        "bij,bj->bi", HH[:, d:, d:], pdot
    )


def model_accel_fn(model, params, cfg: TrainConfig, aux=(), system=None):
    """State -> acceleration closure for rollouts of a trained model."""
    aux = np.asarray(aux, dtype=float)
    act = cfg.activation

    if model == "lnn" and _is_field(system):
        dx = system.params[1]
        density = mlp.as_scalar_fn(params, d=3, activation=act)
        return lambda s: grid.flgn_accel_info(
            density, grid.GridState(s.q, s.qd, dx), PinvConfig(cfg.rcond)
        )[0]

    if model == "baseline":

        def baseline_fn(s):
            x = np.concatenate([s.q, s.qd, aux])
            Y, _ = engine.forward0(params.layers, x, act)
            return Y[0]

        return baseline_fn

    if model == "lnn":

        def lnn_fn(s):
            d = s.dof
            L = mlp.as_scalar_fn(params, d=d, k=aux.size, activation=act)
            qdd, _ = lnn_accel_info(L, s, aux, PinvConfig(cfg.rcond))
            return qdd

        return lnn_fn

    raise InvalidArgumentError("direct rollout is defined for lnn and baseline models")
