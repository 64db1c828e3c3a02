"""Softplus multilayer perceptron with a width-aware initialization.

The network represents a learnable scalar (or small-vector) function.
Softplus is used on all but the final layer because the dynamics model
differentiates the network twice: the activation needs a smooth, nonzero
second derivative (ReLU's vanishes almost everywhere, which the tests
exercise as a negative control).

Weight matrices are drawn from zero-mean Gaussians whose standard
deviation depends on the layer position and hidden width n:

    first layer    2.2 / sqrt(n)
    hidden layer i 0.58 * i / sqrt(n)     (i = 1, 2, ...)
    output layer   n / sqrt(n) = sqrt(n)

Biases start at zero.  For n=100 and four weight layers this gives the
per-layer scales {0.22, 0.058, 0.116, 10.0}.  The surprisingly large
output scale is deliberate: the dynamics derived from a scalar function
are invariant under rescaling it, so the output layer is free to run hot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .autodiff import ScalarFn, softplus
from .errors import InvalidArgumentError

__all__ = [
    "InitSpec",
    "NetParams",
    "init_scales",
    "init_params",
    "forward",
    "as_scalar_fn",
    "NetScalarFn",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class InitSpec:
    """Hyperparameters for :func:`init_params`.

    ``depth`` counts weight layers (affine maps), so depth=4 means
    input -> n -> n -> n -> out.
    """

    d_in: int
    n: int
    depth: int
    seed: int
    d_out: int = 1

    def __post_init__(self):
        if self.d_in < 1 or self.n < 1 or self.depth < 2 or self.d_out < 1:
            raise InvalidArgumentError(f"invalid init spec: {self}")


@dataclass
class NetParams:
    """Layered weights/biases; layer i maps widths[i] -> widths[i+1]."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    widths: list[int]
    seed: int | None = None

    def __post_init__(self):
        for i, (W, b) in enumerate(self.layers):
            if W.shape != (self.widths[i + 1], self.widths[i]) or b.shape != (W.shape[0],):
                raise InvalidArgumentError(
                    f"layer {i}: shape {W.shape}/{b.shape} does not chain with widths {self.widths}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise InvalidArgumentError(f"layer {i}: non-finite parameters")

    @property
    def n_layers(self):
        return len(self.layers)

    def copy(self):
        return NetParams([(W.copy(), b.copy()) for W, b in self.layers], list(self.widths), self.seed)


def init_scales(n, depth):
    """Per-layer Gaussian standard deviations for a depth-layer net."""
    root = np.sqrt(n)
    return [2.2 / root] + [0.58 * i / root for i in range(1, depth - 1)] + [n / root]


def init_params(spec: InitSpec) -> NetParams:
    """Draw weights per the layer-position scale rule; biases are zero."""
    widths = [spec.d_in] + [spec.n] * (spec.depth - 1) + [spec.d_out]
    scales = init_scales(spec.n, spec.depth)
    rng = np.random.default_rng(spec.seed)
    layers = []
    for i in range(spec.depth):
        W = scales[i] * rng.standard_normal((widths[i + 1], widths[i]))
        layers.append((W, np.zeros(widths[i + 1])))
    return NetParams(layers, widths, seed=spec.seed)


def forward(params: NetParams, x, activation="softplus"):
    """Evaluate the network.  1-D input gives a scalar for 1-wide output."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Y, _ = engine.forward0(params.layers, x, act=activation)
    if single:
        return float(Y[0, 0]) if params.widths[-1] == 1 else Y[0]
    return Y[:, 0] if params.widths[-1] == 1 else Y


class NetScalarFn(ScalarFn):
    """The network packaged as a scalar function of (q, qd) plus aux.

    Network inputs are the concatenation [q, qd, aux]; derivatives are
    taken with respect to the 2d dynamical inputs only.  ``second_order``
    and friends run through the vectorized engine; ``eval`` retains the
    generic (dual-number capable) path so the engine can be cross-checked
    against :mod:`lagkit.autodiff` directly.
    """

    def __init__(self, params: NetParams, d, k=0, activation="softplus"):
        if params.widths[0] != 2 * d + k:
            raise InvalidArgumentError(
                f"network takes {params.widths[0]} inputs; need 2*{d}+{k}"
            )
        if params.widths[-1] != 1:
            raise InvalidArgumentError("scalar adapter requires a 1-wide output layer")
        super().__init__(self._eval_generic, d, k, name="net")
        self.params = params
        self.activation = activation

    def _eval_generic(self, q, qd, aux):
        x = list(q) + list(qd) + [float(a) for a in aux]
        last = self.params.n_layers - 1
        for l, (W, b) in enumerate(self.params.layers):
            z = [sum(W[j, p] * x[p] for p in range(len(x))) + b[j] for j in range(W.shape[0])]
            if l == last:
                x = z
            elif self.activation == "softplus":
                x = [softplus(zj) for zj in z]
            else:
                x = [zj if float(zj) > 0 else 0.0 * zj for zj in z]
        return x[0]

    def _stack(self, q, qd, aux):
        return np.concatenate([np.asarray(q, float).ravel(), np.asarray(qd, float).ravel(),
                               np.asarray(aux, float).ravel()])

    def value(self, q, qd, aux=()):
        return float(forward(self.params, self._stack(q, qd, aux), self.activation))

    def second_order(self, q, qd, aux=()):
        x = self._stack(q, qd, aux)
        if x.size != self.params.widths[0]:
            raise InvalidArgumentError("input width mismatch")
        Y, J, H, _ = engine.forward2(self.params.layers, x, 2 * self.d, act=self.activation)
        return float(Y[0, 0]), J[0, 0].copy(), H[0, 0].copy()

    def second_order_batch(self, X, aux=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if aux is not None and self.k:
            X = np.hstack([X, np.atleast_2d(np.asarray(aux, dtype=float))])
        Y, J, H, _ = engine.forward2(self.params.layers, X, 2 * self.d, act=self.activation)
        return Y[:, 0], J[:, 0], H[:, 0]


def as_scalar_fn(params: NetParams, d, k=0, activation="softplus") -> NetScalarFn:
    """Adapter turning a 1-output network into a ScalarFn over (q, qd)."""
    return NetScalarFn(params, d, k, activation)


# -- checkpoint format ---------------------------------------------------


def save_params(params: NetParams, path):
    doc = {
        "widths": list(params.widths),
        "seed": params.seed,
        "layers": [{"w": W.tolist(), "b": b.tolist()} for W, b in params.layers],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path) -> NetParams:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        widths = [int(w) for w in doc["widths"]]
        layers = [
            (np.asarray(layer["w"], dtype=float), np.asarray(layer["b"], dtype=float))
            for layer in doc["layers"]
        ]
        seed = doc.get("seed")
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed checkpoint {path}: {exc}") from exc
    return NetParams(layers, widths, seed=seed)
