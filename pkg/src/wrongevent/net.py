"""A small tanh MLP with softmax output, written directly in numpy.

Parameters live in a :class:`Model`; the optimizer keeps its momentum buffers
separately in :class:`SGDState` so models can be copied and checkpointed as
plain snapshots.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError, SchemaError

PROB_FLOOR = 1e-12
CKPT_MAGIC = b"WEMLP\x00\x00\x00"
CKPT_VERSION = 1


@dataclass
class Model:
    layer_dims: tuple
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ParameterError(f"need at least input and output widths, got {self.layer_dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ParameterError("one weight matrix and bias vector per layer")
        for j, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[j], dims[j + 1]) or b.shape != (dims[j + 1],):
                raise ParameterError(f"layer {j} parameter shapes inconsistent with {dims}")
        self.layer_dims = dims

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Model":
        return Model(self.layer_dims, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                     self.activation)

    def zeros_like(self):
        return [np.zeros_like(p) for p in self.params()]


def init_model(layer_dims, seed) -> Model:
    """LeCun-uniform weights, U(-sqrt(3/fan_in), sqrt(3/fan_in)); zero biases."""
    dims = tuple(layer_dims)
    if len(dims) < 2 or any(int(d) < 1 for d in dims):
        raise ParameterError(f"need at least input and output widths, got {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(dims, weights, biases)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_cache(model: Model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise ParameterError(f"expected input width {model.layer_dims[0]}, got shape {X.shape}")
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for j, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        h = z if j == last else np.tanh(z)
        acts.append(h)
    return _softmax(h), acts


def forward(model: Model, X):
    """Row-wise softmax probabilities."""
    return forward_cache(model, X)[0]


def log_softmax(model: Model, X):
    logits = forward_cache(model, X)[1][-1]
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def backward(model: Model, acts, dlogits):
    """Parameter gradients given dL/dlogits; order matches ``Model.params``."""
    grads = [None] * (2 * len(model.weights))
    delta = dlogits
    for j in range(len(model.weights) - 1, -1, -1):
        grads[2 * j] = acts[j].T @ delta
        grads[2 * j + 1] = delta.sum(axis=0)
        if j > 0:
            delta = (delta @ model.weights[j].T) * (1.0 - acts[j] ** 2)
    return grads


def softmax_backward(p, dp):
    """Chain dL/dp through the softmax Jacobian."""
    return p * (dp - np.sum(dp * p, axis=1, keepdims=True))


def cross_entropy(p, labels):
    """Per-sample -log p[label] with the probability floor."""
    return -np.log(np.maximum(p[np.arange(len(labels)), labels], PROB_FLOOR))


def ce_grad_probs(p, labels):
    n = len(labels)
    g = np.zeros_like(p)
    py = p[np.arange(n), labels]
    g[np.arange(n), labels] = np.where(py > PROB_FLOOR, -1.0 / np.maximum(py, PROB_FLOOR), 0.0)
    return g


def ce_loss_and_grad(model: Model, X, labels, need_grad=True):
    """Mean cross-entropy on a batch and its parameter gradients."""
    labels = np.asarray(labels, dtype=np.int64)
    p, acts = forward_cache(model, X)
    per = cross_entropy(p, labels)
    loss = float(per.mean())
    if not need_grad:
        return loss, None
    dlogits = softmax_backward(p, ce_grad_probs(p, labels)) / len(labels)
    return loss, backward(model, acts, dlogits)


def _with_params(model: Model, flat_params):
    m = model.copy()
    for j in range(len(m.weights)):
        m.weights[j] = flat_params[2 * j]
        m.biases[j] = flat_params[2 * j + 1]
    return m


def grad_check(model: Model, batch, loss_fn, step=1e-5, max_entries=None, seed=0, atol=1e-7) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(model, batch, frozen=None)`` returns ``(loss, grads, frozen)``. The
    ``frozen`` value carries any detached quantities from the unperturbed
    evaluation and is passed back unchanged for every perturbed one, so
    stop-gradients are honoured by the numerical side too. When ``max_entries``
    is set, a random subset of coordinates per parameter array is probed.
    Entries where both gradients are below ``atol`` are compared absolutely,
    since finite differences cannot resolve them.
    """
    loss, grads, frozen = loss_fn(model, batch, None)
    rng = np.random.default_rng(seed)
    worst = 0.0
    params = model.params()
    for k, P in enumerate(params):
        idx = list(np.ndindex(P.shape))
        if max_entries is not None and len(idx) > max_entries:
            pick = rng.choice(len(idx), size=max_entries, replace=False)
            idx = [idx[i] for i in pick]
        for ix in idx:
            vals = []
            for sgn in (1.0, -1.0):
                shifted = [q.copy() for q in params]
                shifted[k][ix] += sgn * step
                vals.append(loss_fn(_with_params(model, shifted), batch, frozen)[0])
            num = (vals[0] - vals[1]) / (2.0 * step)
            ana = grads[k][ix]
            denom = max(abs(num), abs(ana), atol)
            worst = max(worst, abs(num - ana) / denom)
    return worst


@dataclass(frozen=True)
class AugmentParams:
    weak_sigma: float = 0.05
    strong_sigma: float = 0.2
    strong_dropout: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.weak_sigma <= self.strong_sigma:
            raise ParameterError("need 0 <= weak_sigma <= strong_sigma")
        if not 0.0 <= self.strong_dropout < 1.0:
            raise ParameterError("strong_dropout must lie in [0, 1)")


def augment(batch, view, params: AugmentParams, feature_stds, seed):
    """Gaussian jitter scaled per feature; the strong view also zeroes features."""
    X = np.asarray(batch, dtype=np.float64)
    stds = np.asarray(feature_stds, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if view == "weak":
        if params.weak_sigma == 0.0:
            return X.copy()
        return X + rng.standard_normal(X.shape) * (params.weak_sigma * stds)
    if view == "strong":
        out = X + rng.standard_normal(X.shape) * (params.strong_sigma * stds)
        if params.strong_dropout > 0.0:
            out = out * (rng.random(X.shape) >= params.strong_dropout)
        return out
    raise ParameterError(f"unknown view {view!r}")


@dataclass
class SGDState:
    velocity: list


def sgd_init(model: Model) -> SGDState:
    return SGDState(model.zeros_like())


def sgd_step(model: Model, grads, lr, momentum=0.9, state: SGDState | None = None):
    """v <- momentum * v + g;  theta <- theta - lr * v.  Updates in place."""
    params = model.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ParameterError("gradient shapes do not match the model")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericError("non-finite gradient")
    state = state if state is not None else sgd_init(model)
    for p, g, v in zip(params, grads, state.velocity):
        v *= momentum
        v += g
        p -= lr * v
    if not all(np.all(np.isfinite(p)) for p in params):
        raise NumericError("parameters became non-finite")
    return model, state


def save_checkpoint(model: Model, path):
    """magic | version | n_dims | dims... (uint32 LE) | float64 LE arrays in layer order."""
    dims = model.layer_dims
    with Path(path).open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> Model:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise SchemaError(f"{path}: not a model checkpoint")
    version, nd = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    dims = struct.unpack_from(f"<{nd}I", data, off)
    off += 4 * nd
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
            off += 8 * count
            (weights if len(shape) == 2 else biases).append(arr)
    if off != len(data):
        raise SchemaError(f"{path}: trailing bytes after parameters")
    return Model(dims, weights, biases)
