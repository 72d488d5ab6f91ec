"""Dense neural-network kernel: forward pass, backpropagation, Adam, training loop.

Everything is float64 numpy. A network is described by an ArchitectureSpec
(input dim p, ordered hidden layers, output dim b, task). Parameters are a
list of (weight, bias) pairs, one per layer including the output layer; the
weight of layer l has shape (p_l, p_{l-1}) so the forward map is
x -> act(W x + b) applied layer by layer, with the output activation forced
by the task (identity for regression, softmax for classification).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, TrainingDivergedError, UndefinedScoreError
from .metrics import f1_labels, r2_score

HIDDEN_ACTIVATIONS = ("relu", "sigmoid", "tanh", "elu")
ELU_ALPHA = 1.0

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    def __post_init__(self):
        if self.width < 1:
            raise ShapeError(f"layer width must be >= 1, got {self.width}")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.activation!r}")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Fully-connected network description.

    hidden may be empty: with an identity output that is plain linear
    regression, with a softmax output plain logistic regression.
    """

    input_dim: int
    output_dim: int
    hidden: tuple[LayerSpec, ...]
    task: str

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError("input_dim and output_dim must be positive")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and self.output_dim < 2:
            raise ShapeError("classification needs output_dim >= 2")

    @property
    def depth(self) -> int:
        return len(self.hidden)

    def layer_dims(self) -> list[int]:
        """[p_0, p_1, ..., p_{L+1}] including input and output."""
        return [self.input_dim] + [h.width for h in self.hidden] + [self.output_dim]

    @property
    def output_activation(self) -> str:
        return "identity" if self.task == REGRESSION else "softmax"


def param_count(arch: ArchitectureSpec, include_bias: bool = False) -> int:
    """Total weight-matrix entries sum(p_l * p_{l-1}); biases added on request."""
    dims = arch.layer_dims()
    total = sum(dims[i] * dims[i - 1] for i in range(1, len(dims)))
    if include_bias:
        total += sum(dims[1:])
    return total


# --- activations ------------------------------------------------------------


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "elu":
        return np.where(z > 0, z, ELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    if kind == "identity":
        return z
    if kind == "softmax":
        return _softmax(z)
    raise ValueError(f"unknown activation {kind!r}")


def activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Elementwise derivative, given pre-activation z and activation a."""
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "elu":
        return np.where(z > 0, 1.0, a + ELU_ALPHA)
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"no elementwise derivative for {kind!r}")


# --- parameters -------------------------------------------------------------

# ModelParams: list of (W, b) with W.shape == (p_l, p_{l-1}), b.shape == (p_l,)
ModelParams = list


def init_params(arch: ArchitectureSpec, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic per (arch, seed)."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims()
    params = []
    for i in range(1, len(dims)):
        fan_in, fan_out = dims[i - 1], dims[i]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        params.append((w, b))
    return params


def copy_params(params: ModelParams) -> ModelParams:
    return [tuple(arr.copy() for arr in layer) for layer in params]


def _check_input(arch, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ShapeError(
            f"input has shape {np.asarray(x).shape}, expected (*, {arch.input_dim})"
        )
    return x, single


def _forward_trace(arch: ArchitectureSpec, params: ModelParams, x: np.ndarray):
    """Returns (activations, pre_activations); activations[0] is the input."""
    kinds = [h.activation for h in arch.hidden] + [arch.output_activation]
    if len(params) != len(kinds):
        raise ShapeError("params do not match architecture depth")
    acts = [x]
    pres = []
    a = x
    for (w, b), kind in zip(params, kinds):
        z = a @ w.T + b
        a = activate(kind, z)
        pres.append(z)
        acts.append(a)
    return acts, pres


def forward(arch: ArchitectureSpec, params: ModelParams, x) -> np.ndarray:
    """Network output for a single input vector or a batch of rows."""
    x, single = _check_input(arch, x)
    acts, _ = _forward_trace(arch, params, x)
    out = acts[-1]
    return out[0] if single else out


# --- loss and gradients -----------------------------------------------------


def loss(task: str, y_hat, y) -> float:
    """Mean squared error (regression) or cross-entropy (classification).

    Overflow is deliberate: a squared error beyond float64 becomes inf and
    is picked up by the divergence check in the training loop.
    """
    if task == REGRESSION:
        y_hat = np.asarray(y_hat, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y_hat.shape != y.shape:
            raise ShapeError(f"loss: shape mismatch {y_hat.shape} vs {y.shape}")
        with np.errstate(over="ignore"):
            return float(np.mean((y_hat - y) ** 2))
    if task == CLASSIFICATION:
        probs = np.asarray(y_hat, dtype=np.float64)
        labels = np.asarray(y, dtype=np.int64).ravel()
        if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
            raise ShapeError("loss: probabilities and labels do not align")
        picked = probs[np.arange(labels.size), labels]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    raise ValueError(f"unknown task {task!r}")


def output_delta(task: str, out: np.ndarray, y) -> np.ndarray:
    """d(loss)/d(pre-activation of the output layer), batch-averaged.

    For MSE with identity output this is 2(yhat - y)/N over all N entries;
    for cross-entropy with softmax output it is (probs - onehot)/m.
    """
    if task == REGRESSION:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if out.shape != y.shape:
            raise ShapeError(f"targets have shape {y.shape}, expected {out.shape}")
        return 2.0 * (out - y) / out.size
    labels = np.asarray(y, dtype=np.int64).ravel()
    if labels.shape[0] != out.shape[0]:
        raise ShapeError("labels do not align with batch")
    delta = out.copy()
    delta[np.arange(labels.size), labels] -= 1.0
    return delta / labels.size


def grad_and_loss(arch: ArchitectureSpec, params: ModelParams, batch_x, batch_y):
    """One combined forward/backward pass; returns (grads, batch_loss)."""
    x, _ = _check_input(arch, batch_x)
    if x.shape[0] == 0:
        raise ShapeError("grad: empty batch")
    acts, pres = _forward_trace(arch, params, x)
    target = batch_y if arch.task == CLASSIFICATION else _as_2d(batch_y)
    batch_loss = loss(arch.task, acts[-1], target)
    delta = output_delta(arch.task, acts[-1], batch_y)

    grads: list = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        gw = delta.T @ acts[i]
        gb = delta.sum(axis=0)
        grads[i] = (gw, gb)
        if i > 0:
            kind = arch.hidden[i - 1].activation
            delta = (delta @ params[i][0]) * activate_grad(kind, pres[i - 1], acts[i])
    return grads, batch_loss


def grad(arch: ArchitectureSpec, params: ModelParams, batch_x, batch_y, task: str) -> ModelParams:
    """Backpropagated d(loss)/d(params), averaged over the batch."""
    if task != arch.task:
        raise ValueError(f"task {task!r} does not match architecture task {arch.task!r}")
    return grad_and_loss(arch, params, batch_x, batch_y)[0]


def _as_2d(y):
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


# --- Adam -------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    step: int
    m: list
    v: list

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        def zeros(layer):
            return tuple(np.zeros_like(arr) for arr in layer)

        return cls(step=0, m=[zeros(p) for p in params], v=[zeros(p) for p in params])


def adam_step(state: AdamState, params: ModelParams, grads: ModelParams, learning_rate: float):
    """One bias-corrected Adam update; returns (new_state, new_params)."""
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    new_m, new_v, new_params = [], [], []
    for layer_p, layer_g, layer_m, layer_v in zip(params, grads, state.m, state.v):
        ms, vs, ps = [], [], []
        for p, g, m, v in zip(layer_p, layer_g, layer_m, layer_v):
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * (g * g)
            update = learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
            ms.append(m)
            vs.append(v)
            ps.append(p - update)
        new_m.append(tuple(ms))
        new_v.append(tuple(vs))
        new_params.append(tuple(ps))
    return AdamState(step=t, m=new_m, v=new_v), new_params


# --- training ---------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int
    learning_rate: float = 0.001
    max_epochs: Optional[int] = None  # None means the training-set size
    early_stop_patience: int = 10
    early_stop_min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be positive")
        if self.early_stop_min_delta < 0:
            raise ValueError("early_stop_min_delta must be non-negative")


@dataclass
class TrainedModel:
    arch: object
    params: ModelParams
    history: list  # one (train_loss, val_score) pair per epoch run
    stopped_epoch: int
    best_epoch: int
    val_score: float


def _model_ops(arch):
    """(eval_forward, grad_and_loss, init) for the architecture family."""
    if hasattr(arch, "conv_layers"):
        from . import conv

        return conv.cnn_forward, conv.cnn_grad_and_loss, conv.init_cnn_params
    return forward, _mlp_grad_and_loss, init_params


def _mlp_grad_and_loss(arch, params, x, y, rng=None):
    return grad_and_loss(arch, params, x, y)


def validation_score(arch, params, x_val, y_val, forward_fn=None) -> float:
    """R2 for regression, macro F1 for classification."""
    fwd = forward_fn or _model_ops(arch)[0]
    out = fwd(arch, params, x_val)
    if arch.task == REGRESSION:
        return r2_score(np.asarray(y_val).ravel(), out.ravel())
    labels = np.argmax(out, axis=-1)
    return f1_labels(y_val, labels, arch.output_dim)


class _FlatAdam:
    """Adam over one contiguous parameter vector.

    Entrywise identical to adam_step, but the whole model updates in a
    handful of vector operations; params stay views into the flat buffer.
    """

    def __init__(self, params: ModelParams):
        self.slots = []  # (offset, shape) per array, layer-major
        offset = 0
        for layer in params:
            for arr in layer:
                self.slots.append((offset, arr.shape))
                offset += arr.size
        self.flat = np.concatenate([arr.ravel() for layer in params for arr in layer])
        self.gflat = np.zeros_like(self.flat)
        self.m = np.zeros_like(self.flat)
        self.v = np.zeros_like(self.flat)
        self.step = 0
        self.layout = [len(layer) for layer in params]

    def views(self) -> ModelParams:
        it = iter(self.slots)
        out = []
        for width in self.layout:
            layer = []
            for _ in range(width):
                offset, shape = next(it)
                layer.append(self.flat[offset : offset + int(np.prod(shape))].reshape(shape))
            out.append(tuple(layer))
        return out

    def pack_grads(self, grads: ModelParams) -> np.ndarray:
        i = 0
        for layer in grads:
            for arr in layer:
                offset, shape = self.slots[i]
                self.gflat[offset : offset + arr.size] = arr.ravel()
                i += 1
        return self.gflat

    def update(self, grads: ModelParams, learning_rate: float) -> None:
        g = self.pack_grads(grads)
        self.step += 1
        m, v = self.m, self.v
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        c1 = 1.0 - ADAM_BETA1 ** self.step
        c2 = 1.0 - ADAM_BETA2 ** self.step
        self.flat -= learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def train(arch, train_set, val_set, cfg: TrainConfig) -> TrainedModel:
    """Mini-batch Adam with early stopping on the validation score.

    train_set and val_set are (X, y) pairs. Training stops once the score
    has not improved by at least early_stop_min_delta for
    early_stop_patience consecutive epochs, or at max_epochs. The returned
    params are the snapshot with the best validation score seen (including
    the untrained epoch-0 state). Raises TrainingDivergedError on a
    non-finite loss.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    n = x_train.shape[0]
    if n == 0 or x_val.shape[0] == 0:
        raise ShapeError("train and validation sets must be nonempty")
    if arch.task == CLASSIFICATION and np.unique(np.asarray(y_train)).size < 2:
        raise UndefinedScoreError("training labels contain a single class")

    fwd, grad_fn, init_fn = _model_ops(arch)
    max_epochs = n if cfg.max_epochs is None else cfg.max_epochs
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    mask_rng = np.random.default_rng([cfg.seed, 2])  # dropout masks (CNN only)

    opt = _FlatAdam(init_fn(arch, cfg.seed))
    params = opt.views()
    best_score = validation_score(arch, params, x_val, y_val, fwd)
    if not np.isfinite(best_score):
        raise TrainingDivergedError("non-finite validation score before training")
    best_flat = opt.flat.copy()
    best_epoch = 0
    monitor = best_score
    wait = 0
    history: list[tuple[float, float]] = []
    batch = min(cfg.batch_size, n)

    for epoch in range(1, max_epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            grads, batch_loss = grad_fn(arch, params, x_train[idx], y_train[idx], rng=mask_rng)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            epoch_loss += batch_loss * idx.size
            opt.update(grads, cfg.learning_rate)
        epoch_loss /= n

        score = validation_score(arch, params, x_val, y_val, fwd)
        if not np.isfinite(score):
            raise TrainingDivergedError(f"non-finite validation score at epoch {epoch}")
        history.append((epoch_loss, score))
        if score > best_score:
            best_score = score
            best_flat = opt.flat.copy()
            best_epoch = epoch
        if score >= monitor + cfg.early_stop_min_delta:
            monitor = score
            wait = 0
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                break

    opt.flat[:] = best_flat
    return TrainedModel(
        arch=arch,
        params=copy_params(params),
        history=history,
        stopped_epoch=len(history),
        best_epoch=best_epoch,
        val_score=best_score,
    )


# --- prediction -------------------------------------------------------------


def predict(model: TrainedModel, x) -> np.ndarray:
    """Regression: raw outputs. Classification: argmax class labels."""
    fwd = _model_ops(model.arch)[0]
    out = fwd(model.arch, model.params, x)
    if model.arch.task == REGRESSION:
        return out
    return np.argmax(out, axis=-1)


def predict_proba(model: TrainedModel, x) -> np.ndarray:
    """Class probabilities; classification models only."""
    if model.arch.task != CLASSIFICATION:
        raise ValueError("predict_proba is only defined for classification models")
    fwd = _model_ops(model.arch)[0]
    return fwd(model.arch, model.params, x)
