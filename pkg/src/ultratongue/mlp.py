"""Fully connected ReLU regression networks trained by minibatch backprop.

Weights are stored as ``(out, in)`` matrices, so a layer computes
``h @ W.T + b``. Training happens in standardized space: inputs and targets
are z-scored with per-dimension scalers that travel with the model, and
:func:`forward` maps raw features to raw-scale outputs.
"""

import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    CorruptionError,
    FormatError,
    InputError,
    NumericError,
    SizeError,
    TrainingError,
    ValidationError,
)
from .imaging import FRAME_SIZE, RAW255, devectorize

MLP_MAGIC = b"MLPR"
MODES = {"pixels": 0, "et": 1}
_MODE_NAMES = {v: k for k, v in MODES.items()}
OPTIMIZERS = ("sgd", "rmsprop", "adam")
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int = 50
    hidden_layers: tuple = (1000, 1000)
    output_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValidationError("need at least one hidden layer, all widths >= 1")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValidationError("input and output dimensions must be >= 1")

    @property
    def layer_dims(self):
        return (self.input_dim,) + self.hidden_layers + (self.output_dim,)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-dimension affine standardization ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        # constant dimensions keep unit scale so they stay exactly representable
        std[std < STD_FLOOR] = 1.0
        return cls(x.mean(axis=0), std)

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def __eq__(self, other):
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    __hash__ = None


@dataclass(eq=False)
class MlpModel:
    spec: MlpSpec
    weights: list
    biases: list
    input_scaler: Scaler
    target_scaler: Scaler
    mode: str = "et"

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise SizeError("layer count does not match the architecture")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise SizeError(f"layer {k} has shapes {w.shape}/{b.shape}, expected {(dims[k + 1], dims[k])}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")

    @property
    def n_layers(self):
        return len(self.weights)

    def params(self):
        return list(self.weights) + list(self.biases)

    def copy(self):
        return replace(self, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (self.spec == other.spec and self.mode == other.mode
                and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
                and self.input_scaler == other.input_scaler and self.target_scaler == other.target_scaler)

    __hash__ = None


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 100
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1 or self.early_stop_patience < 1 or self.max_epochs < 0:
            raise ValidationError("batch_size and patience must be >= 1, max_epochs >= 0")


@dataclass
class TrainReport:
    """Losses are in standardized target space; index 0 is the untrained model."""

    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0

    @property
    def epochs_run(self):
        return len(self.validation_loss) - 1


def init_model(spec, seed=0, mode="et"):
    """He-uniform weights in +-sqrt(6 / fan_in), zero biases, identity scalers."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(spec, weights, biases, Scaler.identity(spec.input_dim),
                    Scaler.identity(spec.output_dim), mode)


def _activations(m, h):
    """Forward pass in standardized space, keeping every layer input for backprop."""
    acts = [h]
    last = m.n_layers - 1
    for k, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ w.T + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward_standardized(m, z):
    return _activations(m, z)[-1]


def forward(m, x):
    """Raw features -> raw-scale outputs. Accepts one vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != m.spec.input_dim:
        raise SizeError(f"expected {m.spec.input_dim} inputs, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite network input")
    y = m.target_scaler.inverse(forward_standardized(m, m.input_scaler.transform(x)))
    return y[0] if single else y


def loss_and_gradient(m, batch_x, batch_y):
    """MSE over batch and outputs, with gradients for every weight and bias.

    ``batch_x`` and ``batch_y`` are already standardized. Gradients come back
    as ``(dweights, dbiases)`` lists aligned with the model's layers. The ReLU
    derivative at exactly zero is taken as zero.
    """
    x = np.atleast_2d(np.asarray(batch_x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(batch_y, dtype=np.float64))
    if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise SizeError("batch must be non-empty with matching rows")
    acts = _activations(m, x)
    err = acts[-1] - y
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    delta = 2.0 * err / err.size
    dws, dbs = [None] * m.n_layers, [None] * m.n_layers
    for k in range(m.n_layers - 1, -1, -1):
        dws[k] = delta.T @ acts[k]
        dbs[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ m.weights[k]) * (acts[k] > 0.0)
    return loss, (dws, dbs)


def mse_standardized(m, z, t, chunk=4096):
    total = 0.0
    for i in range(0, z.shape[0], chunk):
        e = forward_standardized(m, z[i:i + chunk]) - t[i:i + chunk]
        total += float(np.sum(e * e))
    return total / t.size


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

class Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class RmsProp:
    def __init__(self, params, lr, rho=0.9, eps=1e-8):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.v):
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


_OPTIMIZER_CLASSES = {"sgd": Sgd, "rmsprop": RmsProp, "adam": Adam}


def make_optimizer(name, params, lr):
    return _OPTIMIZER_CLASSES[name](params, lr)


def train(m, train_set, validation_set, cfg=TrainConfig(), fit_scalers=True, log=None):
    """Minibatch training with early stopping on validation loss.

    ``train_set`` and ``validation_set`` are ``(features, targets)`` pairs on
    the raw scale. Unless ``fit_scalers`` is False, both scalers are refitted
    on the training pair. Returns the best-validation model and the report.
    """
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_set)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in validation_set)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise SizeError("training and validation sets must be non-empty")
    if len(x_tr) != len(y_tr) or len(x_va) != len(y_va):
        raise SizeError("features and targets differ in length")
    t0 = time.perf_counter()
    model = m.copy()
    if fit_scalers:
        model.input_scaler = Scaler.fit(x_tr)
        model.target_scaler = Scaler.fit(y_tr)
    z_tr, t_tr = model.input_scaler.transform(x_tr), model.target_scaler.transform(y_tr)
    z_va, t_va = model.input_scaler.transform(x_va), model.target_scaler.transform(y_va)

    report = TrainReport([mse_standardized(model, z_tr, t_tr)], [mse_standardized(model, z_va, t_va)])
    best = model.copy()
    params = model.params()
    opt = make_optimizer(cfg.optimizer, params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    n = len(z_tr)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            try:
                loss, (dws, dbs) = loss_and_gradient(model, z_tr[idx], t_tr[idx])
            except NumericError as exc:
                raise TrainingError(f"training diverged in epoch {epoch}: {exc}", epoch) from exc
            opt.step(params, dws + dbs)
            running += loss * len(idx)
        val = mse_standardized(model, z_va, t_va)
        if not np.isfinite(val):
            raise TrainingError(f"validation loss became non-finite in epoch {epoch}", epoch)
        report.train_loss.append(running / n)
        report.validation_loss.append(val)
        if log is not None:
            log(epoch, running / n, val)
        if val < report.validation_loss[report.best_epoch]:
            report.best_epoch = epoch
            best = model.copy()
        elif epoch - report.best_epoch >= cfg.early_stop_patience:
            break
    report.wall_time = time.perf_counter() - t0
    return best, report


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_matrix(m, features, basis=None):
    """Predicted 4096-pixel rows (raw255, clamped) for a feature matrix."""
    from .eigentongue import reconstruct_many

    if m.mode == "et":
        if basis is None:
            raise ContractError("ET-mode model needs an EigenTongue basis")
        if m.spec.output_dim != basis.n_components:
            raise ContractError(f"model predicts {m.spec.output_dim} coefficients, basis has {basis.n_components}")
        return reconstruct_many(forward(m, features), basis)
    if basis is not None:
        raise ContractError("pixel-mode model does not take a basis")
    if m.spec.output_dim != FRAME_SIZE:
        raise ContractError(f"pixel-mode model must output {FRAME_SIZE} values")
    return np.clip(forward(m, features), 0.0, 255.0)


def predict_utterance(m, features, basis=None):
    """One raw255 :class:`~ultratongue.imaging.Frame` per feature vector."""
    rows = [f.values if hasattr(f, "values") else f for f in features]
    if not rows:
        return []
    return [devectorize(v, RAW255) for v in predict_matrix(m, np.vstack(rows), basis)]


# ---------------------------------------------------------------------------
# .mlp files
# ---------------------------------------------------------------------------

def encode_model(m):
    parts = [MLP_MAGIC, struct.pack("<I", m.n_layers)]
    for w, b in zip(m.weights, m.biases):
        parts.append(struct.pack("<II", *w.shape))
        parts.append(w.astype("<f8").tobytes(order="C"))
        parts.append(b.astype("<f8").tobytes())
    for v in (m.input_scaler.mean, m.input_scaler.std, m.target_scaler.mean, m.target_scaler.std):
        parts.append(np.asarray(v, dtype="<f8").tobytes())
    parts.append(struct.pack("<B", MODES[m.mode]))
    return b"".join(parts)


def decode_model(data, source="<bytes>"):
    if len(data) < 8 or data[:4] != MLP_MAGIC:
        raise FormatError(f"{source}: bad magic")
    (n_layers,) = struct.unpack_from("<I", data, 4)
    if n_layers < 2:
        raise FormatError(f"{source}: a model needs at least two layers")
    pos = 8

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(data):
            raise CorruptionError(f"{source}: truncated payload")
        out = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos = end
        return out

    weights, biases = [], []
    for _ in range(n_layers):
        if pos + 8 > len(data):
            raise CorruptionError(f"{source}: truncated layer header")
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        weights.append(take(rows * cols).reshape(rows, cols))
        biases.append(take(rows))
    d_in, d_out = weights[0].shape[1], weights[-1].shape[0]
    in_scaler = Scaler(take(d_in), take(d_in))
    out_scaler = Scaler(take(d_out), take(d_out))
    if pos + 1 != len(data):
        raise CorruptionError(f"{source}: expected a 1-byte mode tag at offset {pos}, file has {len(data)} bytes")
    tag = data[pos]
    if tag not in _MODE_NAMES:
        raise FormatError(f"{source}: unknown mode tag {tag}")
    spec = MlpSpec(d_in, tuple(w.shape[0] for w in weights[:-1]), d_out)
    return MlpModel(spec, weights, biases, in_scaler, out_scaler, _MODE_NAMES[tag])


def save_model(path, m):
    Path(path).write_bytes(encode_model(m))


def load_model(path):
    path = Path(path)
    return decode_model(path.read_bytes(), str(path))
