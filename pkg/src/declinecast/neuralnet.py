"""Dense feedforward networks on numpy: build, train, persist.

The engine is deliberately self-contained: explicit forward/backward passes,
mean-absolute-error loss, Adam updates, inverted dropout, and early stopping
on a validation metric. Everything that draws randomness takes a numpy
Generator from the caller, and the draw order is fixed (per epoch: one
permutation, then dropout masks batch by batch in layer order), so a seed
pins a training run exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from declinecast.dataset import Dataset, Scaler, window

MODEL_FORMAT = "declinecast-model 1"


class ModelFormatError(ValueError):
    """A model file is truncated, corrupt, or from an unknown format version."""


@dataclass
class DenseLayer:
    """One fully connected layer, plus the dropout applied to its output.

    weights has shape (fan_in, fan_out). dropout is the drop probability
    during training (inverted scaling keeps inference a plain pass-through).
    Frozen layers (trainable=False) still run forward and backward but their
    parameters are never updated.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str
    dropout: float = 0.0
    trainable: bool = True

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must lie in [0,1), got {self.dropout}")


@dataclass
class NetworkModel:
    """A layer stack plus the scaler mapping raw Mscf to model units.

    scaler may be None for a model that only ever sees pre-scaled arrays;
    predict and save_model require one.
    """

    layers: list[DenseLayer]
    scaler: Scaler | None = None

    @property
    def n_input(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def n_output(self) -> int:
        return self.layers[-1].weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int | None = 10  # None disables early stopping

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0,1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.patience is not None and not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs] (or be None)")


@dataclass
class TrainHistory:
    """Per-epoch record of a training run (epochs are numbered from 1).

    best_epoch is the first epoch attaining the minimum validation loss (0
    when nothing was monitored); stopped_early is True only when patience
    ended the run before max_epochs.
    """

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stopped_early: bool = False


def build_network(n_input, n_output, rng, hidden=(30, 35, 50), dropout=0.1,
                  scaler: Scaler | None = None) -> NetworkModel:
    """Fresh network: ReLU hidden stack with dropout, linear output head.

    The output layer is linear rather than ReLU so under-predictions keep a
    gradient; predict clamps at zero instead. Weights are drawn uniformly
    from [-sqrt(6/fan_in), +sqrt(6/fan_in)], biases start at zero. Layers
    are initialized in order, so one seed gives one network.
    """
    if n_input < 1 or n_output < 1:
        raise ValueError("n_input and n_output must be >= 1")
    sizes = [int(n_input), *[int(h) for h in hidden], int(n_output)]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        limit = math.sqrt(6.0 / fan_in)
        last = i == len(sizes) - 2
        layers.append(
            DenseLayer(
                weights=rng.uniform(-limit, limit, (fan_in, fan_out)),
                biases=np.zeros(fan_out),
                activation="linear" if last else "relu",
                dropout=0.0 if last else float(dropout),
            )
        )
    return NetworkModel(layers=layers, scaler=scaler)


def parameter_count(model: NetworkModel) -> int:
    return sum(l.weights.size + l.biases.size for l in model.layers)


def clone_network(model: NetworkModel) -> NetworkModel:
    layers = [
        DenseLayer(
            weights=l.weights.copy(),
            biases=l.biases.copy(),
            activation=l.activation,
            dropout=l.dropout,
            trainable=l.trainable,
        )
        for l in model.layers
    ]
    return NetworkModel(layers=layers, scaler=model.scaler)


def forward(model: NetworkModel, x, *, train=False, rng=None):
    """Network output for a batch in model units.

    In training mode dropout masks are drawn from rng, one per dropout layer
    in stack order; inference mode touches no randomness.
    """
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != model.n_input:
        raise ValueError(f"input width {a.shape[1]} != model n_input {model.n_input}")
    for layer in model.layers:
        z = a @ layer.weights + layer.biases
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        if train and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode forward needs an rng for dropout")
            keep = 1.0 - layer.dropout
            a = a * ((rng.random(a.shape) < keep) / keep)
    return a


def mae_loss(pred, target) -> float:
    """Mean absolute error over every element of the batch."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.abs(pred - target).mean())


def loss_gradients(model: NetworkModel, x, y, *, train=True, rng=None):
    """Loss and its gradient wrt each trainable layer's parameters.

    Returns (loss, {layer_index: (dW, db)}); frozen layers get no entry,
    though the chain still propagates through them. The loss subgradient at
    a zero residual is taken as 0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    caches = []
    a = x
    for layer in model.layers:
        z = a @ layer.weights + layer.biases
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        mask = None
        if train and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode forward needs an rng for dropout")
            keep = 1.0 - layer.dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        caches.append((a, z, mask))
        a = h
    residual = a - y
    loss = float(np.abs(residual).mean())

    delta = np.sign(residual) / residual.size
    grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        inp, z, mask = caches[i]
        if mask is not None:
            delta = delta * mask
        if layer.activation == "relu":
            delta = delta * (z > 0.0)
        if layer.trainable:
            grads[i] = (inp.T @ delta, delta.sum(axis=0))
        if i > 0:  # no use for the gradient wrt the input batch
            delta = delta @ layer.weights.T
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators for each trainable layer."""

    t: int
    slots: dict[int, list[np.ndarray]]

    @classmethod
    def for_model(cls, model: NetworkModel) -> "AdamState":
        slots = {
            i: [np.zeros_like(l.weights), np.zeros_like(l.weights),
                np.zeros_like(l.biases), np.zeros_like(l.biases)]
            for i, l in enumerate(model.layers)
            if l.trainable
        }
        return cls(t=0, slots=slots)


def adam_step(model: NetworkModel, grads, state: AdamState, cfg: TrainConfig):
    """One Adam update on the trainable layers.

    Bias correction is folded into the step size:
    alpha_t = lr * sqrt(1 - beta2^t) / (1 - beta1^t), applied to the raw
    moment estimates, so the very first step has magnitude
    lr * |g| / (|g| + eps / sqrt(1 - beta2)).
    """
    state.t += 1
    alpha = (
        cfg.learning_rate
        * math.sqrt(1.0 - cfg.beta2**state.t)
        / (1.0 - cfg.beta1**state.t)
    )
    for i in state.slots:
        m_w, v_w, m_b, v_b = state.slots[i]
        g_w, g_b = grads[i]
        layer = model.layers[i]
        m_w *= cfg.beta1
        m_w += (1.0 - cfg.beta1) * g_w
        v_w *= cfg.beta2
        v_w += (1.0 - cfg.beta2) * np.square(g_w)
        m_b *= cfg.beta1
        m_b += (1.0 - cfg.beta1) * g_b
        v_b *= cfg.beta2
        v_b += (1.0 - cfg.beta2) * np.square(g_b)
        layer.weights -= alpha * m_w / (np.sqrt(v_w) + cfg.epsilon)
        layer.biases -= alpha * m_b / (np.sqrt(v_b) + cfg.epsilon)


def _snapshot_trainable(model: NetworkModel):
    return {
        i: (l.weights.copy(), l.biases.copy())
        for i, l in enumerate(model.layers)
        if l.trainable
    }


def _restore_trainable(model: NetworkModel, snapshot):
    for i, (w, b) in snapshot.items():
        model.layers[i].weights = w.copy()
        model.layers[i].biases = b.copy()


def train_arrays(model: NetworkModel, x, y, x_val=None, y_val=None,
                 cfg: TrainConfig | None = None, rng=None, *, val_metric=None) -> TrainHistory:
    """Train in place on pre-scaled arrays with minibatch Adam.

    Early stopping watches val_metric(model) (default: inference-mode MAE on
    x_val/y_val): a strict decrease marks a new best epoch and snapshots the
    trainable layers; cfg.patience consecutive non-improving epochs end the
    run, and the best snapshot is restored either way. With neither val data
    nor a val_metric, training just runs max_epochs.

    The injectable val_metric exists so tests can script the validation
    signal; it must not consume the training rng.
    """
    cfg = cfg or TrainConfig()
    if rng is None:
        raise ValueError("train requires an rng")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    if val_metric is None and x_val is not None:
        x_val = np.atleast_2d(np.asarray(x_val, dtype=float))
        y_val = np.atleast_2d(np.asarray(y_val, dtype=float))

        def val_metric(m):
            return mae_loss(forward(m, x_val), y_val)

    n = x.shape[0]
    state = AdamState.for_model(model)
    history = TrainHistory()
    best = math.inf
    best_snapshot = None
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        abs_sum = 0.0
        n_elem = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_gradients(model, x[idx], y[idx], train=True, rng=rng)
            adam_step(model, grads, state, cfg)
            batch_elems = idx.size * y.shape[1]
            abs_sum += loss * batch_elems
            n_elem += batch_elems
        history.train_loss.append(abs_sum / n_elem)
        history.stopped_epoch = epoch

        if val_metric is None:
            continue
        v = float(val_metric(model))
        history.val_loss.append(v)
        if v < best:
            best = v
            history.best_epoch = epoch
            best_snapshot = _snapshot_trainable(model)
            wait = 0
        else:
            wait += 1
            if cfg.patience is not None and wait >= cfg.patience:
                history.stopped_early = True
                break
    if best_snapshot is not None:
        _restore_trainable(model, best_snapshot)
    return history


def train(model: NetworkModel, fit: Dataset, val: Dataset, n_input: int,
          cfg: TrainConfig | None = None, rng=None, *, val_metric=None) -> TrainHistory:
    """Train on well datasets: window each series, scale, run train_arrays.

    Inputs are the first n_input months and labels the remainder, both
    divided by the model's scaler. Requires non-empty fit and val sets and a
    model whose shape matches the windows.
    """
    if len(fit) == 0 or len(val) == 0:
        raise ValueError("fit and val datasets must be non-empty")
    if model.scaler is None:
        raise ValueError("model has no scaler; fit one before dataset training")
    if model.n_input != n_input:
        raise ValueError(f"model expects {model.n_input} input months, got n_input={n_input}")
    if model.n_output != fit.months - n_input:
        raise ValueError(
            f"model forecasts {model.n_output} months but windows leave {fit.months - n_input}"
        )
    x, y = windowed_arrays(fit, n_input, model.scaler)
    x_val, y_val = windowed_arrays(val, n_input, model.scaler)
    return train_arrays(model, x, y, x_val, y_val, cfg, rng, val_metric=val_metric)


def windowed_arrays(ds: Dataset, n_input: int, scaler: Scaler | None = None):
    """Stack a dataset into (inputs, labels) arrays, optionally scaled."""
    pairs = [window(w, n_input) for w in ds.wells]
    x = np.stack([p.input for p in pairs])
    y = np.stack([p.label for p in pairs])
    if scaler is not None:
        x, y = scaler.apply(x), scaler.apply(y)
    return x, y


def predict(model: NetworkModel, input_window):
    """Forecast in Mscf from a raw Mscf input window (1-D) or batch (2-D).

    Output is clamped at 0: production cannot be negative.
    """
    if model.scaler is None:
        raise ValueError("model has no fitted scaler")
    arr = np.asarray(input_window, dtype=float)
    if arr.shape[-1] != model.n_input:
        raise ValueError(f"input window has {arr.shape[-1]} months, model expects {model.n_input}")
    out = model.scaler.invert(forward(model, model.scaler.apply(np.atleast_2d(arr))))
    out = np.maximum(out, 0.0)
    return out[0] if arr.ndim == 1 else out


def save_model(model: NetworkModel, path):
    """Write a model as a self-describing text file.

    Layout: format line, scale line, layer count, then per layer a header
    line, one weights line per input row, and a biases line, all values at
    full decimal precision; a final `end` line guards against truncation.
    """
    if model.scaler is None:
        raise ValueError("cannot save a model without a scaler")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_FORMAT + "\n")
        fh.write(f"scale {model.scaler.scale!r}\n")
        fh.write(f"layers {len(model.layers)}\n")
        for l in model.layers:
            fh.write(
                f"layer {l.weights.shape[0]} {l.weights.shape[1]} "
                f"{l.activation} {l.dropout!r} {int(l.trainable)}\n"
            )
            for row in l.weights:
                fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")
            fh.write(" ".join(repr(v) for v in l.biases.tolist()) + "\n")
        fh.write("end\n")


def load_model(path) -> NetworkModel:
    """Read a model written by save_model; raises ModelFormatError if damaged."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"{path}: truncated file, expected {what}")
        line = lines[pos]
        pos += 1
        return line

    if take("format line") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a '{MODEL_FORMAT}' file")
    try:
        scale = float(take("scale line").removeprefix("scale "))
        n_layers = int(take("layer count").removeprefix("layers "))
        layers = []
        for _ in range(n_layers):
            fields = take("layer header").split()
            if len(fields) != 6 or fields[0] != "layer":
                raise ModelFormatError(f"{path}: bad layer header {fields}")
            fan_in, fan_out = int(fields[1]), int(fields[2])
            activation, dropout, trainable = fields[3], float(fields[4]), bool(int(fields[5]))
            weights = np.array(
                [[float(v) for v in take("weights row").split()] for _ in range(fan_in)]
            )
            biases = np.array([float(v) for v in take("biases row").split()])
            if weights.shape != (fan_in, fan_out) or biases.shape != (fan_out,):
                raise ModelFormatError(f"{path}: layer data does not match its header")
            layers.append(
                DenseLayer(weights=weights, biases=biases, activation=activation,
                           dropout=dropout, trainable=trainable)
            )
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from None
    if take("end sentinel") != "end":
        raise ModelFormatError(f"{path}: missing end sentinel (truncated write?)")
    if not layers:
        raise ModelFormatError(f"{path}: model has no layers")
    return NetworkModel(layers=layers, scaler=Scaler(scale))
