"""Stacked recurrent network with a linear dense head.

Every recurrent layer returns its full sequence. The recurrence for a padded
sequence runs only over its true length, so padding never reaches a cell and
predictions at padded steps are zero.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .backends import get_backend
from .cells import CellKind, CellParams, GruVariant, layer_param_count
from .numerics import ShapeError

MAX_STEPS = 700
N_FEATURES = 6


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class LayerSpec:
    kind: CellKind
    units: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CellKind(self.kind))
        if self.units < 1:
            raise ValueError(f"layer needs at least one unit, got {self.units}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_dim: int = N_FEATURES
    dropout_rate: float = 0.0
    gru_variant: GruVariant = GruVariant.RESET_AFTER
    head_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(*l) for l in self.layers))
        object.__setattr__(self, "gru_variant", GruVariant(self.gru_variant))
        if not self.layers:
            raise ValueError("network needs at least one recurrent layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        if self.head_dim != 1:
            raise ValueError("only a scalar regression head is supported")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")

    def layer_inputs(self):
        dims = [self.input_dim] + [l.units for l in self.layers[:-1]]
        return list(zip(dims, self.layers))

    def to_dict(self):
        return {
            "layers": [{"kind": l.kind.value, "units": l.units} for l in self.layers],
            "input_dim": self.input_dim,
            "dropout_rate": self.dropout_rate,
            "gru_variant": self.gru_variant.value,
            "head_dim": self.head_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            layers=tuple(LayerSpec(l["kind"], int(l["units"])) for l in d["layers"]),
            input_dim=int(d.get("input_dim", N_FEATURES)),
            dropout_rate=float(d.get("dropout_rate", 0.0)),
            gru_variant=d.get("gru_variant", GruVariant.RESET_AFTER.value),
            head_dim=int(d.get("head_dim", 1)),
        )


# Named architectures, by number of units per layer.
DESIGNS = {
    "design1": (16,),
    "design2": (32,),
    "design3": (64,),
    "design4": (16, 16, 16, 16),
    "design5": (8, 16, 32, 64),
    "design6": (64, 32, 16, 8),
    "design7": (64, 64, 32, 32, 16, 16),
    "design8": (64, 64, 64, 32, 32, 16, 16),
}


def design(name, kind=CellKind.GRU, gru_variant=GruVariant.RESET_AFTER, dropout_rate=0.0):
    try:
        units = DESIGNS[name]
    except KeyError:
        raise ValueError(f"unknown design {name!r}; known: {', '.join(DESIGNS)}") from None
    return NetworkSpec(tuple(LayerSpec(kind, u) for u in units),
                       gru_variant=gru_variant, dropout_rate=dropout_rate)


def param_count(spec):
    total = 0
    for in_dim, layer in spec.layer_inputs():
        total += layer_param_count(layer.kind, in_dim, layer.units, spec.gru_variant)
    return total + spec.layers[-1].units * spec.head_dim + spec.head_dim


class ParamSet:
    """All network parameters as views into one flat float64 vector.

    The flat order is layer by layer, then gate by gate (see
    :meth:`CellParams.arrays`), then the head weight row and head bias.
    """

    def __init__(self, spec, values=None):
        n = param_count(spec)
        if values is None:
            values = np.zeros(n)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (n,):
            raise ShapeError(f"spec needs {n} parameters, got array of shape {values.shape}")
        self.spec = spec
        self.values = values
        self.layers = []
        pos = 0
        for in_dim, layer in spec.layer_inputs():
            size = layer_param_count(layer.kind, in_dim, layer.units, spec.gru_variant)
            self.layers.append(CellParams.from_flat(
                layer.kind, in_dim, layer.units, spec.gru_variant, values[pos:pos + size]))
            pos += size
        last = spec.layers[-1].units
        self.head_w = values[pos:pos + last].reshape(1, last)
        self.head_b = values[pos + last:pos + last + 1]

    def __len__(self):
        return self.values.shape[0]

    def copy(self):
        return ParamSet(self.spec, self.values.copy())

    def zeros_like(self):
        return ParamSet(self.spec)


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(spec, seed):
    """Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases."""
    rng = np.random.default_rng(seed)
    params = ParamSet(spec)
    for p in params.layers:
        for g in p.gates:
            p.wx[g][...] = _glorot(rng, p.units, p.input_dim)
            p.wh[g][...] = _orthogonal(rng, p.units)
    params.head_w[...] = _glorot(rng, 1, spec.layers[-1].units)
    return params


@dataclass
class PaddedBatch:
    inputs: np.ndarray   # (B, T, input_dim)
    targets: np.ndarray  # (B, T)
    mask: np.ndarray     # (B, T), 1.0 at real steps
    lengths: np.ndarray  # (B,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        B, T = self.targets.shape
        if self.inputs.shape[:2] != (B, T) or self.mask.shape != (B, T) or self.lengths.shape != (B,):
            raise ShapeError(
                f"inconsistent batch shapes: inputs {self.inputs.shape}, targets {self.targets.shape}, "
                f"mask {self.mask.shape}, lengths {self.lengths.shape}")
        if T > MAX_STEPS:
            raise ShapeError(f"sequence length {T} exceeds the maximum of {MAX_STEPS}")
        if np.any(self.lengths < 0) or np.any(self.lengths > T):
            raise ShapeError("lengths must lie in [0, T]")

    @classmethod
    def from_sequences(cls, inputs, targets, pad_to=None):
        """Zero post-pad lists of ``(L, d)`` inputs and ``(L,)`` targets."""
        lengths = np.array([len(t) for t in targets], dtype=np.int64)
        T = int(pad_to if pad_to is not None else (lengths.max() if len(lengths) else 0))
        d = np.asarray(inputs[0]).shape[1] if inputs else N_FEATURES
        X = np.zeros((len(targets), T, d))
        Y = np.zeros((len(targets), T))
        M = np.zeros((len(targets), T))
        for b, (x, y) in enumerate(zip(inputs, targets)):
            L = len(y)
            X[b, :L] = x
            Y[b, :L] = y
            M[b, :L] = 1.0
        return cls(X, Y, M, lengths)

    @property
    def size(self):
        return self.targets.shape[0]

    def padded_to(self, T):
        """The same batch with extra zero padding appended up to length T."""
        B, T0 = self.targets.shape
        X = np.zeros((B, T, self.inputs.shape[2]))
        Y = np.zeros((B, T))
        M = np.zeros((B, T))
        X[:, :T0] = self.inputs
        Y[:, :T0] = self.targets
        M[:, :T0] = self.mask
        return PaddedBatch(X, Y, M, self.lengths.copy())


@dataclass
class Tape:
    params: ParamSet
    backend: object
    context: object
    records: object
    tops: list = field(default_factory=list)
    keeps: list = field(default_factory=list)
    shape: tuple = ()


def _dense(H, w, b):
    y = np.zeros(H.shape[0])
    for k in range(H.shape[1]):
        y += H[:, k] * w[k]
    return y + b


def _dropout_keep(rate, seed, index, shape):
    rng = np.random.default_rng([int(seed), int(index)])
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(batch, params, mode=Mode.EVAL, seed=0, backend=None):
    """Run the network over a padded batch; returns ``(predictions, tape)``."""
    mode = Mode(mode)
    spec = params.spec
    if batch.inputs.shape[2] != spec.input_dim:
        raise ShapeError(f"batch has {batch.inputs.shape[2]} features, network expects {spec.input_dim}")
    be = get_backend(backend)
    ctx = be.prepare(params)
    B, T = batch.targets.shape
    pred = np.zeros((B, T))
    record = be.forward(ctx, batch.inputs, batch.lengths)
    top = be.top(record)
    tape = Tape(params, be, ctx, record, shape=(B, T))
    w, b = params.head_w[0], params.head_b[0]
    rate = spec.dropout_rate
    for i in range(B):
        L = int(batch.lengths[i])
        h = top[i, :L]
        keep = None
        if mode is Mode.TRAIN and rate > 0.0:
            keep = _dropout_keep(rate, seed, i, h.shape)
            h = h * keep
        pred[i, :L] = _dense(h, w, b)
        tape.tops.append(h)
        tape.keeps.append(keep)
    return pred, tape


def backward(tape, batch, loss_grad):
    """Gradient of the loss with respect to every parameter, as a ParamSet."""
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != tape.shape or batch.targets.shape != tape.shape:
        raise ShapeError(f"tape was recorded for batch shape {tape.shape}, got {loss_grad.shape}")
    params = tape.params
    be = tape.backend
    grad = params.zeros_like()
    w = params.head_w[0]
    top_units = params.spec.layers[-1].units
    T = max((h.shape[0] for h in tape.tops), default=0)
    d_top = np.zeros((len(tape.tops), T, top_units))
    for i, h in enumerate(tape.tops):
        L = h.shape[0]
        dy = loss_grad[i, :L]
        grad.head_w[0] += (dy[:, None] * h).sum(axis=0)
        grad.head_b[0] += dy.sum()
        d = dy[:, None] * w[None, :]
        if tape.keeps[i] is not None:
            d = d * tape.keeps[i]
        d_top[i, :L] = d
    buf = be.grad_buffer(tape.context)
    be.backward(tape.context, tape.records, d_top, buf)
    be.collect(tape.context, buf, grad)
    return grad


def predict_sequence(trial, params, scaler, backend=None):
    """Eval-mode prediction of f(t) over a trial's real timesteps."""
    if trial.length == 0:
        return np.zeros(0)
    x = scaler.transform(trial.features())
    batch = PaddedBatch.from_sequences([x], [np.zeros(trial.length)])
    pred, _ = forward(batch, params, Mode.EVAL, backend=backend)
    return pred[0]
