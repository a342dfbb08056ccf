"""Training runs: config, the epoch loop, evaluation and metrics logging."""

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import checkpoint as ckpt_io
from .cells import CellKind, GruVariant
from .data import DataValidationError, fit_scaler, load_trials, pad_and_batch, split
from .loss import LossKind, masked_loss, masked_loss_grad
from .model import DESIGNS, LayerSpec, Mode, NetworkSpec, backward, design, forward, init_params
from .optim import (DEFAULTS, LrSchedule, OptimizerConfig, OptimizerKind, OptimizerState,
                    PoisonedUpdateError, ScheduleKind, lr_at, step)

_NUMBER = {"type": "number"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "design": {"enum": sorted(DESIGNS)},
                "cell": {"enum": [k.value for k in CellKind]},
                "layers": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "units"],
                        "properties": {
                            "kind": {"enum": [k.value for k in CellKind]},
                            "units": {"type": "integer", "minimum": 1},
                        },
                    },
                },
                "gru_variant": {"enum": [v.value for v in GruVariant]},
                "dropout_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
            "not": {"required": ["design", "layers"]},
        },
        "optimizer": {
            "type": "object",
            "properties": {
                "kind": {"enum": [k.value for k in OptimizerKind]},
                **{name: ({"type": "boolean"} if name == "nesterov" else _NUMBER)
                   for hyper in DEFAULTS.values() for name in hyper},
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in ScheduleKind]},
                "initial_lr": {"type": "number", "exclusiveMinimum": 0},
                "factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "every_n": {"type": "integer", "minimum": 1},
                "rate_k": {"type": "number", "minimum": 0},
            },
        },
        "epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "data": {"type": ["string", "null"]},
        "out": {"type": ["string", "null"]},
        "loss": {"enum": [k.value for k in LossKind]},
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "grad_clip": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "backend": {"enum": ["cython", "python", None]},
    },
}


class ConfigError(ValueError):
    """Invalid training configuration."""


class NumericalAbort(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


def _spec_from_network(net):
    variant = net.get("gru_variant", GruVariant.RESET_AFTER.value)
    rate = net.get("dropout_rate", 0.0)
    if "layers" in net:
        return NetworkSpec(tuple(LayerSpec(l["kind"], l["units"]) for l in net["layers"]),
                           gru_variant=variant, dropout_rate=rate)
    return design(net.get("design", "design8"), kind=net.get("cell", CellKind.GRU.value),
                  gru_variant=variant, dropout_rate=rate)


@dataclass
class TrainConfig:
    spec: NetworkSpec = field(default_factory=lambda: design("design8"))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    epochs: int = 1500
    batch_size: int = 32
    seed: int = 0
    data: str = None
    out: str = None
    loss: LossKind = LossKind.MSE
    train_fraction: float = 0.8
    grad_clip: float = None
    backend: str = None

    @classmethod
    def from_dict(cls, d):
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {where}: {exc.message}") from None
        try:
            return cls(
                spec=_spec_from_network(d.get("network", {})),
                optimizer=OptimizerConfig.from_dict(d.get("optimizer", {})),
                schedule=LrSchedule.from_dict(d.get("schedule", {})),
                epochs=d.get("epochs", 1500),
                batch_size=d.get("batch_size", 32),
                seed=d.get("seed", 0),
                data=d.get("data"),
                out=d.get("out"),
                loss=LossKind(d.get("loss", LossKind.MSE.value)),
                train_fraction=d.get("train_fraction", 0.8),
                grad_clip=d.get("grad_clip"),
                backend=d.get("backend"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self):
        net = self.spec.to_dict()
        return {
            "network": {"layers": net["layers"], "gru_variant": net["gru_variant"],
                        "dropout_rate": net["dropout_rate"]},
            "optimizer": self.optimizer.to_dict(),
            "schedule": self.schedule.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "data": self.data,
            "out": self.out,
            "loss": self.loss.value,
            "train_fraction": self.train_fraction,
            "grad_clip": self.grad_clip,
            "backend": self.backend,
        }


class MetricsLog:
    """Per-epoch CSV rows, flushed as they are written."""

    HEADER = ("epoch", "train_loss", "val_loss", "lr", "seconds")

    def __init__(self, path=None):
        self.rows = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="", encoding="utf-8")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(self.HEADER)
            self._fh.flush()

    def append(self, epoch, train_loss, val_loss, lr, seconds):
        row = (epoch, train_loss, val_loss, lr, seconds)
        self.rows.append(row)
        if self._fh is not None:
            self._writer.writerow([epoch, repr(train_loss), repr(val_loss), repr(lr), f"{seconds:.3f}"])
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_metrics(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


def evaluate(params, trials, scaler, batch_size=32, backend=None):
    """Mse, Rmse and Mae over every real timestep of ``trials`` (Eval mode)."""
    preds, targets, masks = [], [], []
    for batch in pad_and_batch(trials, scaler, batch_size):
        pred, _ = forward(batch, params, Mode.EVAL, backend=backend)
        preds.append(pred)
        targets.append(batch.targets)
        masks.append(batch.mask)
    if not preds:
        raise DataValidationError("cannot evaluate on zero trials")
    p, y, m = np.concatenate(preds), np.concatenate(targets), np.concatenate(masks)
    return {k.value: masked_loss(p, y, m, k) for k in LossKind}


@dataclass
class TrainResult:
    params: object
    scaler: object
    metrics: list
    best_epoch: int
    best_val_loss: float
    checkpoint: object


def _batch_seed(seed, epoch, index):
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def _clip(grad, limit):
    norm = float(np.sqrt(np.dot(grad, grad)))
    if limit is not None and norm > limit:
        grad = grad * (limit / norm)
    return grad


def train(config, trials=None, log=None):
    """Train per ``config``; keeps the parameters with the lowest validation loss.

    ``trials`` overrides ``config.data``. With ``config.out`` set, the best
    checkpoint, the metrics CSV and the resolved config are written there.
    """
    if trials is None:
        if config.data is None:
            raise ConfigError("no training data: set 'data' or pass --corpus")
        trials = load_trials(config.data)
    if not trials:
        raise DataValidationError("training corpus is empty")
    if config.train_fraction >= 1.0:
        train_set, val_set = list(trials), list(trials)
    else:
        parts = split(trials, config.train_fraction, config.seed)
        train_set, val_set = parts.train, parts.val
        if not train_set or not val_set:
            raise DataValidationError(f"{len(trials)} trials are too few to split at {config.train_fraction}")

    out = Path(config.out) if config.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
    ckpt_path = out / "checkpoint.json" if out is not None else None

    scaler = fit_scaler(train_set)
    params = init_params(config.spec, config.seed)
    state = OptimizerState.create(config.optimizer, len(params))
    metrics = MetricsLog(out / "metrics.csv" if out is not None else None)
    best = None

    def keep(epoch, val_loss):
        ck = ckpt_io.Checkpoint(config.spec, scaler, params.values.copy(), epoch, val_loss, config.seed)
        if ckpt_path is not None:
            ckpt_io.save(ck, ckpt_path)
        return ck

    try:
        if config.epochs == 0:
            val = evaluate(params, val_set, scaler, config.batch_size, config.backend)[config.loss.value]
            best = keep(0, val)
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            lr = lr_at(config.schedule, epoch - 1)
            order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
            shuffled = [train_set[i] for i in order]
            total, count = 0.0, 0
            for b, batch in enumerate(pad_and_batch(shuffled, scaler, config.batch_size)):
                pred, tape = forward(batch, params, Mode.TRAIN, _batch_seed(config.seed, epoch, b),
                                     backend=config.backend)
                loss = masked_loss(pred, batch.targets, batch.mask, config.loss)
                if not math.isfinite(loss):
                    raise NumericalAbort(f"non-finite training loss at epoch {epoch}, batch {b}")
                n = int(batch.mask.sum())
                total += loss * n
                count += n
                grad = backward(tape, batch, masked_loss_grad(pred, batch.targets, batch.mask, config.loss))
                try:
                    step(config.optimizer, state, params.values, _clip(grad.values, config.grad_clip), lr)
                except PoisonedUpdateError as exc:
                    raise NumericalAbort(f"epoch {epoch}, batch {b}: {exc}") from None
            val = evaluate(params, val_set, scaler, config.batch_size, config.backend)[config.loss.value]
            if not math.isfinite(val):
                raise NumericalAbort(f"non-finite validation loss at epoch {epoch}")
            metrics.append(epoch, total / count, val, lr, time.perf_counter() - start)
            if best is None or val < best.best_val_loss:
                best = keep(epoch, val)
            if log is not None:
                log(f"epoch {epoch}: train {total / count:.6g} val {val:.6g} lr {lr:.3g}")
    finally:
        metrics.close()
    return TrainResult(best.params, scaler, metrics.rows, best.best_epoch, best.best_val_loss, best)
