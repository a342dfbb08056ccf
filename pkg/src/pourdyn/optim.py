"""Optimizers and learning-rate schedules over flat parameter vectors.

Update rules follow the usual toolkit forms: bias-corrected Adam, Adamax with
an infinity-norm second moment, Adadelta with squared-gradient and
squared-delta accumulators (scaled by the learning rate), RMSprop without
centering, Adagrad with a nonzero starting accumulator and heavy-ball SGD.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"
    ADAMAX = "adamax"
    ADAGRAD = "adagrad"
    ADADELTA = "adadelta"
    RMSPROP = "rmsprop"


DEFAULTS = {
    OptimizerKind.SGD: {"momentum": 0.9, "nesterov": False},
    OptimizerKind.ADAM: {"beta_1": 0.9, "beta_2": 0.999, "epsilon": 1e-9},
    OptimizerKind.ADAMAX: {"beta_1": 0.9, "beta_2": 0.999, "epsilon": 1e-7},
    OptimizerKind.ADAGRAD: {"initial_accumulator": 0.1, "epsilon": 1e-8},
    OptimizerKind.ADADELTA: {"rho": 0.95, "epsilon": 1e-9},
    OptimizerKind.RMSPROP: {"rho": 0.9, "momentum": 0.0, "epsilon": 1e-8},
}


class PoisonedUpdateError(FloatingPointError):
    """A gradient contained NaN or inf; parameters were left untouched."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.ADAM
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = OptimizerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.hyper) - set(DEFAULTS[kind])
        if unknown:
            raise ValueError(f"unknown {kind.value} hyperparameters: {sorted(unknown)}")
        merged = {**DEFAULTS[kind], **self.hyper}
        object.__setattr__(self, "hyper", merged)
        for name in ("beta_1", "beta_2", "rho"):
            if name in merged and not 0.0 <= merged[name] < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {merged[name]}")
        if "momentum" in merged and not 0.0 <= merged["momentum"] < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {merged['momentum']}")
        if merged.get("epsilon", 0.0) < 0.0 or merged.get("initial_accumulator", 0.0) < 0.0:
            raise ValueError("epsilon and initial_accumulator must be non-negative")
        if merged.get("nesterov"):
            raise ValueError("nesterov momentum is not supported")
        if kind is OptimizerKind.RMSPROP and merged["momentum"] != 0.0:
            raise ValueError("RMSprop momentum is not supported")

    def __getitem__(self, name):
        return self.hyper[name]

    def to_dict(self):
        return {"kind": self.kind.value, **self.hyper}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind", OptimizerKind.ADAM.value), d)


@dataclass
class OptimizerState:
    step: int
    slots: dict

    @classmethod
    def create(cls, config, n):
        kind = config.kind
        if kind is OptimizerKind.SGD:
            slots = {"velocity": np.zeros(n)}
        elif kind in (OptimizerKind.ADAM, OptimizerKind.ADAMAX):
            slots = {"m": np.zeros(n), "v": np.zeros(n)}
        elif kind is OptimizerKind.ADAGRAD:
            slots = {"accum": np.full(n, float(config["initial_accumulator"]))}
        elif kind is OptimizerKind.ADADELTA:
            slots = {"accum_grad": np.zeros(n), "accum_delta": np.zeros(n)}
        else:
            slots = {"accum": np.zeros(n)}
        return cls(0, slots)


def step(config, state, params, grads, lr):
    """Apply one update in place to ``params`` and ``state``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise PoisonedUpdateError("non-finite gradient; update skipped")
    kind, s = config.kind, state.slots
    t = state.step + 1
    if kind is OptimizerKind.SGD:
        v = s["velocity"]
        v *= config["momentum"]
        v -= lr * grads
        params += v
    elif kind is OptimizerKind.ADAM:
        b1, b2, eps = config["beta_1"], config["beta_2"], config["epsilon"]
        s["m"] = b1 * s["m"] + (1.0 - b1) * grads
        s["v"] = b2 * s["v"] + (1.0 - b2) * (grads * grads)
        m_hat = s["m"] / (1.0 - b1 ** t)
        v_hat = s["v"] / (1.0 - b2 ** t)
        params -= lr * (m_hat / (np.sqrt(v_hat) + eps))
    elif kind is OptimizerKind.ADAMAX:
        b1, b2, eps = config["beta_1"], config["beta_2"], config["epsilon"]
        s["m"] = b1 * s["m"] + (1.0 - b1) * grads
        s["v"] = np.maximum(b2 * s["v"], np.abs(grads))
        params -= (lr / (1.0 - b1 ** t)) * (s["m"] / (s["v"] + eps))
    elif kind is OptimizerKind.ADAGRAD:
        s["accum"] += grads * grads
        params -= lr * (grads / (np.sqrt(s["accum"]) + config["epsilon"]))
    elif kind is OptimizerKind.ADADELTA:
        rho, eps = config["rho"], config["epsilon"]
        s["accum_grad"] = rho * s["accum_grad"] + (1.0 - rho) * (grads * grads)
        delta = np.sqrt(s["accum_delta"] + eps) / np.sqrt(s["accum_grad"] + eps) * grads
        s["accum_delta"] = rho * s["accum_delta"] + (1.0 - rho) * (delta * delta)
        params -= lr * delta
    else:
        rho, eps = config["rho"], config["epsilon"]
        s["accum"] = rho * s["accum"] + (1.0 - rho) * (grads * grads)
        params -= lr * (grads / (np.sqrt(s["accum"]) + eps))
    state.step = t
    return state, params


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    STEP = "step"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class LrSchedule:
    kind: ScheduleKind = ScheduleKind.CONSTANT
    initial_lr: float = 1e-3
    factor: float = 0.5
    every_n: int = 20
    rate_k: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.initial_lr > 0.0:
            raise ValueError(f"initial_lr must be positive, got {self.initial_lr}")
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"step factor must be in (0, 1), got {self.factor}")
        if self.every_n < 1:
            raise ValueError(f"every_n must be at least 1, got {self.every_n}")
        if self.rate_k < 0.0:
            raise ValueError(f"rate_k must be non-negative, got {self.rate_k}")

    def to_dict(self):
        return {"kind": self.kind.value, "initial_lr": self.initial_lr, "factor": self.factor,
                "every_n": self.every_n, "rate_k": self.rate_k}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lr_at(schedule, epoch):
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if schedule.kind is ScheduleKind.CONSTANT:
        return schedule.initial_lr
    if schedule.kind is ScheduleKind.STEP:
        return schedule.initial_lr * schedule.factor ** (epoch // schedule.every_n)
    return schedule.initial_lr * math.exp(-schedule.rate_k * epoch)
