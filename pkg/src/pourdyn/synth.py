"""Synthetic pouring trials.

Each trial tilts a cylindrical cup with a ramp-hold-ramp angular velocity.
Water starts leaving once the tilt passes the spill angle set by the empty
headspace above the water line, and the outflow rate follows a logistic
function of how far past that angle the cup is. The source-cup weight f(t)
starts at ``f_init`` and ends exactly ``f_target`` lower when noise is off.
"""

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import PouringTrial, write_trial
from .model import MAX_STEPS

# cubic millimetres of water per lbf of weight
MM3_PER_LBF = 453592.37
SPILL_WIDTH_DEG = 4.0
MAX_RETRIES = 1000


@dataclass(frozen=True)
class SynthConfig:
    n_trials: int = 688
    seed: int = 0
    length_range: tuple = (100, 700)
    f_init_range: tuple = (0.25, 0.9)          # lbf
    target_fraction_range: tuple = (0.2, 0.9)  # of f_init
    h_cup_range: tuple = (90.0, 160.0)         # mm
    d_cup_range: tuple = (65.0, 100.0)         # mm
    max_velocity: float = 1.5                  # rad/s
    noise: float = 0.0                         # lbf

    def __post_init__(self):
        for name in ("length_range", "f_init_range", "target_fraction_range", "h_cup_range", "d_cup_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (lo, hi))
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max, got {(lo, hi)}")
        lo, hi = self.length_range
        if int(lo) != lo or int(hi) != hi:
            raise ValueError("length_range must hold integers")
        if lo < 10 or hi > MAX_STEPS:
            raise ValueError(f"lengths must lie in [10, {MAX_STEPS}], got {self.length_range}")
        if self.target_fraction_range[1] > 1.0:
            raise ValueError("cannot pour more than the cup holds")
        if self.n_trials < 0:
            raise ValueError("n_trials must be non-negative")
        if not self.max_velocity > 0:
            raise ValueError("max_velocity must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def fill_height(f_init, d_cup):
    """Water column height (mm) for ``f_init`` lbf of water in a cylinder."""
    return f_init * MM3_PER_LBF / (math.pi * (d_cup / 2.0) ** 2)


def spill_angle(f_init, h_cup, d_cup):
    """Tilt (degrees) at which the water surface reaches the rim."""
    headspace = h_cup - fill_height(f_init, d_cup)
    return math.degrees(math.atan(2.0 * headspace / d_cup))


def _velocity_profile(rng, length, peak):
    up = max(1, int(round(rng.uniform(0.1, 0.3) * length)))
    down = max(1, int(round(rng.uniform(0.1, 0.3) * length)))
    t = np.arange(length, dtype=np.float64)
    rise = np.clip((t + 1.0) / up, 0.0, 1.0)
    fall = np.clip((length - t) / down, 0.0, 1.0)
    return peak * np.minimum(rise, fall)


def _trial(cfg, rng, index):
    for _ in range(MAX_RETRIES):
        f_init = rng.uniform(*cfg.f_init_range)
        h_cup = rng.uniform(*cfg.h_cup_range)
        d_cup = rng.uniform(*cfg.d_cup_range)
        if fill_height(f_init, d_cup) <= h_cup:
            break
    else:
        raise ValueError(f"no feasible cup geometry after {MAX_RETRIES} draws; widen the ranges")
    length = int(rng.integers(cfg.length_range[0], cfg.length_range[1] + 1))
    poured = f_init * rng.uniform(*cfg.target_fraction_range)
    crit = spill_angle(f_init, h_cup, d_cup)
    final_angle = min(crit + rng.uniform(15.0, 60.0), 180.0)

    theta_dot = _velocity_profile(rng, length, rng.uniform(0.4, 1.0) * cfg.max_velocity)
    # the sample period is whatever makes the integrated tilt reach final_angle
    dt = math.radians(final_angle) / theta_dot.sum()
    theta = np.degrees(np.cumsum(theta_dot) * dt)

    rate = 1.0 / (1.0 + np.exp(-(theta - crit) / SPILL_WIDTH_DEG))
    out = np.concatenate([[0.0], np.cumsum(rate[1:])])
    f = f_init - poured * out / out[-1] if out[-1] > 0 else np.full(length, f_init)
    f[0] = f_init
    if cfg.noise > 0:
        f = f + cfg.noise * rng.standard_normal(length)
    f = np.maximum(np.minimum.accumulate(f), 0.0)
    return PouringTrial(theta, f, f_init, poured, h_cup, d_cup, theta_dot, name=f"trial_{index:04d}")


def generate(config):
    """Trials drawn independently from per-trial seeds ``(seed, index)``."""
    return [_trial(config, np.random.default_rng([config.seed, i]), i) for i in range(config.n_trials)]


def write_corpus(trials, path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trials):
            write_trial(t, path / f"{t.name or f'trial_{i:04d}'}.csv")
    except OSError as exc:
        raise OSError(f"cannot write corpus to {path}: {exc}") from exc
    return len(trials)
