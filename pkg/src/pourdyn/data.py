"""Pouring trials: CSV ingestion, feature assembly, standardization, batching, splitting.

A trial file has the header ``theta,f,f_init,f_target,h_cup,d_cup,theta_dot``
and one row per timestep; the four cup constants repeat on every row.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import MAX_STEPS, N_FEATURES, PaddedBatch
from .numerics import ShapeError

COLUMNS = ("theta", "f", "f_init", "f_target", "h_cup", "d_cup", "theta_dot")
FEATURES = ("theta", "f_init", "f_target", "h_cup", "d_cup", "theta_dot")
CONSTANTS = ("f_init", "f_target", "h_cup", "d_cup")


class DataValidationError(ValueError):
    """A trial file or trial value failed validation."""


@dataclass
class PouringTrial:
    theta: np.ndarray      # degrees
    f: np.ndarray          # lbf
    f_init: float          # lbf
    f_target: float        # lbf
    h_cup: float           # mm
    d_cup: float           # mm
    theta_dot: np.ndarray  # rad/s
    name: str = ""

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.f = np.asarray(self.f, dtype=np.float64)
        self.theta_dot = np.asarray(self.theta_dot, dtype=np.float64)
        for c in CONSTANTS:
            setattr(self, c, float(getattr(self, c)))
        n = self.theta.shape
        if len(n) != 1 or self.f.shape != n or self.theta_dot.shape != n:
            raise DataValidationError(
                f"series lengths differ: theta {self.theta.shape}, f {self.f.shape}, "
                f"theta_dot {self.theta_dot.shape}")
        if n[0] > MAX_STEPS:
            raise DataValidationError(f"trial length {n[0]} exceeds {MAX_STEPS}")

    @property
    def length(self):
        return self.theta.shape[0]

    def features(self):
        """Unscaled ``(length, 6)`` input rows with the constants replicated per step."""
        L = self.length
        out = np.empty((L, N_FEATURES))
        out[:, 0] = self.theta
        out[:, 1] = self.f_init
        out[:, 2] = self.f_target
        out[:, 3] = self.h_cup
        out[:, 4] = self.d_cup
        out[:, 5] = self.theta_dot
        return out

    def rows(self):
        """All seven columns per timestep, in file order."""
        L = self.length
        return np.column_stack([self.theta, self.f, np.full(L, self.f_init), np.full(L, self.f_target),
                                np.full(L, self.h_cup), np.full(L, self.d_cup), self.theta_dot])

    def equals(self, other):
        return np.array_equal(self.rows(), other.rows())


def read_trial(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COLUMNS:
            raise DataValidationError(f"{path}:1: expected header {','.join(COLUMNS)}, got {header}")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise DataValidationError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            try:
                nums = [float(v) for v in row]
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
            bad = [c for c, v in zip(COLUMNS, nums) if not math.isfinite(v)]
            if bad:
                raise DataValidationError(f"{path}:{lineno}: non-finite value in {', '.join(bad)}")
            values.append(nums)
            if len(values) > MAX_STEPS:
                raise DataValidationError(f"{path}:{lineno}: trial longer than {MAX_STEPS} steps")
    if not values:
        raise DataValidationError(f"{path}: no data rows")
    a = np.array(values)
    for j, c in enumerate(COLUMNS):
        if c in CONSTANTS:
            diff = np.nonzero(a[:, j] != a[0, j])[0]
            if diff.size:
                raise DataValidationError(f"{path}:{diff[0] + 2}: {c} differs from the first row")
    return PouringTrial(a[:, 0], a[:, 1], a[0, 2], a[0, 3], a[0, 4], a[0, 5], a[:, 6], name=path.stem)


def load_trials(path):
    """Every ``*.csv`` in a directory, in lexicographic file order."""
    path = Path(path)
    if not path.is_dir():
        raise DataValidationError(f"{path}: not a directory")
    return [read_trial(p) for p in sorted(path.glob("*.csv"))]


def write_trial(trial, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in trial.rows():
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class ScalerParams:
    mu: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.mu.shape != (N_FEATURES,) or self.s.shape != (N_FEATURES,):
            raise ShapeError(f"scaler needs {N_FEATURES} means and scales")
        if np.any(self.s <= 0):
            raise ValueError("scales must be positive")

    def transform(self, x):
        x = _feature_array(x)
        return (x - self.mu) / self.s

    def inverse_transform(self, z):
        z = _feature_array(z)
        return z * self.s + self.mu

    def to_dict(self):
        return {"mu": self.mu.tolist(), "s": self.s.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["s"])

    @classmethod
    def identity(cls):
        return cls(np.zeros(N_FEATURES), np.ones(N_FEATURES))


def _feature_array(x):
    if isinstance(x, PouringTrial):
        x = x.features()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ShapeError(f"expected (steps, {N_FEATURES}) features, got {x.shape}")
    return x


def fit_scaler(trials):
    """Per-feature mean and population std over every real timestep of ``trials``."""
    if not trials:
        raise DataValidationError("cannot fit a scaler on zero trials")
    x = np.concatenate([t.features() for t in trials])
    if x.shape[0] < 2:
        raise DataValidationError("need at least two timesteps to fit a scaler")
    mu = x.mean(axis=0)
    s = x.std(axis=0)
    flat = s == 0.0
    if np.any(flat):
        names = ", ".join(FEATURES[i] for i in np.nonzero(flat)[0])
        warnings.warn(f"constant feature(s) {names}; scale set to 1", RuntimeWarning, stacklevel=2)
        s = np.where(flat, 1.0, s)
    return ScalerParams(mu, s)


def pad_and_batch(trials, scaler, batch_size, pad_to=MAX_STEPS):
    """Scaled, zero post-padded batches in the given trial order; last batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    batches = []
    for start in range(0, len(trials), batch_size):
        chunk = trials[start:start + batch_size]
        batches.append(PaddedBatch.from_sequences(
            [scaler.transform(t) for t in chunk], [t.f for t in chunk], pad_to=pad_to))
    return batches


@dataclass
class DatasetSplit:
    train: list
    val: list
    seed: int


def split(trials, fraction=0.8, seed=0):
    """Seeded shuffle, then the first ``floor(fraction * n)`` trials train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(trials))
    n_train = math.floor(fraction * len(trials) + 1e-9)
    shuffled = [trials[i] for i in order]
    return DatasetSplit(shuffled[:n_train], shuffled[n_train:], seed)
