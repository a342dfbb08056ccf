"""Checkpoints: a JSON manifest plus a sibling file of little-endian float64 parameters."""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ScalerParams
from .model import NetworkSpec, ParamSet, param_count

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    """Unreadable, inconsistent or unsupported checkpoint."""


@dataclass
class Checkpoint:
    spec: NetworkSpec
    scaler: ScalerParams
    values: np.ndarray
    best_epoch: int = 0
    best_val_loss: float = None
    seed: int = 0
    created: float = field(default_factory=lambda: _now())
    version: int = FORMAT_VERSION

    @property
    def params(self):
        return ParamSet(self.spec, self.values)


def _now():
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible artifacts
    fixed = os.environ.get("SOURCE_DATE_EPOCH")
    return float(fixed) if fixed else time.time()


def _atomic_write(path, data):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save(ckpt, path):
    """Write ``path`` (manifest) and ``path`` with a ``.bin`` suffix (parameters)."""
    path = Path(path)
    blob = np.ascontiguousarray(ckpt.values, dtype=_DTYPE).tobytes()
    bin_path = path.with_suffix(".bin")
    manifest = {
        "format_version": ckpt.version,
        "spec": ckpt.spec.to_dict(),
        "scaler": ckpt.scaler.to_dict(),
        "param_count": int(ckpt.values.shape[0]),
        "params_file": bin_path.name,
        "params_dtype": "float64-le",
        "params_sha256": hashlib.sha256(blob).hexdigest(),
        "best_epoch": ckpt.best_epoch,
        "best_val_loss": ckpt.best_val_loss,
        "seed": ckpt.seed,
        "created": ckpt.created,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(bin_path, blob)
    _atomic_write(path, (json.dumps(manifest, indent=2) + "\n").encode())
    return path


def load(path):
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}")
    try:
        spec = NetworkSpec.from_dict(manifest["spec"])
        scaler = ScalerParams.from_dict(manifest["scaler"])
        blob = (path.parent / manifest["params_file"]).read_bytes()
    except (KeyError, OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if hashlib.sha256(blob).hexdigest() != manifest.get("params_sha256"):
        raise CheckpointError(f"{path}: parameter file does not match its checksum")
    values = np.frombuffer(blob, dtype=_DTYPE).astype(np.float64)
    if values.shape[0] != param_count(spec) or values.shape[0] != manifest.get("param_count"):
        raise CheckpointError(f"{path}: {values.shape[0]} parameters stored, spec needs {param_count(spec)}")
    return Checkpoint(spec, scaler, values, manifest.get("best_epoch", 0), manifest.get("best_val_loss"),
                      manifest.get("seed", 0), manifest.get("created", 0.0), version)
