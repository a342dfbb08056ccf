"""Masked regression losses averaged over the real timesteps of a batch.

``n`` is the number of real steps across the whole batch, so the loss does not
depend on how sequences are grouped into batches.
"""

from enum import Enum

import numpy as np

from .numerics import ShapeError


class LossKind(str, Enum):
    MSE = "mse"
    RMSE = "rmse"
    MAE = "mae"


class DegenerateInputError(ValueError):
    """Raised when a loss is requested over zero real timesteps."""


def _prepare(pred, target, mask):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not pred.shape == target.shape == mask.shape:
        raise ShapeError(f"pred {pred.shape}, target {target.shape} and mask {mask.shape} must match")
    real = mask != 0.0
    n = int(real.sum())
    if n == 0:
        raise DegenerateInputError("mask selects no timesteps")
    return pred, target, real, n


def masked_loss(pred, target, mask, kind=LossKind.MSE):
    kind = LossKind(kind)
    pred, target, real, n = _prepare(pred, target, mask)
    r = pred[real] - target[real]
    if kind is LossKind.MAE:
        return float(np.sum(np.abs(r)) / n)
    mse = float(np.sum(r * r) / n)
    return float(np.sqrt(mse)) if kind is LossKind.RMSE else mse


def masked_loss_grad(pred, target, mask, kind=LossKind.MSE):
    """Gradient of :func:`masked_loss` with respect to ``pred``; exactly 0 off-mask."""
    kind = LossKind(kind)
    pred, target, real, n = _prepare(pred, target, mask)
    grad = np.zeros_like(pred)
    r = pred[real] - target[real]
    if kind is LossKind.MSE:
        grad[real] = 2.0 * r / n
    elif kind is LossKind.MAE:
        grad[real] = np.sign(r) / n
    else:
        rmse = np.sqrt(np.sum(r * r) / n)
        if rmse == 0.0:
            raise DegenerateInputError("RMSE gradient is undefined at zero loss")
        grad[real] = r / (n * rmse)
    return grad
