import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pourdyn.loss import DegenerateInputError, LossKind, masked_loss, masked_loss_grad
from pourdyn.numerics import ShapeError

Y = np.array([[1.0, 2.0, 0.0]])
P = np.array([[1.0, 3.0, 5.0]])
M = np.array([[1.0, 1.0, 0.0]])


def test_hand_case():
    assert masked_loss(P, Y, M, "mse") == 0.5
    assert masked_loss(P, Y, M, "mae") == 0.5
    assert masked_loss(P, Y, M, "rmse") == pytest.approx(0.7071067811865476, abs=1e-15)
    assert np.array_equal(masked_loss_grad(P, Y, M, "mse"), [[0.0, 1.0, 0.0]])


@pytest.mark.parametrize("kind", ["mse", "mae"])
def test_perfect_prediction(kind):
    assert masked_loss(Y, Y, M, kind) == 0.0
    assert not masked_loss_grad(Y, Y, M, kind).any()


def test_rmse_zero_loss_gradient_is_degenerate():
    assert masked_loss(Y, Y, M, "rmse") == 0.0
    with pytest.raises(DegenerateInputError):
        masked_loss_grad(Y, Y, M, "rmse")


def test_empty_mask_and_shape_errors():
    with pytest.raises(DegenerateInputError):
        masked_loss(P, Y, np.zeros_like(M))
    with pytest.raises(ShapeError):
        masked_loss(P, Y[:, :2], M)


finite = st.floats(-100, 100)


@settings(max_examples=60)
@given(arrays(np.float64, (3, 5), elements=finite), arrays(np.float64, (3, 5), elements=finite),
       arrays(np.float64, (3, 5), elements=st.sampled_from([0.0, 1.0])))
def test_properties(pred, target, mask):
    mask[0, 0] = 1.0
    mse = masked_loss(pred, target, mask, "mse")
    assert mse == masked_loss(target, pred, mask, "mse")
    rmse = masked_loss(pred, target, mask, "rmse")
    assert abs(rmse ** 2 - mse) <= 1e-14 * max(mse, 1e-300)
    perm = [2, 0, 1]
    assert masked_loss(pred[perm], target[perm], mask[perm], "mse") == pytest.approx(mse, rel=1e-14)
    for kind in ("mse", "mae"):
        g = masked_loss_grad(pred, target, mask, kind)
        assert np.all(g[mask == 0] == 0.0)


@pytest.mark.parametrize("kind", list(LossKind))
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(0)
    pred, target = rng.standard_normal((2, 6)), rng.standard_normal((2, 6))
    mask = np.ones((2, 6))
    mask[1, 4:] = 0
    g = masked_loss_grad(pred, target, mask, kind)
    h = 1e-7
    for idx in np.ndindex(pred.shape):
        up, down = pred.copy(), pred.copy()
        up[idx] += h
        down[idx] -= h
        fd = (masked_loss(up, target, mask, kind) - masked_loss(down, target, mask, kind)) / (2 * h)
        assert abs(g[idx] - fd) < 1e-7
