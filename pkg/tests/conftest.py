import numpy as np
import pytest

from pourdyn import backends
from pourdyn.loss import LossKind, masked_loss, masked_loss_grad
from pourdyn.model import Mode, PaddedBatch, backward, forward
from pourdyn.synth import SynthConfig, generate

BACKENDS = backends.available()


def random_batch(rng, lengths, input_dim=6, pad_to=None):
    xs = [rng.standard_normal((L, input_dim)) for L in lengths]
    ys = [rng.standard_normal(L) for L in lengths]
    return PaddedBatch.from_sequences(xs, ys, pad_to=pad_to)


def loss_and_grad(params, batch, backend=None, kind=LossKind.MSE, mode=Mode.EVAL, seed=0):
    pred, tape = forward(batch, params, mode, seed, backend=backend)
    loss = masked_loss(pred, batch.targets, batch.mask, kind)
    grad = backward(tape, batch, masked_loss_grad(pred, batch.targets, batch.mask, kind))
    return loss, grad.values


def fd_max_error(params, batch, backend=None, h=1e-6, kind=LossKind.MSE):
    """Max |analytic - central difference| / max(1, |central difference|) over all coordinates."""
    _, analytic = loss_and_grad(params, batch, backend, kind)
    values = params.values
    worst = 0.0
    for k in range(values.shape[0]):
        keep = values[k]
        values[k] = keep + h
        up = masked_loss(forward(batch, params, backend=backend)[0], batch.targets, batch.mask, kind)
        values[k] = keep - h
        down = masked_loss(forward(batch, params, backend=backend)[0], batch.targets, batch.mask, kind)
        values[k] = keep
        fd = (up - down) / (2.0 * h)
        worst = max(worst, abs(analytic[k] - fd) / max(1.0, abs(fd)))
    return worst


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SynthConfig(n_trials=12, seed=3, length_range=(10, 40)))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
