import math

import numpy as np
import pytest

from pourdyn.optim import (DEFAULTS, LrSchedule, OptimizerConfig, OptimizerKind, OptimizerState,
                           PoisonedUpdateError, ScheduleKind, lr_at, step)


# Independent scalar references, one update rule each, written with plain floats.
def ref_sgd(theta, grad_fn, lr, n, momentum=0.9):
    v, out = 0.0, []
    for _ in range(n):
        v = momentum * v - lr * grad_fn(theta)
        theta = theta + v
        out.append(theta)
    return out


def ref_adam(theta, grad_fn, lr, n, b1=0.9, b2=0.999, eps=1e-9):
    m = v = 0.0
    out = []
    for t in range(1, n + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * ((m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps))
        out.append(theta)
    return out


def ref_adamax(theta, grad_fn, lr, n, b1=0.9, b2=0.999, eps=1e-7):
    m = u = 0.0
    out = []
    for t in range(1, n + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        u = max(b2 * u, abs(g))
        theta = theta - lr / (1 - b1 ** t) * m / (u + eps)
        out.append(theta)
    return out


def ref_adagrad(theta, grad_fn, lr, n, acc=0.1, eps=1e-8):
    out = []
    for _ in range(n):
        g = grad_fn(theta)
        acc += g * g
        theta = theta - lr * g / (math.sqrt(acc) + eps)
        out.append(theta)
    return out


def ref_adadelta(theta, grad_fn, lr, n, rho=0.95, eps=1e-9):
    eg = ed = 0.0
    out = []
    for _ in range(n):
        g = grad_fn(theta)
        eg = rho * eg + (1 - rho) * g * g
        d = math.sqrt(ed + eps) / math.sqrt(eg + eps) * g
        ed = rho * ed + (1 - rho) * d * d
        theta = theta - lr * d
        out.append(theta)
    return out


def ref_rmsprop(theta, grad_fn, lr, n, rho=0.9, eps=1e-8):
    acc, out = 0.0, []
    for _ in range(n):
        g = grad_fn(theta)
        acc = rho * acc + (1 - rho) * g * g
        theta = theta - lr * g / (math.sqrt(acc) + eps)
        out.append(theta)
    return out


REFERENCES = {
    OptimizerKind.SGD: ref_sgd,
    OptimizerKind.ADAM: ref_adam,
    OptimizerKind.ADAMAX: ref_adamax,
    OptimizerKind.ADAGRAD: ref_adagrad,
    OptimizerKind.ADADELTA: ref_adadelta,
    OptimizerKind.RMSPROP: ref_rmsprop,
}


def run(kind, theta0=1.0, lr=1e-3, n=100):
    cfg = OptimizerConfig(kind)
    state = OptimizerState.create(cfg, 1)
    params = np.array([theta0])
    out = []
    for _ in range(n):
        step(cfg, state, params, 2.0 * params, lr)
        out.append(params[0])
    return out, state


def test_defaults():
    assert DEFAULTS[OptimizerKind.ADAM] == {"beta_1": 0.9, "beta_2": 0.999, "epsilon": 1e-9}
    assert DEFAULTS[OptimizerKind.ADADELTA] == {"rho": 0.95, "epsilon": 1e-9}
    assert DEFAULTS[OptimizerKind.ADAGRAD]["initial_accumulator"] == 0.1
    assert DEFAULTS[OptimizerKind.RMSPROP] == {"rho": 0.9, "momentum": 0.0, "epsilon": 1e-8}
    assert DEFAULTS[OptimizerKind.SGD] == {"momentum": 0.9, "nesterov": False}


@pytest.mark.parametrize("kind", list(OptimizerKind))
def test_matches_scalar_reference_on_quadratic(kind):
    got, state = run(kind)
    want = REFERENCES[kind](1.0, lambda th: 2.0 * th, 1e-3, 100)
    assert state.step == 100
    assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-12


@pytest.mark.parametrize("kind", list(OptimizerKind))
def test_monotone_descent_on_quadratic(kind):
    got, _ = run(kind)
    mags = [1.0] + [abs(v) for v in got]
    assert all(b <= a for a, b in zip(mags, mags[1:]))


def test_adam_first_step_exact():
    cfg = OptimizerConfig("adam")
    state = OptimizerState.create(cfg, 1)
    params = np.zeros(1)
    step(cfg, state, params, np.ones(1), 1e-3)
    assert params[0] == -1e-3 * (1.0 / (1.0 + 1e-9))


def test_adam_step_bound():
    got, _ = run(OptimizerKind.ADAM)
    prev = 1.0
    for v in got:
        assert abs(v - prev) <= 10 * 1e-3
        prev = v


def test_sgd_momentum_hand_case():
    cfg = OptimizerConfig("sgd")
    state = OptimizerState.create(cfg, 1)
    params = np.zeros(1)
    step(cfg, state, params, np.ones(1), 0.1)
    assert params[0] == pytest.approx(-0.1, abs=1e-15)
    before = params[0]
    step(cfg, state, params, np.ones(1), 0.1)
    assert params[0] - before == pytest.approx(-0.19, abs=1e-15)


@pytest.mark.parametrize("kind", list(OptimizerKind))
def test_zero_gradient_leaves_params(kind):
    cfg = OptimizerConfig(kind)
    state = OptimizerState.create(cfg, 3)
    params = np.array([1.0, -2.0, 0.5])
    step(cfg, state, params, np.zeros(3), 1e-2)
    assert np.array_equal(params, [1.0, -2.0, 0.5])


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_poisoned_gradient(bad):
    cfg = OptimizerConfig("adam")
    state = OptimizerState.create(cfg, 2)
    params = np.array([1.0, 2.0])
    with pytest.raises(PoisonedUpdateError):
        step(cfg, state, params, np.array([0.1, bad]), 1e-3)
    assert np.array_equal(params, [1.0, 2.0]) and state.step == 0
    assert not state.slots["m"].any()


def test_step_is_deterministic():
    rng = np.random.default_rng(0)
    g = rng.standard_normal(5)
    out = []
    for _ in range(2):
        cfg = OptimizerConfig("rmsprop")
        state = OptimizerState.create(cfg, 5)
        p = np.ones(5)
        for _ in range(3):
            step(cfg, state, p, g, 1e-2)
        out.append(p)
    assert np.array_equal(out[0], out[1])


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        OptimizerConfig("adam", {"rho": 0.9})
    with pytest.raises(ValueError):
        OptimizerConfig("adam", {"beta_1": 1.0})
    with pytest.raises(ValueError):
        OptimizerConfig("sgd", {"nesterov": True})
    cfg = OptimizerConfig("adagrad", {"epsilon": 1e-6})
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg["initial_accumulator"] == 0.1


# initial rate, schedule kind, every_n
LR_TABLE = [
    (1e-1, "constant", None), (1e-2, "constant", None), (1e-3, "constant", None), (1e-4, "constant", None),
    (1e-2, "exponential", None), (1e-3, "exponential", None),
    (1e-2, "step", 10), (1e-2, "step", 20), (1e-2, "step", 30), (1e-2, "step", 40),
]


@pytest.mark.parametrize("initial,kind,every", LR_TABLE)
def test_schedule_table(initial, kind, every):
    sched = LrSchedule(kind, initial, every_n=every or 20)
    for epoch in range(500):
        got = lr_at(sched, epoch)
        if kind == "constant":
            assert got == initial
        elif kind == "step":
            assert got == initial * 0.5 ** (epoch // every)
        else:
            assert got == pytest.approx(initial * math.exp(-0.01 * epoch), rel=1e-15)


def test_schedule_examples():
    assert lr_at(LrSchedule("constant", 1e-3), 499) == 1e-3
    assert lr_at(LrSchedule("step", 1e-2, 0.5, 20), 25) == 5e-3
    assert lr_at(LrSchedule("exponential", 1e-2, rate_k=0.01), 0) == 1e-2
    with pytest.raises(ValueError):
        lr_at(LrSchedule(), -1)


def test_schedule_validation():
    for bad in ({"initial_lr": 0.0}, {"factor": 1.0}, {"every_n": 0}, {"rate_k": -1.0}):
        with pytest.raises(ValueError):
            LrSchedule(**bad)
    s = LrSchedule(ScheduleKind.STEP, 1e-2, 0.5, 10)
    assert LrSchedule.from_dict(s.to_dict()) == s
