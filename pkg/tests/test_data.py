import warnings

import numpy as np
import pytest

from pourdyn.data import (COLUMNS, DataValidationError, PouringTrial, ScalerParams, fit_scaler, load_trials,
                          pad_and_batch, read_trial, split, write_trial)
from pourdyn.numerics import ShapeError


def make_trial(L, seed=0, name=""):
    rng = np.random.default_rng(seed)
    return PouringTrial(np.cumsum(rng.uniform(0, 1, L)), np.sort(rng.uniform(0, 1, L))[::-1],
                        rng.uniform(0.3, 0.9), rng.uniform(0.1, 0.3), rng.uniform(90, 160),
                        rng.uniform(60, 100), rng.uniform(0, 1.5, L), name=name)


def write_rows(path, rows, header=",".join(COLUMNS)):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")


def test_read_three_rows(tmp_path):
    p = tmp_path / "a.csv"
    write_rows(p, ["1,0.9,0.9,0.2,100,70,0.1", "2,0.85,0.9,0.2,100,70,0.2", "3.5,0.8,0.9,0.2,100,70,0.3"])
    t = read_trial(p)
    assert t.length == 3
    assert np.array_equal(t.theta, [1, 2, 3.5]) and np.array_equal(t.f, [0.9, 0.85, 0.8])
    assert (t.f_init, t.f_target, t.h_cup, t.d_cup) == (0.9, 0.2, 100.0, 70.0)
    assert np.array_equal(t.theta_dot, [0.1, 0.2, 0.3])
    assert np.array_equal(t.features()[1], [2, 0.9, 0.2, 100, 70, 0.2])


@pytest.mark.parametrize("rows,match", [
    (["1,nan,0.9,0.2,100,70,0.1"], ":2: non-finite value in f"),
    (["1,0.9,0.9,0.2,100,70,0.1", "1,x,0.9,0.2,100,70,0.1"], ":3:"),
    (["1,0.9,0.9,0.2,100,70"], "expected 7 fields"),
    (["1,0.9,0.9,0.2,100,70,0.1", "1,0.9,0.8,0.2,100,70,0.1"], ":3: f_init differs"),
    ([], "no data rows"),
])
def test_read_rejections(tmp_path, rows, match):
    p = tmp_path / "bad.csv"
    write_rows(p, rows)
    with pytest.raises(DataValidationError, match=match):
        read_trial(p)


def test_bad_header_and_too_long(tmp_path):
    p = tmp_path / "h.csv"
    write_rows(p, ["1,2,3,4,5,6,7"], header="a,b,c,d,e,f,g")
    with pytest.raises(DataValidationError, match="header"):
        read_trial(p)
    write_rows(p, ["1,0.9,0.9,0.2,100,70,0.1"] * 701)
    with pytest.raises(DataValidationError, match="longer than 700"):
        read_trial(p)


def test_load_trials_order_and_empty(tmp_path):
    assert load_trials(tmp_path) == []
    for name in ("b", "a", "c"):
        write_trial(make_trial(4, name=name), tmp_path / f"{name}.csv")
    assert [t.name for t in load_trials(tmp_path)] == ["a", "b", "c"]
    with pytest.raises(DataValidationError):
        load_trials(tmp_path / "missing")


def test_write_read_round_trip(tmp_path):
    t = make_trial(50, seed=3)
    write_trial(t, tmp_path / "t.csv")
    assert read_trial(tmp_path / "t.csv").equals(t)


def test_fit_scaler_hand_case():
    t = PouringTrial([1.0, 2.0, 3.0], [0, 0, 0], 1, 1, 1, 1, [4.0, 4.0, 5.0])
    with pytest.warns(RuntimeWarning, match="f_init"):
        s = fit_scaler([t])
    assert s.mu[0] == 2.0 and s.s[0] == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
    assert np.array_equal(s.s[1:5], np.ones(4)) and np.array_equal(s.mu[1:5], np.ones(4))
    z = s.transform(t)
    assert not z[:, 1:5].any()


def test_fit_scaler_on_standardized_data_is_identity():
    rng = np.random.default_rng(0)
    trials = [make_trial(int(rng.integers(10, 80)), seed=i) for i in range(20)]
    s = fit_scaler(trials)
    x = np.concatenate([s.transform(t) for t in trials])
    refit = ScalerParams(x.mean(axis=0), x.std(axis=0))
    np.testing.assert_allclose(refit.mu, 0.0, atol=1e-12)
    np.testing.assert_allclose(refit.s, 1.0, atol=1e-12)


def test_scaler_errors_and_round_trip():
    with pytest.raises(DataValidationError):
        fit_scaler([])
    with pytest.raises(ShapeError):
        ScalerParams(np.zeros(5), np.ones(5))
    with pytest.raises(ValueError):
        ScalerParams(np.zeros(6), np.zeros(6))
    s = ScalerParams(np.arange(6.0), np.arange(1.0, 7.0))
    assert ScalerParams.from_dict(s.to_dict()).to_dict() == s.to_dict()
    with pytest.raises(ShapeError):
        s.transform(np.zeros((3, 4)))


def test_pad_and_batch():
    trials = [make_trial(700, 1), make_trial(10, 2)]
    a, = pad_and_batch(trials, ScalerParams.identity(), 32)
    assert a.inputs.shape == (2, 700, 6)
    assert np.all(a.mask[0] == 1.0)
    assert a.mask[1].sum() == 10 and np.all(a.mask[1, :10] == 1.0)
    assert not a.inputs[1, 10:].any() and not a.targets[1, 10:].any()
    assert np.array_equal(a.targets[1, :10], trials[1].f)


def test_batch_counts_and_order_stability():
    trials = [make_trial(5, i) for i in range(550)]
    batches = pad_and_batch(trials, ScalerParams.identity(), 32, pad_to=5)
    assert len(batches) == 18 and [b.size for b in batches].count(32) == 17 and batches[-1].size == 6
    again = pad_and_batch(trials, ScalerParams.identity(), 32, pad_to=5)
    assert all(np.array_equal(x.inputs, y.inputs) for x, y in zip(batches, again))
    with pytest.raises(ValueError):
        pad_and_batch(trials, ScalerParams.identity(), 0)


def test_split_counts_and_seed():
    trials = list(range(688))
    s = split(trials, 0.8, seed=4)
    assert (len(s.train), len(s.val)) == (550, 138)
    assert sorted(s.train + s.val) == trials
    assert split(trials, 0.8, 4).train == s.train
    assert split(trials, 0.8, 5).train != s.train
    s10 = split(list(range(10)), 0.8)
    assert (len(s10.train), len(s10.val)) == (8, 2)
    with pytest.raises(ValueError):
        split(trials, 1.5)


def test_trial_validation():
    with pytest.raises(DataValidationError):
        PouringTrial([1, 2], [1], 1, 1, 1, 1, [1, 2])
    with pytest.raises(DataValidationError):
        PouringTrial(np.zeros(701), np.zeros(701), 1, 1, 1, 1, np.zeros(701))
