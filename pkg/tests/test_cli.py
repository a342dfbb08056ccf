import filecmp
import json

import numpy as np
import pytest

from pourdyn import checkpoint as ckpt_io
from pourdyn.cli import main
from pourdyn.data import ScalerParams, load_trials, read_trial
from pourdyn.model import design, param_count, predict_sequence


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--n", "10", "--seed", "5", "--min-len", "10", "--max-len", "40",
                 "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--corpus", str(corpus), "--out", str(out), "--design", "16,8",
                 "--epochs", "3", "--seed", "1"]) == 0
    return out


def test_synth_count_and_repeatability(tmp_path, corpus):
    assert len(load_trials(corpus)) == 10
    main(["synth", "--n", "10", "--seed", "5", "--min-len", "10", "--max-len", "40", "--out", str(tmp_path)])
    cmp = filecmp.dircmp(corpus, tmp_path)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only


def test_synth_config_file(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"synth": {"n_trials": 3, "length_range": [10, 20]}}))
    assert main(["synth", "--config", str(tmp_path / "s.json"), "--out", str(tmp_path / "c")]) == 0
    assert all(10 <= t.length <= 20 for t in load_trials(tmp_path / "c"))


def test_usage_errors(tmp_path, capsys):
    assert main(["synth", "--n", "0", "--out", str(tmp_path)]) == 2
    assert main(["synth", "--n", "3"]) == 2
    assert main(["synth", "--n", "3", "--min-len", "2", "--out", str(tmp_path)]) == 2
    assert main(["inspect", "--design", "design9"]) == 2
    assert main(["train", "--corpus", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"epochs": "many"}))
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
    assert "epochs" in capsys.readouterr().err


def test_data_errors(tmp_path, corpus):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "t.csv").write_text("theta,f,f_init,f_target,h_cup,d_cup,theta_dot\n1,nan,1,1,1,1,1\n")
    assert main(["train", "--corpus", str(bad), "--out", str(tmp_path / "o")]) == 3
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--corpus", str(empty), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_abort(tmp_path, corpus):
    cfg = {"network": {"layers": [{"kind": "simple", "units": 4}]}, "optimizer": {"kind": "sgd"},
           "schedule": {"initial_lr": 1e300}, "epochs": 20}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code = main(["train", "--config", str(tmp_path / "c.json"), "--corpus", str(corpus),
                 "--out", str(tmp_path / "o")])
    assert code == 4


def test_inspect(capsys):
    assert main(["inspect", "--design", "design8"]) == 0
    out = capsys.readouterr().out
    assert "total trainable parameters: 83,537" in out
    assert [l.split()[2] for l in out.splitlines()[1:8]] == ["64", "64", "64", "32", "32", "16", "16"]
    assert main(["inspect", "--design", "design4"]) == 0
    out = capsys.readouterr().out
    assert out.count(" gru ") == 4 and "6,065" in out
    assert main(["inspect", "--design", "32"]) == 0
    assert f"{param_count(design('design2')):,}" in capsys.readouterr().out
    assert main(["inspect", "--design", "lstm:8,simple:4"]) == 0
    assert "lstm" in capsys.readouterr().out


def test_train_outputs(trained):
    ck = ckpt_io.load(trained / "checkpoint.json")
    assert [l.units for l in ck.spec.layers] == [16, 8]
    rows = (trained / "metrics.csv").read_text().splitlines()
    assert rows[0] == "epoch,train_loss,val_loss,lr,seconds" and len(rows) == 4


def test_eval_report(tmp_path, trained, corpus, capsys):
    report = tmp_path / "r.json"
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"), "--corpus", str(corpus),
                 "--out", str(report)]) == 0
    first = report.read_bytes()
    data = json.loads(first)
    assert data["trials"] == 10 and set(data) >= {"mse", "rmse", "mae"}
    assert data["rmse"] == pytest.approx(data["mse"] ** 0.5, rel=1e-14)
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"), "--corpus", str(corpus),
                 "--out", str(report)]) == 0
    assert report.read_bytes() == first
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"), "--corpus", str(corpus)]) == 0
    assert (trained / "eval_report.json").exists()
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"), "--corpus", str(empty)]) == 3


def test_predict(tmp_path, trained, corpus):
    trial_path = sorted(corpus.glob("*.csv"))[0]
    out = tmp_path / "p.csv"
    assert main(["predict", "--checkpoint", str(trained / "checkpoint.json"), "--trial", str(trial_path),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    trial = read_trial(trial_path)
    assert lines[0] == "t,f_true,f_pred" and len(lines) == trial.length + 1
    ck = ckpt_io.load(trained / "checkpoint.json")
    want = predict_sequence(trial, ck.params, ck.scaler)
    got = np.array([float(l.split(",")[2]) for l in lines[1:]])
    assert np.array_equal(got, want)
    assert np.array_equal([float(l.split(",")[1]) for l in lines[1:]], trial.f)


def test_predict_zero_checkpoint(tmp_path, corpus, capsys):
    spec = design("design1")
    ckpt_io.save(ckpt_io.Checkpoint(spec, ScalerParams.identity(), np.zeros(param_count(spec))),
                 tmp_path / "z.json")
    trial_path = sorted(corpus.glob("*.csv"))[1]
    assert main(["predict", "--checkpoint", str(tmp_path / "z.json"), "--trial", str(trial_path)]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert all(float(r.split(",")[2]) == 0.0 for r in rows)


def test_checkpoint_errors_map_to_data_exit(tmp_path, corpus):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"), "--corpus", str(corpus)]) == 3
