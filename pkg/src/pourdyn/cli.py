"""``pourdyn`` command line: synth, train, eval, predict, inspect.

Exit codes: 0 success, 2 usage or config error, 3 data validation error,
4 numerical abort.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .cells import CellKind, GruVariant, layer_param_count
from .data import DataValidationError, load_trials, read_trial
from .loss import DegenerateInputError
from .model import DESIGNS, LayerSpec, NetworkSpec, design, param_count, predict_sequence
from .synth import SynthConfig, generate, write_corpus
from .train import ConfigError, NumericalAbort, TrainConfig, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_synth(args):
    d = _read_json(args.config) if args.config else {}
    d = d.get("synth", d)
    if args.n is not None:
        d["n_trials"] = args.n
    if args.seed is not None:
        d["seed"] = args.seed
    if args.min_len is not None or args.max_len is not None:
        lo, hi = d.get("length_range", SynthConfig.length_range)
        d["length_range"] = (args.min_len or lo, args.max_len or hi)
    if args.noise is not None:
        d["noise"] = args.noise
    if d.get("n_trials", 1) < 1:
        raise UsageError("--n must be at least 1")
    if not args.out:
        raise UsageError("synth needs --out")
    try:
        cfg = SynthConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synth config: {exc}") from None
    n = write_corpus(generate(cfg), args.out)
    print(f"wrote {n} trials to {args.out}")


def _train_config(args):
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.corpus:
        changes["data"] = args.corpus
    if args.out:
        changes["out"] = args.out
    if args.epochs is not None:
        if args.epochs < 0:
            raise UsageError("--epochs must be non-negative")
        changes["epochs"] = args.epochs
    if args.design:
        changes["spec"] = _design_spec(args.design, args.cell or cfg.spec.layers[0].kind.value,
                                       cfg.spec.gru_variant, cfg.spec.dropout_rate)
    if args.backend:
        changes["backend"] = args.backend
    return replace(cfg, **changes)


def cmd_train(args):
    cfg = _train_config(args)
    if cfg.out is None:
        raise UsageError("train needs --out (or 'out' in the config)")
    log = print if args.verbose else None
    result = train(cfg, log=log)
    print(f"best epoch {result.best_epoch}: val {cfg.loss.value} {result.best_val_loss:.6g}; "
          f"{len(result.params)} parameters; checkpoint {Path(cfg.out) / 'checkpoint.json'}")


def cmd_eval(args):
    if not args.checkpoint or not args.corpus:
        raise UsageError("eval needs --checkpoint and --corpus")
    ck = ckpt_io.load(args.checkpoint)
    trials = load_trials(args.corpus)
    if not trials:
        raise DegenerateInputError(f"{args.corpus}: no trials to evaluate")
    report = evaluate(ck.params, trials, ck.scaler, backend=args.backend)
    report = {"checkpoint": str(args.checkpoint), "corpus": str(args.corpus), "trials": len(trials),
              "steps": int(sum(t.length for t in trials)), **report}
    for k in ("mse", "rmse", "mae"):
        print(f"{k} {report[k]:.6e}")
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name("eval_report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def cmd_predict(args):
    if not args.checkpoint or not args.trial:
        raise UsageError("predict needs --checkpoint and --trial")
    ck = ckpt_io.load(args.checkpoint)
    trial = read_trial(args.trial)
    pred = predict_sequence(trial, ck.params, ck.scaler, backend=args.backend)
    lines = ["t,f_true,f_pred"]
    lines += [f"{t},{y!r},{p!r}" for t, (y, p) in enumerate(zip(trial.f.tolist(), pred.tolist()))]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _design_spec(name, cell, variant=GruVariant.RESET_AFTER, dropout=0.0):
    if name in DESIGNS:
        return design(name, kind=cell, gru_variant=variant, dropout_rate=dropout)
    # free form: comma separated units, optionally kind:units
    layers = []
    for part in name.split(","):
        kind, _, units = part.strip().rpartition(":")
        try:
            layers.append(LayerSpec(kind or cell, int(units)))
        except ValueError:
            raise UsageError(f"unknown design {name!r}; use design1..design8 or a list like 64,32") from None
    return NetworkSpec(tuple(layers), gru_variant=variant, dropout_rate=dropout)


def cmd_inspect(args):
    if args.checkpoint:
        spec = ckpt_io.load(args.checkpoint).spec
    elif args.config:
        spec = TrainConfig.from_file(args.config).spec
    else:
        spec = _design_spec(args.design or "design8", args.cell or "gru", args.gru_variant)
    print(f"{'layer':>5}  {'kind':<6} {'units':>5} {'params':>8}")
    for i, (in_dim, layer) in enumerate(spec.layer_inputs(), start=1):
        n = layer_param_count(layer.kind, in_dim, layer.units, spec.gru_variant)
        print(f"{i:>5}  {layer.kind.value:<6} {layer.units:>5} {n:>8,}")
    head = spec.layers[-1].units + 1
    print(f"{'head':>5}  {'dense':<6} {1:>5} {head:>8,}")
    print(f"total trainable parameters: {param_count(spec):,}")


def build_parser():
    p = argparse.ArgumentParser(prog="pourdyn", description="Recurrent pouring-dynamics regression.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic trial corpus")
    s.add_argument("--config")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--min-len", type=int)
    s.add_argument("--max-len", type=int)
    s.add_argument("--noise", type=float)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a network and keep the best checkpoint")
    t.add_argument("--config")
    t.add_argument("--corpus")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--design")
    t.add_argument("--cell", choices=[k.value for k in CellKind])
    t.add_argument("--epochs", type=int)
    t.add_argument("--backend", choices=["cython", "python"])
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="report Mse/Rmse/Mae of a checkpoint on a corpus")
    e.add_argument("--checkpoint")
    e.add_argument("--corpus")
    e.add_argument("--out", help="JSON report path (default: next to the checkpoint)")
    e.add_argument("--backend", choices=["cython", "python"])
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="write t,f_true,f_pred for one trial")
    r.add_argument("--checkpoint")
    r.add_argument("--trial")
    r.add_argument("--out")
    r.add_argument("--backend", choices=["cython", "python"])
    r.set_defaults(func=cmd_predict)

    i = sub.add_parser("inspect", help="print the layer table and parameter count")
    i.add_argument("--design")
    i.add_argument("--cell", choices=[k.value for k in CellKind])
    i.add_argument("--gru-variant", choices=[v.value for v in GruVariant], default="reset_after")
    i.add_argument("--config")
    i.add_argument("--checkpoint")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, DegenerateInputError, ckpt_io.CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalAbort, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
