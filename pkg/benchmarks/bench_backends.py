"""Time forward+backward passes of the compiled and pure-Python backends.

    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --designs design8 --batch 32 --length 150 --repeat 3

Each case reports the best wall time over ``--repeat`` runs, the speedup of the
compiled core and the largest gradient difference between the two backends.
"""

import argparse
import time

import numpy as np

from pourdyn import backends
from pourdyn.loss import masked_loss, masked_loss_grad
from pourdyn.model import PaddedBatch, backward, design, forward, init_params


def make_batch(rng, batch, length):
    lengths = rng.integers(max(1, length // 2), length + 1, size=batch)
    lengths[0] = length
    xs = [rng.standard_normal((L, 6)) for L in lengths]
    ys = [rng.uniform(0.0, 1.0, L) for L in lengths]
    return PaddedBatch.from_sequences(xs, ys)


def one_pass(params, batch, backend):
    pred, tape = forward(batch, params, backend=backend)
    masked_loss(pred, batch.targets, batch.mask)
    return backward(tape, batch, masked_loss_grad(pred, batch.targets, batch.mask)).values


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--designs", default="design1,design4,design8")
    p.add_argument("--cells", default="gru,lstm,simple")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--length", type=int, default=60)
    p.add_argument("--repeat", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    names = backends.available()
    if "cython" not in names:
        print("compiled core not built; only the Python backend is available")
    rng = np.random.default_rng(args.seed)
    batch = make_batch(rng, args.batch, args.length)
    steps = int(batch.lengths.sum())
    print(f"batch {args.batch}, max length {args.length}, {steps} real steps, best of {args.repeat}")
    print(f"{'design':<8} {'cell':<6} {'params':>7} " + " ".join(f"{n + ' s':>10}" for n in names)
          + f" {'speedup':>8} {'max |dg|':>10}")
    for name in args.designs.split(","):
        for cell in args.cells.split(","):
            params = init_params(design(name, kind=cell), args.seed)
            times, grads = [], []
            for backend in names:
                t, g = best_time(lambda: one_pass(params, batch, backend), args.repeat)
                times.append(t)
                grads.append(g)
            row = f"{name:<8} {cell:<6} {len(params):>7} " + " ".join(f"{t:>10.4f}" for t in times)
            if len(names) == 2:
                row += f" {times[1] / times[0]:>7.1f}x {np.max(np.abs(grads[0] - grads[1])):>10.2e}"
            print(row)


if __name__ == "__main__":
    main()
