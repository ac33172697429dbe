"""Time each hot kernel on the compiled and the numpy backend.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Prints one row per kernel with the best-of-``repeat`` time per call and
the speedup of the compiled backend over the fallback.
"""

import argparse
import json
import math
import sys
import timeit

import numpy as np

from imbalbench import kernels


def workloads(rng):
    logits = rng.normal(scale=3.0, size=(4096, 15))
    labels = rng.integers(0, 15, 4096)
    coef = rng.uniform(1.0, 18.0, 15)
    raster = rng.uniform(-1.0, 1.0, (64, 64, 3))
    preds = rng.integers(0, 15, 100_000)
    truth = rng.integers(0, 15, 100_000)
    xa, xb = rng.normal(size=(2000, 256)), rng.normal(size=(2000, 256))
    theta = math.radians(23.0)
    return {
        "softmax_rows (4096x15)": lambda k: k.softmax_rows(logits),
        "loss_grad CE (4096x15)": lambda k: k.loss_grad(logits, labels, coef, 0.0),
        "loss_grad FL g=2 (4096x15)": lambda k: k.loss_grad(logits, labels, coef, 2.0),
        "rotate_nearest (64x64x3)": lambda k: k.rotate_nearest(raster, math.cos(theta),
                                                               math.sin(theta), -1.0),
        "confusion_counts (1e5, C=15)": lambda k: k.confusion_counts(preds, truth, 15),
        "paired_cosine (2000x256)": lambda k: k.paired_cosine(xa, xb),
    }


def best_time(fn, impl, repeat):
    timer = timeit.Timer(lambda: fn(impl))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None, help="also write the results here")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only", file=sys.stderr)
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<30}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, fn in workloads(rng).items():
        times = {b: best_time(fn, kernels.get_backend(b), args.repeat) for b in backends}
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        rows.append({"kernel": name, "seconds": times, "speedup": speedup})
        cells = "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
        print(f"{name:<30}{cells}{speedup:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
