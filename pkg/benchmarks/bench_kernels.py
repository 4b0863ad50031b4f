"""Time each hot kernel on its numba and numpy paths at training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 50]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from semclip import _kernels as k


def cases(rng):
    table = rng.standard_normal((30, 32))
    idx = rng.integers(0, 30, (192, 12))
    lengths = rng.integers(4, 13, 192)
    grad = rng.standard_normal((192, 32))
    logits = 14.0 * rng.uniform(-1, 1, (64, 64))
    targets = np.arange(64)
    basis = rng.standard_normal((64, 2))
    sim = rng.standard_normal((390, 390))
    hits = rng.integers(0, 390, 390)
    return {
        "bag_mean_forward": ((table, idx, lengths), k.bag_mean_forward_np, getattr(k, "bag_mean_forward_nb", None)),
        "bag_mean_backward": ((grad, idx, lengths, 30), k.bag_mean_backward_np,
                              getattr(k, "bag_mean_backward_nb", None)),
        "xent_rows": ((logits, targets), k.xent_rows_np, getattr(k, "xent_rows_nb", None)),
        "gram_schmidt": ((basis, 1e-8), k.gram_schmidt_np, getattr(k, "gram_schmidt_nb", None)),
        "top1_hits": ((sim, hits), k.top1_hits_np, getattr(k, "top1_hits_nb", None)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()
    print(f"active backend: {k.BACKEND}")
    print(f"{'kernel':20s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, (inputs, f_np, f_nb) in cases(np.random.default_rng(0)).items():
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=args.repeat, repeat=3)) / args.repeat
        if f_nb is None:
            print(f"{name:20s} {t_np * 1e6:10.1f} {'n/a':>10s} {'':>8s}")
            continue
        f_nb(*inputs)  # compile outside the timing
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:20s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
