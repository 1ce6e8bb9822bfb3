"""Compare the compiled grouped-reduction kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--rows N] [--groups G] [--repeat R]

Also checks both implementations return identical arrays.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from intentcache.executor import _kernels_py as py

try:
    from intentcache.executor import _kernels as cy
except ImportError:  # not built
    cy = None


def make_inputs(rows: int, groups: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    gid = rng.integers(0, groups, rows).astype(np.int64)
    fvals = np.round(rng.uniform(1, 500, rows), 2)
    ivals = rng.integers(1, 6, rows).astype(np.int64)
    valid = (rng.random(rows) > 0.02).astype(np.uint8)
    return gid, fvals, ivals, valid


def cases(gid, fvals, ivals, valid, groups):
    return {
        "count": lambda m: m.group_count(gid, groups, valid),
        "sum[f64]": lambda m: m.group_sum(gid, groups, fvals, valid),
        "sum[i64]": lambda m: m.group_sum(gid, groups, ivals, valid),
        "min[f64]": lambda m: m.group_min(gid, groups, fvals, valid),
        "max[i64]": lambda m: m.group_max(gid, groups, ivals, valid),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1_000_000)
    ap.add_argument("--groups", type=int, default=1_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    gid, fvals, ivals, valid = make_inputs(args.rows, args.groups)
    print(f"{args.rows:,} rows, {args.groups:,} groups, best of {args.repeat}")
    if cy is None:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':<10} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(gid, fvals, ivals, valid, args.groups).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1000
        if cy is None:
            print(f"{name:<10} {t_py:10.2f} {'-':>10} {'-':>8}")
            continue
        if not _same(fn(py), fn(cy)):
            print(f"{name:<10} MISMATCH between implementations")
            return 1
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1000
        print(f"{name:<10} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
