"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Both backends are
called directly, so the environment switch is not needed.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from fdpwave import _fallback
from fdpwave.wavelets import build_basis

try:
    from fdpwave import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def cases(basis, n_points: int, level: int, rng):
    x = rng.random(n_points)
    w = np.full(n_points, 1.0 / n_points)
    coef = rng.standard_normal(2**level)
    args = (basis.psi_table, basis.res, basis.support_len, level, basis.exact)
    A = rng.standard_normal((40, 80))
    b = np.abs(rng.standard_normal(40)) + 1.0
    c = -np.abs(rng.standard_normal(80))
    return {
        "scatter_level": lambda mod: mod.scatter_level(x, w, *args),
        "gather_level": lambda mod: mod.gather_level(x, *args, coef),
        "design_level": lambda mod: mod.design_level(x[:2048], *args),
        "simplex_solve 40x80": lambda mod: mod.simplex_solve(A, b, c),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=1 << 16)
    ap.add_argument("--level", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'family':<10} {'kernel':<22} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for family, A in (("haar", 1), ("daubechies", 3)):
        basis = build_basis(family, A)
        for name, fn in cases(basis, args.points, args.level, rng).items():
            t_np = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
            if _kernels is None:
                print(f"{family:<10} {name:<22} {t_np:10.2f} {'n/a':>10} {'':>8}")
                continue
            t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
            print(f"{family:<10} {name:<22} {t_np:10.2f} {t_cy:10.2f} {t_np / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
