"""Compare the compiled Monte Carlo kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Both backends must agree exactly; the table reports best-of-N wall time.
"""

import argparse
import time

import numpy as np

from glovesim import _fallback

try:
    from glovesim import _kernels
except ImportError:  # extension not built
    _kernels = None

Q = np.array([0.4, 0.3, 0.2, 0.1])
CDF = np.cumsum(Q)
CDF[-1] = 1.0


def cases(scale):
    t_det = max(1, int(10_000 * scale))
    t_cov = max(1, int(5_000 * scale))
    return [
        ("exceedance n=200 M=%d" % t_det,
         lambda m: m.exceedance_counts(CDF, Q, 200, 0.0865, 0, 0, t_det)),
        ("l1 alpha=877 M=%d" % t_cov,
         lambda m: m.l1_failures(CDF, Q, 877, 0.1, 0, 0, t_cov)),
        ("draw_labels n=1e6", lambda m: m.draw_labels(CDF, 1_000_000, 0, 0)),
    ]


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply trial counts")
    args = ap.parse_args(argv)
    print(f"{'kernel':<28} {'numpy s':>9} {'cython s':>9} {'speedup':>8}")
    for name, fn in cases(args.scale):
        t_np, r_np = best_of(lambda: fn(_fallback), args.repeat)
        if _kernels is None:
            print(f"{name:<28} {t_np:>9.4f} {'-':>9} {'-':>8}")
            continue
        t_cy, r_cy = best_of(lambda: fn(_kernels), args.repeat)
        if not np.array_equal(np.asarray(r_np), np.asarray(r_cy)):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<28} {t_np:>9.4f} {t_cy:>9.4f} {t_np / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
