"""Precompute singular systems, schemes and derivative tables into the disk cache.

Running this once makes the acceptance suite and the experiment runners fast:

    python scripts/warm_cache.py --gamma 10 --gamma 50 --gamma 250
"""

import argparse
import time

from singpow import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gamma", type=float, action="append", default=None)
    p.add_argument("--cache-dir", default=None, help=f"defaults to ${harness.CACHE_ENV} or .singpow_cache")
    p.add_argument("--kmax", type=int, default=max(harness.DIST_ORDERS), help="highest derivative order tabulated")
    args = p.parse_args()

    ws = harness.Workspace(args.cache_dir or harness.default_cache_dir() or ".singpow_cache")
    for g in args.gamma or harness.DEFAULT_GAMMAS:
        start = time.perf_counter()
        svd, n_max = ws.system(g)
        print(f"gamma={g:g}: n_max={svd.n_max}, N={n_max}  ({time.perf_counter() - start:.0f}s)", flush=True)
        for n in range(1, n_max + 1):
            ws.scheme(svd, n)
        print(f"gamma={g:g}: schemes 1..{n_max}  ({time.perf_counter() - start:.0f}s)", flush=True)
        ws.derivative_table(svd, args.kmax)
        print(f"gamma={g:g}: derivative table k<={args.kmax}  ({time.perf_counter() - start:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
