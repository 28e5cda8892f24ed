"""Run experiment families and write one table per family.

    python scripts/run_experiments.py --out results            # every family, CSV
    python scripts/run_experiments.py --name c_sweep --full    # 1000-point sweep
"""

import argparse
import time
from pathlib import Path

from singpow import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--name", action="append", choices=harness.EXPERIMENTS, default=None)
    p.add_argument("--gamma", type=float, action="append", default=None)
    p.add_argument("--full", action="store_true", help="1000-point c sweeps")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", default="results")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ws = harness.Workspace(args.cache_dir or harness.default_cache_dir() or ".singpow_cache")
    for name in args.name or harness.EXPERIMENTS:
        spec = harness.ExperimentSpec(
            name, gammas=tuple(args.gamma) if args.gamma else harness.DEFAULT_GAMMAS, full=args.full, fmt=args.format
        )
        start = time.perf_counter()
        table = harness.run_experiment(spec, ws)
        path = harness.export(table, spec.fmt, out / f"{name}.{spec.fmt}")
        print(f"{name}: {len(table.rows)} rows -> {path}  ({time.perf_counter() - start:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
