#!/usr/bin/env python3
"""Time the compiled hit-and-run kernel against the pure-Python fallback.

Both backends are driven through ``aurlab.sampling.hit_and_run`` with the same
seed, so the comparison also checks that they produce identical draws.

    python benchmarks/bench_kernels.py --count 2000 --dims 6 60
"""
import argparse
import json
import statistics
import sys
import time

import numpy as np

from aurlab import _backend
from aurlab.geometry import SetKind, UncertaintySet
from aurlab.sampling import SamplerConfig, hit_and_run


def time_backend(kernel, uset, cfg, count, repeats):
    saved = _backend.run_chain
    _backend.run_chain = kernel
    try:
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = hit_and_run(uset, cfg, count).samples
            times.append(time.perf_counter() - t0)
    finally:
        _backend.run_chain = saved
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=2000, help="samples kept per run")
    ap.add_argument("--dims", type=int, nargs="+", default=[6, 60], help="set dimensions n*k (k=1)")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", dest="json_out", help="also write results here")
    args = ap.parse_args(argv)

    if _backend.compiled_run_chain is None:
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1

    rows = []
    print(f"{'set':<12}{'d':>5}{'cython s':>12}{'python s':>12}{'speedup':>10}  identical")
    for kind in SetKind:
        for d in args.dims:
            uset = UncertaintySet(kind, 1.0, d, 1, 0.8 if kind is SetKind.BUDGET else None)
            cfg = SamplerConfig(seed=args.seed, burn_in=100, thinning=5)
            fast, a = time_backend(_backend.compiled_run_chain, uset, cfg, args.count, args.repeats)
            slow, b = time_backend(_backend.python_run_chain, uset, cfg, args.count, args.repeats)
            same = bool(np.array_equal(a, b))
            rows.append(dict(set=kind.value, d=d, cython_s=fast, python_s=slow, speedup=slow / fast,
                             identical=same))
            print(f"{kind.value:<12}{d:>5}{fast:>12.4f}{slow:>12.4f}{slow / fast:>10.1f}  {same}")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0 if all(r["identical"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
