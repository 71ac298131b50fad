"""Time the compiled forward sweep against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--json PATH]
"""
from __future__ import annotations

import argparse
import json

from decouple import kernels
from decouple.cli import kernel_timings


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeats", type=int, default=5, help="best-of repeats per case")
    p.add_argument("--json", help="also write the rows to this file")
    args = p.parse_args()
    rows = kernel_timings(repeats=args.repeats)
    print(f"compiled kernel available: {kernels.compiled_available()}")
    print(f"{'case':>24}  {'python ms':>10}  {'compiled ms':>11}  {'speedup':>7}")
    for r in rows:
        fast = r["compiled_ms"]
        speed = f"{r['python_ms'] / fast:7.1f}" if fast else "      -"
        fast_s = f"{fast:11.3f}" if fast else "          -"
        print(f"{r['case']:>24}  {r['python_ms']:10.3f}  {fast_s}  {speed}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
