"""Run every scenario in scripts/scenarios and collect the CSV outputs.

    python3 scripts/run_all.py [--out results] [--threads N] [name ...]
"""
import argparse
import sys
import time
from pathlib import Path

from dressedqd import cli

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="scenario stems (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    files = sorted((HERE / "scenarios").glob("*.json"))
    if args.names:
        files = [f for f in files if f.stem in args.names]
    status = 0
    for f in files:
        t0 = time.perf_counter()
        argv = ["run", str(f), "--out", args.out]
        if args.threads:
            argv += ["--threads", str(args.threads)]
        rc = cli.main(argv)
        print(f"{f.stem:22s} exit {rc}  {time.perf_counter() - t0:7.1f} s")
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(main())
