#!/usr/bin/env python3
"""Run every example experiment in ``scripts/configs`` through the CLI.

Usage::

    python3 scripts/run_experiments.py [--seed 7] [--out results] [--jobs 1]

Each experiment writes its report into ``<out>/<config name>/``.  The exit
status is non-zero if any experiment fails its z-tests.
"""
import argparse
import sys
import time
from pathlib import Path

from fvlab.cli import main as fvlab

CONFIGS = Path(__file__).resolve().parent / "configs"
COMMANDS = {
    "expansion": "expansion",
    "mass": "scale-mass",
    "occupation": "scale-occupation",
    "high_dim": "scale-occupation",
    "martingale": "check-martingale",
}


def run(seed: int, out: Path, jobs: int) -> int:
    worst = 0
    for name, command in COMMANDS.items():
        start = time.perf_counter()
        code = fvlab([command, "--config", str(CONFIGS / f"{name}.ini"), "--seed", str(seed),
                      "--out", str(out / name), "--jobs", str(jobs)])
        print(f"== {name}: exit {code} in {time.perf_counter() - start:.1f}s\n")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    sys.exit(run(a.seed, a.out, a.jobs))
