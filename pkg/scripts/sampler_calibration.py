#!/usr/bin/env python3
"""Compare empirical characteristic functions of the stable sampler with exp(-|theta|^alpha).

Usage::

    python3 scripts/sampler_calibration.py [--draws 1000000] [--seed 1]

Prints one line per (alpha, d, |theta|) with the deviation in units of 1/sqrt(M).
"""
import argparse
import math

import numpy as np

from fvlab.stable_motion import RngStream, StableParams, empirical_cf, sample_unit_increments


def calibrate(draws: int, seed: int, alphas=(0.5, 1.0, 1.5, 2.0), dims=(1, 2), norms=(0.25, 0.5, 1.0, 1.5, 2.0)):
    print("alpha  d  |theta|  empirical  exact     sqrt(M)*|diff|")
    worst = 0.0
    for alpha in alphas:
        for d in dims:
            x = sample_unit_increments(StableParams(alpha, d), RngStream(seed, d), draws)
            for norm in norms:
                cf, _ = empirical_cf(x, np.full(d, norm / math.sqrt(d)))
                exact = math.exp(-(norm**alpha))
                dev = abs(cf - exact) * math.sqrt(draws)
                worst = max(worst, dev)
                print(f"{alpha:<6g} {d}  {norm:<7g}  {cf.real:.6f}   {exact:.6f}  {dev:.2f}")
    print(f"worst deviation {worst:.2f}/sqrt(M)")
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    calibrate(a.draws, a.seed)
