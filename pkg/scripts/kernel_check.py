#!/usr/bin/env python3
"""Check the numerical transition density against Gaussian and Cauchy closed forms.

Usage::

    python3 scripts/kernel_check.py [--points 100] [--seed 1]
"""
import argparse
import math

import numpy as np

from fvlab.analytics import transition_density
from fvlab.stable_motion import StableParams


def closed_form(alpha, d, t, r):
    if alpha == 2.0:
        return (4 * math.pi * t) ** (-d / 2) * np.exp(-(r**2) / (4 * t))
    c = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
    return c * t / (t * t + r**2) ** ((d + 1) / 2)


def check(points: int, seed: int):
    rng = np.random.default_rng(seed)
    for d in (1, 2, 3):
        for alpha in (1.0, 2.0):
            t = rng.uniform(0.2, 5.0, points)
            r = rng.uniform(0.0, 4.0, points) * t ** (1 / alpha)
            x = np.zeros((points, d))
            x[:, 0] = r
            got = np.array([transition_density(StableParams(alpha, d), ti, xi[None])[0] for ti, xi in zip(t, x)])
            err = np.max(np.abs(got / closed_form(alpha, d, t, r) - 1))
            print(f"d={d} alpha={alpha:g}: max relative error {err:.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    check(a.points, a.seed)
