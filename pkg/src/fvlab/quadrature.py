"""Composite Gauss-Legendre building blocks for Fourier-side integrals."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special


@dataclass(frozen=True)
class QuadratureSpec:
    """Fourier extent ``R``, points per panel ``M`` and target tolerance."""

    R: float | None = None
    M: int = 16
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.M < 2 or self.M & (self.M - 1):
            raise ValueError("M must be a power of two")
        if self.R is not None and not self.R > 0:
            raise ValueError("R must be positive")


DEFAULT_SPEC = QuadratureSpec()


@lru_cache(maxsize=32)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def gl_panels(edges, n: int = 16):
    """Nodes and weights of ``n``-point Gauss-Legendre on each panel."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gl(n)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x
    weights = half * w
    return nodes.ravel(), weights.ravel()


def radial_edges(scale: float, R: float, r_max: float = 0.0, grade: int = 40) -> np.ndarray:
    """Panel edges on [0, R].

    Panels halve in width towards 0 (integrands like exp(-t r^alpha) are not
    smooth there), grow by 25% per panel past ``scale``, and never exceed a
    quarter period of ``exp(i r_max rho)``.
    """
    scale = min(scale, R)
    cap = np.pi / (2 * r_max) if r_max > 0 else np.inf
    edges = list(scale * 2.0 ** -np.arange(grade, -1, -1, dtype=float))
    e = scale
    while e < R:
        e = min(R, e + min(0.25 * e, cap))
        if R - e < 1e-12 * R:
            e = R
        edges.append(e)
        if len(edges) > 200_000:
            raise RuntimeError("radial quadrature needs too many panels")
    return np.concatenate([[0.0], edges])


def radial_nodes(scale: float, R: float, r_max: float = 0.0, n: int = 16):
    return gl_panels(radial_edges(scale, R, r_max), n)


def sphere_nodes(d: int, m: int = 64):
    """Directions on S^{d-1} with weights summing to its surface area."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        ang = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), np.full(m, 2 * np.pi / m)
    if d == 3:
        c, wc = _gl(max(m // 2, 2))
        ang = 2 * np.pi * np.arange(m) / m
        s = np.sqrt(1 - c**2)
        dirs = np.stack(
            [
                np.outer(s, np.cos(ang)).ravel(),
                np.outer(s, np.sin(ang)).ravel(),
                np.repeat(c, m),
            ],
            axis=1,
        )
        return dirs, np.repeat(wc, m) * (2 * np.pi / m)
    raise NotImplementedError("angular quadrature is provided for d <= 3")


def sphere_area(d: int) -> float:
    return float(2 * np.pi ** (d / 2) / special.gamma(d / 2))


def bessel_k(mu: float, z):
    """``z**-mu * J_mu(z)``, continuous at z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small] ** 2 / 4
    c0 = 1.0 / (2.0**mu * special.gamma(mu + 1))
    out[small] = c0 * (1 - zs / (mu + 1) + zs**2 / (2 * (mu + 1) * (mu + 2)))
    zb = z[~small]
    if mu == -0.5:
        out[~small] = np.sqrt(2 / np.pi) * np.cos(zb)
    elif mu == 0.5:
        out[~small] = np.sqrt(2 / np.pi) * np.sin(zb) / zb
    else:
        out[~small] = special.jv(mu, zb) / zb**mu
    return out


def angular_moment(k) -> float:
    """Integral of omega^k over the unit sphere S^{d-1}."""
    k = tuple(int(v) for v in k)
    if any(v % 2 for v in k):
        return 0.0
    d = len(k)
    num = np.prod([special.gamma((v + 1) / 2) for v in k])
    return float(2 * num / special.gamma((sum(k) + d) / 2))
