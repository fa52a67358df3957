"""Test functions with Fourier transforms, moments and norms.

The Fourier convention is ``fhat(theta) = int exp(-i theta.x) f(x) dx``.
Functions are evaluated on arrays of shape ``(n, dim)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import special

from .quadrature import _gl, angular_moment, sphere_area


def as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        # 1-d input: a list of scalars when dim == 1, else a single point
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, dim)
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}")
    return x


def multi_indices(dim: int, max_order: int):
    """All multi-indices k in N^dim with |k| <= max_order, graded order."""
    out = []
    for order in range(max_order + 1):
        out.extend(_compositions(order, dim))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        out.extend((first,) + rest for rest in _compositions(total - first, parts - 1))
    return out


def factorial_multi(k) -> int:
    return int(np.prod([math.factorial(v) for v in k]))


@dataclass
class TestFunction:
    """An evaluable ``f`` plus the Fourier-side data the analytics need.

    ``fourier`` takes points ``(n, dim)``; ``radial_fourier`` (when ``f`` is
    radial) takes radii.  Missing transforms are computed by Gauss-Legendre
    quadrature over the support box; the node values are cached on first use.
    """

    __test__ = False  # not a pytest class

    name: str
    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    fourier: Callable[[np.ndarray], np.ndarray] | None = None
    radial_fourier: Callable[[np.ndarray], np.ndarray] | None = None
    support_radius: float | None = None
    fourier_extent: float | None = None
    moment_fn: Callable[[tuple], float] | None = None
    params: dict = field(default_factory=dict)
    l1_exact: float | None = None
    sup_exact: float | None = None
    integrable: bool = True

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(as_points(x, self.dim))

    def __reduce__(self):
        # closures do not pickle; catalog functions are rebuilt from their parameters
        if self.name not in _FACTORIES:
            raise TypeError(f"{self.name}: only catalog test functions can be pickled")
        return _rebuild, (self.name, self.dim, dict(self.params))

    @property
    def is_radial(self) -> bool:
        return self.radial_fourier is not None

    # -- quadrature fallback -------------------------------------------------
    @cached_property
    def _box_nodes(self):
        if self.support_radius is None:
            raise ValueError(f"{self.name}: no support radius for quadrature fallback")
        a = self.support_radius
        panels = 16
        x, w = _gl(32)
        edges = np.linspace(-a, a, panels + 1)
        nodes = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * x).ravel()
        weights = ((edges[1:, None] - edges[:-1, None]) / 2 * w).ravel()
        grids = np.meshgrid(*([nodes] * self.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wts = np.ones(len(pts))
        for g in np.meshgrid(*([weights] * self.dim), indexing="ij"):
            wts = wts * g.ravel()
        vals = self.evaluate(pts)
        return pts, wts * vals

    def fhat(self, theta) -> np.ndarray:
        theta = as_points(theta, self.dim)
        if self.fourier is not None:
            return np.asarray(self.fourier(theta), dtype=complex)
        if self.radial_fourier is not None:
            return self.radial_fourier(np.linalg.norm(theta, axis=1)).astype(complex)
        pts, wv = self._box_nodes
        out = np.empty(len(theta), dtype=complex)
        for s in range(0, len(theta), 512):
            out[s : s + 512] = np.exp(-1j * theta[s : s + 512] @ pts.T) @ wv
        return out

    def moment(self, k) -> float:
        """``int f(y) y^k dy``; ``inf`` when the integral diverges."""
        k = tuple(int(v) for v in k)
        if len(k) != self.dim:
            raise ValueError("multi-index length must equal dim")
        if not self.integrable:
            return math.inf
        if self.moment_fn is not None:
            return float(self.moment_fn(k))
        pts, wv = self._box_nodes
        return float(wv @ np.prod(pts ** np.array(k), axis=1))

    @cached_property
    def l1_norm(self) -> float:
        if self.l1_exact is not None:
            return self.l1_exact
        if not self.integrable:
            return math.inf
        pts, wv = self._box_nodes
        vals = self.evaluate(pts)
        w = np.divide(wv, vals, out=np.zeros_like(wv), where=vals != 0)
        return float(w @ np.abs(vals))

    @cached_property
    def sup_norm(self) -> float:
        if self.sup_exact is not None:
            return self.sup_exact
        pts, _ = self._box_nodes
        return float(np.max(np.abs(self.evaluate(pts))))

    def square(self) -> "TestFunction":
        """``f**2`` as a test function (quadrature transforms)."""
        ev = self.evaluate
        return TestFunction(
            name=f"{self.name}^2",
            dim=self.dim,
            evaluate=lambda x: ev(x) ** 2,
            support_radius=self.support_radius,
            fourier_extent=self.fourier_extent,
            sup_exact=None if self.sup_exact is None else self.sup_exact**2,
            integrable=self.integrable,
        )


# -- catalog -------------------------------------------------------------------


def _gauss_moment_1d(k: int, width: float, center: float = 0.0) -> float:
    """int exp(-(y-c)^2/w^2) y^k dy."""

    def centred(j):
        return 0.0 if j % 2 else width ** (j + 1) * special.gamma((j + 1) / 2)

    if center == 0.0:
        return centred(k)
    return sum(math.comb(k, j) * center ** (k - j) * centred(j) for j in range(k + 1))


def gaussian_bump(dim: int = 1, width: float = 1.0, center=None) -> TestFunction:
    """``exp(-|x - c|^2 / width^2)``."""
    c = np.zeros(dim) if center is None else np.broadcast_to(np.asarray(center, float), (dim,)).copy()
    w = float(width)
    amp = (math.sqrt(math.pi) * w) ** dim

    def ev(x):
        return np.exp(-np.sum((x - c) ** 2, axis=1) / w**2)

    def ft(th):
        return amp * np.exp(-(w**2) * np.sum(th**2, axis=1) / 4 - 1j * th @ c)

    radial = None
    if not np.any(c):
        radial = lambda r: amp * np.exp(-(w**2) * np.asarray(r) ** 2 / 4)  # noqa: E731

    return TestFunction(
        name="gaussian-bump",
        dim=dim,
        evaluate=ev,
        fourier=ft,
        radial_fourier=radial,
        support_radius=float(np.max(np.abs(c))) + 7.0 * w,
        fourier_extent=2.0 * math.sqrt(40.0) / w,
        moment_fn=lambda k: float(np.prod([_gauss_moment_1d(ki, w, ci) for ki, ci in zip(k, c)])),
        params={"width": w, "center": c.tolist()},
        l1_exact=amp,
        sup_exact=1.0,
    )


def indicator_ball(dim: int = 1, radius: float = 1.0) -> TestFunction:
    a = float(radius)
    vol = a**dim * math.pi ** (dim / 2) / special.gamma(dim / 2 + 1)

    def ev(x):
        return (np.sum(x**2, axis=1) <= a * a).astype(float)

    def radial(r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, vol)
        nz = r * a > 1e-8
        rr = r[nz]
        out[nz] = (2 * math.pi * a / rr) ** (dim / 2) * special.jv(dim / 2, a * rr)
        return out

    def mom(k):
        return angular_moment(k) * a ** (sum(k) + dim) / (sum(k) + dim)

    return TestFunction(
        name="indicator-ball",
        dim=dim,
        evaluate=ev,
        radial_fourier=radial,
        support_radius=a,
        moment_fn=mom,
        params={"radius": a},
        l1_exact=vol,
        sup_exact=1.0,
    )


def _hann_ft_1d(th, a):
    b = math.pi / a
    th = np.asarray(th, dtype=float)
    out = np.empty_like(th)
    near0 = np.abs(th) < 1e-6
    nearb = np.abs(np.abs(th) - b) < 1e-6 * b
    reg = ~(near0 | nearb)
    t = th[reg]
    out[reg] = np.sin(a * t) * b**2 / (t * (b**2 - t**2))
    out[near0] = a
    out[nearb] = a / 2
    return out


def cosine_window(dim: int = 1, half_width: float = 1.0) -> TestFunction:
    """Product of raised cosines ``(1 + cos(pi x_i / a)) / 2`` on ``[-a, a]^dim``."""
    a = float(half_width)
    xg, wg = _gl(64)

    def ev(x):
        inside = np.all(np.abs(x) <= a, axis=1)
        return np.where(inside, np.prod((1 + np.cos(np.pi * x / a)) / 2, axis=1), 0.0)

    def ft(th):
        return np.prod(_hann_ft_1d(th, a), axis=1).astype(complex)

    def mom1(k):
        y = a * xg
        return float(a * wg @ ((1 + np.cos(np.pi * y / a)) / 2 * y**k))

    return TestFunction(
        name="cosine-window",
        dim=dim,
        evaluate=ev,
        fourier=ft,
        support_radius=a * math.sqrt(dim),
        moment_fn=lambda k: float(np.prod([mom1(v) for v in k])),
        params={"half_width": a},
        l1_exact=a**dim,
        sup_exact=1.0,
    )


def odd_bump(dim: int = 1, width: float = 1.0) -> TestFunction:
    """``x_1 exp(-|x|^2 / width^2)``: odd in the first coordinate, zero integral."""
    w = float(width)
    amp = (math.sqrt(math.pi) * w) ** dim

    def ev(x):
        return x[:, 0] * np.exp(-np.sum(x**2, axis=1) / w**2)

    def ft(th):
        return -1j * (w**2 * th[:, 0] / 2) * amp * np.exp(-(w**2) * np.sum(th**2, axis=1) / 4)

    def mom(k):
        k = list(k)
        k[0] += 1
        return float(np.prod([_gauss_moment_1d(v, w) for v in k]))

    return TestFunction(
        name="odd-bump",
        dim=dim,
        evaluate=ev,
        fourier=ft,
        support_radius=7.0 * w,
        fourier_extent=2.0 * math.sqrt(40.0) / w,
        moment_fn=mom,
        params={"width": w},
        l1_exact=w**2 * (math.sqrt(math.pi) * w) ** (dim - 1),
        sup_exact=w / math.sqrt(2) * math.exp(-0.5),
    )


def constant(dim: int = 1, value: float = 1.0) -> TestFunction:
    """The constant function; not integrable, so it has no Fourier transform."""
    v = float(value)
    return TestFunction(
        name="constant",
        dim=dim,
        evaluate=lambda x: np.full(len(x), v),
        params={"value": v},
        l1_exact=0.0 if v == 0 else math.inf,
        sup_exact=abs(v),
        integrable=v == 0,
        moment_fn=(lambda k: 0.0) if v == 0 else None,
        fourier=(lambda th: np.zeros(len(th), dtype=complex)) if v == 0 else None,
    )


def stable_density(alpha: float, dim: int = 1, s: float = 1.0) -> TestFunction:
    """The transition density ``p_s`` itself, for semigroup composition checks."""
    from .stable_motion import StableParams
    from . import analytics

    params = StableParams(alpha, dim)

    def mom(k):
        order = sum(k)
        if order == 0:
            return 1.0
        if any(v % 2 for v in k):
            return 0.0 if order < alpha else math.inf
        if params.alpha == 2.0:
            # per-coordinate variance 2s
            return float(np.prod([(2 * s) ** (v / 2) * special.factorial2(v - 1) if v else 1.0 for v in k]))
        return math.inf

    return TestFunction(
        name="stable-density",
        dim=dim,
        evaluate=lambda x: analytics.transition_density(params, s, x),
        radial_fourier=lambda r: np.exp(-s * np.asarray(r, dtype=float) ** params.alpha),
        fourier_extent=(60.0 / s) ** (1 / params.alpha),
        moment_fn=mom,
        params={"alpha": alpha, "s": s},
        l1_exact=1.0,
    )


CATALOG = {
    "gaussian-bump": gaussian_bump,
    "indicator-ball": indicator_ball,
    "cosine-window": cosine_window,
    "odd-bump": odd_bump,
    "constant": constant,
}


_FACTORIES = {**CATALOG, "stable-density": stable_density}


def _rebuild(name: str, dim: int, params: dict) -> TestFunction:
    return _FACTORIES[name](dim=dim, **params)


def from_spec(spec: str, dim: int) -> TestFunction:
    """Build a catalog function from ``name`` or ``name:key=value,...``."""
    name, _, rest = spec.strip().partition(":")
    name = name.strip()
    if name not in CATALOG:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(CATALOG)}")
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = item.partition("=")
        kwargs[key.strip().replace("-", "_")] = float(val)
    return CATALOG[name](dim, **kwargs)


__all__ = [
    "TestFunction",
    "gaussian_bump",
    "indicator_ball",
    "cosine_window",
    "odd_bump",
    "constant",
    "stable_density",
    "from_spec",
    "multi_indices",
    "factorial_multi",
    "sphere_area",
]
