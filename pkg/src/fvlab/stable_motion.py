"""Exact samplers for symmetric / isotropic alpha-stable increments.

Normalisation: a unit-time increment has characteristic function
``exp(-|theta|**alpha)``, so ``alpha = 2`` is a Gaussian with variance 2 per
coordinate and ``alpha = 1`` is the standard Cauchy law.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALPHA_TWO_GUARD = 1e-9


@dataclass(frozen=True)
class StableParams:
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0 + ALPHA_TWO_GUARD):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if abs(self.alpha - 2.0) < ALPHA_TWO_GUARD:
            object.__setattr__(self, "alpha", 2.0)
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def is_gaussian(self) -> bool:
        return self.alpha == 2.0

    @property
    def regime(self) -> str:
        """'low', 'critical' or 'high' dimension relative to alpha."""
        if self.dim < self.alpha:
            return "low"
        if self.dim == self.alpha:
            return "critical"
        return "high"


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct stream ids give statistically independent streams (numpy
    ``SeedSequence`` spawn keys), which is how replicas are kept independent.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream_id: int) -> "RngStream":
        """A fresh stream sharing this seed but with another id."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class PathGrid:
    times: np.ndarray
    positions: np.ndarray  # shape (len(times), dim)

    def __post_init__(self):
        if len(self.times) != len(self.positions):
            raise ValueError("positions must align with times")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, u: float) -> np.ndarray:
        """Value at time ``u``: last sample at or before ``u``, constant after the end."""
        k = int(np.searchsorted(self.times, u, side="right")) - 1
        if k < 0:
            raise ValueError(f"time {u} precedes the path start {self.times[0]}")
        return self.positions[k]


def _check_alpha(alpha: float) -> float:
    if not (0.0 < alpha <= 2.0 + ALPHA_TWO_GUARD):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    return 2.0 if abs(alpha - 2.0) < ALPHA_TWO_GUARD else float(alpha)


def sample_stable_1d(alpha: float, rng: RngStream, size=None):
    """Symmetric alpha-stable draw(s) with characteristic function exp(-|theta|^alpha).

    Chambers-Mallows-Stuck transform; alpha = 1 uses the tangent branch and
    alpha = 2 goes straight to a Gaussian with variance 2.
    """
    alpha = _check_alpha(alpha)
    g = rng.generator
    if alpha == 2.0:
        return np.sqrt(2.0) * g.standard_normal(size)
    v = g.uniform(-np.pi / 2, np.pi / 2, size)
    if alpha == 1.0:
        return np.tan(v)
    w = g.standard_exponential(size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_subordinator(sigma: float, t: float, rng: RngStream, size=None):
    """Positive sigma-stable draw(s) with Laplace transform exp(-t u^sigma).

    Kanter's representation of the one-sided CMS transform, scaled by
    ``t**(1/sigma)``.
    """
    if not (0.0 < sigma < 1.0):
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    g = rng.generator
    u = g.uniform(0.0, np.pi, size)
    e = g.standard_exponential(size)
    a = (
        np.sin(sigma * u) ** (sigma / (1.0 - sigma))
        * np.sin((1.0 - sigma) * u)
        / np.sin(u) ** (1.0 / (1.0 - sigma))
    )
    s = (a / e) ** ((1.0 - sigma) / sigma)
    # u at the open-interval edge can underflow to 0; keep the law's support
    s = np.maximum(s, np.finfo(float).tiny)
    return t ** (1.0 / sigma) * s


def sample_unit_increments(params: StableParams, rng: RngStream, n: int) -> np.ndarray:
    """``n`` i.i.d. unit-time isotropic increments, shape ``(n, dim)``.

    An increment over ``dt`` is ``dt**(1/alpha)`` times one of these.
    """
    d = params.dim
    g = rng.generator
    if params.is_gaussian:
        return np.sqrt(2.0) * g.standard_normal((n, d))
    s = sample_subordinator(params.alpha / 2.0, 1.0, rng, n)
    return g.standard_normal((n, d)) * np.sqrt(2.0 * s)[:, None]


def sample_isotropic_increment(params: StableParams, dt: float, rng: RngStream, size=None):
    """Isotropic stable increment over ``dt``: characteristic function exp(-dt |theta|^alpha).

    For alpha < 2 this is ``G * sqrt(2 S)`` with ``G`` standard Gaussian in
    R^dim and ``S`` an (alpha/2)-subordinator over ``dt``.  Returns shape
    ``(dim,)`` or ``(size, dim)``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = 1 if size is None else int(size)
    d = params.dim
    g = rng.generator
    if params.is_gaussian:
        out = np.sqrt(2.0 * dt) * g.standard_normal((n, d))
    else:
        s = sample_subordinator(params.alpha / 2.0, dt, rng, n)
        out = g.standard_normal((n, d)) * np.sqrt(2.0 * s)[:, None]
    return out[0] if size is None else out


def simulate_path(params: StableParams, grid, start, rng: RngStream) -> PathGrid:
    """Sample the motion at the grid times, started from ``start`` at time 0."""
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or len(times) == 0 or times[0] != 0.0:
        raise ValueError("grid must be a non-empty 1-d array starting at 0")
    dts = np.diff(times)
    if np.any(dts <= 0):
        raise ValueError("grid must be strictly increasing")
    start = np.broadcast_to(np.asarray(start, dtype=float), (params.dim,))
    pos = np.empty((len(times), params.dim))
    pos[0] = start
    if len(dts):
        z = sample_unit_increments(params, rng, len(dts))
        pos[1:] = start + np.cumsum(dts[:, None] ** (1.0 / params.alpha) * z, axis=0)
    return PathGrid(times, pos)


def empirical_cf(samples, theta) -> tuple[complex, float]:
    """Empirical characteristic function at the vector ``theta`` and its standard error."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] == 1 and np.ndim(samples) == 1:
        x = x.T
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    phase = x @ th
    # the law is symmetric, so the imaginary part is pure noise
    c = np.cos(phase)
    return complex(c.mean(), np.sin(phase).mean()), float(c.std(ddof=1) / np.sqrt(len(c)))
