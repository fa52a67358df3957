"""Sampling schedules phi(t): the resampling rate at time t is 1/phi(t)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("constant", "exponential", "polynomial", "tabulated")


@dataclass(frozen=True)
class SamplingSchedule:
    """phi(t) > 0 for one of four families.

    ``constant``: phi = c; ``exponential``: phi = exp(beta t);
    ``polynomial``: phi = 1 + t^n; ``tabulated``: piecewise-linear through
    ``table`` (held constant outside it).
    """

    kind: str = "exponential"
    c: float = 1.0
    beta: float = 1.0
    n: float = 2.0
    table: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"schedule kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "constant" and not self.c > 0:
            raise ValueError("constant schedule needs c > 0")
        if self.kind == "exponential" and not self.beta > 0:
            raise ValueError("exponential schedule needs beta > 0")
        if self.kind == "polynomial" and not self.n > 0:
            raise ValueError("polynomial schedule needs n > 0")
        if self.kind == "tabulated":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 1:
                raise ValueError("tabulated schedule needs (t, phi) pairs")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("table times must be strictly increasing")
            if np.any(tab[:, 1] <= 0):
                raise ValueError("phi values must be positive")
            object.__setattr__(self, "table", tuple(map(tuple, tab)))

    @classmethod
    def constant(cls, c: float = 1.0):
        return cls("constant", c=c)

    @classmethod
    def exponential(cls, beta: float = 1.0):
        return cls("exponential", beta=beta)

    @classmethod
    def polynomial(cls, n: float = 2.0):
        return cls("polynomial", n=n)

    @classmethod
    def tabulated(cls, table):
        return cls("tabulated", table=tuple(map(tuple, table)))

    @property
    def nondecreasing(self) -> bool:
        if self.kind == "tabulated":
            return bool(np.all(np.diff(np.asarray(self.table)[:, 1]) >= 0))
        return True

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full(t.shape, self.c)
        elif self.kind == "exponential":
            out = np.exp(self.beta * t)
        elif self.kind == "polynomial":
            out = 1.0 + np.abs(t) ** self.n
        else:
            tab = np.asarray(self.table)
            out = np.interp(t, tab[:, 0], tab[:, 1])
        return out if out.ndim else float(out)

    def log_evaluate(self, t):
        """log phi(t), finite where phi itself would overflow."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            out = self.beta * t
        elif self.kind == "polynomial":
            lt = self.n * np.log(np.maximum(np.abs(t), 1e-300))
            out = np.logaddexp(0.0, lt)
        else:
            out = np.log(self.evaluate(t))
        return out if np.ndim(out) else float(out)

    def min_on(self, a: float, b: float) -> float:
        """Exact minimum of phi on [a, b]."""
        if self.nondecreasing:
            return float(self.evaluate(a))
        tab = np.asarray(self.table)
        inner = tab[(tab[:, 0] > a) & (tab[:, 0] < b), 1]
        return float(min(self.evaluate(a), self.evaluate(b), *inner))

    def inverse_integral(self, a: float, b: float) -> float:
        """int_a^b ds / phi(s)."""
        if b <= a:
            return 0.0
        if self.kind == "constant":
            return (b - a) / self.c
        if self.kind == "exponential":
            return (math.exp(-self.beta * a) - math.exp(-self.beta * b)) / self.beta
        from scipy import integrate

        pts = None
        if self.kind == "tabulated":
            tab = np.asarray(self.table)
            pts = [p for p in tab[:, 0] if a < p < b] or None
        val, _ = integrate.quad(lambda s: 1.0 / self.evaluate(s), a, b, points=pts, limit=400, epsabs=1e-13, epsrel=1e-12)
        return val

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["c"] = self.c
        elif self.kind == "exponential":
            d["beta"] = self.beta
        elif self.kind == "polynomial":
            d["n"] = self.n
        else:
            d["table"] = [list(r) for r in self.table]
        return d
