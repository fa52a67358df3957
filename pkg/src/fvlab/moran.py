"""Event-driven Moran particle system approximating the (alpha, phi) Fleming-Viot process.

Every ordered pair (i, j) fires at rate ``eta / (2 phi(t))``; at an event
particle i jumps onto particle j and adopts j's ancestry.  Summing
rate * jump^2 over ordered pairs, with jump ``(f(x_j) - f(x_i)) / N``, gives
``eta (X(f^2) - X(f)^2) / phi`` exactly, which is the Fleming-Viot
quadratic variation.

Two drivers share these dynamics: the step functions
(:func:`next_resampling_time`, :func:`advance_motion`, :func:`resample`) used
by :func:`run_reference`, and the windowed engine behind :func:`run`, which
draws a whole motion window of events at once and applies them in a
compiled loop.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .genealogy import GenealogyArena
from .schedule import SamplingSchedule
from .stable_motion import RngStream, StableParams, sample_isotropic_increment, sample_unit_increments
from .testfunctions import TestFunction, as_points


class EnvelopeError(RuntimeError):
    """phi is not bounded below on the lookahead window."""


# -- initial distributions -------------------------------------------------------


@dataclass(frozen=True)
class InitialDistribution:
    """Initial law mu of the particles.

    ``point`` (moments of every order), ``ball`` (uniform, every order),
    ``gaussian`` (isotropic, every order) or ``empirical`` (a fixed point
    cloud, every order since it is finite).
    """

    kind: str = "point"
    center: tuple = (0.0,)
    radius: float = 1.0
    scale: float = 1.0
    points: tuple = ()

    KINDS = ("point", "ball", "gaussian", "empirical")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"initial distribution must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind == "empirical" and len(self.points) == 0:
            raise ValueError("empirical initial distribution needs points")
        if self.radius <= 0 or self.scale <= 0:
            raise ValueError("radius and scale must be positive")

    @property
    def moment_order(self) -> float:
        """An order a > 0 with int |x|^a mu(dx) finite (all of these have every order)."""
        return math.inf

    def _center(self, dim):
        return np.broadcast_to(np.asarray(self.center, dtype=float), (dim,))

    def sample(self, n: int, dim: int, rng: RngStream) -> np.ndarray:
        c = self._center(dim)
        g = rng.generator
        if self.kind == "point":
            return np.tile(c, (n, 1))
        if self.kind == "gaussian":
            return c + self.scale * g.standard_normal((n, dim))
        if self.kind == "ball":
            v = g.standard_normal((n, dim))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            r = self.radius * g.uniform(size=n) ** (1.0 / dim)
            return c + v * r[:, None]
        pts = np.asarray(self.points, dtype=float).reshape(-1, dim)
        return pts[g.integers(0, len(pts), n)]

    def expect(self, fn, dim: int, nodes: int = 24) -> float:
        """mu(fn) for a function of points (n, dim), by Gaussian-type quadrature."""
        c = self._center(dim)
        if self.kind == "point":
            return float(np.asarray(fn(c[None, :]))[0])
        if self.kind == "empirical":
            return float(np.mean(fn(np.asarray(self.points, dtype=float).reshape(-1, dim))))
        if self.kind == "gaussian":
            x, w = np.polynomial.hermite_e.hermegauss(nodes)
            w = w / w.sum()
        else:
            x, w = np.polynomial.legendre.leggauss(nodes)
            x, w = self.radius * x, w / 2
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wts = np.ones(len(pts))
        for g in np.meshgrid(*([w] * dim), indexing="ij"):
            wts = wts * g.ravel()
        if self.kind == "gaussian":
            pts = c + self.scale * pts
        else:
            inside = np.sum(pts**2, axis=1) <= self.radius**2
            vol = math.pi ** (dim / 2) * self.radius**dim / math.gamma(dim / 2 + 1)
            pts, wts = c + pts[inside], wts[inside] * (2 * self.radius) ** dim / vol
        return float(wts @ np.asarray(fn(pts)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "ball":
            d["radius"] = self.radius
        if self.kind == "gaussian":
            d["scale"] = self.scale
        if self.kind == "empirical":
            d["points"] = [list(np.atleast_1d(p)) for p in self.points]
        return d


# -- state ---------------------------------------------------------------------


@dataclass
class ParticleState:
    time: float
    positions: np.ndarray  # (N, dim)
    lineage: np.ndarray  # (N,) arena node ids
    eta: float = 1.0

    def __post_init__(self):
        if len(self.positions) < 2:
            raise ValueError("a Moran system needs N >= 2")
        if len(self.lineage) != len(self.positions):
            raise ValueError("one lineage id per particle")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def N(self) -> int:
        return len(self.positions)

    def copy(self) -> "ParticleState":
        return ParticleState(self.time, self.positions.copy(), self.lineage.copy(), self.eta)


@dataclass
class EventLog:
    """Resampling events: at ``time`` particle ``target`` jumps onto ``source``."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    source: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    target: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.times)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "source", "target"])
            for t, s, g in zip(self.times, self.source, self.target):
                w.writerow([repr(float(t)), int(s), int(g)])


def empirical_integral(state: ParticleState, f) -> float:
    """X^N_t(f) = (1/N) sum_i f(x_i)."""
    vals = f.evaluate(state.positions) if isinstance(f, TestFunction) else np.asarray(f(state.positions))
    return float(np.mean(vals))


def write_snapshot_csv(path, snapshots):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = snapshots[0].positions.shape[1] if snapshots else 1
        w.writerow(["time", "particle"] + [f"x_{c + 1}" for c in range(dim)] + ["lineage_id"])
        for s in snapshots:
            for k, (x, lid) in enumerate(zip(s.positions, s.lineage)):
                w.writerow([repr(float(s.time)), k] + [repr(float(v)) for v in x] + [int(lid)])


# -- step operations -------------------------------------------------------------


def total_rate(schedule: SamplingSchedule, N: int, eta: float, t) -> np.ndarray:
    return eta * N * (N - 1) / (2.0 * np.asarray(schedule.evaluate(t)))


def next_resampling_time(schedule: SamplingSchedule, N: int, eta: float, t: float, rng: RngStream,
                         window: float = 1.0, horizon: float = math.inf) -> float:
    """Next event after ``t`` of the Poisson process with intensity eta N(N-1) / (2 phi(s)).

    Thinning against the constant envelope eta N(N-1) / (2 min phi) on
    successive lookahead windows of length ``window``.  Returns ``inf`` if no
    event occurs before ``horizon``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    g = rng.generator
    s = t
    while s < horizon:
        end = s + window
        lo = schedule.min_on(s, end)
        if not (lo > 0 and np.isfinite(lo)):
            raise EnvelopeError(f"phi has no positive lower bound on [{s}, {end}]")
        lam = eta * N * (N - 1) / (2.0 * lo)
        cand = s + g.exponential(1.0 / lam)
        if cand > end:
            s = end
            continue
        s = cand
        if g.uniform() * schedule.evaluate(s) <= lo:
            return float(s) if s < horizon else math.inf
    return math.inf


def resample(state: ParticleState, arena: GenealogyArena | None, rng: RngStream, t: float | None = None):
    """Apply one resampling event at time ``t`` (default: the state's time).

    A uniformly chosen ordered pair (i, j), i != j: particle i takes j's
    position, and both continue as fresh children of j's node so that i
    adopts j's ancestry.  Returns ``(state, (t, j, i))``.
    """
    N = state.N
    g = rng.generator
    i = int(g.integers(0, N))
    j = int(g.integers(0, N - 1))
    j += j >= i
    t = state.time if t is None else t
    state.positions[i] = state.positions[j]
    if arena is not None:
        old = int(state.lineage[j])
        state.lineage[i] = arena.fork(old, t)
        state.lineage[j] = arena.fork(old, t)
        arena.living = state.lineage
    return state, (t, j, i)


def advance_motion(state: ParticleState, dt: float, params: StableParams, rng: RngStream,
                   arena: GenealogyArena | None = None, record: bool = True) -> ParticleState:
    """Move every particle by an independent stable increment over ``dt``.

    With ``record`` the new positions are appended to the lineages' segments.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    state.positions += sample_isotropic_increment(params, dt, rng, size=state.N)
    state.time += dt
    if arena is not None and record:
        arena.append_samples(state.lineage, state.time, state.positions)
    return state


# -- run configuration -----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    params: StableParams
    schedule: SamplingSchedule = field(default_factory=SamplingSchedule.exponential)
    N: int = 2000
    eta: float = 1.0
    initial: InitialDistribution = field(default_factory=InitialDistribution)
    step: float = 0.05
    horizon: float = 8.0
    snapshot_times: tuple = ()
    seed: int = 0
    stream_id: int = 0
    functions: tuple = ()  # TestFunctions tracked for X, Y, Z, QV
    track_genealogy: bool = True
    record_events: bool = True
    record_jumps: bool = False  # pre-jump positions at events (for quadratic variation)
    keep_snapshots: bool = True

    def __post_init__(self):
        errs = []
        if self.N < 2:
            errs.append("N: need at least 2 particles")
        if not self.eta > 0:
            errs.append("eta: must be positive")
        if not self.step > 0:
            errs.append("step: motion step must be positive")
        if not self.horizon > 0:
            errs.append("horizon: must be positive")
        bad = [t for t in self.snapshot_times if not 0 <= t <= self.horizon]
        if bad:
            errs.append(f"snapshot_times: {bad} outside [0, horizon]")
        for f in self.functions:
            if f.dim != self.params.dim:
                errs.append(f"functions: {f.name} has dim {f.dim} != {self.params.dim}")
        if errs:
            raise ValueError("invalid run config: " + "; ".join(errs))

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def grid(self) -> np.ndarray:
        """Motion grid: multiples of ``step`` merged with the snapshot times."""
        n = int(math.ceil(self.horizon / self.step - 1e-9))
        base = np.minimum(np.arange(n + 1) * self.step, self.horizon)
        g = np.union1d(base, np.asarray(self.snapshot_times, dtype=float))
        # merge near-duplicates so every window has positive length
        keep = np.concatenate([[True], np.diff(g) > 1e-9 * max(1.0, self.horizon)])
        g = g[keep]
        for t in self.snapshot_times:
            g[np.argmin(np.abs(g - t))] = t
        return g


@dataclass
class RunResult:
    config: RunConfig
    grid: np.ndarray
    snapshots: list  # ParticleState at snapshot times
    snapshot_times: np.ndarray
    events: EventLog
    arena: GenealogyArena | None
    state: ParticleState
    trace: np.ndarray  # (n_grid, F): X^N_t(f) at grid times
    trace_sq: np.ndarray  # (n_grid, F): X^N_t(f^2)
    Y: np.ndarray  # (n_snap, F) occupation times at snapshots
    Z: np.ndarray  # (n_snap, F) inhabitation times at snapshots
    qv: np.ndarray  # (n_snap, F) sum of squared resampling jumps of X^N(f)
    qv_compensator: np.ndarray  # (n_snap, F) int eta (X(f^2) - X(f)^2) / phi ds
    event_counts: np.ndarray  # (n_snap,) events up to each snapshot

    @property
    def M(self) -> np.ndarray:
        return self.Z - self.Y


def _draw_window_events(cfg: RunConfig, t0: float, t1: float, g: np.random.Generator):
    N, sch = cfg.N, cfg.schedule
    lo = sch.min_on(t0, t1)
    if not (lo > 0 and np.isfinite(lo)):
        raise EnvelopeError(f"phi has no positive lower bound on [{t0}, {t1}]")
    lam = cfg.eta * N * (N - 1) / (2.0 * lo)
    K = g.poisson(lam * (t1 - t0))
    times = np.sort(g.uniform(t0, t1, K))
    if sch.kind != "constant":
        acc = g.uniform(size=K) * sch.evaluate(times) <= lo
        times = times[acc]
    K = len(times)
    i = g.integers(0, N, K)
    j = g.integers(0, N - 1, K)
    j += j >= i
    return times, i.astype(np.int64), j.astype(np.int64)


def run(cfg: RunConfig) -> RunResult:
    """Simulate the Moran system on [0, horizon] with the windowed engine.

    Resampling events are placed at their exact (thinned Poisson) times;
    motion is exact at event and grid times.  Y, Z and the quadratic
    variation of every tracked function are accumulated on the motion grid,
    Y and Z with the same trapezoid rule (Z's left value follows adoptions).
    Fully determined by ``(seed, stream_id)``.
    """
    rng = RngStream(cfg.seed, cfg.stream_id)
    g = rng.generator
    params = cfg.params
    N, d = cfg.N, params.dim
    inv_alpha = 1.0 / params.alpha
    grid = cfg.grid()
    snap_set = {float(t) for t in cfg.snapshot_times}
    funcs = list(cfg.functions)
    F = len(funcs)

    pos = np.ascontiguousarray(cfg.initial.sample(N, d, rng), dtype=float)
    last = np.zeros(N)
    arena = None
    if cfg.track_genealogy:
        arena = GenealogyArena(d, node_capacity=4 * N, sample_capacity=N * (len(grid) + 1))
        lineage = arena.add_roots(pos, 0.0)
    else:
        lineage = np.arange(N, dtype=np.int64)
    parent = arena.parent if arena is not None else np.zeros(1, dtype=np.int64)
    birth = arena.birth if arena is not None else np.zeros(1)

    def fvals(x):
        if F == 0:
            return np.zeros((0, N))
        return np.stack([f.evaluate(x) for f in funcs])

    fv = fvals(pos)
    left = fv.copy()
    acc = np.zeros((F, N))
    n_grid = len(grid)
    trace = np.zeros((n_grid, F))
    trace_sq = np.zeros((n_grid, F))
    trace[0] = fv.mean(axis=1)
    trace_sq[0] = (fv**2).mean(axis=1)
    Yacc = np.zeros(F)
    qv = np.zeros(F)
    comp = np.zeros(F)
    n_events = 0
    ev_times, ev_src, ev_tgt = [], [], []
    snaps, snap_t, Ys, Zs, QVs, Cs, counts = [], [], [], [], [], [], []
    empty = np.zeros((0, d))

    def take_snapshot(t):
        if cfg.keep_snapshots:
            snaps.append(ParticleState(float(t), pos.copy(), lineage.copy(), cfg.eta))
        snap_t.append(float(t))
        Ys.append(Yacc.copy())
        # shifted mean: exact when every lineage carries the same value (f = 1)
        Zs.append(acc[:, 0] + (acc - acc[:, :1]).mean(axis=1) if F else np.zeros(0))
        QVs.append(qv.copy())
        Cs.append(comp.copy())
        counts.append(n_events)

    if 0.0 in snap_set:
        take_snapshot(0.0)

    for k in range(1, n_grid):
        t0, t1 = float(grid[k - 1]), float(grid[k])
        times, ii, jj = _draw_window_events(cfg, t0, t1, g)
        K = len(times)
        zj = sample_unit_increments(params, rng, K) if K else empty
        use_zi = cfg.record_jumps and F > 0
        zi = sample_unit_increments(params, rng, K) if (K and use_zi) else empty
        pre_i = np.zeros((K, d)) if use_zi else empty
        pre_j = np.zeros((K, d))
        if arena is not None:
            arena.ensure_node_capacity(2 * K)
            parent, birth = arena.parent, arena.birth
        n_nodes = arena.n_nodes if arena is not None else 0
        if K:
            n_nodes = _kernels.resample_window(
                times, ii, jj, zi, zj, use_zi, pos, last, inv_alpha, lineage,
                arena is not None, parent, birth, n_nodes, acc, left, pre_i, pre_j,
            )
        if arena is not None:
            arena.n_nodes = n_nodes
        if use_zi and K:
            fi = np.stack([f.evaluate(pre_i) for f in funcs])
            fj = np.stack([f.evaluate(pre_j) for f in funcs])
            qv += np.sum((fj - fi) ** 2, axis=1) / N**2
        if cfg.record_events and K:
            ev_times.append(times)
            ev_src.append(jj)
            ev_tgt.append(ii)
        n_events += K

        dt = t1 - last
        pos += (dt**inv_alpha)[:, None] * sample_unit_increments(params, rng, N)
        last[:] = t1
        fv = fvals(pos)
        h = t1 - t0
        acc += 0.5 * h * (left + fv)
        left = fv
        trace[k] = fv.mean(axis=1)
        trace_sq[k] = (fv**2).mean(axis=1)
        Yacc += 0.5 * h * (trace[k - 1] + trace[k])
        var0 = trace_sq[k - 1] - trace[k - 1] ** 2
        var1 = trace_sq[k] - trace[k] ** 2
        w0 = cfg.eta / cfg.schedule.evaluate(t0)
        w1 = cfg.eta / cfg.schedule.evaluate(t1)
        comp += 0.5 * h * (w0 * var0 + w1 * var1)
        if arena is not None:
            arena.append_samples(lineage, t1, pos)
        if t1 in snap_set:
            take_snapshot(t1)

    if arena is not None:
        arena.living = lineage.copy()
    events = EventLog()
    if ev_times:
        events = EventLog(np.concatenate(ev_times), np.concatenate(ev_src), np.concatenate(ev_tgt))
    final = ParticleState(float(grid[-1]), pos.copy(), lineage.copy(), cfg.eta)

    def stack(rows, width):
        return np.array(rows).reshape(len(rows), width)

    return RunResult(
        config=cfg,
        grid=grid,
        snapshots=snaps,
        snapshot_times=np.array(snap_t),
        events=events,
        arena=arena,
        state=final,
        trace=trace,
        trace_sq=trace_sq,
        Y=stack(Ys, F),
        Z=stack(Zs, F),
        qv=stack(QVs, F),
        qv_compensator=stack(Cs, F),
        event_counts=np.array(counts, dtype=np.int64),
    )


def run_reference(cfg: RunConfig):
    """Slow driver alternating next_resampling_time / advance_motion / resample.

    Motion is advanced exactly to each event time (all particles) and to
    every grid time, where the arena records samples.  Intended for small
    systems and for cross-checking :func:`run`.
    """
    rng = RngStream(cfg.seed, cfg.stream_id)
    params = cfg.params
    grid = cfg.grid()
    pos = cfg.initial.sample(cfg.N, params.dim, rng)
    arena = GenealogyArena(params.dim)
    state = ParticleState(0.0, pos, arena.add_roots(pos, 0.0), cfg.eta)
    arena.living = state.lineage
    log = []
    snaps = [state.copy()] if 0.0 in cfg.snapshot_times else []
    nxt = next_resampling_time(cfg.schedule, cfg.N, cfg.eta, 0.0, rng, window=cfg.step, horizon=cfg.horizon)
    for t1 in grid[1:]:
        while nxt <= t1:
            if nxt > state.time:
                advance_motion(state, nxt - state.time, params, rng, arena, record=False)
            state.time = nxt
            state, rec = resample(state, arena, rng, nxt)
            log.append(rec)
            nxt = next_resampling_time(cfg.schedule, cfg.N, cfg.eta, nxt, rng, window=cfg.step, horizon=cfg.horizon)
        advance_motion(state, t1 - state.time, params, rng, arena, record=False)
        state.time = float(t1)
        arena.append_samples(state.lineage, state.time, state.positions)
        if float(t1) in cfg.snapshot_times:
            snaps.append(state.copy())
    arena.living = state.lineage.copy()
    ev = EventLog(
        np.array([r[0] for r in log]),
        np.array([r[1] for r in log], dtype=np.int64),
        np.array([r[2] for r in log], dtype=np.int64),
    )
    return snaps, ev, arena, state


def mean_event_count(schedule: SamplingSchedule, N: int, eta: float, T: float) -> float:
    """Expected number of resampling events on [0, T]."""
    return eta * N * (N - 1) / 2.0 * schedule.inverse_integral(0.0, T)


def points(x, dim):
    return as_points(x, dim)
