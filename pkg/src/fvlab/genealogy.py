"""Persistent ancestral-lineage store and the occupation / inhabitation functionals.

The arena is append-only: nodes carry a parent link, a birth time and a
segment of ``(time, position)`` samples taken on the motion grid.  A living
particle's ancestral path is the concatenation of the segments on its
root-to-leaf chain; adopted history is shared, never copied.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .stable_motion import PathGrid
from .testfunctions import TestFunction


class ArenaCorruption(RuntimeError):
    """A parent link points outside the arena or backwards in time."""


class GenealogyArena:
    def __init__(self, dim: int, node_capacity: int = 1024, sample_capacity: int = 4096):
        self.dim = dim
        self.parent = np.full(node_capacity, -1, dtype=np.int64)
        self.birth = np.zeros(node_capacity)
        self.n_nodes = 0
        self.s_node = np.zeros(sample_capacity, dtype=np.int64)
        self.s_time = np.zeros(sample_capacity)
        self.s_pos = np.zeros((sample_capacity, dim))
        self.n_samples = 0
        self.living = np.zeros(0, dtype=np.int64)
        self._order = None

    def __len__(self):
        return self.n_nodes

    # -- growth ----------------------------------------------------------------
    def ensure_node_capacity(self, extra: int):
        need = self.n_nodes + extra
        if need > len(self.parent):
            cap = max(need, 2 * len(self.parent))
            self.parent = np.concatenate([self.parent, np.full(cap - len(self.parent), -1, dtype=np.int64)])
            self.birth = np.concatenate([self.birth, np.zeros(cap - len(self.birth))])

    def ensure_sample_capacity(self, extra: int):
        need = self.n_samples + extra
        if need > len(self.s_node):
            cap = max(need, 2 * len(self.s_node))
            grow = cap - len(self.s_node)
            self.s_node = np.concatenate([self.s_node, np.zeros(grow, dtype=np.int64)])
            self.s_time = np.concatenate([self.s_time, np.zeros(grow)])
            self.s_pos = np.concatenate([self.s_pos, np.zeros((grow, self.dim))])

    def add_roots(self, positions, t: float = 0.0) -> np.ndarray:
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        n = len(positions)
        self.ensure_node_capacity(n)
        ids = np.arange(self.n_nodes, self.n_nodes + n, dtype=np.int64)
        self.parent[ids] = -1
        self.birth[ids] = t
        self.n_nodes += n
        self.append_samples(ids, t, positions)
        return ids

    def fork(self, parent_id: int, t: float) -> int:
        if not 0 <= parent_id < self.n_nodes:
            raise ArenaCorruption(f"fork from unknown node {parent_id}")
        self.ensure_node_capacity(1)
        v = self.n_nodes
        self.parent[v] = parent_id
        self.birth[v] = t
        self.n_nodes += 1
        return v

    def append_samples(self, node_ids, t: float, positions):
        node_ids = np.asarray(node_ids, dtype=np.int64)
        n = len(node_ids)
        self.ensure_sample_capacity(n)
        sl = slice(self.n_samples, self.n_samples + n)
        self.s_node[sl] = node_ids
        self.s_time[sl] = t
        self.s_pos[sl] = positions
        self.n_samples += n
        self._order = None

    # -- queries -----------------------------------------------------------------
    def _sample_order(self):
        if self._order is None:
            nodes = self.s_node[: self.n_samples]
            order = np.argsort(nodes, kind="stable")
            starts = np.searchsorted(nodes[order], np.arange(self.n_nodes + 1))
            self._order = (order, starts)
        return self._order

    def segment(self, node: int):
        order, starts = self._sample_order()
        idx = order[starts[node] : starts[node + 1]]
        return self.s_time[idx], self.s_pos[idx]

    def chain(self, node: int) -> list[int]:
        """Node ids from the root down to ``node``."""
        out = []
        v = int(node)
        while v >= 0:
            if v >= self.n_nodes:
                raise ArenaCorruption(f"dangling parent link to node {v}")
            out.append(v)
            p = int(self.parent[v])
            if p >= v:
                raise ArenaCorruption(f"node {v} has parent {p} created after it")
            v = p
        return out[::-1]

    def validate(self):
        bad = _kernels.check_links(self.parent, self.birth, self.n_nodes)
        if bad >= 0:
            raise ArenaCorruption(f"node {bad} has a corrupt parent link")

    def copy(self) -> "GenealogyArena":
        a = GenealogyArena(self.dim, 1, 1)
        a.parent = self.parent[: self.n_nodes].copy()
        a.birth = self.birth[: self.n_nodes].copy()
        a.n_nodes = self.n_nodes
        a.s_node = self.s_node[: self.n_samples].copy()
        a.s_time = self.s_time[: self.n_samples].copy()
        a.s_pos = self.s_pos[: self.n_samples].copy()
        a.n_samples = self.n_samples
        a.living = self.living.copy()
        return a

    # -- export ----------------------------------------------------------------
    def write_nodes_csv(self, path):
        _, starts = self._sample_order()
        seglen = np.diff(starts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "parent_id", "birth_time", "segment_length"])
            for v in range(self.n_nodes):
                p = int(self.parent[v])
                w.writerow([v, "" if p < 0 else p, repr(float(self.birth[v])), int(seglen[v])])

    def write_path_csv(self, path, node: int, t: float):
        p = ancestral_path(self, node, t)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"x_{c + 1}" for c in range(self.dim)])
            for tt, x in zip(p.times, p.positions):
                w.writerow([repr(float(tt))] + [repr(float(v)) for v in x])


@dataclass(frozen=True)
class AncestralPath(PathGrid):
    """Ancestral path on [0, end], held constant after ``end``."""

    end: float = 0.0

    def at(self, u: float) -> np.ndarray:
        return super().at(min(u, self.end))


def ancestral_path(arena: GenealogyArena, node: int, t: float) -> AncestralPath:
    """Concatenated root-to-node segments restricted to [0, t]."""
    times, pos = [], []
    for v in arena.chain(node):
        st, sp = arena.segment(v)
        keep = st <= t
        times.append(st[keep])
        pos.append(sp[keep])
    times = np.concatenate(times) if times else np.zeros(0)
    pos = np.concatenate(pos) if pos else np.zeros((0, arena.dim))
    if len(times) == 0:
        raise ArenaCorruption(f"node {node} has no recorded ancestry")
    return AncestralPath(times, pos, end=float(t))


def _trapezoid(times, values):
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(times) * (values[1:] + values[:-1])))


def occupation_time(times, values, t: float) -> float:
    """int_0^t X_s(f) ds from a grid trace (times, X_s(f)) by the trapezoid rule."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if t > times[-1] + 1e-12 * max(1.0, times[-1]):
        raise ValueError(f"t={t} is beyond the simulated horizon {times[-1]}")
    if t < times[0]:
        raise ValueError("t precedes the trace start")
    k = int(np.searchsorted(times, t, side="right"))
    tt, vv = times[:k], values[:k]
    if tt[-1] < t:
        v_end = np.interp(t, times, values)
        tt = np.append(tt, t)
        vv = np.append(vv, v_end)
    return _trapezoid(tt, vv)


def inhabitation_time(state, arena: GenealogyArena, f: TestFunction, t: float) -> float:
    """(1/N) sum over living particles of int_0^t f(ancestral path) ds.

    Trapezoid rule on the motion-grid samples of each ancestral path, computed
    for all lineages at once by accumulating along parent links.
    """
    if abs(state.time - t) > 1e-12 * max(1.0, t):
        raise ValueError("inhabitation time is taken at the state's current time")
    n = arena.n_samples
    vals = f.evaluate(arena.s_pos[:n])
    cum = _kernels.lineage_integrals(arena.parent, arena.n_nodes, arena.s_node[:n], arena.s_time[:n], vals, float(t))
    return float(np.mean(cum[np.asarray(state.lineage)]))


def inhabitation_time_by_paths(state, arena: GenealogyArena, f: TestFunction, t: float) -> float:
    """Reference version of :func:`inhabitation_time` walking each path explicitly."""
    tot = 0.0
    for v in state.lineage:
        p = ancestral_path(arena, int(v), t)
        tot += _trapezoid(p.times, f.evaluate(p.positions))
    return tot / len(state.lineage)


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be increasing")


def martingale_corrector(z: TimeSeries, y: TimeSeries) -> TimeSeries:
    """M_t = Z_t - Y_t on a shared time grid."""
    if len(z.times) != len(y.times) or not np.array_equal(z.times, y.times):
        raise ValueError("Z and Y series must share the same time grid")
    return TimeSeries(np.asarray(z.times), np.asarray(z.values) - np.asarray(y.values))


def prune(arena: GenealogyArena, living) -> tuple[GenealogyArena, np.ndarray]:
    """Drop lineages with no living descendant and merge single-child chains.

    Returns the compacted arena and the new ids of ``living`` (same order).
    Every living ancestral path is unchanged.
    """
    living = np.asarray(living, dtype=np.int64)
    n = arena.n_nodes
    keep = _kernels.mark_ancestors(arena.parent, n, living)
    par = arena.parent[:n]
    kept_children = np.bincount(par[keep & (par >= 0)], minlength=n)
    is_living = np.zeros(n, dtype=bool)
    is_living[living] = True
    new_id = np.full(n, -1, dtype=np.int64)
    new_parent = []
    new_birth = []
    for v in np.flatnonzero(keep):
        p = par[v]
        # a child continues its parent's node when it is the only surviving child
        if p >= 0 and kept_children[p] == 1 and not is_living[p]:
            new_id[v] = new_id[p]
            continue
        new_id[v] = len(new_parent)
        new_parent.append(-1 if p < 0 else new_id[p])
        new_birth.append(arena.birth[v])
    out = GenealogyArena(arena.dim, max(len(new_parent), 1), max(arena.n_samples, 1))
    m = len(new_parent)
    out.parent[:m] = new_parent
    out.birth[:m] = new_birth
    out.n_nodes = m
    ns = arena.n_samples
    sel = keep[arena.s_node[:ns]]
    nodes = new_id[arena.s_node[:ns][sel]]
    order = np.argsort(nodes, kind="stable")
    k = len(order)
    out.s_node[:k] = nodes[order]
    out.s_time[:k] = arena.s_time[:ns][sel][order]
    out.s_pos[:k] = arena.s_pos[:ns][sel][order]
    out.n_samples = k
    out.living = new_id[living]
    return out, out.living
