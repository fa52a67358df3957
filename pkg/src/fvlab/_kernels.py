"""Compiled inner loops for the event-driven Moran engine and the arena."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def resample_window(ev_t, ev_i, ev_j, z_i, z_j, use_zi, pos, last, inv_alpha,
                    lineage, track, parent, birth, n_nodes, acc, left, pre_i, pre_j):
    """Apply the resampling events of one motion window in time order.

    Motion is lazy: a particle is moved to an event time only when it takes
    part in the event (exact, by independent increments).  Particle i jumps
    onto particle j; i's lineage forks from j's.  Returns the new node count.
    """
    K = ev_t.shape[0]
    d = pos.shape[1]
    F = acc.shape[0]
    for e in range(K):
        tau = ev_t[e]
        i = ev_i[e]
        j = ev_j[e]
        dt = tau - last[j]
        if dt > 0.0:
            s = dt ** inv_alpha
            for c in range(d):
                pos[j, c] += s * z_j[e, c]
        last[j] = tau
        if use_zi:
            dt = tau - last[i]
            if dt > 0.0:
                s = dt ** inv_alpha
                for c in range(d):
                    pos[i, c] += s * z_i[e, c]
            for c in range(d):
                pre_i[e, c] = pos[i, c]
        for c in range(d):
            pre_j[e, c] = pos[j, c]
            pos[i, c] = pos[j, c]
        last[i] = tau
        for q in range(F):
            acc[q, i] = acc[q, j]
            left[q, i] = left[q, j]
        if track:
            old = lineage[j]
            parent[n_nodes] = old
            birth[n_nodes] = tau
            parent[n_nodes + 1] = old
            birth[n_nodes + 1] = tau
            lineage[i] = n_nodes
            lineage[j] = n_nodes + 1
            n_nodes += 2
    return n_nodes


@njit(cache=True)
def mark_ancestors(parent, n_nodes, living):
    """Boolean mask of nodes having a living descendant (living nodes included)."""
    keep = np.zeros(n_nodes, dtype=np.bool_)
    for a in range(living.shape[0]):
        v = living[a]
        while v >= 0 and not keep[v]:
            keep[v] = True
            v = parent[v]
    return keep


@njit(cache=True)
def check_links(parent, birth, n_nodes):
    """Index of the first node whose parent link is corrupt, or -1."""
    for v in range(n_nodes):
        p = parent[v]
        if p >= n_nodes or p >= v or p < -1:
            return v
        if p >= 0 and not birth[p] < birth[v]:
            return v
    return -1


@njit(cache=True)
def lineage_integrals(parent, n_nodes, s_node, s_time, s_val, t_end):
    """Trapezoidal integral of a sampled value along every lineage, root to node.

    Samples of one node must appear in time order; parents must have smaller
    ids than children.  Between a parent's last sample and a child's first
    sample the trapezoid joins the two, so the integral is the trapezoid rule
    over the concatenated ancestral path restricted to times <= t_end.
    """
    cum = np.zeros(n_nodes)
    last_t = np.full(n_nodes, np.nan)
    last_v = np.zeros(n_nodes)
    own = np.zeros(n_nodes)
    first_t = np.full(n_nodes, np.nan)
    first_v = np.zeros(n_nodes)
    own_last_t = np.full(n_nodes, np.nan)
    own_last_v = np.zeros(n_nodes)
    for k in range(s_node.shape[0]):
        v = s_node[k]
        t = s_time[k]
        if t > t_end:
            continue
        if np.isnan(first_t[v]):
            first_t[v] = t
            first_v[v] = s_val[k]
        else:
            own[v] += 0.5 * (t - own_last_t[v]) * (own_last_v[v] + s_val[k])
        own_last_t[v] = t
        own_last_v[v] = s_val[k]
    for v in range(n_nodes):
        p = parent[v]
        base = 0.0
        pt = np.nan
        pv = 0.0
        if p >= 0:
            base = cum[p]
            pt = last_t[p]
            pv = last_v[p]
        if np.isnan(first_t[v]):
            cum[v] = base
            last_t[v] = pt
            last_v[v] = pv
        else:
            bridge = 0.0
            if not np.isnan(pt):
                bridge = 0.5 * (first_t[v] - pt) * (pv + first_v[v])
            cum[v] = base + bridge + own[v]
            last_t[v] = own_last_t[v]
            last_v[v] = own_last_v[v]
    return cum


def warmup():
    """Trigger compilation on tiny inputs."""
    z = np.zeros((1, 1))
    resample_window(np.array([0.5]), np.array([0]), np.array([1]), z, z, True,
                    np.zeros((2, 1)), np.zeros(2), 0.5, np.array([0, 1]), True,
                    np.full(4, -1), np.zeros(4), 2, np.zeros((1, 2)), np.zeros((1, 2)), z.copy(), z.copy())
    mark_ancestors(np.array([-1, 0]), 2, np.array([1]))
    lineage_integrals(np.array([-1]), 1, np.array([0]), np.array([0.0]), np.array([1.0]), 1.0)
    check_links(np.array([-1]), np.zeros(1), 1)
