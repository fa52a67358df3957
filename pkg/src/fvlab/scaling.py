"""Ensemble experiments for the long-time limit theorems, with z-tested reports.

Every decision in a report is a z-test: the statistic's ensemble mean, its
standard error over ``R`` replicas and a stated threshold.  Limits that hold
only as t -> infinity are tested at the largest evaluation time against a
relative bias band, via the excess z-score

    z = max(0, |mean - target| - tol * |target|) / stderr,

so a finite-time bias inside the band is not counted against the run.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import analytics
from .analytics import check_phi_integrability, gamma_d, kappa_d, theta_const
from .moran import RunConfig, run
from .testfunctions import TestFunction, factorial_multi, multi_indices


# -- configuration ---------------------------------------------------------------


def function_label(f: TestFunction) -> str:
    parts = []
    for k, v in f.params.items():
        if isinstance(v, (list, tuple)):
            if not any(v):
                continue  # a centre at the origin is the default
            v = "(" + " ".join(f"{c:g}" for c in v) + ")"
        elif isinstance(v, (int, float)):
            v = f"{v:g}"
        parts.append(f"{k}={v}")
    return f"{f.name}({','.join(parts)})" if parts else f.name


@dataclass(frozen=True)
class ExperimentConfig:
    """An ensemble of ``replicas`` independent runs of ``run``.

    Evaluation times are ``times`` if given, otherwise the lattice with
    gamma_d(t_n) = q^n for ``n in lattice_n`` (geometric ``q^n`` in high
    dimension, where gamma_d is constant).
    """

    run: RunConfig
    replicas: int = 64
    times: tuple = ()
    lattice_q: float | None = None
    lattice_n: tuple = ()
    order: int = 0
    eps0: float = 0.1
    z_threshold: float = 4.0
    qv_threshold: float = 5.0
    agreement_threshold: float = 2.0
    rel_tolerance: float = 0.15
    n_doubling: bool = False
    jobs: int = 1
    experiment_id: str = "experiment"
    label: str = ""

    def __post_init__(self):
        if self.replicas < 2:
            raise ValueError("replicas: need R >= 2 for a standard error")
        if self.jobs < 1:
            raise ValueError("jobs: must be at least 1")
        if not self.run.functions:
            raise ValueError("functions: at least one test function is required")
        ts = self.eval_times()
        if len(ts) == 0:
            raise ValueError("times: no evaluation times given")
        if np.any(ts <= 0) or np.any(ts > self.run.horizon * (1 + 1e-12)):
            raise ValueError(f"times: evaluation times {ts.tolist()} must lie in (0, horizon={self.run.horizon}]")

    def eval_times(self) -> np.ndarray:
        if self.times:
            return np.asarray(sorted(self.times), dtype=float)
        if self.lattice_q is None:
            return np.zeros(0)
        p = self.run.params
        if p.dim > p.alpha:
            return float(self.lattice_q) ** np.asarray(self.lattice_n, dtype=float)
        return analytics.lattice_times(p, self.lattice_q, self.lattice_n)

    def run_config(self, N: int | None = None) -> RunConfig:
        ts = tuple(float(t) for t in self.eval_times())
        return replace(self.run, snapshot_times=tuple(sorted({0.0, *ts})), N=N or self.run.N)

    def to_dict(self) -> dict:
        r = self.run
        return {
            "experiment_id": self.experiment_id,
            "label": self.label,
            "alpha": r.params.alpha,
            "dim": r.params.dim,
            "schedule": r.schedule.to_dict(),
            "N": r.N,
            "eta": r.eta,
            "step": r.step,
            "horizon": r.horizon,
            "initial": r.initial.to_dict(),
            "seed": r.seed,
            "replicas": self.replicas,
            "times": self.eval_times().tolist(),
            "functions": [function_label(f) for f in r.functions],
            "order": self.order,
            "z_threshold": self.z_threshold,
            "rel_tolerance": self.rel_tolerance,
            "n_doubling": self.n_doubling,
        }


# -- ensembles ---------------------------------------------------------------------


@dataclass
class Ensemble:
    """Per-replica statistics at the evaluation times, arrays shaped (R, T, F)."""

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    qv: np.ndarray
    qv_compensator: np.ndarray
    events: np.ndarray  # (R, T)
    initial_positions: list  # R arrays (N, d)

    @property
    def M(self) -> np.ndarray:
        return self.Z - self.Y

    @property
    def R(self) -> int:
        return self.X.shape[0]


def _replica(args):
    cfg, times = args
    res = run(cfg)
    snap = list(res.snapshot_times)
    idx = [snap.index(t) for t in times]
    gidx = [int(np.flatnonzero(res.grid == t)[0]) for t in times]
    return (
        res.trace[gidx],
        res.Y[idx],
        res.Z[idx],
        res.qv[idx],
        res.qv_compensator[idx],
        res.event_counts[idx],
        res.snapshots[0].positions if res.snapshots else None,
    )


def simulate_ensemble(exp: ExperimentConfig, N: int | None = None, keep_initial: bool = False) -> Ensemble:
    """Run the replicas (stream ids 0..R-1) and collect their statistics.

    Results are ordered by stream id, so the ensemble does not depend on
    ``jobs``.
    """
    base = exp.run_config(N)
    base = replace(base, track_genealogy=False, record_events=False, keep_snapshots=keep_initial,
                   snapshot_times=base.snapshot_times if keep_initial else tuple(t for t in base.snapshot_times if t > 0))
    times = exp.eval_times().tolist()
    tasks = [(replace(base, stream_id=r), times) for r in range(exp.replicas)]
    if exp.jobs > 1:
        with ProcessPoolExecutor(max_workers=exp.jobs) as pool:
            out = list(pool.map(_replica, tasks))
    else:
        out = [_replica(t) for t in tasks]
    stack = lambda k: np.stack([o[k] for o in out])  # noqa: E731
    return Ensemble(np.array(times), stack(0), stack(1), stack(2), stack(3), stack(4), stack(5),
                    [o[6] for o in out])


# -- reports -----------------------------------------------------------------------


@dataclass
class ReportRow:
    quantity: str
    function: str
    t: float
    mean: float
    stderr: float
    target: float | None = None
    z: float | None = None
    threshold: float | None = None
    passed: bool | None = None
    replicas: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class ScalingReport:
    experiment_id: str
    kind: str
    config: dict
    status: str = "confirmatory"  # or "exploratory"
    verdicts: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        decided = [r.passed for r in self.rows if r.passed is not None] + [c["passed"] for c in self.checks]
        return all(decided)

    @property
    def failures(self) -> list:
        out = [f"{r.quantity}[{r.function}] t={r.t:g}: z={r.z:.3g}" for r in self.rows if r.passed is False]
        return out + [f"{c['name']}: {c['detail']}" for c in self.checks if not c["passed"]]

    def rows_for(self, quantity: str, function: str | None = None) -> list:
        return [r for r in self.rows if r.quantity == quantity and (function is None or r.function == function)]

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "kind": self.kind,
            "status": self.status,
            "passed": self.passed,
            "config": self.config,
            "verdicts": self.verdicts,
            "rows": [asdict(r) for r in self.rows],
            "checks": self.checks,
            "notes": self.notes,
        }


def mean_se(a, axis=0):
    a = np.asarray(a, dtype=float)
    n = a.shape[axis]
    return a.mean(axis=axis), a.std(axis=axis, ddof=1) / math.sqrt(n)


def z_score(mean: float, se: float, target: float, tol: float = 0.0) -> float:
    """Excess z-score of ``mean`` against ``target`` with a relative tolerance band."""
    gap = max(0.0, abs(mean - target) - tol * abs(target))
    if gap == 0.0:
        return 0.0
    return math.inf if se == 0.0 else gap / se


def _check(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _monotone_check(name: str, means, ses, target) -> dict:
    """Ensemble means approach ``target`` monotonically across the evaluation times."""
    means = np.asarray(means)
    dist = np.abs(means - target)
    detail = "distance to target " + ", ".join(f"{m:.4g}+-{s:.2g}" for m, s in zip(dist, ses))
    if target == 0.0:
        # the mean is already on target in expectation; the distances are pure noise
        return _check(name, True, detail + " (zero target, trend not tested)")
    return _check(name, bool(np.all(np.diff(dist) < 0)), detail)


def _phi_gate(report: ScalingReport, exp: ExperimentConfig, name: str, p: float, eps: float) -> bool:
    v = check_phi_integrability(exp.run.schedule, p, eps)
    report.verdicts[name] = {"verdict": v.verdict, "detail": v.detail}
    if v.verdict != "pass":
        report.status = "exploratory"
        report.notes.append(f"sampling-rate condition {name} is not satisfied ({v.detail}); run labeled exploratory")
        return False
    return True


def _doubling(exp, report, compute):
    """Attach the 2N ensemble means of each row as extra columns."""
    if not exp.n_doubling:
        return
    ens2 = simulate_ensemble(exp, N=2 * exp.run.N)
    values = compute(ens2)
    for row in report.rows:
        key = (row.quantity, row.function, row.t)
        if key in values:
            m, s = values[key]
            row.extra.update({"N2": 2 * exp.run.N, "mean_2N": m, "stderr_2N": s})


# -- experiments -----------------------------------------------------------------


def mass_target(params, f: TestFunction, order: int, t: float) -> float:
    """sum over even |k| <= order of (-1)^(|k|/2) t^(-|k|/alpha) theta^k lambda^k(f)."""
    tot = 0.0
    for k in multi_indices(params.dim, order):
        s = sum(k)
        if s % 2:
            continue
        th = theta_const(params, k)
        if th == 0.0:
            continue
        m = f.moment(k)
        if not np.isfinite(m):
            raise ValueError(f"{f.name}: moment of order {k} diverges")
        tot += (-1) ** (s // 2) * t ** (-s / params.alpha) * th * m / factorial_multi(k)
    return float(tot)


def run_mass_scaling(exp: ExperimentConfig, ensemble: Ensemble | None = None) -> ScalingReport:
    """t^(d/alpha) X_t(f) against its order-``exp.order`` limit expansion."""
    p = exp.run.params
    rep = ScalingReport(exp.experiment_id, "mass-scaling", exp.to_dict())
    _phi_gate(rep, exp, "mass", (2 * exp.order + p.dim) / p.alpha, exp.eps0)
    ens = ensemble or simulate_ensemble(exp)
    ts = ens.times
    scale = ts ** (p.dim / p.alpha)

    def compute(e):
        out = {}
        for a, f in enumerate(exp.run.functions):
            m, s = mean_se(e.X[:, :, a] * scale)
            for b, t in enumerate(ts):
                out[("mass", function_label(f), float(t))] = (float(m[b]), float(s[b]))
        return out

    for a, f in enumerate(exp.run.functions):
        lab = function_label(f)
        stat = ens.X[:, :, a] * scale
        m, s = mean_se(stat)
        tg = np.array([mass_target(p, f, exp.order, t) for t in ts])
        for b, t in enumerate(ts):
            final = b == len(ts) - 1
            z = z_score(m[b], s[b], tg[b], exp.rel_tolerance)
            rep.rows.append(ReportRow("mass", lab, float(t), float(m[b]), float(s[b]), float(tg[b]), z,
                                      exp.z_threshold, (z <= exp.z_threshold) if final else None, ens.R))
        if len(ts) > 1 and tg[-1] != 0:
            rep.checks.append(_monotone_check(f"mass-trend[{lab}]", m, s, tg[-1]))
    _doubling(exp, rep, compute)
    return rep


def run_occupation_scaling(exp: ExperimentConfig, ensemble: Ensemble | None = None) -> ScalingReport:
    """Y_t(f)/gamma_d(t) and Z_t(f)/gamma_d(t) against kappa_d lambda(f), or convergence in high dimension."""
    p = exp.run.params
    for f in exp.run.functions:
        if not f.integrable:
            raise ValueError(f"{f.name}: occupation scaling needs an integrable test function")
    rep = ScalingReport(exp.experiment_id, "occupation-scaling", exp.to_dict())
    _phi_gate(rep, exp, "occupation", -1.0, 0.0)
    ens = ensemble or simulate_ensemble(exp)
    ts = ens.times
    if p.dim > p.alpha:
        rep.notes.append("high dimension: kappa_d is undefined, reporting convergence of Y, Z and M instead")
        _high_dimension_rows(rep, exp, ens)
        return rep
    g = np.array([gamma_d(p, t) for t in ts])
    kap = kappa_d(p)

    def compute(e):
        out = {}
        for a, f in enumerate(exp.run.functions):
            for q, arr in (("Y", e.Y), ("Z", e.Z)):
                m, s = mean_se(arr[:, :, a] / g)
                for b, t in enumerate(ts):
                    out[(f"{q}/gamma", function_label(f), float(t))] = (float(m[b]), float(s[b]))
        return out

    for a, f in enumerate(exp.run.functions):
        lab = function_label(f)
        target = kap * f.moment((0,) * p.dim)
        for q, arr in (("Y", ens.Y), ("Z", ens.Z)):
            m, s = mean_se(arr[:, :, a] / g)
            for b, t in enumerate(ts):
                final = b == len(ts) - 1
                z = z_score(m[b], s[b], target, exp.rel_tolerance)
                rep.rows.append(ReportRow(f"{q}/gamma", lab, float(t), float(m[b]), float(s[b]), target, z,
                                          exp.z_threshold, (z <= exp.z_threshold) if final else None, ens.R))
            if len(ts) > 1:
                rep.checks.append(_monotone_check(f"{q}-trend[{lab}]", m, s, target))
        diff = (ens.Z[:, :, a] - ens.Y[:, :, a]) / g
        m, s = mean_se(diff)
        for b, t in enumerate(ts):
            z = z_score(m[b], s[b], 0.0)
            rep.rows.append(ReportRow("(Z-Y)/gamma", lab, float(t), float(m[b]), float(s[b]), 0.0, z,
                                      exp.agreement_threshold, z <= exp.agreement_threshold, ens.R))
    _doubling(exp, rep, compute)
    return rep


def _high_dimension_rows(rep: ScalingReport, exp: ExperimentConfig, ens: Ensemble):
    ts = ens.times
    for a, f in enumerate(exp.run.functions):
        lab = function_label(f)
        for q, arr in (("Y", ens.Y), ("Z", ens.Z), ("M", ens.M)):
            inc = np.abs(np.diff(arr[:, :, a], axis=1))
            m, s = mean_se(inc)
            for b in range(len(ts) - 1):
                rep.rows.append(ReportRow(f"|d{q}|", lab, float(ts[b + 1]), float(m[b]), float(s[b]),
                                          replicas=ens.R, extra={"from": float(ts[b])}))
            if q != "M" and len(m) > 1:
                ok = bool(np.all(np.diff(m) < 0))
                rep.checks.append(_check(f"cauchy-{q}[{lab}]", ok, "mean |increments| " +
                                         ", ".join(f"{v:.4g}+-{e:.2g}" for v, e in zip(m, s))))
        Yl, Zl, Ml = ens.Y[:, -1, a], ens.Z[:, -1, a], ens.M[:, -1, a]
        gap = float(np.max(np.abs(Zl - (Ml + Yl))))
        rep.checks.append(_check(f"Z=M+Y[{lab}]", gap <= 1e-12, f"max per-replica gap {gap:.3g}"))
        for q, arr in (("Y", Yl), ("Z", Zl), ("M", Ml)):
            m, s = mean_se(arr)
            rep.rows.append(ReportRow(f"{q}_final", lab, float(ts[-1]), float(m), float(s), replicas=ens.R))


def run_martingale_checks(exp: ExperimentConfig, ensemble: Ensemble | None = None) -> ScalingReport:
    """Quadratic-variation match, second-moment bound, nullity and orthogonality of M."""
    p = exp.run.params
    rep = ScalingReport(exp.experiment_id, "martingale-checks", exp.to_dict())
    if ensemble is None:
        cfg = replace(exp, run=replace(exp.run, record_jumps=True))
        ensemble = simulate_ensemble(cfg, keep_initial=True)
    ens = ensemble
    ts = ens.times
    sch, eta = exp.run.schedule, exp.run.eta
    inv_phi = np.array([sch.inverse_integral(0.0, t) for t in ts])
    for a, f in enumerate(exp.run.functions):
        lab = function_label(f)
        # nullity of M
        m, s = mean_se(ens.M[:, :, a])
        for b, t in enumerate(ts):
            z = z_score(m[b], s[b], 0.0)
            rep.rows.append(ReportRow("M", lab, float(t), float(m[b]), float(s[b]), 0.0, z,
                                      exp.z_threshold, z <= exp.z_threshold, ens.R))
        # orthogonality of successive increments (M_0 = 0)
        Mi = np.diff(np.concatenate([np.zeros((ens.R, 1)), ens.M[:, :, a]], axis=1), axis=1)
        for b in range(1, Mi.shape[1]):
            prod = Mi[:, b - 1] * Mi[:, b]
            m1, s1 = mean_se(prod)
            z = z_score(m1, s1, 0.0)
            sd = np.std(Mi[:, b - 1]) * np.std(Mi[:, b])
            corr = float(np.mean(prod - Mi[:, b - 1].mean() * Mi[:, b].mean()) / sd) if sd > 0 else 0.0
            rep.rows.append(ReportRow("dM*dM", lab, float(ts[b]), float(m1), float(s1), 0.0, z,
                                      exp.z_threshold, z <= exp.z_threshold, ens.R, {"correlation": corr}))
        # quadratic variation of X(f) at resampling events vs its compensator
        if np.any(ens.qv[:, :, a] != 0) or np.any(ens.qv_compensator[:, :, a] != 0):
            d = ens.qv[:, :, a] - ens.qv_compensator[:, :, a]
            m, s = mean_se(d)
            for b, t in enumerate(ts):
                z = z_score(m[b], s[b], 0.0)
                rep.rows.append(ReportRow("QV-compensator", lab, float(t), float(m[b]), float(s[b]), 0.0, z,
                                          exp.qv_threshold, z <= exp.qv_threshold, ens.R,
                                          {"qv_mean": float(ens.qv[:, b, a].mean())}))
        # second-moment bound E(X_t f - X_0 T_t f)^2 <= sup T_t(f^2) * eta int_0^t ds/phi
        if ens.initial_positions[0] is not None and f.integrable:
            f2 = f.square()
            for b, t in enumerate(ts):
                x0 = np.array([np.mean(analytics.semigroup_apply(p, t, f, pos)) for pos in ens.initial_positions])
                dev = (ens.X[:, b, a] - x0) ** 2
                m1, s1 = mean_se(dev)
                sup = float(np.max(analytics.semigroup_apply(p, t, f2, analytics.sup_grid(p, t, 129 if p.dim == 1 else 33))))
                bound = sup * eta * inv_phi[b]
                z = max(0.0, m1 - bound) / s1 if s1 > 0 else (0.0 if m1 <= bound else math.inf)
                rep.rows.append(ReportRow("second-moment", lab, float(t), float(m1), float(s1), bound, z,
                                          exp.qv_threshold, z <= exp.qv_threshold, ens.R))
        # L2 boundedness diagnostic: Var(M_t) along the evaluation times
        pg = 1.0 - 2.0 * p.dim / p.alpha if p.dim < p.alpha else -1.0
        v = check_phi_integrability(sch, pg, 0.01 if p.dim == p.alpha else 0.0)
        rep.verdicts["martingale-L2"] = {"verdict": v.verdict, "detail": v.detail}
        if v.verdict == "pass":
            var = ens.M[:, :, a].var(axis=0, ddof=1)
            se = var * math.sqrt(2.0 / (ens.R - 1))
            for b, t in enumerate(ts):
                rep.rows.append(ReportRow("Var(M)", lab, float(t), float(var[b]), float(se[b]), replicas=ens.R))
    return rep


def run_semigroup_expansion_study(params, functions, orders=(0, 2), times=(4.0, 16.0, 64.0, 256.0),
                                  experiment_id: str = "expansion", points: int | None = None) -> ScalingReport:
    """Scaled expansion error t^((N+d)/alpha) sup|T_t f - L_t^N f| on a time grid (deterministic)."""
    cfg = {"experiment_id": experiment_id, "alpha": params.alpha, "dim": params.dim,
           "orders": list(orders), "times": list(times), "functions": [function_label(f) for f in functions]}
    rep = ScalingReport(experiment_id, "semigroup-expansion", cfg)
    for f in functions:
        lab = function_label(f)
        for n in orders:
            vals = []
            for t in times:
                v = analytics.expansion_error(params, t, f, n, points)
                vals.append(v)
                rep.rows.append(ReportRow(f"scaled-error-N{n}", lab, float(t), float(v), 0.0,
                                          extra={"sup_error": float(v * t ** (-(n + params.dim) / params.alpha))}))
            tail = np.asarray(vals[1:])
            ok = bool(np.all(np.diff(tail) < 0))
            rep.checks.append(_check(f"decreasing-tail-N{n}[{lab}]", ok,
                                     "scaled errors " + ", ".join(f"{v:.4g}" for v in vals)))
    return rep


# -- summary output ---------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name).strip("_")


def summarize(reports, out_dir=None) -> dict:
    """Merge reports into one document; with ``out_dir`` write report.json and plot-data CSVs.

    Plot data go to ``<experiment-id>/<quantity>.csv`` with columns
    function, t, statistic, stderr, target.
    """
    doc = {"experiments": {}}
    for rep in reports:
        if rep.experiment_id in doc["experiments"]:
            raise ValueError(f"duplicate experiment id {rep.experiment_id!r}")
        doc["experiments"][rep.experiment_id] = rep.to_dict()
    doc["passed"] = all(e["passed"] for e in doc["experiments"].values())
    doc = _clean(doc)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for rep in reports:
            sub = os.path.join(out_dir, _safe(rep.experiment_id))
            os.makedirs(sub, exist_ok=True)
            for q in dict.fromkeys(r.quantity for r in rep.rows):
                with open(os.path.join(sub, _safe(q) + ".csv"), "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["function", "t", "statistic", "stderr", "target"])
                    for r in rep.rows_for(q):
                        w.writerow([r.function, repr(r.t), repr(r.mean), repr(r.stderr),
                                    "" if r.target is None else repr(r.target)])
    return doc
