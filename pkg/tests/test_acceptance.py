"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Seeds are fixed once per criterion.  Statistical criteria use the stated
replica counts and z-thresholds; runtime limits are part of each criterion.
"""
import math
import time

import numpy as np
import pytest

from fvlab import analytics as an
from fvlab.cli import main
from fvlab.moran import InitialDistribution, RunConfig
from fvlab.scaling import (
    ExperimentConfig,
    function_label,
    mean_se,
    run_martingale_checks,
    run_occupation_scaling,
    simulate_ensemble,
)
from fvlab.schedule import SamplingSchedule
from fvlab.stable_motion import RngStream, StableParams, empirical_cf, sample_unit_increments
from fvlab.testfunctions import cosine_window, gaussian_bump, indicator_ball

pytestmark = pytest.mark.acceptance


def _gauss(t, r, d):
    return (4 * math.pi * t) ** (-d / 2) * np.exp(-(r**2) / (4 * t))


def _cauchy(t, r, d):
    c = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
    return c * t / (t * t + r**2) ** ((d + 1) / 2)


def test_criterion_01_kernel_oracles(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(5001)
    worst = 0.0
    for d in (1, 2, 3):
        for alpha, exact in ((2.0, _gauss), (1.0, _cauchy)):
            p = StableParams(alpha, d)
            t = rng.uniform(0.2, 5.0, 100)
            v = rng.normal(size=(100, d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            # radii in units of the kernel's own scale t^(1/alpha)
            r = rng.uniform(0.0, 4.0, 100) * t ** (1 / alpha)
            x = v * r[:, None]
            got = np.array([an.transition_density(p, ti, xi[None, :])[0] for ti, xi in zip(t, x)])
            worst = max(worst, float(np.max(np.abs(got / exact(t, r, d) - 1))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 10
    acceptance(1, "kernel oracles", ok, f"max relative error {worst:.2e} (<= 1e-6), {elapsed:.1f}s (< 10s)")
    assert ok


def test_criterion_02_constant_oracles(acceptance):
    start = time.perf_counter()
    p = StableParams(2.0, 1)
    errs = [
        abs(an.theta_const(p, (0,)) - (4 * math.pi) ** -0.5),
        abs(an.theta_const(p, (2,)) - 1 / (4 * math.sqrt(math.pi))),
        abs(an.kappa_d(p) - math.pi**-0.5),
    ]
    odd = [an.theta_const(StableParams(a, d), k) for a in (0.8, 1.0, 1.5, 2.0)
           for d, k in ((1, (1,)), (1, (3,)), (2, (1, 0)), (2, (2, 1)), (3, (0, 0, 5)))]
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-6 and all(v == 0.0 for v in odd) and elapsed < 5
    acceptance(2, "constant oracles", ok, f"max error {max(errs):.1e}, {len(odd)} odd-k values exactly 0, {elapsed:.2f}s")
    assert ok


def test_criterion_03_sampler_calibration(acceptance):
    start = time.perf_counter()
    M = 10**6
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5, 2.0):
        for d in (1, 2):
            x = sample_unit_increments(StableParams(alpha, d), RngStream(5003, d), M)
            for norm in (0.25, 0.5, 1.0, 1.5, 2.0):
                th = np.full(d, norm / math.sqrt(d))
                cf, _ = empirical_cf(x, th)
                worst = max(worst, abs(cf - math.exp(-(norm**alpha))) * math.sqrt(M))
    elapsed = time.perf_counter() - start
    ok = worst <= 4 and elapsed < 60
    acceptance(3, "sampler calibration", ok, f"max |ecf - cf| = {worst:.2f}/sqrt(M) (<= 4/sqrt(M)), {elapsed:.1f}s")
    assert ok


def test_criterion_04_semigroup_expansion(acceptance):
    start = time.perf_counter()
    f = gaussian_bump(1, 1.0)
    times = (4.0, 16.0, 64.0, 256.0)
    details, ok = [], True
    for alpha in (1.0, 2.0):
        for N in (0, 2):
            v = [an.expansion_error(StableParams(alpha, 1), t, f, N) for t in times]
            dec = v[1] > v[2] > v[3]
            ok &= dec
            details.append(f"a={alpha:g},N={N}: " + " ".join(f"{e:.3g}" for e in v))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    acceptance(4, "semigroup expansion", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_criterion_05_quadratic_variation(acceptance):
    start = time.perf_counter()
    f = gaussian_bump(1, 1.0)
    rc = RunConfig(StableParams(2.0, 1), SamplingSchedule.constant(1.0), N=500, step=0.005, horizon=2.0,
                   initial=InitialDistribution("gaussian", (0.0,)), functions=(f,), seed=5005, record_jumps=True)
    ens = simulate_ensemble(ExperimentConfig(rc, replicas=64, times=(2.0,)))
    d = ens.qv[:, -1, 0] - ens.qv_compensator[:, -1, 0]
    m, s = mean_se(d)
    elapsed = time.perf_counter() - start
    z = abs(m) / s
    ok = z <= 5 and elapsed < 120
    acceptance(5, "QV matching", ok, f"mean [X(f)]_T - int(X(f^2)-X(f)^2)/phi = {m:.2e} +- {s:.1e} "
               f"(z={z:.2f} <= 5), mean QV {ens.qv[:, -1, 0].mean():.4f}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_mean_evolution(acceptance):
    start = time.perf_counter()
    p = StableParams(1.5, 1)
    mu = InitialDistribution("gaussian", (0.0,), scale=1.0)
    fs = (gaussian_bump(1, 1.0), indicator_ball(1, 1.0), cosine_window(1, 1.5))
    ts = (0.5, 1.0, 2.0)
    rc = RunConfig(p, SamplingSchedule.constant(1.0), N=200, step=0.05, horizon=2.0, initial=mu, functions=fs,
                   seed=5006)
    ens = simulate_ensemble(ExperimentConfig(rc, replicas=200, times=ts))
    worst, ok = 0.0, True
    for a, f in enumerate(fs):
        m, s = mean_se(ens.X[:, :, a])
        for b, t in enumerate(ts):
            target = mu.expect(lambda x: an.semigroup_apply(p, t, f, x), 1, nodes=40)
            z = abs(m[b] - target) / s[b]
            worst = max(worst, z)
            ok &= z <= 4
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    acceptance(6, "mean evolution", ok, f"max |mean X_t(f) - mu(T_t f)| / stderr = {worst:.2f} (<= 4) over "
               f"{len(fs)} functions x {len(ts)} times, R=200, {elapsed:.1f}s")
    assert ok


def test_criterion_07_martingale_corrector(acceptance):
    start = time.perf_counter()
    f = gaussian_bump(1, 1.0)
    rc = RunConfig(StableParams(2.0, 1), SamplingSchedule.exponential(1.0), N=1000, step=0.05, horizon=4.0,
                   functions=(f,), seed=5007)
    exp = ExperimentConfig(rc, replicas=64, times=(1.0, 2.0, 3.0, 4.0), experiment_id="martingale")
    rep = run_martingale_checks(exp)
    lab = function_label(f)
    null = rep.rows_for("M", lab)
    ortho = rep.rows_for("dM*dM", lab)
    elapsed = time.perf_counter() - start
    ok = all(r.z <= 4 for r in null) and all(r.z <= 4 for r in ortho) and elapsed < 300
    acceptance(7, "martingale corrector", ok,
               "M_t z-scores " + " ".join(f"{r.z:.2f}" for r in null)
               + "; lag-1 increment covariance z-scores " + " ".join(f"{r.z:.2f}" for r in ortho)
               + f" (<= 4), {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def large_time_ensemble():
    """Shared ensemble for the mass and occupation scaling criteria.

    The wide bump (width 2) is the mass-scaling test function: its finite-t
    bias shrinks visibly between evaluation times.  The narrow bump (width
    0.5) is the occupation-scaling one: its bias at t = 8 is about 8%.
    """
    start = time.perf_counter()
    fs = (gaussian_bump(1, 2.0), gaussian_bump(1, 0.5))
    rc = RunConfig(StableParams(2.0, 1), SamplingSchedule.exponential(1.0), N=2000, step=0.05, horizon=8.0,
                   functions=fs, seed=5008)
    ens = simulate_ensemble(ExperimentConfig(rc, replicas=64, times=(2.0, 4.0, 8.0)))
    return ens, fs, time.perf_counter() - start


def _approach(means, target):
    dist = np.abs(np.asarray(means) - target)
    return bool(np.all(np.diff(dist) < 0))


def test_criterion_08_mass_scaling(acceptance, large_time_ensemble):
    ens, fs, elapsed = large_time_ensemble
    p = StableParams(2.0, 1)
    f = fs[0]
    target = an.theta_const(p, (0,)) * f.moment((0,))
    m, s = mean_se(ens.X[:, :, 0] * np.sqrt(ens.times))
    rel = abs(m[-1] - target) / target
    ok = _approach(m, target) and rel <= 0.15 and elapsed < 900
    acceptance(8, "mass scaling", ok, "t^(1/2) X_t(f) at t=2,4,8: " + " ".join(f"{a:.4f}+-{b:.4f}" for a, b in zip(m, s))
               + f"; target {target:.4f}; final off by {100 * rel:.1f}% (<= 15%), monotone approach; {elapsed:.0f}s")
    assert ok


def test_criterion_09_occupation_scaling(acceptance, large_time_ensemble):
    ens, fs, elapsed = large_time_ensemble
    p = StableParams(2.0, 1)
    f = fs[1]
    target = an.kappa_d(p) * f.moment((0,))
    root = np.sqrt(ens.times)
    my, sy = mean_se(ens.Y[:, :, 1] / root)
    mz, sz = mean_se(ens.Z[:, :, 1] / root)
    md, sd = mean_se((ens.Z[:, :, 1] - ens.Y[:, :, 1]) / root)
    rel_y = abs(my[-1] - target) / target
    rel_z = abs(mz[-1] - target) / target
    agree = np.abs(md) / sd
    ok = (_approach(my, target) and _approach(mz, target) and rel_y <= 0.15 and rel_z <= 0.15
          and np.all(agree <= 2) and elapsed < 900)
    acceptance(9, "occupation scaling", ok,
               "Y/sqrt(t) " + " ".join(f"{a:.4f}" for a in my) + ", Z/sqrt(t) " + " ".join(f"{a:.4f}" for a in mz)
               + f"; target {target:.4f}; final off by {100 * rel_y:.1f}% / {100 * rel_z:.1f}% (<= 15%); "
               + "|Z-Y| joint z " + " ".join(f"{a:.2f}" for a in agree) + " (<= 2)")
    assert ok


def test_criterion_10_high_dimension(acceptance):
    start = time.perf_counter()
    f = gaussian_bump(2, 1.0)
    rc = RunConfig(StableParams(1.0, 2), SamplingSchedule.exponential(1.0), N=1000, step=0.05, horizon=8.0,
                   functions=(f,), seed=5010)
    exp = ExperimentConfig(rc, replicas=64, lattice_q=2.0, lattice_n=(0, 1, 2, 3), experiment_id="high-dim")
    ens = simulate_ensemble(exp)
    rep = run_occupation_scaling(exp, ensemble=ens)
    inc, _ = mean_se(np.abs(np.diff(ens.Y[:, :, 0], axis=1)))
    gap = float(np.max(np.abs(ens.Z[:, -1, 0] - (ens.M[:, -1, 0] + ens.Y[:, -1, 0]))))
    elapsed = time.perf_counter() - start
    ok = bool(np.all(np.diff(inc) < 0)) and gap <= 1e-12 and rep.passed and elapsed < 600
    acceptance(10, "high-dimension convergence", ok,
               f"t_n = {ens.times.tolist()}, mean |Y_(n+1) - Y_n| " + " ".join(f"{v:.4f}" for v in inc)
               + f" decreasing; max |Z - (M + Y)| = {gap:.1e}; {elapsed:.0f}s")
    assert ok


def test_criterion_11_integrability_checker(acceptance):
    start = time.perf_counter()
    d, alpha = 1, 2.0
    p_mass = d / alpha  # order-0 exponent (2N + d) / alpha
    v1 = an.check_phi_integrability(SamplingSchedule.exponential(1.0), p_mass, 0.1).verdict
    v2 = an.check_phi_integrability(SamplingSchedule.polynomial(2.0), p_mass, 0.1).verdict
    v3 = an.check_phi_integrability(SamplingSchedule.constant(1.0), -1.0, 0.0).verdict
    elapsed = time.perf_counter() - start
    ok = (v1, v2, v3) == ("pass", "fail", "fail") and elapsed < 1
    acceptance(11, "integrability checker", ok, f"e^t: {v1}, 1+t^2: {v2}, phi=1 (occupation): {v3}; {elapsed:.3f}s")
    assert ok


def test_criterion_12_determinism(acceptance, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[system]\nparticles = 60\nhorizon = 2\nstep = 0.1\n[experiment]\nreplicas = 6\n"
                   "functions = gaussian-bump:width=1; odd-bump:width=1\n")
    files = {}
    for k in range(2):
        for cmd in ("simulate", "scale-mass", "scale-occupation", "check-martingale"):
            out = tmp_path / f"{cmd}-{k}"
            main([cmd, "--config", str(cfg), "--seed", "5012", "--out", str(out), "--allow-fail"])
            for path in sorted(out.rglob("*")):
                if path.is_file():
                    files.setdefault((cmd, str(path.relative_to(out))), []).append(path.read_bytes())
    same = [v[0] == v[1] for v in files.values() if len(v) == 2]
    ok = len(same) > 0 and all(same) and all(len(v) == 2 for v in files.values())
    acceptance(12, "determinism", ok, f"{sum(same)}/{len(files)} output files byte-identical across reruns")
    assert ok
