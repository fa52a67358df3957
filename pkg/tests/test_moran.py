import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fvlab.analytics import semigroup_apply
from fvlab.genealogy import GenealogyArena, ancestral_path
from fvlab.moran import (
    EnvelopeError,
    EventLog,
    InitialDistribution,
    ParticleState,
    RunConfig,
    advance_motion,
    empirical_integral,
    mean_event_count,
    next_resampling_time,
    resample,
    run,
    run_reference,
    write_snapshot_csv,
)
from fvlab.schedule import SamplingSchedule
from fvlab.stable_motion import RngStream, StableParams
from fvlab.testfunctions import constant, cosine_window, gaussian_bump

P1 = StableParams(2.0, 1)


def small_config(**kw):
    base = dict(params=P1, schedule=SamplingSchedule.exponential(1.0), N=20, step=0.1, horizon=1.0,
                snapshot_times=(0.5, 1.0), functions=(gaussian_bump(1, 1.0), constant(1)), seed=1)
    base.update(kw)
    return RunConfig(**base)


def test_inter_event_times_are_unit_exponential():
    # phi = 1, N = 2, eta = 1: total rate 1 * 2 * 1 / 2 = 1
    rng = RngStream(10)
    gaps = []
    t = 0.0
    for _ in range(3000):
        s = next_resampling_time(SamplingSchedule.constant(1.0), 2, 1.0, t, rng)
        assert s > t
        gaps.append(s - t)
        t = s
    assert stats.kstest(gaps, "expon").pvalue > 1e-3


def test_event_count_exponential_schedule():
    # mean count on [0, T] for phi = e^t is eta N(N-1)(1 - e^-T) / 2
    sch = SamplingSchedule.exponential(1.0)
    N, T = 6, 2.0
    counts = []
    rng = RngStream(11)
    for _ in range(400):
        t, c = 0.0, 0
        while True:
            t = next_resampling_time(sch, N, 1.0, t, rng, window=0.5, horizon=T)
            if not math.isfinite(t):
                break
            c += 1
        counts.append(c)
    mean = N * (N - 1) * (1 - math.exp(-T)) / 2
    assert abs(mean_event_count(sch, N, 1.0, T) - mean) < 1e-12
    assert abs(np.mean(counts) - mean) < 4 * math.sqrt(mean / 400)


def test_envelope_failure_reported():
    class Bad(SamplingSchedule):
        def min_on(self, a, b):
            return 0.0

    with pytest.raises(EnvelopeError):
        next_resampling_time(Bad("constant"), 4, 1.0, 0.0, RngStream(0))
    with pytest.raises(ValueError):
        next_resampling_time(SamplingSchedule.constant(1.0), 1, 1.0, 0.0, RngStream(0))


def test_resample_moves_target_onto_source_and_adopts():
    arena = GenealogyArena(1)
    pos = np.array([[0.0], [1.0], [2.0]])
    state = ParticleState(0.0, pos.copy(), arena.add_roots(pos), 1.0)
    arena.append_samples(state.lineage, 0.5, state.positions)
    state.time = 0.5
    state, (t, j, i) = resample(state, arena, RngStream(3))
    assert state.N == 3 and i != j
    assert np.array_equal(state.positions[i], state.positions[j])
    assert arena.parent[state.lineage[i]] == arena.parent[state.lineage[j]]
    pi = ancestral_path(arena, state.lineage[i], t)
    pj = ancestral_path(arena, state.lineage[j], t)
    assert np.array_equal(pi.times, pj.times) and np.array_equal(pi.positions, pj.positions)


def test_advance_motion_records_samples():
    arena = GenealogyArena(2)
    pos = np.zeros((4, 2))
    state = ParticleState(0.0, pos, arena.add_roots(pos), 1.0)
    advance_motion(state, 0.25, StableParams(1.0, 2), RngStream(0), arena)
    assert state.time == 0.25
    for k in range(4):
        p = ancestral_path(arena, state.lineage[k], 0.25)
        assert np.array_equal(p.at(0.25), state.positions[k])
    with pytest.raises(ValueError):
        advance_motion(state, 0.0, P1, RngStream(0), arena)


def test_state_validation():
    with pytest.raises(ValueError):
        ParticleState(0.0, np.zeros((1, 1)), np.zeros(1, dtype=np.int64))
    with pytest.raises(ValueError):
        ParticleState(0.0, np.zeros((2, 1)), np.zeros(2, dtype=np.int64), eta=0.0)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_empirical_integral_is_linear(xs, w1, w2):
    x = np.array(xs)[:, None]
    state = ParticleState(0.0, x, np.arange(len(xs)))
    f, g = gaussian_bump(1, w1), cosine_window(1, w2)
    both = lambda y: f(y) + g(y)  # noqa: E731
    assert math.isclose(empirical_integral(state, both),
                        empirical_integral(state, f) + empirical_integral(state, g), rel_tol=1e-12, abs_tol=1e-15)
    assert empirical_integral(state, constant(1)) == 1.0


def test_empirical_integral_two_points():
    f = gaussian_bump(1, 1.0)
    state = ParticleState(0.0, np.array([[0.3], [-1.0]]), np.arange(2))
    assert empirical_integral(state, f) == (f(np.array([0.3]))[0] + f(np.array([-1.0]))[0]) / 2


@pytest.mark.parametrize("kind", ["point", "ball", "gaussian", "empirical"])
def test_initial_distribution_expectations(kind):
    mu = InitialDistribution(kind, (0.5, -0.5), radius=1.5, scale=0.7, points=((0.0, 0.0), (1.0, 2.0)))
    x = mu.sample(200_000, 2, RngStream(4))
    fn = lambda y: np.exp(-np.sum(y**2, axis=1))  # noqa: E731
    mc = fn(x)
    assert abs(mu.expect(fn, 2, nodes=40) - mc.mean()) < 5 * mc.std() / math.sqrt(len(mc)) + 1e-12
    assert mu.moment_order == math.inf


def test_initial_distribution_validation():
    with pytest.raises(ValueError):
        InitialDistribution("uniform")
    with pytest.raises(ValueError):
        InitialDistribution("empirical")


def test_run_config_validation_names_fields():
    with pytest.raises(ValueError, match="N"):
        small_config(N=1)
    with pytest.raises(ValueError, match="snapshot_times"):
        small_config(snapshot_times=(2.0,))
    with pytest.raises(ValueError, match="step"):
        small_config(step=0.0)


def test_grid_contains_snapshot_times():
    cfg = small_config(step=0.3, snapshot_times=(0.5, 0.61, 1.0))
    g = cfg.grid()
    assert g[0] == 0 and g[-1] == 1.0
    for t in cfg.snapshot_times:
        assert t in g
    assert np.all(np.diff(g) > 0) and np.all(np.diff(g) <= 0.3 + 1e-12)


def test_run_is_deterministic():
    a, b = run(small_config()), run(small_config())
    for s, u in zip(a.snapshots, b.snapshots):
        assert np.array_equal(s.positions, u.positions) and np.array_equal(s.lineage, u.lineage)
    assert np.array_equal(a.events.times, b.events.times)
    assert np.array_equal(a.Z, b.Z) and np.array_equal(a.Y, b.Y)
    c = run(small_config(seed=2))
    assert not np.array_equal(a.state.positions, c.state.positions)


SCHEDULES = st.sampled_from([SamplingSchedule.constant(1.0), SamplingSchedule.exponential(1.0),
                              SamplingSchedule.polynomial(2.0)])


@settings(max_examples=15)
@given(st.sampled_from([0.8, 1.0, 1.5, 2.0]), st.integers(1, 2), st.integers(2, 25), SCHEDULES,
       st.integers(0, 2**32))
def test_run_invariants(alpha, d, N, schedule, seed):
    fs = (gaussian_bump(d, 1.0), constant(d))
    res = run(RunConfig(StableParams(alpha, d), schedule, N=N, step=0.1, horizon=1.5,
                        snapshot_times=(0.0, 0.7, 1.5), functions=fs, seed=seed))
    assert np.all(np.diff(res.events.times) > 0)
    # no event sits on a motion-grid time
    assert not np.any(np.isin(res.events.times, res.grid))
    assert np.all(res.trace[:, 1] == 1.0)
    assert np.array_equal(res.Y[:, 1], [0.0, 0.7, 1.5]) and np.array_equal(res.Z[:, 1], [0.0, 0.7, 1.5])
    assert all(s.N == N for s in res.snapshots)
    a = res.arena
    a.validate()
    kids = np.flatnonzero(a.parent[: a.n_nodes] >= 0)
    assert np.all(a.birth[a.parent[kids]] <= a.birth[kids])
    for k, v in enumerate(res.state.lineage):
        chain = a.chain(int(v))
        assert a.parent[chain[0]] == -1 and a.birth[chain[0]] == 0.0
        # path consistency: each living path ends at the particle's position
        assert np.array_equal(ancestral_path(a, int(v), 1.5).at(1.5), res.state.positions[k])


@settings(max_examples=25)
@given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 2**32))
def test_adoption_consistency(N, steps, seed):
    rng = RngStream(seed)
    arena = GenealogyArena(1)
    pos = rng.generator.normal(size=(N, 1))
    state = ParticleState(0.0, pos, arena.add_roots(pos))
    for _ in range(steps):
        advance_motion(state, 0.1, P1, rng, arena)
        state, (t, j, i) = resample(state, arena, rng)
        pi = ancestral_path(arena, int(state.lineage[i]), t)
        pj = ancestral_path(arena, int(state.lineage[j]), t)
        assert np.array_equal(pi.times, pj.times) and np.array_equal(pi.positions, pj.positions)
        assert np.array_equal(state.positions[i], state.positions[j])


@settings(max_examples=10)
@given(st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 2**64 - 1), st.integers(0, 50))
def test_run_reproduces_bitwise(alpha, seed, stream):
    cfg = small_config(params=StableParams(alpha, 1), seed=seed, stream_id=stream)
    a, b = run(cfg), run(cfg)
    assert np.array_equal(a.state.positions, b.state.positions)
    assert np.array_equal(a.events.times, b.events.times) and np.array_equal(a.Z, b.Z)


def test_event_count_within_four_sd():
    cfg = small_config(N=40, horizon=3.0, track_genealogy=False)
    counts = np.array([len(run(cfg.with_(stream_id=r)).events) for r in range(40)])
    lam = mean_event_count(cfg.schedule, 40, 1.0, 3.0)
    assert abs(counts.mean() - lam) < 4 * math.sqrt(lam / len(counts))


def test_mean_evolution_matches_semigroup():
    f = gaussian_bump(1, 1.0)
    cfg = RunConfig(StableParams(1.2, 1), SamplingSchedule.constant(1.0), N=50, step=0.1, horizon=1.0,
                    snapshot_times=(1.0,), functions=(f,), seed=5, track_genealogy=False, record_events=False)
    x = np.array([run(cfg.with_(stream_id=r)).trace[-1, 0] for r in range(200)])
    target = semigroup_apply(cfg.params, 1.0, f, 0.0)
    assert abs(x.mean() - target) < 4 * x.std(ddof=1) / math.sqrt(len(x))


def test_reference_driver_agrees_in_law():
    # both drivers realize the same Poisson event rate and motion law
    cfg = small_config(N=10, horizon=1.0, snapshot_times=(1.0,), schedule=SamplingSchedule.constant(1.0))
    ref = [len(run_reference(cfg.with_(stream_id=r))[1]) for r in range(60)]
    fast = [len(run(cfg.with_(stream_id=r)).events) for r in range(60)]
    lam = mean_event_count(cfg.schedule, 10, 1.0, 1.0)
    assert abs(np.mean(ref) - lam) < 4 * math.sqrt(lam / 60)
    assert abs(np.mean(fast) - lam) < 4 * math.sqrt(lam / 60)
    snaps, ev, arena, state = run_reference(cfg)
    arena.validate()
    assert np.all(np.diff(ev.times) > 0)
    for k, v in enumerate(state.lineage):
        assert np.array_equal(ancestral_path(arena, v, 1.0).at(1.0), state.positions[k])


def test_quadratic_variation_two_particles():
    f = gaussian_bump(1, 1.0)
    cfg = RunConfig(P1, SamplingSchedule.constant(1.0), N=2, step=0.01, horizon=2.0, snapshot_times=(2.0,),
                    functions=(f,), initial=InitialDistribution("gaussian", (0.0,)), seed=6,
                    track_genealogy=False, record_events=False, record_jumps=True)
    d = np.array([(lambda r: r.qv[-1, 0] - r.qv_compensator[-1, 0])(run(cfg.with_(stream_id=s))) for s in range(300)])
    assert abs(d.mean()) < 4 * d.std(ddof=1) / math.sqrt(len(d))


def test_csv_exports(tmp_path):
    res = run(small_config())
    write_snapshot_csv(tmp_path / "s.csv", res.snapshots)
    res.events.write_csv(tmp_path / "e.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "time,particle,x_1,lineage_id"
    assert len(rows) == 1 + 20 * len(res.snapshots)
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 1 + len(res.events)
    assert len(EventLog()) == 0
