"""Command-line entry point ``fvlab``.

Exit codes: 0 success, 1 usage or config error, 2 acceptance failure,
3 internal error.

Config files are INI-style::

    [motion]      alpha, dim
    [schedule]    kind (constant|exponential|polynomial|tabulated), c, beta, n, table
    [system]      particles, eta, step, horizon, initial, center, radius, scale, points
    [experiment]  replicas, times, lattice_q, lattice_n, functions, order, eps0,
                  z_threshold, rel_tolerance, n_doubling, id, orders
    [output]      dir

``functions`` is a ``;``-separated list of catalog specs such as
``gaussian-bump:width=0.5``; ``table`` and ``points`` are ``;``-separated
``t:value`` pairs and points (coordinates separated by ``,``).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import traceback

import numpy as np

from . import analytics, scaling
from .moran import InitialDistribution, RunConfig, run, write_snapshot_csv
from .schedule import SamplingSchedule
from .stable_motion import RngStream, StableParams, empirical_cf, sample_unit_increments
from .testfunctions import from_spec

log = logging.getLogger("fvlab")

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_INTERNAL = 0, 1, 2, 3

KNOWN_KEYS = {
    "motion": {"alpha", "dim"},
    "schedule": {"kind", "c", "beta", "n", "table"},
    "system": {"particles", "eta", "step", "horizon", "initial", "center", "radius", "scale", "points"},
    "experiment": {"replicas", "times", "lattice_q", "lattice_n", "functions", "order", "eps0", "z_threshold",
                   "rel_tolerance", "n_doubling", "id", "orders"},
    "output": {"dir"},
}


class UsageError(Exception):
    """Bad command line or configuration (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config --------------------------------------------------------------------


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is None:
        return cp
    if not os.path.exists(path):
        raise UsageError(f"config: file {path!r} not found")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise UsageError(f"config: cannot parse {path!r}: {exc}") from exc
    for sec in cp.sections():
        if sec not in KNOWN_KEYS:
            raise UsageError(f"config: unknown section [{sec}]")
        extra = set(cp[sec]) - KNOWN_KEYS[sec]
        if extra:
            raise UsageError(f"config: unknown key(s) {sorted(extra)} in [{sec}]")
    return cp


def _get(cp, sec, key, conv, default):
    if not cp.has_option(sec, key):
        return default
    raw = cp.get(sec, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise UsageError(f"config: [{sec}] {key} = {raw!r} is invalid ({exc})") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def build_params(cp) -> StableParams:
    try:
        return StableParams(_get(cp, "motion", "alpha", float, 2.0), _get(cp, "motion", "dim", int, 1))
    except ValueError as exc:
        raise UsageError(f"config: [motion] {exc}") from exc


def build_schedule(cp) -> SamplingSchedule:
    kind = _get(cp, "schedule", "kind", str, "exponential").strip()
    try:
        if kind == "constant":
            return SamplingSchedule.constant(_get(cp, "schedule", "c", float, 1.0))
        if kind == "exponential":
            return SamplingSchedule.exponential(_get(cp, "schedule", "beta", float, 1.0))
        if kind == "polynomial":
            return SamplingSchedule.polynomial(_get(cp, "schedule", "n", float, 2.0))
        if kind == "tabulated":
            raw = _get(cp, "schedule", "table", str, "")
            pairs = [tuple(float(v) for v in item.split(":")) for item in raw.split(";") if item.strip()]
            return SamplingSchedule.tabulated(pairs)
    except ValueError as exc:
        raise UsageError(f"config: [schedule] {exc}") from exc
    raise UsageError(f"config: [schedule] kind = {kind!r} is not one of constant, exponential, polynomial, tabulated")


def build_initial(cp, dim: int) -> InitialDistribution:
    kind = _get(cp, "system", "initial", str, "point").strip()
    center = _get(cp, "system", "center", _floats, (0.0,) * dim)
    try:
        if kind == "empirical":
            raw = _get(cp, "system", "points", str, "")
            pts = tuple(_floats(p) for p in raw.split(";") if p.strip())
            return InitialDistribution("empirical", center, points=pts)
        return InitialDistribution(kind, center, radius=_get(cp, "system", "radius", float, 1.0),
                                   scale=_get(cp, "system", "scale", float, 1.0))
    except ValueError as exc:
        raise UsageError(f"config: [system] {exc}") from exc


def build_functions(cp, dim: int, default: str = "gaussian-bump:width=1") -> tuple:
    raw = _get(cp, "experiment", "functions", str, default)
    try:
        return tuple(from_spec(s, dim) for s in raw.split(";") if s.strip())
    except (ValueError, TypeError) as exc:
        raise UsageError(f"config: [experiment] functions: {exc}") from exc


def build_run_config(cp, seed: int, functions=None) -> RunConfig:
    params = build_params(cp)
    funcs = functions if functions is not None else build_functions(cp, params.dim)
    try:
        return RunConfig(
            params=params,
            schedule=build_schedule(cp),
            N=_get(cp, "system", "particles", int, 2000),
            eta=_get(cp, "system", "eta", float, 1.0),
            initial=build_initial(cp, params.dim),
            step=_get(cp, "system", "step", float, 0.05),
            horizon=_get(cp, "system", "horizon", float, 8.0),
            seed=seed,
            functions=funcs,
        )
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from exc


def build_experiment(cp, args, default_id: str, **overrides) -> scaling.ExperimentConfig:
    seed = args.seed if args.seed is not None else 0
    rc = build_run_config(cp, seed)
    replicas = args.replicas if args.replicas is not None else _get(cp, "experiment", "replicas", int, 64)
    times = _get(cp, "experiment", "times", _floats, ())
    q = _get(cp, "experiment", "lattice_q", float, None)
    n = _get(cp, "experiment", "lattice_n", lambda s: tuple(int(v) for v in _floats(s)), (0, 1, 2, 3))
    if not times and q is None:
        times = tuple(t for t in (rc.horizon / 4, rc.horizon / 2, rc.horizon))
    kw = dict(
        run=rc,
        replicas=replicas,
        times=times,
        lattice_q=q,
        lattice_n=n if q is not None else (),
        order=_get(cp, "experiment", "order", int, 0),
        eps0=_get(cp, "experiment", "eps0", float, 0.1),
        z_threshold=_get(cp, "experiment", "z_threshold", float, 4.0),
        rel_tolerance=_get(cp, "experiment", "rel_tolerance", float, 0.15),
        n_doubling=_get(cp, "experiment", "n_doubling", _bool, False),
        jobs=args.jobs,
        experiment_id=_get(cp, "experiment", "id", str, default_id),
        label=args.label or "",
    )
    kw.update(overrides)
    try:
        return scaling.ExperimentConfig(**kw)
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from exc


def output_dir(args, cp) -> str:
    out = args.out or _get(cp, "output", "dir", str, None) or os.environ.get("FVLAB_OUT") or "fvlab-out"
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"output: cannot create {out!r}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise UsageError(f"output: directory {out!r} is not writable")
    return out


# -- commands ------------------------------------------------------------------


def cmd_sample(args) -> int:
    try:
        params = StableParams(args.alpha, args.dim)
    except ValueError as exc:
        raise UsageError(f"sample: {exc}") from exc
    if args.count < 1:
        raise UsageError("sample: --count must be positive")
    rng = RngStream(args.seed if args.seed is not None else 0)
    x = sample_unit_increments(params, rng, args.count)
    out = output_dir(args, configparser.ConfigParser())
    path = os.path.join(out, "samples.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{c + 1}" for c in range(params.dim)])
        for row in x:
            w.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.count} draws to {path}")
    print("theta  empirical_cf  exp(-|theta|^alpha)  stderr")
    for th in (0.5, 1.0, 2.0):
        vec = np.zeros(params.dim)
        vec[0] = th
        cf, se = empirical_cf(x, vec)
        print(f"{th:<6g} {cf.real:.6f}      {np.exp(-th ** params.alpha):.6f}             {se:.2g}")
    return EXIT_OK


def cmd_constants(args) -> int:
    try:
        params = StableParams(args.alpha, args.dim)
    except ValueError as exc:
        raise UsageError(f"constants: {exc}") from exc
    if args.max_order < 0:
        raise UsageError("constants: --max-order must be non-negative")
    rows = analytics.constants_table(params, args.max_order, tuple(args.times))
    out = output_dir(args, configparser.ConfigParser())
    path = os.path.join(out, "constants.csv")
    analytics.write_constants_csv(path, rows)
    for r in rows:
        print(",".join(str(v) for v in r))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cp = load_config(args.config)
    rc = build_run_config(cp, args.seed if args.seed is not None else 0)
    times = _get(cp, "experiment", "times", _floats, (rc.horizon,))
    try:
        rc = rc.with_(snapshot_times=tuple(sorted({0.0, *times})))
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from exc
    out = output_dir(args, cp)
    res = run(rc)
    write_snapshot_csv(os.path.join(out, "snapshots.csv"), res.snapshots)
    res.events.write_csv(os.path.join(out, "events.csv"))
    res.arena.write_nodes_csv(os.path.join(out, "genealogy.csv"))
    summary = {
        "seed": rc.seed,
        "N": rc.N,
        "horizon": rc.horizon,
        "events": len(res.events),
        "expected_events": rc.eta * rc.N * (rc.N - 1) / 2 * rc.schedule.inverse_integral(0.0, rc.horizon),
        "snapshot_times": res.snapshot_times.tolist(),
        "functions": [scaling.function_label(f) for f in rc.functions],
        "X": res.trace[[int(np.flatnonzero(res.grid == t)[0]) for t in res.snapshot_times]].tolist(),
        "Y": res.Y.tolist(),
        "Z": res.Z.tolist(),
        "arena_nodes": res.arena.n_nodes,
    }
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(scaling._clean(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{len(res.events)} resampling events; outputs in {out}")
    return EXIT_OK


def _finish(reports, out, args) -> int:
    doc = scaling.summarize(reports, out)
    for rep in reports:
        for note in rep.notes:
            print(f"warning: {note}", file=sys.stderr)
        print(f"{rep.experiment_id} [{rep.kind}, {rep.status}]: {'pass' if rep.passed else 'FAIL'}")
        for fail in rep.failures:
            print(f"  failed: {fail}")
    print(f"report written to {os.path.join(out, 'report.json')}")
    if not doc["passed"] and not args.allow_fail:
        return EXIT_FAIL
    return EXIT_OK


def cmd_scale_mass(args) -> int:
    cp = load_config(args.config)
    exp = build_experiment(cp, args, "mass-scaling")
    out = output_dir(args, cp)
    return _finish([scaling.run_mass_scaling(exp)], out, args)


def cmd_scale_occupation(args) -> int:
    cp = load_config(args.config)
    exp = build_experiment(cp, args, "occupation-scaling")
    out = output_dir(args, cp)
    try:
        rep = scaling.run_occupation_scaling(exp)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return _finish([rep], out, args)


def cmd_check_martingale(args) -> int:
    cp = load_config(args.config)
    exp = build_experiment(cp, args, "martingale-checks")
    out = output_dir(args, cp)
    return _finish([scaling.run_martingale_checks(exp)], out, args)


def cmd_expansion(args) -> int:
    cp = load_config(args.config)
    params = build_params(cp)
    funcs = build_functions(cp, params.dim)
    orders = _get(cp, "experiment", "orders", lambda s: tuple(int(v) for v in _floats(s)), (0, 2))
    times = _get(cp, "experiment", "times", _floats, (4.0, 16.0, 64.0, 256.0))
    out = output_dir(args, cp)
    rep = scaling.run_semigroup_expansion_study(params, funcs, orders, times,
                                                experiment_id=_get(cp, "experiment", "id", str, "expansion"))
    return _finish([rep], out, args)


# -- entry -----------------------------------------------------------------------


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=_seed, help="64-bit seed; determines every stochastic output")
    common.add_argument("--out", help="output directory (default: $FVLAB_OUT or ./fvlab-out)")
    common.add_argument("--jobs", type=_positive, default=1, help="replicas run in parallel processes")
    common.add_argument("--replicas", type=_positive, help="override [experiment] replicas")
    common.add_argument("--label", help="free-text label stored in reports")
    common.add_argument("--allow-fail", action="store_true", help="exit 0 even when a z-test fails")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="fvlab", description="Stable Fleming-Viot particle experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", parents=[common], help="draw unit-time stable increments")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--count", type=int, default=1000)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("constants", parents=[common], help="tabulate theta^k, kappa_d and gamma_d")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--max-order", type=int, default=2)
    s.add_argument("--times", type=float, nargs="*", default=[1.0, 10.0, 100.0])
    s.set_defaults(func=cmd_constants)

    for name, fn, hlp in (
        ("simulate", cmd_simulate, "run one particle system and export snapshots, events, genealogy"),
        ("scale-mass", cmd_scale_mass, "mass-scaling ensemble experiment"),
        ("scale-occupation", cmd_scale_occupation, "occupation/inhabitation scaling experiment"),
        ("check-martingale", cmd_check_martingale, "martingale and quadratic-variation checks"),
        ("expansion", cmd_expansion, "deterministic semigroup expansion study"),
    ):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
