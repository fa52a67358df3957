"""Deterministic numerics for the isotropic stable kernel and its limit constants.

Everything is computed on the Fourier side.  Isotropic integrands reduce to
one-dimensional Hankel-type integrals

    (2 pi)^-d int_{R^d} exp(i x.theta) g(|theta|) dtheta
        = (2 pi)^(-d/2) int_0^inf g(rho) rho^(d-1) K_nu(|x| rho) drho,

with ``K_nu(z) = z^-nu J_nu(z)`` and ``nu = d/2 - 1``; general integrands use
polar quadrature (radial panels times sphere directions).
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import special

from .quadrature import (
    DEFAULT_SPEC,
    QuadratureSpec,
    angular_moment,
    bessel_k,
    gl_panels,
    radial_edges,
    radial_nodes,
    sphere_area,
    sphere_nodes,
)
from .schedule import SamplingSchedule
from .stable_motion import StableParams
from .testfunctions import TestFunction, as_points, factorial_multi, multi_indices

# exp(-KERNEL_CUT) is far below double precision relative to any kernel value we use
KERNEL_CUT = 70.0


def _check_t(t: float):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")


def _kernel_extent(params: StableParams, t: float) -> float:
    return (KERNEL_CUT / t) ** (1.0 / params.alpha)


def _radial_transform(params: StableParams, weight, r, R: float, scale: float, m: int = 0, n: int = 16):
    """(2pi)^(-d/2) (-1)^m int_0^R weight(rho) rho^(d-1+2m) K_{nu+m}(r rho) drho for each r."""
    d = params.dim
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty(len(r))
    nu = d / 2 - 1 + m
    # panels are sized for the largest radius in each block
    order = np.argsort(r)
    for s in range(0, len(r), 256):
        idx = order[s : s + 256]
        rb = r[idx]
        rho, w = radial_nodes(scale, R, float(rb.max()), n)
        base = w * weight(rho) * rho ** (d - 1 + 2 * m)
        out[idx] = bessel_k(nu, np.outer(rb, rho)) @ base
    return (-1) ** m * (2 * np.pi) ** (-d / 2) * out


def _polar_fourier(dim: int, weight, x, R: float, scale: float, n: int = 16):
    """(2pi)^-d int_{|theta|<R} exp(i x.theta) weight(theta) dtheta for points x (n, d)."""
    x = as_points(x, dim)
    r_max = float(np.max(np.linalg.norm(x, axis=1))) if len(x) else 0.0
    rho, wr = radial_nodes(scale, R, r_max, n)
    m = 2 * int(np.ceil(R * r_max)) + 32 if dim > 1 else 2
    dirs, wd = sphere_nodes(dim, m)
    theta = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    wts = (wr[:, None] * rho[:, None] ** (dim - 1) * wd[None, :]).ravel()
    vals = wts * weight(theta)
    out = np.empty(len(x))
    for s in range(0, len(x), 128):
        out[s : s + 128] = np.real(np.exp(1j * x[s : s + 128] @ theta.T) @ vals)
    return out / (2 * np.pi) ** dim


def _scalar_or_array(x, dim, vals):
    x = np.asarray(x)
    single = x.ndim == 0 or (x.ndim == 1 and dim > 1)
    return float(vals[0]) if single else vals


# -- kernel ---------------------------------------------------------------------


def _tail_series(alpha: float, d: int, u, n_max: int = 400, rel: float = 1e-13):
    """p_1 at radii ``u`` from its inverse-power series in |x|.

    p_1(x) = sum_n (-1)^(n+1) / (2^d pi^(d/2+1) n!) Gamma((alpha n + d)/2)
    Gamma(alpha n/2 + 1) sin(pi alpha n/2) (|x|/2)^(-alpha n - d), convergent
    for alpha < 1 and asymptotic for 1 <= alpha < 2.  Returns the values and
    a mask of radii where truncation and cancellation stay below ``rel``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = np.arange(1, n_max + 1, dtype=float)
    sgn = (-1.0) ** (n + 1) * np.sin(np.pi * alpha * n / 2)
    logc = special.gammaln((alpha * n + d) / 2) + special.gammaln(alpha * n / 2 + 1) - special.gammaln(n + 1)
    logz = -np.log(u / 2)[:, None] * (alpha * n + d)[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        mag = np.exp(logc[None, :] + logz)
    terms = sgn[None, :] * mag
    # stop at the smallest term: beyond it an asymptotic series diverges
    stop = np.argmin(np.where(np.abs(sgn)[None, :] > 1e-12, mag, np.inf), axis=1)
    keep = np.arange(n_max)[None, :] <= stop[:, None]
    tot = np.sum(np.where(keep, terms, 0.0), axis=1)
    peak = np.max(np.where(keep, mag, 0.0), axis=1)
    last = mag[np.arange(len(u)), stop]
    ok = np.isfinite(tot) & (tot > 0) & (last <= rel * tot) & (peak <= 1e2 * tot)
    return tot / (2**d * np.pi ** (d / 2 + 1)), ok


def transition_density(params: StableParams, t: float, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """p_t(x) by radial Fourier (Hankel) quadrature.

    For alpha < 2 at radii where the inverse-power tail series is accurate,
    that series is used instead, since Fourier inversion there needs very
    many oscillation periods.
    """
    _check_t(t)
    pts = as_points(x, params.dim)
    r = np.linalg.norm(pts, axis=1)
    a = params.alpha
    vals = np.empty(len(r))
    quad = np.ones(len(r), dtype=bool)
    if a < 2:
        u = r * t ** (-1 / a)
        far = u > (0.0 if a < 1 else 2.0)
        if np.any(far):
            sv, ok = _tail_series(a, params.dim, u[far])
            idx = np.flatnonzero(far)[ok]
            vals[idx] = sv[ok] * t ** (-params.dim / a)
            quad[idx] = False
    if np.any(quad):
        vals[quad] = _radial_transform(
            params, lambda rho: np.exp(-t * rho**a), r[quad], _kernel_extent(params, t), t ** (-1 / a), n=spec.M
        )
    return _scalar_or_array(x, params.dim, np.maximum(vals, 0.0))


def _radial_derivative_terms(k):
    """Expand d^k g(|x|) as sum coeff * x^e * h_m(|x|), where h_m = ((1/r) d/dr)^m g."""
    d = len(k)
    terms = {((0,) * d, 0): 1.0}
    for i, ki in enumerate(k):
        for _ in range(ki):
            new = defaultdict(float)
            for (e, m), c in terms.items():
                if e[i]:
                    e2 = list(e)
                    e2[i] -= 1
                    new[(tuple(e2), m)] += c * e[i]
                e3 = list(e)
                e3[i] += 1
                new[(tuple(e3), m + 1)] += c
            terms = {key: v for key, v in new.items() if v != 0}
    return terms


def density_derivative(params: StableParams, t: float, x, k, spec: QuadratureSpec = DEFAULT_SPEC):
    """d^k p_t(x) for a multi-index ``k``."""
    _check_t(t)
    k = tuple(int(v) for v in k)
    if len(k) != params.dim or min(k) < 0:
        raise ValueError("k must be a non-negative multi-index of length dim")
    pts = as_points(x, params.dim)
    r = np.linalg.norm(pts, axis=1)
    a = params.alpha
    R = _kernel_extent(params, t)
    terms = _radial_derivative_terms(k)
    hm = {}
    for m in sorted({m for _, m in terms}):
        hm[m] = _radial_transform(params, lambda rho: np.exp(-t * rho**a), r, R, t ** (-1 / a), m=m, n=spec.M)
    vals = np.zeros(len(pts))
    for (e, m), c in terms.items():
        vals += c * np.prod(pts ** np.array(e), axis=1) * hm[m]
    return _scalar_or_array(x, params.dim, vals)


def theta_const(params: StableParams, k) -> float:
    """(2pi)^-d int exp(-|theta|^alpha) theta^k dtheta, in closed form."""
    k = tuple(int(v) for v in k)
    if len(k) != params.dim:
        raise ValueError("k must have length dim")
    if any(v % 2 for v in k):
        return 0.0
    d, a, order = params.dim, params.alpha, sum(k)
    radial = special.gamma((order + d) / a) / a
    return float(radial * angular_moment(k) / (2 * np.pi) ** d)


def kappa_d(params: StableParams) -> float:
    """Occupation-time limit constant; defined only for dim <= alpha."""
    d, a = params.dim, params.alpha
    if d > a:
        raise ValueError(f"kappa_d is undefined in high dimension (d={d} > alpha={a})")
    base = theta_const(params, (0,) * d)
    return base if d == a else a / (a - d) * base


def gamma_d(params: StableParams, t: float) -> float:
    """Occupation-time normalisation gamma_d(t)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    d, a = params.dim, params.alpha
    if d < a:
        return float(t ** (1 - d / a))
    if d == a:
        return float(math.log(max(t, 1.0)))
    return 1.0


def lattice_times(params: StableParams, q: float, n_values) -> np.ndarray:
    """Times with gamma_d(t_n) = q^n (low and critical dimension only)."""
    if not q > 1:
        raise ValueError("q must exceed 1")
    n = np.asarray(n_values, dtype=float)
    d, a = params.dim, params.alpha
    if d < a:
        return q ** (a / (a - d) * n)
    if d == a:
        return np.exp(q**n)
    raise ValueError("gamma_d is constant in high dimension; use a geometric lattice instead")


# -- semigroup ----------------------------------------------------------------


def _fhat_extent(f: TestFunction, spec: QuadratureSpec, default: float) -> float:
    if spec.R is not None:
        return spec.R
    if f.fourier_extent is not None:
        return f.fourier_extent
    return default


def _require_fourier(f: TestFunction):
    if f.fourier is None and f.radial_fourier is None and f.support_radius is None:
        raise ValueError(f"{f.name}: needs a Fourier transform or a support radius")
    if not f.integrable:
        raise ValueError(f"{f.name}: not integrable, no Fourier representation")


def semigroup_apply(params: StableParams, t: float, f: TestFunction, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """T_t f(x) via (2pi)^-d int exp(i x.theta - t|theta|^alpha) fhat(theta) dtheta."""
    _check_t(t)
    _require_fourier(f)
    a = params.alpha
    R = min(_kernel_extent(params, t), _fhat_extent(f, spec, np.inf))
    scale = min(t ** (-1 / a), R)
    pts = as_points(x, params.dim)
    if f.is_radial:
        vals = _radial_transform(
            params,
            lambda rho: np.exp(-t * rho**a) * f.radial_fourier(rho),
            np.linalg.norm(pts, axis=1),
            R,
            scale,
            n=spec.M,
        )
    else:
        vals = _polar_fourier(
            params.dim,
            lambda th: np.exp(-t * np.linalg.norm(th, axis=1) ** a) * f.fhat(th),
            pts,
            R,
            scale,
            n=spec.M,
        )
    return _scalar_or_array(x, params.dim, vals)


def semigroup_apply_convolution(params: StableParams, t: float, f: TestFunction, x, panels: int = 64):
    """T_t f(x) = int p_t(x - y) f(y) dy by direct quadrature over f's support box.

    Independent of the Fourier route; used as a cross-check.
    """
    _check_t(t)
    if f.support_radius is None:
        raise ValueError(f"{f.name}: convolution route needs a support radius")
    a_ = f.support_radius
    y1, w1 = gl_panels(np.linspace(-a_, a_, panels + 1), 16)
    d = params.dim
    grids = np.meshgrid(*([y1] * d), indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=1)
    ws = np.ones(len(ys))
    for g in np.meshgrid(*([w1] * d), indexing="ij"):
        ws = ws * g.ravel()
    fv = f.evaluate(ys) * ws
    keep = fv != 0
    ys, fv = ys[keep], fv[keep]
    pts = as_points(x, d)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        out[i] = transition_density(params, t, p - ys) @ fv
    return _scalar_or_array(x, d, out)


def _moments(f: TestFunction, N: int):
    mom = {}
    for k in multi_indices(f.dim, N):
        m = f.moment(k)
        if not np.isfinite(m):
            raise ValueError(f"{f.name}: moment {k} diverges; expansion of order {N} unavailable")
        mom[k] = m
    return mom


def expansion_apply(params: StableParams, t: float, f: TestFunction, N: int, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """L_t f(x) = sum_{|k|<=N} (-1)^|k| / k! * moment_k(f) * d^k p_t(x)."""
    _check_t(t)
    if N < 0:
        raise ValueError("N must be non-negative")
    mom = _moments(f, N)
    pts = as_points(x, params.dim)
    vals = np.zeros(len(pts))
    for k, m in mom.items():
        if m == 0.0:
            continue
        vals += (-1) ** sum(k) / factorial_multi(k) * m * np.atleast_1d(density_derivative(params, t, pts, k, spec))
    return _scalar_or_array(x, params.dim, vals)


def expansion_remainder(params: StableParams, t: float, f: TestFunction, N: int, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """T_t f(x) - L_t f(x) computed directly from the Taylor remainder of fhat.

    The subtraction happens on the Fourier side (fhat minus its order-N
    Taylor polynomial), so no cancellation between two nearly equal spatial
    values occurs at large t.
    """
    _check_t(t)
    _require_fourier(f)
    mom = _moments(f, N)
    a, d = params.alpha, params.dim
    coeffs = [(np.array(k), (-1j) ** sum(k) * m / factorial_multi(k)) for k, m in mom.items() if m != 0.0]

    def weight(th):
        poly = np.zeros(len(th), dtype=complex)
        for k, c in coeffs:
            poly += c * np.prod(th**k, axis=1)
        return np.exp(-t * np.linalg.norm(th, axis=1) ** a) * (f.fhat(th) - poly)

    R = _kernel_extent(params, t)
    return _scalar_or_array(x, d, _polar_fourier(d, weight, x, R, min(t ** (-1 / a), R), n=spec.M))


def sup_grid(params: StableParams, t: float, points: int | None = None) -> np.ndarray:
    """Symmetric evaluation grid over [-10 t^(1/alpha), 10 t^(1/alpha)]^d."""
    d = params.dim
    if d > 2:
        raise ValueError("sup-norm grids are provided for d <= 2 only")
    if points is None:
        points = 2049 if d == 1 else 129
    half = 10 * t ** (1 / params.alpha)
    axis = np.linspace(-half, half, points)
    if d == 1:
        return axis[:, None]
    g = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([g[0].ravel(), g[1].ravel()], axis=1)


def expansion_error(params: StableParams, t: float, f: TestFunction, N: int, points: int | None = None,
                    spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """t^((N+d)/alpha) * max over the sup grid of |T_t f - L_t f|."""
    grid = sup_grid(params, t, points)
    diff = expansion_remainder(params, t, f, N, grid, spec)
    return float(t ** ((N + params.dim) / params.alpha) * np.max(np.abs(diff)))


def integrated_semigroup(params: StableParams, t: float, f: TestFunction, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """int_0^t T_s f(x) ds via the Fourier multiplier (1 - exp(-t|theta|^a)) / |theta|^a."""
    if t < 0:
        raise ValueError("t must be non-negative")
    pts = as_points(x, params.dim)
    if t == 0:
        return _scalar_or_array(x, params.dim, np.zeros(len(pts)))
    _require_fourier(f)
    a = params.alpha
    R = _fhat_extent(f, spec, 200.0 / (f.support_radius or 1.0))
    if params.dim >= a and not np.isfinite(_tail_inverse_power(params, f, R)):
        raise ValueError(f"{f.name}: int |fhat| |theta|^-alpha diverges at infinity")

    def mult(rho):
        return -np.expm1(-t * rho**a) / rho**a

    scale = min(t ** (-1 / a), R)
    if f.is_radial:
        vals = _radial_transform(params, lambda rho: mult(rho) * f.radial_fourier(rho),
                                 np.linalg.norm(pts, axis=1), R, scale, n=spec.M)
    else:
        vals = _polar_fourier(params.dim, lambda th: mult(np.linalg.norm(th, axis=1)) * f.fhat(th),
                              pts, R, scale, n=spec.M)
    return _scalar_or_array(x, params.dim, vals)


def green_limit(params: StableParams, f: TestFunction, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """(2pi)^-d int exp(i x.theta) fhat(theta) |theta|^-alpha dtheta (the d > alpha limit of int_0^t T_s f)."""
    if params.dim <= params.alpha:
        raise ValueError("the Green limit is finite only in high dimension")
    _require_fourier(f)
    a = params.alpha
    R = _fhat_extent(f, spec, 200.0 / (f.support_radius or 1.0))
    pts = as_points(x, params.dim)
    if f.is_radial:
        vals = _radial_transform(params, lambda rho: f.radial_fourier(rho) / rho**a,
                                 np.linalg.norm(pts, axis=1), R, min(1.0, R), n=spec.M)
    else:
        vals = _polar_fourier(params.dim, lambda th: f.fhat(th) / np.linalg.norm(th, axis=1) ** a,
                              pts, R, min(1.0, R), n=spec.M)
    return _scalar_or_array(x, params.dim, vals)


def _abs_fhat_radial(f: TestFunction, rho, m_dirs: int):
    """Angular integral of |fhat(rho w)| over the unit sphere, per radius."""
    d = f.dim
    if f.is_radial:
        return np.abs(f.radial_fourier(rho)) * sphere_area(d)
    dirs, wd = sphere_nodes(d, m_dirs)
    th = (rho[:, None, None] * dirs[None]).reshape(-1, d)
    return (np.abs(f.fhat(th)).reshape(len(rho), len(wd))) @ wd


def _tail_inverse_power(params: StableParams, f: TestFunction, R: float) -> float:
    """int_{1<|theta|<R} |fhat| |theta|^-alpha plus a divergence check of the tail beyond R."""
    if R <= 1:
        return 0.0
    d, a = params.dim, params.alpha
    rho, w = gl_panels(radial_edges(1.0, R, 0.0, grade=0)[1:], 16)
    g = _abs_fhat_radial(f, rho, 64) * rho ** (d - 1 - a)
    # power-law fit over the last decade of the envelope of g
    probe = np.geomspace(R / 10, R, 41)
    env = np.maximum.accumulate(_abs_fhat_radial(f, probe, 64)[::-1])[::-1] * probe ** (d - 1 - a)
    if env[-1] > 0 and env[0] > 0:
        slope = np.log(env[-1] / env[0]) / np.log(10.0)
        if slope >= -1.0 and env[-1] * R > 1e-10 * max(float(w @ g), 1e-300):
            return math.inf
    return float(w @ g)


def fourier_inverse_power(params: StableParams, f: TestFunction, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """int |fhat(theta)| |theta|^-alpha dtheta; ``inf`` when it diverges."""
    _require_fourier(f)
    d, a = params.dim, params.alpha
    s = d - a  # the integrand behaves like rho^(s-1) at the origin
    f0 = abs(_abs_fhat_radial(f, np.array([0.0]), 64)[0])
    if s <= 0 and f0 > 1e-14 * max(f.l1_norm, 1.0):
        return math.inf
    R = _fhat_extent(f, spec, 200.0 / (f.support_radius or 1.0))
    inner_cut = 2.0**-40
    edges = radial_edges(1.0, 1.0, 0.0)
    edges = edges[edges >= inner_cut]
    rho, w = gl_panels(edges, 16)
    inner = float(w @ (_abs_fhat_radial(f, rho, 64) * rho ** (s - 1)))
    head = f0 * inner_cut**s / s if s > 0 else 0.0
    return head + inner + _tail_inverse_power(params, f, R)


def norm_Nd(params: StableParams, f: TestFunction, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """The dimension-dependent test-function norm used by the occupation-time results."""
    d, a = params.dim, params.alpha
    if not f.integrable and f.l1_norm != 0:
        return math.inf
    if f.l1_norm == 0:
        return 0.0
    if d < a:
        return f.l1_norm
    inv = fourier_inverse_power(params, f, spec)
    return f.l1_norm + inv if d == a else inv


# -- schedule conditions -------------------------------------------------------


@dataclass(frozen=True)
class IntegrabilityVerdict:
    verdict: str  # "pass" | "fail" | "inconclusive"
    tail_slope: float
    horizon: float
    tail_bound: float
    detail: str

    def __str__(self):
        return self.verdict


def check_phi_integrability(schedule: SamplingSchedule, p: float, eps: float, horizon: float = 1e12,
                            slope_margin: float = 1e-3) -> IntegrabilityVerdict:
    """Decide whether int_1^inf s^(p+1+eps) / phi(s) ds converges.

    The integrand's log-log slope is tracked over octaves up to ``horizon``.
    A tail slope stably below -1 certifies convergence with the tail bound
    g(S) S / (|slope| - 1); a slope stably at or above -1 (or a
    non-decreasing tail) means divergence by comparison with 1/s.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    s = np.geomspace(1.0, horizon, int(np.log2(horizon)) + 1)
    log_phi = schedule.log_evaluate(s)
    if np.any(np.isnan(log_phi)) or np.any(np.isneginf(log_phi)):
        raise ValueError("phi must be positive")
    logg = (p + 1 + eps) * np.log(s) - log_phi
    slopes = np.diff(logg) / np.diff(np.log(s))
    tail = slopes[-8:]
    last = float(slopes[-1])
    if np.all(tail >= -1.0 + slope_margin) or np.all(np.diff(logg[-8:]) >= 0):
        return IntegrabilityVerdict("fail", last, horizon, math.inf,
                                    f"integrand tail ~ s^{last:.4g}, not integrable")
    if np.all(tail < -1.0 - slope_margin) and np.all(np.diff(tail) <= 1e-9):
        S = s[-1]
        bound = float(np.exp(logg[-1]) * S / (-last - 1.0)) if np.isfinite(last) else 0.0
        return IntegrabilityVerdict("pass", last, horizon, bound,
                                    f"tail slope {last:.4g} < -1 and non-increasing; tail <= {bound:.3g}")
    return IntegrabilityVerdict("inconclusive", last, horizon, math.nan,
                                f"tail slope {last:.4g} too close to -1 or unstable")


def constants_table(params: StableParams, max_order: int, times=(1.0, 10.0, 100.0)):
    """Rows (quantity, d, alpha, k, t, value) for theta^k, kappa_d and gamma_d."""
    rows = []
    d, a = params.dim, params.alpha
    for k in multi_indices(d, max_order):
        rows.append(("theta", d, a, "-".join(map(str, k)), "", theta_const(params, k)))
    try:
        rows.append(("kappa", d, a, "", "", kappa_d(params)))
    except ValueError:
        rows.append(("kappa", d, a, "", "", "undefined"))
    for t in times:
        rows.append(("gamma", d, a, "", t, gamma_d(params, t)))
    return rows


def write_constants_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "d", "alpha", "k", "t", "value"])
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
