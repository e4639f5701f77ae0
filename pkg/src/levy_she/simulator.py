"""Monte Carlo for the mild solution, its single-atom maximum and local peaks.

The field is the Poisson sum of heat-kernel bumps ``g(t - tau_i, x - eta_i) zeta_i``
over atoms of the noise, plus a deterministic drift/compensator term. Atoms
are drawn on a box padded by a Gaussian-tail radius and above a mark cutoff
``eps``; everything omitted is accounted for in ``bias_bound``.

Vectorized samplers pool the atoms of a block of replicates into one Poisson
draw and split them by a uniform replicate label (Poisson splitting), which
is distributionally identical to independent per-replicate draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from . import quadrature
from .errors import ConditionViolated, NumericFailure, SupInfinite
from .levy_measure import (
    INF,
    LevyMeasure,
    ModelParams,
    PointCloud,
    check_conditions,
    make_rng,
    require,
    sample_jumps,
    unit_ball_volume,
)
from .tail_analytics import TailCurve, fingerprint, peak_intensity

PAD_TOL = 1e-8
EXCLUDE_TOL = 1e-6
MAX_ATOMS = 10**6
BLOCK = 50_000
ESTIMANDS = ("Y_point", "Ybar", "XA_sum", "XbarA", "supA_grid")


def padding_radius(params: ModelParams, tol: float = PAD_TOL) -> float:
    """R with d * erfc(R / sqrt(2 kappa t)) = tol.

    Each coordinate of a kernel-distributed displacement exceeds R with
    probability at most erfc(R / sqrt(2 kappa t)), uniformly in s <= t.
    """
    return math.sqrt(2 * params.kappa * params.t) * float(special.erfcinv(tol / params.d))


def _summable(spec):
    return spec.small_moment_finite(1.0)


def _drift(spec, params):
    if params.drift is not None:
        return float(params.drift)
    return spec.truncated_moment(1.0, 1.0) if _summable(spec) else 0.0


def _kernel_l2(params):
    """int_0^t int g(s, y)^2 dy ds; finite only for d = 1."""
    if params.d != 1:
        return INF
    return math.sqrt(params.t / (math.pi * params.kappa))


def _field_scale(spec, params):
    t = params.t
    if _summable(spec):
        small = t * spec.truncated_moment(1.0, 1.0)
    else:
        small = math.sqrt(spec.truncated_moment(2.0, 1.0) * _kernel_l2(params))
    if spec.large_moment_finite(1.0):
        big = t * spec.integrate(lambda z: z, 1.0, INF)
    else:
        big = t * float(spec.tail(1.0))
    return small + big


def _check_field(spec, params):
    report = check_conditions(spec, params)
    require(report, "mild_solution_exists")
    if not _summable(spec) and params.d != 1:
        raise ConditionViolated("non-summable small jumps are only simulated for d = 1")
    return report


def default_eps(spec: LevyMeasure, params: ModelParams, volume: float, max_atoms: int = MAX_ATOMS) -> float:
    """0 for finite activity, else the smallest cutoff keeping t |box| lam_bar(eps) <= max_atoms."""
    if math.isfinite(spec.total_mass):
        return 0.0
    budget = max_atoms / (params.t * volume)
    lo, hi = -700.0, 0.0
    if float(spec.tail(1.0)) > budget:
        raise NumericFailure("atom budget exhausted by jumps above 1")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(spec.tail(math.exp(mid))) > budget:
            lo = mid
        else:
            hi = mid
    return math.exp(hi)


def small_jump_correction(spec: LevyMeasure, params: ModelParams, eps: float):
    """(deterministic shift, bias bound) for dropping atoms with marks <= eps.

    Summable case: the pure-jump sum plus ``(m - M_1(1)) t``; the dropped part
    has mean ``t M_1(eps)`` (added back) and L1 deviation at most twice that.
    Non-summable (d = 1): jumps in (eps, 1] are compensated explicitly and the
    dropped compensated part has mean 0 and standard deviation
    ``sqrt(M_2(eps) int int g^2)``.
    """
    t = params.t
    m = _drift(spec, params)
    if _summable(spec):
        m1_eps = spec.truncated_moment(1.0, eps) if eps > 0 else 0.0
        shift = (m - spec.truncated_moment(1.0, 1.0)) * t + t * m1_eps
        bias = 2 * t * m1_eps
        if params.d == 1 and eps > 0:
            bias = min(bias, math.sqrt(spec.truncated_moment(2.0, eps) * _kernel_l2(params)))
        return shift, bias
    if not 0 < eps <= 1:
        raise ConditionViolated("non-summable small jumps need a cutoff 0 < eps <= 1")
    comp = spec.integrate(lambda z: z, eps, 1.0)
    shift = t * (m - comp)
    bias = math.sqrt(spec.truncated_moment(2.0, eps) * _kernel_l2(params))
    return shift, bias


def _as_grid(grid, d):
    g = np.asarray(grid, dtype=float)
    if g.ndim == 0:
        g = g.reshape(1, 1)
    if g.ndim == 1:
        g = g.reshape(-1, 1) if d == 1 else g.reshape(1, d)
    if g.shape[1] != d:
        raise ValueError(f"grid points must have {d} coordinates")
    return g


def field_from_cloud(cloud: PointCloud, params: ModelParams, grid, shift: float = 0.0, chunk: int = 2**22) -> np.ndarray:
    """shift + sum_i g(t - tau_i, x - eta_i) zeta_i at each grid point."""
    pts = _as_grid(grid, params.d)
    out = np.full(len(pts), float(shift))
    n = len(cloud)
    if n == 0:
        return out
    s = params.t - cloud.times
    step = max(1, chunk // max(1, n))
    for i in range(0, len(pts), step):
        diff = pts[i : i + step, None, :] - cloud.locations[None, :, :]
        out[i : i + step] += params.heat_kernel(s, diff) @ cloud.marks
    return out


def ybar_from_cloud(cloud: PointCloud, params: ModelParams, x=None) -> float:
    """max_i g(t - tau_i, x - eta_i) zeta_i; 0 for an empty cloud."""
    if len(cloud) == 0:
        return 0.0
    x = np.zeros(params.d) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    vals = params.heat_kernel(params.t - cloud.times, x - cloud.locations) * cloud.marks
    return float(vals.max())


def _peak_values(params, times, marks):
    return (2 * math.pi * params.kappa * (params.t - times)) ** (-params.d / 2) * marks


def _in_box(cloud, A):
    lo, hi = np.atleast_1d(A[0]).astype(float), np.atleast_1d(A[1]).astype(float)
    return np.all((cloud.locations >= lo) & (cloud.locations <= hi), axis=1)


def xa_from_cloud(cloud: PointCloud, params: ModelParams, A) -> tuple:
    """(X_A, Xbar_A) over atoms located in the closed box A.

    For d = 1 the sum keeps only peak values above 1.
    """
    if len(cloud) == 0:
        return 0.0, 0.0
    vals = _peak_values(params, cloud.times, cloud.marks)[_in_box(cloud, A)]
    if len(vals) == 0:
        return 0.0, 0.0
    total = vals[vals > 1].sum() if params.d == 1 else vals.sum()
    return float(total), float(vals.max())


def merge_clouds(a: PointCloud, b: PointCloud) -> PointCloud:
    """Superposition of two clouds on the same box (noise for lam_a + lam_b)."""
    if not (np.array_equal(a.box_lo, b.box_lo) and np.array_equal(a.box_hi, b.box_hi)):
        raise ValueError("clouds must share a box")
    return PointCloud(
        np.concatenate([a.times, b.times]),
        np.concatenate([a.locations, b.locations]),
        np.concatenate([a.marks, b.marks]),
        min(a.eps, b.eps),
        a.box_lo,
        a.box_hi,
        max(a.padding, b.padding),
        None,
    )


@dataclass
class FieldSample:
    grid: np.ndarray
    values: np.ndarray
    bias_bound: float
    cloud: PointCloud
    meta: dict = field(default_factory=dict)

    def rows(self):
        for x, v in zip(self.grid, self.values):
            yield tuple(float(c) for c in np.atleast_1d(x)), float(v)


def simulate_field(
    spec: LevyMeasure,
    params: ModelParams,
    grid,
    eps: Optional[float] = None,
    padding: Optional[float] = None,
    seed=None,
) -> FieldSample:
    """One realization of Y(t, .) on ``grid``."""
    _check_field(spec, params)
    pts = _as_grid(grid, params.d)
    R = padding_radius(params) if padding is None else float(padding)
    lo, hi = pts.min(axis=0) - R, pts.max(axis=0) + R
    vol = float(np.prod(hi - lo))
    if eps is None:
        eps = default_eps(spec, params, vol)
    shift, small_bias = small_jump_correction(spec, params, eps)
    pad_frac = params.d * math.erfc(R / math.sqrt(2 * params.kappa * params.t))
    pad_bias = pad_frac * _field_scale(spec, params)
    cloud = sample_jumps(spec, params, (lo, hi), eps, rng=make_rng(seed), rng_seed=seed)
    cloud.padding = R
    values = field_from_cloud(cloud, params, pts, shift)
    if not np.all(np.isfinite(values)):
        raise NumericFailure("non-finite field value")
    meta = {
        "padding": R,
        "eps": eps,
        "n_atoms": len(cloud),
        "shift": shift,
        "padding_bias": pad_bias,
        "small_jump_bias": small_bias,
        "seed": seed,
    }
    return FieldSample(pts, values, pad_bias + small_bias, cloud, meta)


# ---------------------------------------------------------------------------
# single-atom maximum at x = 0
def ybar_exclusion_bound(spec: LevyMeasure, params: ModelParams, R: float, eps: float, level: float) -> float:
    """Upper bound on the expected number of atoms outside the simulated set
    with g(t - tau, -eta) zeta > level.

    Outside [-R, R]^d with R >= sqrt(kappa t d) the kernel is increasing in s,
    so g(s, y) <= g(t, |y|); below the cutoff the level set of g has measure
    at most c r^-(1+2/d) with the whole-line constant c.
    """
    d, kt = params.d, params.kappa * params.t
    if R * R < kt * d:
        raise ValueError("padding radius must be at least sqrt(kappa t d)")
    log_norm = -0.5 * d * math.log(2 * math.pi * kt)

    def shell(rho):
        log_cut = math.log(level) - log_norm + rho * rho / (2 * kt)
        return d * unit_ball_volume(d) * rho ** (d - 1) * math.exp(spec.log_tail(log_cut))

    pts = [R * f for f in (1.5, 2.0, 4.0, 16.0)]
    out = params.t * quadrature.integrate(shell, R, INF, pts, epsrel=1e-8, epsabs=1e-30)
    if eps > 0:
        gam = 1.0 + 2.0 / d
        const = d ** (d / 2) / (math.pi * params.kappa * (d + 2) ** (d / 2 + 1))
        out += const * level**-gam * spec.truncated_moment(gam, eps)
    return out


def _shells(spec, params, R, level, tol=1e-12):
    """Cube shells [R_j, R_j+1) outside [-R, R]^d with mark cutoffs for level."""
    d, kt = params.d, params.kappa * params.t
    log_norm = -0.5 * d * math.log(2 * math.pi * kt)
    out = []
    r_in = R
    for _ in range(400):
        r_out = 1.5 * r_in
        log_cut = math.log(level) - log_norm + r_in * r_in / (2 * kt)
        if log_cut > 700:
            break
        cut = math.exp(log_cut)
        mean = params.t * ((2 * r_out) ** d - (2 * r_in) ** d) * float(spec.tail(cut))
        out.append((r_in, r_out, cut, mean))
        if mean < tol and ybar_exclusion_bound(spec, params, r_out, 0.0, level) < tol:
            break
        r_in = r_out
    return out


def _uniform_shell(rng, n, r_in, r_out, d):
    pts = rng.uniform(-r_out, r_out, (n, d))
    bad = np.all(np.abs(pts) < r_in, axis=1)
    while bad.any():
        pts[bad] = rng.uniform(-r_out, r_out, (int(bad.sum()), d))
        bad = np.all(np.abs(pts) < r_in, axis=1)
    return pts


@dataclass
class _Plan:
    R: float
    eps: float
    shift: float
    bias: float
    rate: float
    shells: list
    level: float
    exclusion: float


def _point_plan(spec, params, eps, padding, level):
    _check_field(spec, params)
    R = max(padding_radius(params) if padding is None else float(padding), math.sqrt(params.kappa * params.t * params.d))
    vol = (2 * R) ** params.d
    if eps is None:
        eps = default_eps(spec, params, vol)
    shift, bias = small_jump_correction(spec, params, eps)
    rate = float(spec.tail(eps)) if eps > 0 else spec.total_mass
    shells = _shells(spec, params, R, level)
    last = shells[-1][1] if shells else R
    excl = ybar_exclusion_bound(spec, params, last, eps, level)
    if excl > EXCLUDE_TOL:
        raise NumericFailure(f"excluded atoms may exceed level {level:g} with mean {excl:.3g}")
    return _Plan(R, eps, shift, bias, rate, shells, level, excl)


def _point_block(spec, params, plan, n, rng):
    """(Y(t, 0), Ybar(t)) for n replicates from one pooled Poisson draw."""
    d, t = params.d, params.t
    ysum = np.full(n, plan.shift)
    ybar = np.zeros(n)
    R = plan.R
    parts = [(int(rng.poisson(n * t * (2 * R) ** d * plan.rate)), 0.0, R, plan.eps)]
    parts += [(int(rng.poisson(n * mean)), r_in, r_out, cut) for r_in, r_out, cut, mean in plan.shells]
    for count, r_in, r_out, cut in parts:
        if count == 0:
            continue
        rep = rng.integers(0, n, count)
        times = rng.uniform(0.0, t, count)
        locs = rng.uniform(-r_out, r_out, (count, d)) if r_in == 0 else _uniform_shell(rng, count, r_in, r_out, d)
        marks = spec.sample_marks(rng, count, cut)
        vals = params.heat_kernel(t - times, locs) * marks
        ysum += np.bincount(rep, weights=vals, minlength=n)
        np.maximum.at(ybar, rep, vals)
    return ysum, ybar


def sample_point_values(
    spec: LevyMeasure,
    params: ModelParams,
    n: int,
    seed=None,
    eps: Optional[float] = None,
    padding: Optional[float] = None,
    level: float = 1.0,
    block: int = BLOCK,
):
    """Replicates of (Y(t, 0), Ybar(t)).

    Atoms beyond the padded box are drawn only above the mark needed to reach
    ``level``, so the law of Ybar is exact above ``level`` up to the excluded
    mean reported by ``ybar_exclusion_bound``. Block b uses stream (seed, b).
    """
    plan = _point_plan(spec, params, eps, padding, level)
    ys, yb = [], []
    for b, start in enumerate(range(0, n, block)):
        m = min(block, n - start)
        y, ybar = _point_block(spec, params, plan, m, make_rng(seed, b))
        ys.append(y)
        yb.append(ybar)
    return np.concatenate(ys), np.concatenate(yb), plan


def simulate_Ybar(spec, params, eps=None, padding=None, seed=None, level: float = 1.0) -> float:
    """One draw of Ybar(t) = max_i g(t - tau_i, eta_i) zeta_i (0 if no atoms)."""
    return float(sample_point_values(spec, params, 1, seed, eps, padding, level)[1][0])


# ---------------------------------------------------------------------------
# local peaks over a box A
def _box(A, d):
    if A is None:
        return np.zeros(d), np.ones(d)
    lo = np.broadcast_to(np.asarray(A[0], dtype=float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(A[1], dtype=float), (d,)).copy()
    if np.any(hi < lo):
        raise ValueError("box must have lo <= hi")
    return lo, hi


def _check_local(spec, params):
    require(check_conditions(spec, params), "local_sup_finite")


def simulate_XA(spec: LevyMeasure, params: ModelParams, A=None, seed=None, eps: Optional[float] = None) -> tuple:
    """(X_A(t), Xbar_A(t)) from atoms in the closed box A (default unit cube)."""
    _check_local(spec, params)
    lo, hi = _box(A, params.d)
    if np.any(hi <= lo):
        return 0.0, 0.0
    if eps is None:
        eps = default_eps(spec, params, float(np.prod(hi - lo)))
    cloud = sample_jumps(spec, params, (lo, hi), eps, rng=make_rng(seed), rng_seed=seed)
    return xa_from_cloud(cloud, params, (lo, hi))


def _peak_strata(spec, params, vol, level, tol=1e-10):
    """Dyadic strata in s = t - tau with mark cutoffs for peak values > level."""
    t, d = params.t, params.d
    if math.isfinite(spec.total_mass):
        return [(0.0, t, 0.0, vol * t * spec.total_mass)]
    if level <= 0:
        raise ConditionViolated("infinite activity needs a positive level for peak sampling")
    out = []
    s_hi = t
    for _ in range(2000):
        s_lo = 0.5 * s_hi
        cut = level * (2 * math.pi * params.kappa * s_lo) ** (d / 2)
        out.append((s_lo, s_hi, cut, vol * (s_hi - s_lo) * float(spec.tail(cut))))
        rest = vol * peak_intensity(spec, ModelParams(d, params.kappa, s_lo), level)
        if rest < tol:
            return out
        s_hi = s_lo
    raise NumericFailure("peak strata did not converge")


def sample_xa_values(
    spec: LevyMeasure,
    params: ModelParams,
    n: int,
    A=None,
    seed=None,
    level: float = 0.0,
    block: int = BLOCK,
):
    """Replicates of (X_A, Xbar_A); atom locations are irrelevant, only |A|.

    With finite activity every atom in A is drawn and both values are exact.
    Otherwise only atoms with peak value above ``level`` are drawn, so Xbar_A
    is exact above ``level`` and X_A is the sum over those atoms.
    """
    _check_local(spec, params)
    lo, hi = _box(A, params.d)
    vol = float(np.prod(hi - lo))
    strata = _peak_strata(spec, params, vol, level)
    xs, xb = [], []
    for b, start in enumerate(range(0, n, block)):
        m = min(block, n - start)
        rng = make_rng(seed, b)
        tot = np.zeros(m)
        mx = np.zeros(m)
        for s_lo, s_hi, cut, mean in strata:
            count = int(rng.poisson(m * mean))
            if count == 0:
                continue
            rep = rng.integers(0, m, count)
            s = rng.uniform(s_lo, s_hi, count)
            vals = (2 * math.pi * params.kappa * s) ** (-params.d / 2) * spec.sample_marks(rng, count, cut)
            keep = vals > level
            rep, vals = rep[keep], vals[keep]
            summed = vals > 1 if params.d == 1 else np.ones(len(vals), bool)
            tot += np.bincount(rep[summed], weights=vals[summed], minlength=m)
            np.maximum.at(mx, rep, vals)
        xs.append(tot)
        xb.append(mx)
    return np.concatenate(xs), np.concatenate(xb)


def grid_sup(spec, params, A=None, points_per_axis: int = 9, seed=None, eps=None, padding=None):
    """(coarse max, refined max, Xbar_A) of one field realization over box A.

    The refined grid halves the spacing, so refined >= coarse; Xbar_A is the
    largest single-atom peak inside A, which the kernel singularity lets the
    true supremum exceed.
    """
    report = _check_field(spec, params)
    if report.sup_infinite:
        raise SupInfinite(report.failures.get("sup_infinite", "local suprema are infinite"))
    lo, hi = _box(A, params.d)
    axes_f = [np.linspace(a, b, 2 * points_per_axis - 1) for a, b in zip(lo, hi)]
    fine = np.stack(np.meshgrid(*axes_f, indexing="ij"), -1).reshape(-1, params.d)
    sample = simulate_field(spec, params, fine, eps, padding, seed)
    idx = np.stack(np.meshgrid(*[np.arange(len(a)) for a in axes_f], indexing="ij"), -1).reshape(-1, params.d)
    coarse_mask = np.all(idx % 2 == 0, axis=1)
    peak = xa_from_cloud(sample.cloud, params, (lo, hi))[1]
    return float(sample.values[coarse_mask].max()), float(sample.values.max()), peak


# ---------------------------------------------------------------------------
def sample_estimand(estimand: str, spec, params, n_replicates: int, seed=None, A=None, level: float = 1.0, **kw):
    """Replicate values of one estimand, plus a dict of sampler metadata."""
    if estimand not in ESTIMANDS:
        raise ValueError(f"estimand must be one of {ESTIMANDS}")
    meta = {}
    if estimand in ("Y_point", "Ybar"):
        y, ybar, plan = sample_point_values(spec, params, n_replicates, seed, kw.get("eps"), kw.get("padding"), level)
        meta.update(padding=plan.R, eps=plan.eps, bias_bound=plan.bias, exclusion_bound=plan.exclusion)
        return (y if estimand == "Y_point" else ybar), meta
    if estimand in ("XA_sum", "XbarA"):
        lvl = 0.0 if math.isfinite(spec.total_mass) else level
        xs, xb = sample_xa_values(spec, params, n_replicates, A, seed, lvl)
        meta.update(level_min=lvl)
        return (xs if estimand == "XA_sum" else xb), meta
    ppa = int(kw.get("points_per_axis", 9))
    out = np.empty(n_replicates)
    gaps = np.empty(n_replicates)
    excess = np.empty(n_replicates)
    for i in range(n_replicates):
        c, f, peak = grid_sup(spec, params, A, ppa, (seed, i) if seed is not None else None, kw.get("eps"), kw.get("padding"))
        out[i], gaps[i], excess[i] = f, f - c, max(peak - f, 0.0)
    meta.update(
        points_per_axis=ppa,
        refinement_gap_mean=float(gaps.mean()),
        refinement_gap_max=float(gaps.max()),
        atom_peak_excess_mean=float(excess.mean()),
    )
    return out, meta


def wilson_interval(k, n, confidence: float = 0.95):
    k = np.atleast_1d(np.asarray(k, dtype=int))
    lo, hi = np.empty(len(k)), np.empty(len(k))
    for i, kk in enumerate(k):
        ci = stats.binomtest(int(kk), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
        lo[i], hi[i] = ci.low, ci.high
    return lo, hi


def empirical_curve(samples, levels, meta=None) -> TailCurve:
    samples = np.asarray(samples, dtype=float)
    levels = np.asarray(levels, dtype=float)
    srt = np.sort(samples)
    n = len(srt)
    k = n - np.searchsorted(srt, levels, side="right")
    freq = k / n
    lo, hi = wilson_interval(k, n)
    return TailCurve(levels, freq, "empirical", (hi - lo) / 2, dict(meta or {}), lo, hi)


def mc_tail(estimand: str, spec, params, levels, n_replicates: int, seed=None, A=None, **kw) -> TailCurve:
    """Empirical P(estimand > r) on ``levels`` with 95% Wilson intervals."""
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be strictly increasing")
    if n_replicates < 1000:
        raise ValueError("n_replicates must be at least 1000")
    level = kw.pop("level", float(levels[0]))
    samples, meta = sample_estimand(estimand, spec, params, n_replicates, seed, A, level, **kw)
    meta.update(estimand=estimand, n_replicates=n_replicates, seed=seed, measure=spec.to_dict(), params=params.to_dict())
    meta["fingerprint"] = fingerprint({k: meta[k] for k in ("estimand", "measure", "params")})
    return empirical_curve(samples, levels, meta)


def replicate_rows(estimand: str, samples):
    """CSV rows ``replicate,estimand,value``."""
    for i, v in enumerate(np.asarray(samples, dtype=float)):
        yield i, estimand, float(v)
