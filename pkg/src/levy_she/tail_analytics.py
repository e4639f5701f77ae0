"""Exact and asymptotic tails of the kernel-pushforward Levy measures.

Notation: ``gamma = 1 + 2/d`` is the critical moment for the point value,
``2/d`` the one for local suprema, ``D = (2 pi kappa t)^(d/2)``.

* ``eta_tail``: tail of the Levy measure of Y(t, x).
* ``tau_tail``: tail of the single-atom peak intensity (local suprema).
* ``etaA_tail``: tail for the supremum over a box A.
* ``eta0_tail``: tail for atoms within distance 1/2 of the point.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import quadrature
from .errors import BracketViolation, ConditionViolated, NumericFailure, Unclassified
from .levy_measure import (
    INF,
    LevyMeasure,
    LogTail,
    ModelParams,
    check_conditions,
    require,
    scaled_upper_gamma,
    unit_ball_volume,
)

TAU_FORM_RTOL = 1e-8
ERV_TOL = 1e-6


def _vectorize(fn):
    def wrapper(spec, params, r, *args, **kw):
        if np.ndim(r) == 0:
            return fn(spec, params, float(r), *args, **kw)
        arr = np.asarray(r, dtype=float)
        return np.array([fn(spec, params, float(v), *args, **kw) for v in arr.ravel()]).reshape(arr.shape)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _crit(params: ModelParams) -> float:
    return 1.0 + 2.0 / params.d


def eta_constant(params: ModelParams) -> float:
    """d^(d/2) / (pi kappa (d+2)^(d/2+1) Gamma(d/2+1))."""
    d = params.d
    return d ** (d / 2) / (math.pi * params.kappa * (d + 2) ** (d / 2 + 1) * math.gamma(d / 2 + 1))


def _require_existence(spec, params):
    require(check_conditions(spec, params), "mild_solution_exists")


def _require_local(spec, params):
    require(check_conditions(spec, params), "local_sup_finite")


# ---------------------------------------------------------------------------
# eta: point-value tail
@_vectorize
def eta_tail(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    """eta_bar(r) by quadrature in u of the truncated-moment representation.

    eta_bar(r) = C_d r^-g int_0^inf e^-u u^(d/2) M_g(D r e^(u/g)) du with
    g = 1 + 2/d. The integrand is evaluated as u^(d/2) * M_g(x)/x^g, which is
    bounded, so no exponentials overflow.
    """
    if not r > 0:
        raise ValueError("level must be positive")
    _require_existence(spec, params)
    d, g = params.d, _crit(params)
    log_dr = math.log(params.D * r)
    half = d / 2

    def integrand(u):
        return u**half * spec.moment_ratio(g, log_dr + u / g)

    breaks = [g * (math.log(b) - log_dr) for b in spec.breakpoints]
    m = spec.total_moment(g)
    bound = None
    if math.isfinite(m):
        scale = m * math.exp(-g * log_dr) * math.gamma(half + 1)
        bound = lambda U: scale * special.gammaincc(half + 1, U)  # noqa: E731
    val = quadrature.integrate_halfline(integrand, breaks, tail_bound=bound)
    return eta_constant(params) * params.D**g * val


def alternate_constant(params: ModelParams) -> float:
    d = params.d
    return (2 * params.t) ** (1 + d / 2) * params.kappa ** (d / 2) * unit_ball_volume(d) / d


def _log_moment_integral(spec, params, r, rate):
    """int_0^inf e^(-rate s) f_(d/2)(D r e^-s) ds."""
    half = params.d / 2
    log_dr = math.log(params.D * r)

    def integrand(s):
        return math.exp(-rate * s + spec.log_of_log_moment(half, log_dr - s))

    breaks = [log_dr - math.log(b) for b in spec.breakpoints]
    return quadrature.integrate_halfline(integrand, breaks)


@_vectorize
def eta_tail_alternate(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    """eta_bar(r) via the log-moment representation (independent oracle).

    eta_bar(r) = K r^-g int_0^r v^(2/d) f(D v) dv with
    f(w) = int_(w,inf) (log(z/w))^(d/2) lam(dz); substituting v = r e^-s.
    """
    if not r > 0:
        raise ValueError("level must be positive")
    _require_existence(spec, params)
    return alternate_constant(params) * _log_moment_integral(spec, params, r, _crit(params))


def sup_law_Ybar(spec, params, r):
    """P(Ybar(t) <= r) = exp(-eta_bar(r))."""
    return np.exp(-np.asarray(eta_tail(spec, params, r)))


# ---------------------------------------------------------------------------
# asymptotic regimes
def karamata_L(spec: LevyMeasure, r: float) -> float:
    """L(r) = int_1^r l(u)/u du with l(u) = lam_bar(u) u^alpha."""
    a = spec.tail_index
    if r <= 1:
        return 0.0
    fn = lambda y: float(spec.tail(math.exp(y))) * math.exp(a * y)  # noqa: E731
    pts = [math.log(b) for b in spec.breakpoints if b > 1]
    return quadrature.integrate(fn, 0.0, math.log(r), pts)


def karamata_L0(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    """L0(r) = int_1^inf lam_bar(r y) y^-1 (log y)^(d/2-1) dy."""
    d = params.d
    if isinstance(spec, LogTail) and r > math.e:
        b = spec.beta
        return math.log(r) ** (d / 2 - b) * special.beta(d / 2, b - d / 2)
    fn = lambda v: float(spec.tail(r * math.exp(v))) * v ** (d / 2 - 1)  # noqa: E731
    pts = [math.log(b / r) for b in spec.breakpoints if b > r]
    return quadrature.integrate(fn, 0.0, INF, pts)


def classify_eta(spec: LevyMeasure, params: ModelParams) -> str:
    """One of 'finite_moment', 'regular', 'critical', 'slowly_varying'."""
    g = _crit(params)
    a = spec.tail_index
    if spec.large_moment_finite(g) and spec.small_moment_finite(g):
        return "finite_moment"
    if a == 0:
        return "slowly_varying"
    if 0 < a < g:
        return "regular"
    if a == g and getattr(spec, "karamata_divergent", True):
        return "critical"
    raise Unclassified(f"tail index {a} fits no asymptotic regime for eta (critical exponent {g:g})")


@_vectorize
def eta_tail_asymptotic(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    d, g, D, k = params.d, _crit(params), params.D, params.kappa
    regime = classify_eta(spec, params)
    if regime == "finite_moment":
        m = spec.total_moment(g)
        return r**-g * d ** (d / 2) * m / (math.pi * k * (d + 2) ** (d / 2 + 1))
    if regime == "regular":
        a = spec.tail_index
        return float(spec.tail(r)) * D ** (g - a) / (d * math.pi * k * a ** (d / 2) * (g - a))
    if regime == "critical":
        return karamata_L(spec, r) * r**-g / (d * math.pi * k * g ** (d / 2))
    return karamata_L0(spec, params, r) * D**g / (2 * math.pi * k * math.gamma(d / 2 + 1) * g)


def classify_tau(spec: LevyMeasure, params: ModelParams) -> str:
    p = 2.0 / params.d
    a = spec.tail_index
    if spec.large_moment_finite(p) and spec.small_moment_finite(p):
        return "finite_moment"
    if 0 <= a < p:
        return "regular"
    if a == p and getattr(spec, "karamata_divergent", True):
        return "critical"
    raise Unclassified(f"tail index {a} fits no asymptotic regime for tau (critical exponent {p:g})")


@_vectorize
def tau_tail_asymptotic(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    d, k = params.d, params.kappa
    p = 2.0 / d
    regime = classify_tau(spec, params)
    if regime == "finite_moment":
        return spec.total_moment(p) * r**-p / (2 * math.pi * k)
    if regime == "regular":
        a = spec.tail_index
        return 2 * params.t * params.D**-a * float(spec.tail(r)) / (2 - d * a)
    return p * karamata_L(spec, r) * r**-p / (2 * math.pi * k)


# ---------------------------------------------------------------------------
# tau: local-supremum tail
def peak_intensity(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    """(Leb x lam)({(s, z): s <= t, (2 pi kappa s)^(-d/2) z > r}) for any r > 0."""
    p = 2.0 / params.d
    c = 1.0 / (2 * math.pi * params.kappa)
    top = r * params.D
    lr = math.log(r)
    low = spec.integrate_log(lambda y: c * math.exp(p * (y - lr)), 0.0, top)
    return low + params.t * float(spec.tail(top))


def _tau_forms(spec, params, r):
    p = 2.0 / params.d
    c = 1.0 / (2 * math.pi * params.kappa)
    top = r * params.D
    form1 = peak_intensity(spec, params, r)
    form2 = c * spec.moment_ratio(p, math.log(top)) * params.D**p + params.t * float(spec.tail(top))
    form3 = params.D**p / (math.pi * params.kappa * params.d) * _weighted_tail(spec, p, math.log(top))
    return form1, form2, form3


def _weighted_tail(spec, p, lt):
    """int_(-inf, lt] e^(p (y - lt)) lam_bar(e^y) dy = w^-p int_0^w u^(p-1) lam_bar(u) du, w = e^lt."""
    fn = lambda y: math.exp(p * (y - lt) + spec.log_tail(y))  # noqa: E731
    pts = [math.log(b) for b in spec.breakpoints] + [lt - 1.0 / p]
    return quadrature.integrate(fn, -INF, lt, pts)


@_vectorize
def tau_tail(spec: LevyMeasure, params: ModelParams, r: float, check: bool = True) -> float:
    """tau_bar(r); the three equivalent forms are cross-checked to 1e-8.

    For d = 1 the measure lives on (1, inf), so tau_bar(r) = tau_bar(1) for r <= 1.
    """
    if not r > 0:
        raise ValueError("level must be positive")
    _require_local(spec, params)
    if params.d == 1:
        r = max(r, 1.0)
    forms = _tau_forms(spec, params, r)
    if check:
        ref = forms[0]
        for other in forms[1:]:
            if abs(other - ref) > TAU_FORM_RTOL * max(abs(ref), 1e-300):
                raise NumericFailure(f"tau_bar forms disagree at r={r}: {forms}")
    return forms[0]


def tau_tail_forms(spec: LevyMeasure, params: ModelParams, r: float):
    """The three representations (direct, moment, integrated tail) at level r."""
    _require_local(spec, params)
    return _tau_forms(spec, params, r)


def sup_law_XbarA(spec, params, vol_A: float, r):
    """P(Xbar_A(t) > r) = 1 - exp(-|A| (Leb x lam)(V(r)))."""
    if not vol_A > 0:
        raise ValueError("vol_A must be positive")
    _require_local(spec, params)
    vals = np.vectorize(lambda v: peak_intensity(spec, params, v), otypes=[float])(np.asarray(r, dtype=float))
    out = -np.expm1(-vol_A * vals)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# eta_A: supremum over a box
def _box_sides(A, d):
    lo = np.atleast_1d(np.asarray(A[0], dtype=float))
    hi = np.atleast_1d(np.asarray(A[1], dtype=float))
    if lo.shape != (d,) or hi.shape != (d,) or np.any(hi < lo):
        raise ValueError("A must be (lo, hi) with d coordinates each and hi >= lo")
    return hi - lo


def steiner_coefficients(sides: Sequence[float]) -> list:
    """c_k with |{y: dist(y, A) <= rho}| = sum_k c_k rho^k for a box A."""
    d = len(sides)
    e = [1.0] + [0.0] * d
    for s in sides:
        for j in range(d, 0, -1):
            e[j] += e[j - 1] * s
    return [e[d - k] * unit_ball_volume(k) for k in range(d + 1)]


@_vectorize
def etaA_tail(spec: LevyMeasure, params: ModelParams, r: float, A=None) -> float:
    """eta_bar_A(r) for a box A = (lo, hi), using the kappa-consistent kernel.

    Shells of constant dist(y, A) reduce the spatial integral to the Steiner
    polynomial; the k-th term involves the log-moment f_(k/2), so
    eta_bar_A(r) = int_0^t sum_k c_k (2 kappa s)^(k/2) f_(k/2)(r (2 pi kappa s)^(d/2)) ds.
    """
    if A is None:
        raise ValueError("etaA_tail needs a box A")
    d, t, k = params.d, params.t, params.kappa
    rep = check_conditions(spec, params)
    require(rep, "local_sup_finite")
    if not spec.large_log_moment_finite(d / 2):
        raise ConditionViolated("large-jump log-moment of order d/2 is infinite")
    if d == 1:
        r = max(r, 1.0)
    coef = steiner_coefficients(_box_sides(A, d))
    log_rd = math.log(r * params.D)

    def integrand(x):
        s = t * math.exp(-x)
        w = math.exp(log_rd - x * d / 2)
        out = 0.0
        for j, c in enumerate(coef):
            if c:
                out += c * (2 * k * s) ** (j / 2) * spec.log_moment(j / 2, w)
        return s * out

    breaks = [(2.0 / d) * (log_rd - math.log(b)) for b in spec.breakpoints]
    return quadrature.integrate_halfline(integrand, breaks, tol=1e-10, epsrel=1e-8)


def etaA_regular_constant(params: ModelParams, alpha: float, A) -> float:
    """int_0^t int (2 pi kappa s)^(-alpha d/2) exp(-alpha dist(y,A)^2/(2 kappa s)) dy ds."""
    d, k = params.d, params.kappa
    coef = steiner_coefficients(_box_sides(A, d))

    def fn(s):
        out = 0.0
        for j, c in enumerate(coef):
            if c:
                out += c * math.gamma(j / 2 + 1) * (2 * k * s / alpha) ** (j / 2)
        return (2 * math.pi * k * s) ** (-alpha * d / 2) * out

    return quadrature.integrate(fn, 0.0, params.t)


# ---------------------------------------------------------------------------
# eta_0: atoms within distance 1/2
def _slab_volume(log_u: float, params: ModelParams) -> float:
    """int_0^(H1(u) ^ t) v_d (1/2 ^ H2(s, u))^d ds, i.e. eta_0 for a unit atom at level u = e^log_u."""
    d, k, t = params.d, params.kappa, params.t
    log_h1 = -math.log(2 * math.pi * k) - (2.0 / d) * log_u
    if log_h1 < -600.0:
        return 0.0
    log_a = min(log_h1, math.log(t))
    a = math.exp(log_a)
    e = d / 2 + 1
    const = (k * d) ** (d / 2) * (2.0 / (d + 2)) ** e

    def G(x):
        # int_0^x H2(s, u)^d ds for 0 < x <= H1, written as x^e e^A Gamma(e, A)
        if x <= 0:
            return 0.0
        A = e * (log_h1 - math.log(x))
        return const * x**e * scaled_upper_gamma(e, max(A, 0.0))

    total = G(a)
    c = math.exp(-log_h1) / (4 * k * d)
    if c < 1.0 / math.e:
        x_hi = -special.lambertw(-c, -1).real
        x_lo = -special.lambertw(-c, 0).real
        s1 = math.exp(min(log_h1 - x_hi, log_a))
        s2 = math.exp(min(log_h1 - x_lo, log_a))
        if s2 > s1:
            total += 2.0 ** -d * (s2 - s1) - (G(s2) - G(s1))
    return unit_ball_volume(d) * total


def _cap_breaks(r, params):
    d, k = params.d, params.kappa
    h = 1.0 / (4 * k * d)
    return [r * params.D, r * (2 * math.pi * k * math.e * h) ** (d / 2)]


@_vectorize
def eta0_tail(spec: LevyMeasure, params: ModelParams, r: float) -> float:
    """eta_bar_0(r) = int v_d int_0^(H1 ^ t) (1/2 ^ H2(s, r/z))^d ds lam(dz)."""
    if not r > 0:
        raise ValueError("level must be positive")
    _require_existence(spec, params)
    if params.d == 1:
        r = max(r, 1.0)
    lr = math.log(r)
    return spec.integrate_log(lambda y: _slab_volume(lr - y, params), points=_cap_breaks(r, params))


@dataclass(frozen=True)
class Eta0Sandwich:
    c1: float
    c2: float
    C1: float
    C2: float

    def lower(self, spec, params, r):
        g = _crit(params)
        return self.c1 * (r**-g * spec.truncated_moment(g, self.c2 * r) + float(spec.tail(self.c2 * r)))

    def upper(self, spec, params, r):
        g = _crit(params)
        return self.C1 * (r**-g * spec.truncated_moment(g, self.C2 * r) + float(spec.tail(self.C2 * r)))


def eta0_sandwich(params: ModelParams) -> Eta0Sandwich:
    """Constants (c1, c2, C1, C2) bracketing eta_bar_0.

    Below c2 r the cap 1/2 never binds and H1 <= t, so the slab volume is
    exactly K_d (z/r)^g; above, the slab volume is at least its value at
    1/c2. Above D r the slab volume is at most v_d t 2^-d.
    """
    d = params.d
    kd = eta_constant(params) * math.gamma(d / 2 + 1)
    c2 = min(params.D, (math.pi * math.e / (2 * d)) ** (d / 2))
    c1 = min(kd, _slab_volume(-math.log(c2), params))
    C2 = params.D
    C1 = max(kd, unit_ball_volume(d) * params.t * 2.0**-d)
    return Eta0Sandwich(c1, c2, C1, C2)


# ---------------------------------------------------------------------------
# extended regular variation
@dataclass
class ErvBracket:
    theta_lo: float
    theta_hi: float
    levels: np.ndarray
    xi_samples: np.ndarray
    which: str = "eta"

    @property
    def xi_limit(self) -> float:
        return float(self.xi_samples[-1])

    @property
    def index(self) -> float:
        """Estimated regular-variation index -alpha of the tail (the limit of xi)."""
        return self.xi_limit


def xi_eta(spec, params, v: float) -> float:
    g = _crit(params)
    num = spec.log_moment(params.d / 2, params.D * v)
    den = _log_moment_integral(spec, params, v, g)
    return num / den - g


def xi_tau(spec, params, u: float) -> float:
    p = 2.0 / params.d
    lw = math.log(params.D * u)
    return math.exp(spec.log_tail(lw)) / _weighted_tail(spec, p, lw) - p


def erv_diagnostic(which: str, spec: LevyMeasure, params: ModelParams, v_grid) -> ErvBracket:
    """Log-derivative xi of eta_bar or tau_bar on ``v_grid`` with its bracket.

    xi lies in [-(1+2/d), 0] for eta and in [-2/d, 0] for tau because the
    inner functions are nonincreasing; a violation means a numerical bug.
    """
    grid = np.asarray(v_grid, dtype=float)
    if which == "eta":
        _require_existence(spec, params)
        lo, fn = -_crit(params), xi_eta
    elif which == "tau":
        _require_local(spec, params)
        lo, fn = -2.0 / params.d, xi_tau
    else:
        raise ValueError("which must be 'eta' or 'tau'")
    xi = np.array([fn(spec, params, float(v)) for v in grid])
    bad = (xi < lo - ERV_TOL) | (xi > ERV_TOL) | ~np.isfinite(xi)
    if np.any(bad):
        raise BracketViolation(f"xi outside [{lo:g}, 0] at levels {grid[bad]}: {xi[bad]}")
    return ErvBracket(lo, 0.0, grid, xi, which)


# ---------------------------------------------------------------------------
# tail curves
KINDS = ("exact_quadrature", "exact_alternate", "asymptotic", "empirical")


def level_grid(lo: float, hi: float, per_decade: int = 40) -> np.ndarray:
    n = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.logspace(math.log10(lo), math.log10(hi), n)


def fingerprint(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TailCurve:
    levels: np.ndarray
    values: np.ndarray
    kind: str
    ci_halfwidth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    ci_lower: Optional[np.ndarray] = None
    ci_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.levels.shape != self.values.shape:
            raise ValueError("levels and values must have equal length")
        if np.any(np.diff(self.levels) <= 0) or np.any(self.levels <= 0):
            raise ValueError("levels must be positive and strictly increasing")

    def rows(self):
        hw = self.ci_halfwidth if self.ci_halfwidth is not None else [None] * len(self.levels)
        for r, v, h in zip(self.levels, self.values, hw):
            yield float(r), float(v), self.kind, (None if h is None else float(h))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "meta": self.meta,
            "levels": self.levels.tolist(),
            "values": self.values.tolist(),
            "ci_halfwidth": None if self.ci_halfwidth is None else np.asarray(self.ci_halfwidth).tolist(),
        }


def tail_curve(quantity: str, spec, params, levels, kind="exact_quadrature", A=None) -> TailCurve:
    """Evaluate one of eta, tau, eta0, etaA on ``levels`` as a TailCurve."""
    levels = np.asarray(levels, dtype=float)
    table = {
        ("eta", "exact_quadrature"): lambda: eta_tail(spec, params, levels),
        ("eta", "exact_alternate"): lambda: eta_tail_alternate(spec, params, levels),
        ("eta", "asymptotic"): lambda: eta_tail_asymptotic(spec, params, levels),
        ("tau", "exact_quadrature"): lambda: tau_tail(spec, params, levels),
        ("tau", "exact_alternate"): lambda: np.array([tau_tail_forms(spec, params, max(v, 1.0) if params.d == 1 else v)[2] for v in levels]),
        ("tau", "asymptotic"): lambda: tau_tail_asymptotic(spec, params, levels),
        ("eta0", "exact_quadrature"): lambda: eta0_tail(spec, params, levels),
        ("etaA", "exact_quadrature"): lambda: etaA_tail(spec, params, levels, A=A),
    }
    if (quantity, kind) not in table:
        raise ValueError(f"no {kind} evaluator for {quantity}")
    meta = {"quantity": quantity, "measure": spec.to_dict(), "params": params.to_dict()}
    meta["fingerprint"] = fingerprint(meta)
    return TailCurve(levels, np.asarray(table[(quantity, kind)](), dtype=float), kind, meta=meta)
