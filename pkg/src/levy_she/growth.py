"""Integral tests for the spatial growth of peaks and their event simulation.

The normalized limsup of sup_{|y|<=x} Y(t, y) / f(x) is 0 or infinity
according as int_1^inf r^(d-1) tau_bar(f(r)) dr converges or diverges; on the
integer lattice the same holds with eta_bar (upper) and eta_bar_0 (lower).

Peak events are simulated by exact Poisson thinning: the number of atoms of
the noise in an event set is Poisson with a mean given in closed form by the
tail functions, so no field is ever evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import Unclassified
from .levy_measure import (
    LevyMeasure,
    LogTail,
    ModelParams,
    ParetoTail,
    PointMass,
    StableLike,
    TruncatedExp,
    check_conditions,
    make_rng,
    require,
    unit_ball_volume,
)
from .tail_analytics import classify_eta, classify_tau, eta0_tail, eta_tail, peak_intensity

CONVERGES = "CONVERGES"
DIVERGES = "DIVERGES"
INDETERMINATE = "INDETERMINATE"
EVENT_KINDS = ("V_event", "large_jump_event", "lattice_event")
TESTS = ("tau", "eta", "eta0")
SLOPE_MARGIN = 0.1


class RateFunction:
    """Nondecreasing positive f on (0, inf)."""

    name = "rate"

    def __call__(self, r):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PowerLog(RateFunction):
    """f(r) = r^a (log r)^b for r >= 2, and f(r) = f(2) below."""

    name = "PowerLog"

    def __init__(self, a: float, b: float = 0.0):
        self.a = float(a)
        self.b = float(b)
        if self.a < 0 or (self.a == 0 and self.b < 0) or self.a * math.log(2.0) + self.b < 0:
            raise ValueError("PowerLog(a, b) must be nondecreasing on [2, inf)")

    def __call__(self, r):
        r = np.maximum(np.asarray(r, dtype=float), 2.0)
        out = r**self.a * np.log(r) ** self.b
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"form": "PowerLog", "a": self.a, "b": self.b}


class CustomRate(RateFunction):
    """User-supplied callable, checked for monotonicity on a log grid."""

    name = "Custom"

    def __init__(self, fn: Callable[[float], float], label: str = "custom"):
        self.fn = fn
        self.label = label
        grid = np.logspace(0, 8, 400)
        vals = np.array([float(fn(x)) for x in grid])
        if np.any(vals <= 0) or np.any(np.diff(vals) < -1e-12 * np.abs(vals[1:])):
            raise ValueError("rate function must be positive and nondecreasing")

    def __call__(self, r):
        if np.ndim(r) == 0:
            return float(self.fn(float(r)))
        return np.array([float(self.fn(float(v))) for v in np.ravel(r)]).reshape(np.shape(r))

    def to_dict(self):
        return {"form": "Custom", "label": self.label}


def rate_from_dict(cfg: dict) -> RateFunction:
    form = cfg.get("form", "PowerLog")
    if form != "PowerLog":
        raise ValueError("only PowerLog rates can be built from a config")
    return PowerLog(cfg["a"], cfg.get("b", 0.0))


# ---------------------------------------------------------------------------
def _require(which, spec, params):
    report = check_conditions(spec, params)
    if which == "tau":
        require(report, "local_sup_finite")
    else:
        require(report, "mild_solution_exists")
    if params.d == 1:
        require(report, "q_condition")
    return report


def tail_function(which: str, spec, params) -> Callable[[float], float]:
    if which == "tau":
        return lambda r: peak_intensity(spec, params, r)
    if which == "eta":
        return lambda r: float(eta_tail(spec, params, r))
    if which == "eta0":
        return lambda r: float(eta0_tail(spec, params, r))
    raise ValueError(f"which must be one of {TESTS}")


def tail_exponents(which: str, spec: LevyMeasure, params: ModelParams) -> Optional[tuple]:
    """(p, k) with tail(r) comparable to r^-p (log r)^k, or None if unknown.

    eta0 shares the exponents of eta whenever the two are comparable; for the
    log tail both are slowly varying, where the verdict does not depend on k.
    """
    if spec.estimated:
        return None
    d = params.d
    try:
        regime = classify_tau(spec, params) if which == "tau" else classify_eta(spec, params)
    except Unclassified:
        return None
    crit = 2.0 / d if which == "tau" else 1.0 + 2.0 / d
    if regime == "finite_moment":
        return crit, 0.0
    if isinstance(spec, (ParetoTail, StableLike)):
        return (crit, 1.0) if regime == "critical" else (spec.tail_index, 0.0)
    if isinstance(spec, LogTail):
        if which == "eta":
            return 0.0, d / 2 - spec.beta
        return 0.0, -spec.beta
    if isinstance(spec, (PointMass, TruncatedExp)):
        return crit, 0.0
    return None


def analytic_verdict(which: str, spec, params, f: RateFunction) -> Optional[str]:
    """Exponent comparison of r^(d-1) tail(f(r)) against 1/r for PowerLog f."""
    if not isinstance(f, PowerLog):
        return None
    ex = tail_exponents(which, spec, params)
    if ex is None:
        return None
    p, k = ex
    power = params.d - 1 - f.a * p
    if power != -1:
        return CONVERGES if power < -1 else DIVERGES
    # a > 0 here, so log f(r) ~ a log r
    log_power = -f.b * p + k
    return CONVERGES if log_power < -1 else DIVERGES


def partial_integrals(which: str, spec, params, f: RateFunction, R_values=(1e2, 1e4, 1e6), per_decade: int = 60):
    """int_1^R r^(d-1) tail(f(r)) dr on a log grid, plus the integrand samples."""
    tail = tail_function(which, spec, params)
    top = math.log10(max(R_values))
    x = np.linspace(0.0, top * math.log(10), int(per_decade * top) + 1)
    r = np.exp(x)
    vals = np.array([tail(float(v)) for v in np.atleast_1d(f(r))])
    integrand = r ** (params.d - 1) * vals * r
    cum = cumulative_trapezoid(integrand, x, initial=0.0)
    est = {float(R): float(np.interp(math.log(R), x, cum)) for R in R_values}
    return est, r, r ** (params.d - 1) * vals


def numeric_verdict(r, integrand, lo: float = 1e4, hi: float = 1e6) -> tuple:
    """Power-law slope of the integrand over [lo, hi] and the heuristic verdict.

    The slope comes from a least-squares fit of log integrand against log r and
    log log r, so a slowly varying log factor does not masquerade as extra decay.
    """
    keep = (r >= lo * (1 - 1e-9)) & (r <= hi * (1 + 1e-9))
    rr, vv = r[keep], integrand[keep]
    if np.any(vv <= 0):
        return -math.inf, CONVERGES
    lr = np.log(rr)
    design = np.column_stack([np.ones_like(lr), lr, np.log(lr)])
    coef = np.linalg.lstsq(design, np.log(vv), rcond=None)[0]
    slope = float(coef[1])
    if slope < -1 - SLOPE_MARGIN:
        return slope, CONVERGES
    if slope > -1 + SLOPE_MARGIN:
        return slope, DIVERGES
    return slope, INDETERMINATE


@dataclass
class GrowthReport:
    verdict: str
    which: Optional[str] = None
    analytic_verdict: Optional[str] = None
    numeric_verdict: Optional[str] = None
    slope: Optional[float] = None
    integral_estimates: dict = field(default_factory=dict)
    event_kind: Optional[str] = None
    annuli: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    peak_counts: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def event_probabilities(self) -> np.ndarray:
        return -np.expm1(-self.means)

    @property
    def expected_total(self) -> float:
        return float(self.event_probabilities.sum())

    def indicators(self) -> np.ndarray:
        return self.peak_counts >= 1

    def total_events(self) -> np.ndarray:
        """Number of annuli with an event, per run."""
        return self.indicators().sum(axis=1)

    def cumulative(self):
        """(n, cumulative expected, mean cumulative observed)."""
        exp_c = np.cumsum(self.event_probabilities)
        obs_c = np.cumsum(self.indicators().mean(axis=0))
        return self.annuli, exp_c, obs_c

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "which": self.which,
            "analytic_verdict": self.analytic_verdict,
            "numeric_verdict": self.numeric_verdict,
            "slope": self.slope,
            "integral_estimates": {f"{k:.12g}": v for k, v in self.integral_estimates.items()},
            "meta": self.meta,
        }
        if self.event_kind is not None:
            ind = self.indicators()
            out["event_kind"] = self.event_kind
            out["expected_total"] = self.expected_total
            out["observed_totals"] = self.total_events().tolist()
            out["rows"] = [[int(n), float(m), int(i)] for n, m, i in zip(self.annuli, self.means, ind[0])]
        return out

    def to_csv(self) -> str:
        """Count trajectories: n, expected cumulative, mean observed cumulative."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mean", "expected_cumulative", "observed_cumulative"])
        n, e, o = self.cumulative()
        for row in zip(n, self.means, e, o):
            w.writerow([int(row[0])] + [f"{v:.12g}" for v in row[1:]])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def integral_test(which: str, spec, params: ModelParams, f: RateFunction, R_values=(1e2, 1e4, 1e6), numeric: bool = True) -> GrowthReport:
    """Convergence verdict for int_1^inf r^(d-1) tail(f(r)) dr.

    The analytic exponent comparison decides whenever it is available; the
    numeric slope heuristic is reported alongside.
    """
    if which not in TESTS:
        raise ValueError(f"which must be one of {TESTS}")
    _require(which, spec, params)
    ana = analytic_verdict(which, spec, params, f)
    est, slope, num = {}, None, None
    if numeric or ana is None:
        est, r, integrand = partial_integrals(which, spec, params, f, R_values)
        slope, num = numeric_verdict(r, integrand)
    verdict = ana if ana is not None else num
    meta = {"rate": f.to_dict(), "measure": spec.to_dict(), "params": params.to_dict()}
    return GrowthReport(verdict, which, ana, num, slope, est, meta=meta)


# ---------------------------------------------------------------------------
def lattice_shell_counts(n_max: int, d: int) -> np.ndarray:
    """#{y in Z^d : n <= |y| < n + 1} for n = 1..n_max."""
    if d == 1:
        return np.full(n_max, 2, dtype=np.int64)
    edges = np.arange(1, n_max + 2, dtype=np.int64) ** 2
    return np.diff(_count_below(edges, d))


def _count_below(m: np.ndarray, d: int) -> np.ndarray:
    """#{y in Z^d : |y|^2 < m} for each integer m."""
    m = np.asarray(m, dtype=np.int64)
    if d == 1:
        k = np.floor(np.sqrt(np.maximum(m - 1, 0))).astype(np.int64)
        k += (k + 1) ** 2 <= m - 1
        k -= k**2 > m - 1
        return np.where(m >= 1, 2 * k + 1, 0)
    top = int(math.isqrt(int(m.max())))
    out = np.zeros(len(m), dtype=np.int64)
    for x in range(-top, top + 1):
        out += _count_below(m - x * x, d - 1)
    return out


def event_means(kind: str, spec, params: ModelParams, f: RateFunction, K: float = 1.0, n_max: int = 1000, delta: Optional[float] = None):
    """Poisson means (or exceedance intensities) of the event for annuli n = 1..n_max."""
    if kind not in EVENT_KINDS:
        raise ValueError(f"event_kind must be one of {EVENT_KINDS}")
    if n_max < 10:
        raise ValueError("n_max must be at least 10")
    if not K > 0:
        raise ValueError("K must be positive")
    d = params.d
    n = np.arange(1, n_max + 1)
    shell = unit_ball_volume(d) * ((n + 1.0) ** d - n.astype(float) ** d)
    if kind == "V_event":
        _require("tau", spec, params)
        levels = K * np.asarray(f(n + 1.0), dtype=float)
        return n, shell * np.array([peak_intensity(spec, params, float(v)) for v in levels])
    if kind == "large_jump_event":
        _require("tau", spec, params)
        delta = params.t / 2 if delta is None else float(delta)
        if not 0 < delta < params.t:
            raise ValueError("delta must lie in (0, t)")
        levels = K * np.asarray(f(n.astype(float)), dtype=float)
        return n, shell * (params.t - delta) * np.asarray(spec.tail(levels), dtype=float)
    _require("eta0", spec, params)
    levels = K * np.asarray(f(n.astype(float)), dtype=float)
    return n, lattice_shell_counts(n_max, d) * np.asarray(eta0_tail(spec, params, levels), dtype=float)


def peak_events(
    kind: str,
    spec,
    params: ModelParams,
    f: RateFunction,
    K: float = 1.0,
    n_max: int = 1000,
    delta: Optional[float] = None,
    seed=None,
    runs: int = 1,
) -> GrowthReport:
    """Simulate per-annulus event counts; run j uses the stream (seed, j).

    V_event and large_jump_event counts are Poisson atom counts in the event
    set. lattice_event counts are the numbers of lattice points in the annulus
    whose single-atom contribution exceeds K f(n), each an independent
    Bernoulli draw with probability 1 - exp(-eta_bar_0(K f(n))).
    """
    n, means = event_means(kind, spec, params, f, K, n_max, delta)
    counts = np.empty((runs, n_max), dtype=np.int64)
    if kind == "lattice_event":
        pts = lattice_shell_counts(n_max, params.d)
        prob = -np.expm1(-means / pts)
    for j in range(runs):
        rng = make_rng(seed, j)
        counts[j] = rng.binomial(pts, prob) if kind == "lattice_event" else rng.poisson(means)
    meta = {"K": K, "n_max": n_max, "runs": runs, "seed": seed, "rate": f.to_dict(), "measure": spec.to_dict()}
    if kind == "large_jump_event":
        meta["delta"] = params.t / 2 if delta is None else delta
    ana = analytic_verdict("eta0" if kind == "lattice_event" else "tau", spec, params, f)
    return GrowthReport(ana or INDETERMINATE, None, ana, None, None, {}, kind, n, means, counts, meta)
