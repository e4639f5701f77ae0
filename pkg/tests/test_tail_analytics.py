import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from levy_she.errors import ConditionViolated, Unclassified
from levy_she.levy_measure import Custom, LogTail, ModelParams, ParetoTail, PointMass, StableLike, TruncatedExp
from levy_she.tail_analytics import (
    TailCurve,
    classify_eta,
    classify_tau,
    erv_diagnostic,
    eta0_sandwich,
    eta0_tail,
    eta_tail,
    eta_tail_alternate,
    eta_tail_asymptotic,
    etaA_regular_constant,
    etaA_tail,
    karamata_L0,
    level_grid,
    peak_intensity,
    steiner_coefficients,
    sup_law_Ybar,
    sup_law_XbarA,
    tail_curve,
    tau_tail,
    tau_tail_asymptotic,
    tau_tail_forms,
)

from conftest import KAPPA

P1 = ModelParams(d=1, kappa=KAPPA, t=1.0)
PM = PointMass(1.0, 1.0)
ETA_PM = 2 / 3**1.5  # eta_bar(r) = ETA_PM r^-3 for the unit point mass, d = 1


def test_point_mass_eta_closed_form():
    for r in (1.0, 2.0, 10.0, 123.4, 1e4):
        assert eta_tail(PM, P1, r) == pytest.approx(ETA_PM * r**-3, rel=1e-10)
        assert eta_tail_alternate(PM, P1, r) == pytest.approx(ETA_PM * r**-3, rel=1e-10)
    assert eta_tail(PM, P1, 10.0) == pytest.approx(3.849e-4, rel=1e-4)
    assert eta_tail(PM, P1, 5.0) / eta_tail(PM, P1, 10.0) == pytest.approx(8.0, rel=1e-10)


def test_point_mass_tau_closed_form():
    for r in (1.0, 3.0, 10.0, 1e3):
        assert tau_tail(PM, P1, r) == pytest.approx(r**-2, rel=1e-10)
        # the moment bound is attained: tau_bar(r) = r^-2 m_2 / (2 pi kappa)
        assert tau_tail(PM, P1, r) == pytest.approx(r**-2 * PM.total_moment(2.0), rel=1e-10)
    assert sup_law_XbarA(PM, P1, 1.0, 10.0) == pytest.approx(-math.expm1(-0.01), rel=1e-10)
    assert sup_law_Ybar(PM, P1, 10.0) == pytest.approx(math.exp(-ETA_PM * 1e-3), rel=1e-12)


@pytest.mark.parametrize(
    "spec", [ParetoTail(1.0), ParetoTail(2.0), LogTail(2.0), StableLike(1.5, 1.0), TruncatedExp(1.5, 2.0)], ids=repr
)
def test_dual_representation(spec):
    levels = np.logspace(-1, 6, 8) if not isinstance(spec, LogTail) else np.logspace(0, 6, 4)
    a = eta_tail(spec, P1, levels)
    b = eta_tail_alternate(spec, P1, levels)
    np.testing.assert_allclose(b, a, rtol=1e-6)


def test_dual_representation_higher_dimensions():
    for d in (2, 3):
        p = ModelParams(d=d, kappa=0.3, t=2.0)
        for spec in (PM, ParetoTail(1.0), StableLike(0.5, 1.0)):
            levels = [0.05, 3.0, 500.0]
            np.testing.assert_allclose(eta_tail_alternate(spec, p, levels), eta_tail(spec, p, levels), rtol=1e-6)


def test_log_tail_finite_far_out():
    v = eta_tail(LogTail(2.0), P1, math.exp(10.0))
    assert math.isfinite(v) and v > 0


def test_eta_requires_existence():
    with pytest.raises(ConditionViolated):
        eta_tail(LogTail(0.4), P1, 10.0)


# ---------------------------------------------------------------------------
# asymptotics
def test_asymptotic_examples():
    for r in (10.0, 1e3):
        assert eta_tail_asymptotic(PM, P1, r) == pytest.approx(ETA_PM * r**-3, rel=1e-12)
        assert eta_tail_asymptotic(ParetoTail(2.0), P1, r) == pytest.approx(math.sqrt(2) * r**-2, rel=1e-12)
        assert tau_tail_asymptotic(ParetoTail(1.0), P1, r) == pytest.approx(2 / r, rel=1e-12)
        assert tau_tail_asymptotic(PM, P1, r) == pytest.approx(tau_tail(PM, P1, r), rel=1e-10)


def test_log_tail_L0_beta_identity():
    lt = LogTail(2.0)
    for r in (50.0, 1e4):
        closed = karamata_L0(lt, P1, r)
        assert closed == pytest.approx(math.log(r) ** (0.5 - 2) * special.beta(0.5, 1.5), rel=1e-14)
        # oracle: int_0^inf lam_bar(r e^v) v^(d/2 - 1) dv
        f = lambda v: (math.log(r) + v) ** -2.0 * v**-0.5
        want = integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0]
        assert closed == pytest.approx(want, rel=1e-8)


def test_tau_critical_regime_log_growth():
    # lam_bar(r) = r^-1 with d = 2 sits at the critical exponent 2/d
    p2 = ModelParams(d=2, kappa=KAPPA, t=1.0)
    spec = ParetoTail(1.0)
    assert classify_tau(spec, p2) == "critical"
    ratios = [tau_tail(spec, p2, r) / tau_tail_asymptotic(spec, p2, r) for r in (1e3, 1e5, 1e7)]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    assert tau_tail_asymptotic(spec, p2, 1e4) == pytest.approx(math.log(1e4) * 1e-4, rel=1e-10)


def test_unclassified_custom():
    c = Custom(tail_fn=lambda r: min(1.0, r**-3.0), density_fn=lambda z: 3 * z**-4.0 if z > 1 else 0.0, tail_index=3.0, breakpoints=(1.0,))
    with pytest.raises(Unclassified):
        classify_eta(c, P1)


# ---------------------------------------------------------------------------
# tau forms and local peaks
@pytest.mark.parametrize("d", [1, 2, 3])
def test_tau_three_forms(d):
    p = ModelParams(d=d, kappa=0.4, t=1.3)
    specs = [PM, ParetoTail(1.0), LogTail(2.0), TruncatedExp(1.5, 2.0)]
    if d == 1:
        specs.append(StableLike(1.5, 1.0))
    for spec in specs:
        for r in (1.5, 40.0, 1e5):
            forms = tau_tail_forms(spec, p, r)
            assert forms[1] == pytest.approx(forms[0], rel=1e-8)
            assert forms[2] == pytest.approx(forms[0], rel=1e-8)


def test_tau_pareto_d2_example():
    p2 = ModelParams(d=2, kappa=KAPPA, t=1.0)
    r = math.exp(5.0)
    f1, _, f3 = tau_tail_forms(ParetoTail(1.0), p2, r)
    # oracle for the third form: (1/(pi kappa d)) r^-1 int_0^r lam_bar(u) du = r^-1 (1 + log r)
    assert f3 == pytest.approx((1 + 5.0) / r, rel=1e-10)
    assert f1 == pytest.approx(f3, rel=1e-8)


def test_moment_bound_on_tau():
    for spec in (PM, ParetoTail(3.0), TruncatedExp(1.5, 2.0)):
        for r in (2.0, 30.0, 1e3):
            assert tau_tail(spec, P1, r) <= r**-2 * spec.total_moment(2.0) * (1 + 1e-12)


# ---------------------------------------------------------------------------
# supremum over a box
def test_steiner_coefficients():
    # unit square: area 1, perimeter term 4 * 1/2 * v_1 = 4, v_2 = pi
    np.testing.assert_allclose(steiner_coefficients([1.0, 1.0]), [1.0, 4.0, math.pi])
    np.testing.assert_allclose(steiner_coefficients([0.0]), [0.0, 2.0])


def test_etaA_bounds_and_limits():
    A = ([0.0], [1.0])
    levels = [2.0, 1e2, 1e4]
    vals = etaA_tail(PM, P1, levels, A=A)
    taus = tau_tail(PM, P1, levels)
    assert np.all(vals >= taus * (1 - 1e-10))
    ratios = vals / taus
    assert np.all(np.diff(ratios) < 0) and ratios[-1] == pytest.approx(1.0, abs=1e-3)
    # a single point reduces to eta_bar
    assert etaA_tail(PM, P1, 10.0, A=([0.0], [0.0])) == pytest.approx(eta_tail(PM, P1, 10.0), rel=1e-7)


def test_etaA_regular_constant():
    spec = ParetoTail(0.5)
    A = ([0.0], [1.0])
    # oracle with 2 pi kappa = 1: int_0^1 s^-1/4 (1 + sqrt(2 s)) ds
    const = 4 / 3 + 0.8 * math.sqrt(2)
    assert etaA_regular_constant(P1, 0.5, A) == pytest.approx(const, rel=1e-10)
    assert etaA_tail(spec, P1, 1e4, A=A) / float(spec.tail(1e4)) == pytest.approx(const, rel=1e-5)


# ---------------------------------------------------------------------------
# lattice tail
def test_eta0_point_mass_equals_eta():
    for r in (1.0, 7.0, 1e3):
        assert eta0_tail(PM, P1, r) == pytest.approx(eta_tail(PM, P1, r), rel=1e-8)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_eta0_sandwich(d):
    p = ModelParams(d=d, kappa=KAPPA, t=1.0)
    sw = eta0_sandwich(p)
    for spec in (PM, ParetoTail(1.0), ParetoTail(3.0), LogTail(2.0), TruncatedExp(1.5, 2.0)):
        for r in (1.5, 20.0, 1e3):
            v = eta0_tail(spec, p, r)
            assert sw.lower(spec, p, r) <= v * (1 + 1e-9)
            assert v <= sw.upper(spec, p, r) * (1 + 1e-9)
            assert v <= eta_tail(spec, p, r) * (1 + 1e-9)


def test_eta0_log_tail_ratio_decreases():
    lt = LogTail(2.0)
    ratios = [eta0_tail(lt, P1, r) / eta_tail(lt, P1, r) for r in (1e2, 1e3, 1e4)]
    assert ratios[0] > ratios[1] > ratios[2]


# ---------------------------------------------------------------------------
# extended regular variation
def test_erv_limits():
    grid = np.logspace(0, 6, 7)
    tau_pm = erv_diagnostic("tau", PM, P1, grid)
    assert tau_pm.xi_limit == pytest.approx(-2.0, abs=1e-6)
    eta_p1 = erv_diagnostic("eta", ParetoTail(1.0), P1, grid)
    assert eta_p1.xi_limit == pytest.approx(-1.0, abs=1e-3)
    assert eta_p1.theta_lo == -3.0 and eta_p1.theta_hi == 0.0


# ---------------------------------------------------------------------------
# curves
def test_tail_curve_monotone_and_tagged():
    levels = level_grid(1.0, 1e3, 10)
    for q in ("eta", "tau", "eta0", "etaA"):
        c = tail_curve(q, ParetoTail(2.0), P1, levels, A=([0.0], [1.0]))
        assert np.all(np.diff(c.values) <= 0)
        assert len(c.meta["fingerprint"]) == 16
    with pytest.raises(ValueError):
        TailCurve([2.0, 1.0], [0.1, 0.2], "exact_quadrature")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1e5), st.floats(1.001, 100.0), st.sampled_from([PM, ParetoTail(1.0), ParetoTail(3.0), StableLike(1.5, 1.0)]))
def test_eta_tail_nonincreasing(r, factor, spec):
    assert eta_tail(spec, P1, r * factor) <= eta_tail(spec, P1, r) * (1 + 1e-12)
    assert peak_intensity(spec, P1, r * factor) <= peak_intensity(spec, P1, r) * (1 + 1e-12)
