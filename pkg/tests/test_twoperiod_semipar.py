import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from persuasion_did import errors
from persuasion_did.dataset import TwoPeriodPanel, to_cells
from persuasion_did.errors import EstimationError
from persuasion_did.nuisance import ConstantModel, FoldPlan, Method, NuisanceFit, fit_nuisance
from persuasion_did.sim import DiscreteCovariates, TwoPeriodDgp, gen_two_period, oracle
from persuasion_did.twoperiod_reg import aprt_from_fe, fit_two_way_fe, raprt_from_fe
from persuasion_did.twoperiod_semipar import (ESTIMATORS, Link, PsiEvaluator, eif_terms, estimate_did,
                                              estimate_dr, estimate_pi, estimate_pow,
                                              estimate_unconfoundedness_mode, link_compose, psi,
                                              test_y0_independence)

from conftest import cell_panel, design_panel, random_panel

MEANS = (0.3, 0.4, 0.2, 0.8)


def test_link_identity_and_logit():
    assert link_compose(0.2, 0.4, 0.3, "IDENTITY")[0] == pytest.approx(0.3)
    assert link_compose(0.2, 0.4, 0.3, "LOGIT")[0] == pytest.approx(expit(-0.94446), abs=1e-5)
    assert link_compose(0.2, 0.4, 0.3, "LOGIT")[0] == pytest.approx(0.2800, abs=1e-4)


@pytest.mark.parametrize("link", list(Link))
@given(st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_link_cancellation(link, a, p):
    assert link_compose(a, p, a, link)[0] == pytest.approx(p, abs=1e-12)


def test_identity_clipping_counted():
    v, clipped = link_compose(np.array([0.9, 0.1]), np.array([0.9, 0.2]), np.array([0.5, 0.1]))
    assert v.tolist() == [1.0, pytest.approx(0.2)] and clipped == 1


def test_exponential_domain():
    with pytest.raises(EstimationError) as exc:
        link_compose(0.1, 0.1, 0.5, "EXPONENTIAL")
    assert exc.value.code == errors.LINK_DOMAIN
    with pytest.raises(EstimationError):
        link_compose(0.0, 0.3, 0.2, "LOGIT")


def test_did_constant_matches_fe():
    panel = cell_panel(MEANS)
    fit = fit_nuisance(panel, Method.CONSTANT)
    assert estimate_did(panel, fit).point == pytest.approx(0.714286, abs=1e-6)
    assert psi(PsiEvaluator(fit), np.zeros(0)) == pytest.approx(0.3)


def test_equal_trends_give_zero():
    panel = cell_panel((0.3, 0.5, 0.1, 0.3))
    fit = fit_nuisance(panel, Method.CONSTANT)
    for f in ESTIMATORS.values():
        assert f(panel, fit).point == pytest.approx(0.0, abs=1e-12)


def test_discrete_did_matches_cell_enumeration(rng):
    panel = random_panel(rng, 600, k=1, levels=3)
    fit = fit_nuisance(panel, Method.CELL_MEANS)
    table = to_cells(panel, discrete_x=True)
    num = den = 0.0
    for lev in table.levels():
        w = table.level_count(lev, d=1)
        ps = table.mean(0, 1, lev) + table.mean(1, 0, lev) - table.mean(0, 0, lev)
        ps = min(max(ps, 0.0), 1.0)
        num += w * (table.mean(1, 1, lev) - ps)
        den += w * (1 - ps)
    assert estimate_did(panel, fit).point == pytest.approx(num / den, abs=1e-12)


def test_discrete_pi_matches_cell_enumeration(rng):
    panel = random_panel(rng, 600, k=1, levels=3)
    fit = fit_nuisance(panel, Method.CELL_MEANS)
    table = to_cells(panel, discrete_x=True)
    num = den = 0.0
    for lev in table.levels():
        w = table.level_count(lev, d=1)
        d0 = table.mean(1, 0, lev) - table.mean(0, 0, lev)
        num += w * (table.mean(1, 1, lev) - table.mean(0, 1, lev) - d0)
        den += w * (1 - table.mean(0, 1, lev) - d0)
    assert estimate_pi(panel, fit).point == pytest.approx(num / den, abs=1e-12)


def test_pi_collapse_case():
    # Delta(0,.) = 0 and Y0 = 0 among treated: point is mean(Y1 | D=1)
    y0 = np.zeros(8)
    y1 = np.array([1, 0, 1, 1, 1, 0, 1, 0], float)
    d = np.array([1, 1, 1, 1, 0, 0, 0, 0], float)
    panel = TwoPeriodPanel(y0, np.r_[y1[:4], [0, 0, 0, 0]], d)
    fit = fit_nuisance(panel, Method.CONSTANT)
    assert estimate_pi(panel, fit).point == pytest.approx(0.75)


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.integers(20, 500))
def test_no_covariate_collapse(seed, n):
    panel = design_panel(np.random.default_rng(seed), (n, n + 1))
    t = panel.treated
    psi_hat = panel.y0[t].mean() + panel.y1[~t].mean() - panel.y0[~t].mean()
    if not 0 <= psi_hat <= 1:
        return  # identity-link clipping changes DID only
    fit = fit_nuisance(panel, Method.CONSTANT)
    fe = fit_two_way_fe(panel)
    for target, fe_fn in (("APRT", aprt_from_fe), ("RAPRT", raprt_from_fe)):
        try:
            ref = fe_fn(fe, panel)
            reps = [f(panel, fit, target) for f in ESTIMATORS.values()]
        except EstimationError:
            continue
        for r in reps:
            assert abs(r.point - ref.point) <= 1e-10
            assert abs(r.se**2 - ref.se**2) <= 1e-10


@given(st.integers(0, 100_000))
def test_numerators_agree_across_targets(seed):
    panel = random_panel(np.random.default_rng(seed), 200, k=1, levels=2)
    fit = fit_nuisance(panel, Method.CELL_MEANS)
    for f in ESTIMATORS.values():
        try:
            a, b = f(panel, fit, "APRT"), f(panel, fit, "RAPRT")
        except EstimationError:
            continue
        scale = panel.n if f is estimate_pow else 1
        assert a.diagnostics["numerator"] == pytest.approx(b.diagnostics["numerator"], abs=1e-12 * scale)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1),
                          st.floats(-2, 2), st.floats(0, 50)), min_size=1, max_size=50))
def test_pow_pi_identity(rows):
    y0, y1, d, delta0, odds = (np.array(c, float) for c in zip(*rows))
    t = eif_terms(y0, y1, d, delta0, odds)
    assert np.allclose(t.pow_num + t.pow_adj, t.pi_num + t.pi_adj, rtol=0, atol=1e-12)
    assert np.allclose(t.pow_den + t.pow_adj, t.pi_den + t.pi_adj, rtol=0, atol=1e-12)


def test_pow_equals_pi_with_constant_propensity(rng):
    panel = random_panel(rng, 300)
    fit = fit_nuisance(panel, Method.CONSTANT)
    assert estimate_pow(panel, fit).point == pytest.approx(estimate_pi(panel, fit).point, abs=1e-12)


def _x_dgp():
    cov = DiscreteCovariates(np.array([[0.0], [1.0], [2.0]]), np.array([0.3, 0.4, 0.3]))
    return TwoPeriodDgp(cov, np.array([0.2, 0.5, 0.8]), np.array([[0.1, 0.3, 0.5], [0.15, 0.45, 0.75]]),
                        np.array([[0.0, 0.0, 0.0], [0.05, 0.05, 0.05]]), np.array([0.3, 0.4, 0.5]))


def test_dr_records_cross_fitting():
    panel = gen_two_period(_x_dgp(), 3000, 5)
    rep = estimate_dr(panel, fit_nuisance(panel, Method.CELL_MEANS, folds=FoldPlan(3, 1)))
    assert rep.diagnostics["cross_fitted"] == ["outcome", "propensity"]
    assert abs(rep.point - oracle(_x_dgp()).theta) < 4 * rep.se


def test_dr_with_logistic_legs():
    dgp = _x_dgp()
    panel = gen_two_period(dgp, 20_000, 11)
    rep = estimate_dr(panel, fit_nuisance(panel, Method.LOGISTIC))
    assert abs(rep.point - oracle(dgp).theta) < 4 * rep.se


def test_outside_unit_interval_flagged():
    panel = cell_panel((0.5, 0.1, 0.1, 0.9))
    rep = estimate_pi(panel, fit_nuisance(panel, Method.CONSTANT), "RAPRT")
    assert rep.point > 1 and any("outside" in w for w in rep.warnings)


def test_degenerate_denominator():
    panel = cell_panel((0.0, 0.5, 0.5, 1.0))
    with pytest.raises(EstimationError) as exc:
        estimate_did(panel, fit_nuisance(panel, Method.CONSTANT))
    assert exc.value.code == errors.DEGENERATE_DENOMINATOR


def test_unconfoundedness_mode_runs():
    panel = gen_two_period(_x_dgp(), 4000, 2)
    rep = estimate_unconfoundedness_mode(panel, Method.CELL_MEANS)
    assert rep.diagnostics["mode"] == "UNCONFOUNDEDNESS"
    assert 0 <= rep.point <= 1


def test_independence_test_power_and_size():
    rng = np.random.default_rng(4)
    n = 10_000
    x = rng.normal(size=n)
    y0 = (rng.random(n) < 0.4).astype(float)
    d_null = (rng.random(n) < expit(0.3 * x)).astype(float)
    d_alt = (rng.random(n) < expit(0.3 * x + y0 - 0.5)).astype(float)
    y1 = (rng.random(n) < 0.5).astype(float)
    alt = test_y0_independence(TwoPeriodPanel(y0, y1, d_alt, x))
    null = test_y0_independence(TwoPeriodPanel(y0, y1, d_null, x))
    assert alt.pvalue < 0.01
    assert null.pvalue > 0.001


def test_user_supplied_nuisance_functions(rng):
    panel = random_panel(rng, 200)
    const = {arm: ConstantModel(0.4) for arm in ((0, 0), (1, 0), (0, 1), (1, 1))}
    fit = NuisanceFit.from_functions(const, lambda x: np.full(x.shape[0], 0.5))
    rep = estimate_dr(panel, fit)
    assert np.isfinite(rep.point) and rep.se > 0
