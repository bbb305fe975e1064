import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persuasion_did import errors
from persuasion_did.dataset import StaggeredPanel
from persuasion_did.errors import EstimationError
from persuasion_did.sim import DiscreteCovariates, StaggeredDgp, gen_staggered, monte_carlo, oracle
from persuasion_did.staggered import (eligible_cohorts, espr, espr_pretrend, event_study_regression,
                                      long_rows, pairwise_theta, theta_from_event_study)
from persuasion_did.twoperiod_reg import aprt_from_fe, fit_two_way_fe

from conftest import cell_panel, random_staggered


def _from_two_period(tp):
    return StaggeredPanel(np.column_stack([tp.y0, tp.y1]), np.where(tp.d1 == 1, 1.0, np.inf))


def test_t1_cell_means():
    sp = _from_two_period(cell_panel((0.3, 0.4, 0.2, 0.8)))
    assert pairwise_theta(sp, 1, 0).theta == pytest.approx(0.714286, abs=1e-6)
    assert espr(sp, 0).theta == pytest.approx(0.714286, abs=1e-6)


def test_reference_horizon(rng):
    panel = random_staggered(rng, 200, 3)
    comp = pairwise_theta(panel, 2, -1)
    assert comp.num == 0.0 and comp.theta == 0.0
    rep = espr(panel, -1)
    assert rep.numerator == 0.0 and rep.theta == 0.0


def test_empty_group(rng):
    panel = random_staggered(rng, 100, 3, cohorts=[1, 3])
    with pytest.raises(EstimationError) as exc:
        pairwise_theta(panel, 2, 0)
    assert exc.value.code == errors.EMPTY_GROUP


def test_horizon_out_of_range(rng):
    panel = random_staggered(rng, 100, 2)
    with pytest.raises(EstimationError) as exc:
        pairwise_theta(panel, 2, 1)
    assert exc.value.code == errors.HORIZON_OUT_OF_RANGE
    assert eligible_cohorts(panel, 1) == [1]


def test_single_cohort_weight_one(rng):
    panel = random_staggered(rng, 300, 3, cohorts=[2])
    rep = espr(panel, 1)
    assert rep.theta == pytest.approx(pairwise_theta(panel, 2, 1).theta, abs=1e-14)


def test_two_cohorts_hand_formula(rng):
    panel = random_staggered(rng, 400, 3, cohorts=[1, 2])
    j = 1
    num = den = 0.0
    never = panel.never
    for s in (1, 2):
        g = panel.s == s
        p_s = g.mean()
        d_inf = panel.y[never, s + j].mean() - panel.y[never, s - 1].mean()
        num += p_s * (panel.y[g, s + j].mean() - panel.y[g, s - 1].mean() - d_inf)
        den += p_s * (1 - panel.y[g, s - 1].mean() - d_inf)
    rep = espr(panel, j)
    assert rep.numerator == pytest.approx(num, abs=1e-12)
    assert rep.denominator == pytest.approx(den, abs=1e-12)
    assert rep.theta == pytest.approx(num / den, abs=1e-12)
    ratios = [c.theta for c in rep.components]
    w = np.array([rep.weights[c.s] for c in rep.components])
    if abs(ratios[0] - ratios[1]) > 1e-6:
        assert abs(rep.theta - np.dot(w, ratios) / w.sum()) > 1e-12


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.integers(1, 4), st.integers(30, 300))
def test_pairwise_equals_event_study(seed, T, n):
    panel = random_staggered(np.random.default_rng(seed), n, T)
    for s in panel.cohorts():
        for j in range(-s, T - s + 1):
            try:
                a = pairwise_theta(panel, s, j)
            except EstimationError:
                continue
            num, den, theta = theta_from_event_study(panel, s, j)
            assert abs(a.num - num) <= 1e-10 and abs(a.den - den) <= 1e-10
            assert abs(a.theta - theta) <= 1e-10


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.integers(20, 400))
def test_t1_reduction_and_stacked_se(seed, n):
    rng = np.random.default_rng(seed)
    panel = random_staggered(rng, n, 1)
    tp = panel.to_two_period()
    fe = fit_two_way_fe(tp)
    try:
        ref = aprt_from_fe(fe, tp)
        rep = espr(panel, 0)
    except EstimationError:
        return
    assert abs(rep.theta - ref.point) <= 1e-12
    assert abs(rep.se - ref.se) <= 1e-8


def test_stacked_se_single_cohort_later_adoption(rng):
    panel = random_staggered(rng, 500, 3, cohorts=[2])
    keep = (panel.s == 2) | panel.never
    from persuasion_did.dataset import TwoPeriodPanel

    tp = TwoPeriodPanel(panel.y[keep, 1], panel.y[keep, 3], (panel.s[keep] == 2).astype(float))
    rep = espr(panel, 1)
    ref = aprt_from_fe(fit_two_way_fe(tp), tp)
    assert rep.theta == pytest.approx(ref.point, abs=1e-12)
    # units outside the pair carry zero influence, so the full-sample se agrees
    assert rep.se == pytest.approx(ref.se, rel=1e-8)


def test_tiny_cohort_dropped(rng):
    panel = random_staggered(rng, 300, 3, cohorts=[1, 2])
    y = np.vstack([panel.y, [[0, 1, 1, 1]]])
    s = np.r_[panel.s, 3.0]
    sp = StaggeredPanel(y, s)
    rep = espr(sp, 0)
    assert rep.dropped == [3] and rep.weights[3] == 0.0
    assert len(rep.components) == 2


def test_event_study_never_needs_anchor(rng):
    panel = random_staggered(rng, 100, 2)
    with pytest.raises(EstimationError):
        event_study_regression(panel, np.inf)


def test_pretrend_horizon_guard(rng):
    panel = random_staggered(rng, 100, 3)
    with pytest.raises(EstimationError) as exc:
        espr_pretrend(panel, -1)
    assert exc.value.code == errors.HORIZON_OUT_OF_RANGE


def test_long_rows_shape(rng):
    panel = random_staggered(rng, 300, 3)
    reps = [espr(panel, j) for j in (-2, -1, 0, 1, 2)]
    rows = long_rows(reps)
    per_pair = sum(len(r.components) for r in reps)
    assert len(rows) == per_pair + len(reps)
    assert set(rows[0]) == {"s", "j", "estimand", "point", "se", "ci_lo", "ci_hi"}


def _dgp(violation=None):
    cov = DiscreteCovariates(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    ad = np.array([[0.25, 0.25, 0.0, 0.5], [0.35, 0.2, 0.0, 0.45]])
    G = np.array([[0.2, 0.3], [0.25, 0.35], [0.3, 0.4], [0.32, 0.45]])
    H = np.array([[0.05, 0.0], [0.1, 0.05], [0.0, 0.0], [0.0, 0.0]])
    th = np.array([[0.3, 0.4], [0.35, 0.45], [0.4, 0.5]])
    return StaggeredDgp(3, cov, ad, G, H, th, violation=violation)


def test_regression_and_dr_agree():
    panel = gen_staggered(_dgp(), 20_000, 3)
    a = espr(panel, 0, "REGRESSION")
    b = espr(panel, 0, "DR", method="CONSTANT")
    assert a.theta == pytest.approx(b.theta, abs=1e-12)
    c = espr(panel, 0, "DR", method="CELL_MEANS")
    assert abs(c.theta - a.theta) < 2 * a.se


def test_pretrend_detects_violation():
    viol = np.zeros((4, 4, 2))
    viol[1, 0, :] = 0.15  # cohort 2 starts higher at t=0 only: a broken pre-trend
    panel = gen_staggered(_dgp(viol), 20_000, 8)
    rep = espr_pretrend(panel, -2)
    assert abs(rep.theta) > 4 * rep.se


@pytest.mark.slow
def test_stacked_se_matches_monte_carlo_sd():
    dgp = _dgp()
    res = monte_carlo(dgp, lambda p: {"espr0": espr(p, 0)}, 5000, 400, 17,
                      oracle(dgp).staggered["espr"][0])
    s = res["espr0"]
    assert abs(s.mean_se / s.sd - 1) < 0.1
