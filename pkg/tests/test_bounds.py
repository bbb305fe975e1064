from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from persuasion_did import errors
from persuasion_did.bounds import (aggregate_sharp_bounds, conditional_bounds, extremal_joints,
                                   identified_line, marginals, rates_from_joint, sharp_bounds_from_values)
from persuasion_did.dataset import to_cells
from persuasion_did.errors import EstimationError
from persuasion_did.nuisance import Method, fit_nuisance
from persuasion_did.twoperiod_reg import aprt_from_fe, fit_two_way_fe
from persuasion_did.twoperiod_semipar import PsiEvaluator

from conftest import cell_panel, random_panel


def test_backlash_joint():
    joint = (0.3, 0.4, 0.1, 0.2)
    pi, tau = marginals(joint)
    assert (pi, tau) == pytest.approx((0.6, 0.3))
    b = conditional_bounds(pi, tau)
    assert b.theta_cl == pytest.approx(0.428571, abs=1e-6)
    assert b.theta_cu == pytest.approx(0.857143, abs=1e-6)
    theta, _ = rates_from_joint(joint)
    assert theta == pytest.approx(0.571429, abs=1e-6)
    assert b.theta_interval[0] <= theta <= b.theta_interval[1]


def test_no_backlash_lower_bound_is_exact():
    joint = (Fraction(3, 10), Fraction(4, 10), Fraction(0), Fraction(3, 10))
    b = conditional_bounds(*marginals(joint))
    assert b.theta_cl == rates_from_joint(joint)[0] == Fraction(4, 7)


def test_everyone_persuadable_when_tau_zero():
    b = conditional_bounds(0.4, 0.0)
    assert b.theta_cl == b.theta_cu == pytest.approx(0.4)


def test_domain():
    with pytest.raises(EstimationError) as exc:
        conditional_bounds(1.0, 0.2)
    assert exc.value.code == errors.DOMAIN


simplex = st.lists(st.floats(0.001, 1.0), min_size=4, max_size=4).map(lambda v: tuple(np.array(v) / sum(v)))


@given(simplex)
def test_frechet_validity(joint):
    pi, tau = marginals(joint)
    b = conditional_bounds(pi, tau)
    theta, rtheta = rates_from_joint(joint)
    lo, hi = b.theta_interval
    rlo, rhi = b.rtheta_interval
    assert lo - 1e-12 <= theta <= hi + 1e-12
    assert rlo - 1e-12 <= rtheta <= rhi + 1e-12


@given(st.floats(0.01, 0.99), st.floats(0.0, 0.98))
def test_sharpness_witness(pi, tau):
    b = conditional_bounds(pi, tau)
    low, high = extremal_joints(pi, tau)
    for j in (low, high):
        assert min(j) >= -1e-12
        assert marginals(j) == pytest.approx((pi, tau), abs=1e-12)
    assert abs(rates_from_joint(low)[0] - b.theta_interval[0]) <= 1e-12
    assert abs(rates_from_joint(high)[0] - b.theta_interval[1]) <= 1e-12
    assert abs(rates_from_joint(low)[1] - b.rtheta_interval[0]) <= 1e-12
    assert abs(rates_from_joint(high)[1] - b.rtheta_interval[1]) <= 1e-12


def test_aggregate_covariate_free_matches_single_cell():
    panel = cell_panel((0.3, 0.4, 0.2, 0.8))
    fit = fit_nuisance(panel, Method.CONSTANT)
    b = aggregate_sharp_bounds(panel, PsiEvaluator(fit))
    theta_l = aprt_from_fe(fit_two_way_fe(panel), panel).point
    assert b.theta_star_l == pytest.approx(max(0.0, theta_l), abs=1e-12)
    # pi + psi = 0.8 + 0.3 > 1, so the upper end is 1
    assert b.theta_star_u == pytest.approx(1.0)
    other = cell_panel((0.3, 0.4, 0.2, 0.6))
    b2 = aggregate_sharp_bounds(other, PsiEvaluator(fit_nuisance(other, Method.CONSTANT)))
    assert b2.theta_star_u == pytest.approx(0.6 / 0.7)


def test_zero_did_gives_zero_lower():
    panel = cell_panel((0.3, 0.5, 0.1, 0.3))
    b = aggregate_sharp_bounds(panel, PsiEvaluator(fit_nuisance(panel, Method.CONSTANT)))
    assert b.theta_star_l == pytest.approx(0.0, abs=1e-12)


def test_aggregate_matches_cell_table(rng):
    panel = random_panel(rng, 800, k=1, levels=3)
    b = aggregate_sharp_bounds(panel, PsiEvaluator(fit_nuisance(panel, Method.CELL_MEANS)))
    t = to_cells(panel, discrete_x=True)
    big_l = big_u = den_f = den_r = 0.0
    for lev in t.levels():
        w = t.level_count(lev, d=1)
        pi = t.mean(1, 1, lev)
        ps = min(max(t.mean(0, 1, lev) + t.mean(1, 0, lev) - t.mean(0, 0, lev), 0.0), 1.0)
        big_l += w * max(pi - ps, 0.0)
        big_u += w * min(pi, 1 - ps)
        den_f += w * (1 - ps)
        den_r += w * pi
    assert b.theta_star_l == pytest.approx(big_l / den_f, abs=1e-12)
    assert b.theta_star_u == pytest.approx(big_u / den_f, abs=1e-12)
    assert b.rtheta_star_u == pytest.approx(big_u / den_r, abs=1e-12)


def test_identified_line_symmetric_case():
    b = sharp_bounds_from_values(np.array([0.6, 0.6]), np.array([0.4, 0.4]))
    line = identified_line(b)
    assert line["slope"] == pytest.approx(1.0)
    assert line["lower"][0] == pytest.approx(line["lower"][1])


def test_identified_line_contains_truth():
    # two covariate levels with treated weights 2:3 and different backlash joints
    joints = [(0.3, 0.4, 0.1, 0.2), (0.2, 0.3, 0.05, 0.45)]
    weights = [2, 3]
    pi = np.repeat([marginals(j)[0] for j in joints], weights)
    tau = np.repeat([marginals(j)[1] for j in joints], weights)
    p01 = np.repeat([j[1] for j in joints], weights)
    b = sharp_bounds_from_values(pi, tau)
    theta = p01.mean() / (1 - tau).mean()
    rtheta = p01.mean() / pi.mean()
    assert b.theta_star_l <= theta <= b.theta_star_u
    assert rtheta == pytest.approx(b.alpha * theta)
    assert b.rtheta_star_l <= rtheta <= b.rtheta_star_u
