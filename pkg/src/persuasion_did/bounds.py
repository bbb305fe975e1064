"""Bounds on the persuasion rates when backlash is not ruled out.

Given the treated-arm marginals pi = Pr(Y1(1)=1 | D1=1, x) and
tau = Pr(Y1(0)=1 | D1=1, x), the joint law of (Y1(0), Y1(1)) is only
pinned down up to p01 = Pr(Y1(0)=0, Y1(1)=1), which ranges over
[max(0, pi - tau), min(pi, 1 - tau)]. Both rates are linear in p01.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .dataset import TwoPeriodPanel
from .errors import EstimationError
from .report import DELTA_DEN
from .twoperiod_semipar import PsiEvaluator

SET_TOL = 1e-10


@dataclass(frozen=True)
class ConditionalBounds:
    theta_cl: float
    theta_cu: float
    rtheta_cl: float
    rtheta_cu: float
    alpha_x: float

    @property
    def theta_interval(self) -> tuple[float, float]:
        """Sharp range for the forward rate."""
        return max(0.0, self.theta_cl), min(self.theta_cu, 1.0)

    @property
    def rtheta_interval(self) -> tuple[float, float]:
        """Sharp range for the reverse rate; the image of ``theta_interval`` under q = alpha p."""
        lo, hi = self.theta_interval
        return self.alpha_x * lo, self.alpha_x * hi


def conditional_bounds(pi1_1x: float, tau_cx: float) -> ConditionalBounds:
    if not (0 < pi1_1x < 1) or not (0 <= tau_cx < 1):
        raise EstimationError(errors.DOMAIN, "need pi in (0,1) and tau in [0,1)", pi=pi1_1x, tau=tau_cx)
    one_m_tau = 1 - tau_cx  # generic in the number type (floats or Fractions)
    alpha = one_m_tau / pi1_1x
    theta_cl = (pi1_1x - tau_cx) / one_m_tau
    return ConditionalBounds(
        theta_cl=theta_cl,
        theta_cu=pi1_1x / one_m_tau,
        rtheta_cl=(pi1_1x - tau_cx) / pi1_1x,
        rtheta_cu=one_m_tau / pi1_1x,
        alpha_x=alpha,
    )


# ------------------------------------------------------------ joint laws


def marginals(joint) -> tuple[float, float]:
    """(pi, tau) from (p00, p01, p10, p11), p_st = Pr(Y1(0)=s, Y1(1)=t)."""
    p00, p01, p10, p11 = joint
    return p01 + p11, p10 + p11


def rates_from_joint(joint) -> tuple[float, float]:
    """True forward and reverse rates of a joint law."""
    p00, p01, p10, p11 = joint
    return p01 / (p00 + p01), p01 / (p01 + p11)


def joint_from_p01(pi: float, tau: float, p01: float) -> tuple[float, float, float, float]:
    p11 = pi - p01
    p10 = tau - p11
    p00 = (1 - tau) - p01  # keeps p00 + p01 = 1 - tau without cancellation
    return (p00, p01, p10, p11)


def extremal_joints(pi: float, tau: float) -> tuple[tuple, tuple]:
    """Joints with the given marginals attaining the lower and the upper bound."""
    return (joint_from_p01(pi, tau, max(0.0, pi - tau)),
            joint_from_p01(pi, tau, min(pi, 1.0 - tau)))


# ------------------------------------------------------------- aggregate


@dataclass(frozen=True)
class AggregateBounds:
    theta_star_l: float
    theta_star_u: float
    rtheta_star_l: float
    rtheta_star_u: float
    alpha: float
    share_lower_set: float
    share_upper_set: float

    def as_dict(self) -> dict:
        return {**self.__dict__, "line": identified_line(self)}


def sharp_bounds_from_values(pi11: np.ndarray, psi_v: np.ndarray, tol: float = SET_TOL) -> AggregateBounds:
    """Sharp aggregate bounds from per-treated-unit Pi_1(1, x) and counterfactual probabilities."""
    pi11 = np.asarray(pi11, dtype=float)
    psi_v = np.asarray(psi_v, dtype=float)
    in_l = psi_v <= pi11 + tol
    in_u = psi_v + pi11 <= 1.0 + tol
    big_l = np.mean(np.where(in_l, pi11 - psi_v, 0.0))
    big_u = np.mean(np.where(in_u, pi11, 1.0 - psi_v))
    den_f = np.mean(1.0 - psi_v)
    den_r = np.mean(pi11)
    for name, den in (("E[1 - psi | D1=1]", den_f), ("E[Pi_1(1) | D1=1]", den_r)):
        if abs(den) <= DELTA_DEN:
            raise EstimationError(errors.DEGENERATE_DENOMINATOR, f"{name} is numerically zero")
    return AggregateBounds(
        theta_star_l=float(big_l / den_f),
        theta_star_u=float(big_u / den_f),
        rtheta_star_l=float(big_l / den_r),
        rtheta_star_u=float(big_u / den_r),
        alpha=float(den_f / den_r),
        share_lower_set=float(in_l.mean()),
        share_upper_set=float(in_u.mean()),
    )


def aggregate_sharp_bounds(panel: TwoPeriodPanel, evaluator: PsiEvaluator) -> AggregateBounds:
    treated = panel.treated
    if not treated.any():
        raise EstimationError(errors.EMPTY_ARM, "no treated units")
    pred = evaluator.fit.predictions(panel)
    psi_v, _ = evaluator.at_units(pred)
    return sharp_bounds_from_values(pred.pi[(1, 1)][treated], psi_v[treated])


def identified_line(bounds: AggregateBounds) -> dict:
    """Segment in the (forward, reverse) plane joining the two sharp endpoints."""
    return {
        "slope": bounds.alpha,
        "lower": [bounds.theta_star_l, bounds.rtheta_star_l],
        "upper": [bounds.theta_star_u, bounds.rtheta_star_u],
    }
