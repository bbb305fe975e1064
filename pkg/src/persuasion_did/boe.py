"""Persuasion rates from a published ATT, its standard error and a range for q.

q is Pr(Y1 = 0 | D1 = 1). The forward rate is ATT/(ATT + q), decreasing in
q; the reverse rate is ATT/(1 - q), increasing in q. A Bonferroni split
spends alpha0 on the q range and alpha - alpha0 on the ATT sampling error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import errors
from .errors import EstimationError, ValidationError
from .report import DELTA_DEN, Target, z_quantile


@dataclass(frozen=True)
class BoeInput:
    att: float
    se_att: float
    q_lower: float
    q_upper: float
    q: float | None = None
    alpha: float = 0.05
    alpha0: float | None = None  # defaults to alpha / 2

    def __post_init__(self):
        if self.alpha0 is None:
            object.__setattr__(self, "alpha0", self.alpha / 2)
        if self.se_att < 0:
            raise ValidationError(errors.INVALID_ARGUMENT, "standard error must be >= 0", se=self.se_att)
        if not 0 < self.q_lower <= self.q_upper < 1:
            raise ValidationError(errors.INVALID_ARGUMENT, "need 0 < q_lower <= q_upper < 1",
                                  q_lower=self.q_lower, q_upper=self.q_upper)
        if self.q is not None and not self.q_lower <= self.q <= self.q_upper:
            raise ValidationError(errors.INVALID_ARGUMENT, "q must lie inside [q_lower, q_upper]", q=self.q)
        if not 0 < self.alpha < 1 or not 0 <= self.alpha0 < self.alpha:
            raise ValidationError(errors.INVALID_ARGUMENT, "need 0 <= alpha0 < alpha < 1",
                                  alpha=self.alpha, alpha0=self.alpha0)

    @property
    def z(self) -> float:
        return z_quantile(1 - (self.alpha - self.alpha0) / 2)


def boe_point(att: float, q: float, target: Target | str = Target.APRT) -> float:
    if att < 0:
        raise EstimationError(errors.NEGATIVE_ATT, "the rescaling assumes a nonnegative ATT", att=att)
    den = att + q if Target(target) is Target.APRT else 1 - q
    if den <= DELTA_DEN:
        raise EstimationError(errors.DEGENERATE_DENOMINATOR, "rescaling denominator is not positive", den=den)
    return att / den


def _per_q(att: float, zse: float, q: float, target: Target) -> tuple[float, float]:
    """Delta-method interval at a fixed q."""
    if target is Target.APRT:
        u = att + q
        return att / u - zse * q / u**2, att / u + zse * q / u**2
    return (att - zse) / (1 - q), (att + zse) / (1 - q)


def boe_ci(inp: BoeInput, target: Target | str = Target.APRT) -> tuple[float, float]:
    """Union over q in [q_lower, q_upper] of the fixed-q intervals.

    When att >= z * se both ends are monotone in q and the union is attained
    at the endpoints (lower end at q_upper for APRT, at q_lower for R-APRT).
    Otherwise an interior stationary point of the APRT ends, or the opposite
    endpoint for R-APRT, can be the extreme; all candidates are checked so that
    widening the q range never narrows the interval.
    """
    target = Target(target)
    att, zse = inp.att, inp.z * inp.se_att
    boe_point(att, inp.q_lower, target)  # domain checks
    boe_point(att, inp.q_upper, target)
    qs = [inp.q_lower, inp.q_upper]
    if target is Target.APRT and att > 0:
        # stationary points in u = att + q of A/u + B/u^2 sit at u = -2B/A
        for num, den in ((2 * zse * att, zse - att), (2 * zse * att, att + zse)):
            if den > 0:
                q_star = num / den - att
                if inp.q_lower < q_star < inp.q_upper:
                    qs.append(q_star)
    ends = [_per_q(att, zse, q, target) for q in qs]
    return min(e[0] for e in ends), max(e[1] for e in ends)


def q_interval(q_hat: float, n_treated: int, level: float) -> tuple[float, float]:
    """Wald interval for a proportion, kept strictly inside (0, 1)."""
    if n_treated < 1 or not 0 <= q_hat <= 1:
        raise ValidationError(errors.INVALID_ARGUMENT, "need n >= 1 and q_hat in [0, 1]",
                              q_hat=q_hat, n=n_treated)
    half = z_quantile((1 + level) / 2) * math.sqrt(q_hat * (1 - q_hat) / n_treated)
    edge = 1e-9
    return max(q_hat - half, edge), min(q_hat + half, 1 - edge)


def q_interval_from_counts(successes: int, n_treated: int, level: float) -> tuple[float, float]:
    if not 0 <= successes <= n_treated:
        raise ValidationError(errors.INVALID_ARGUMENT, "need 0 <= successes <= n", successes=successes,
                              n=n_treated)
    return q_interval(successes / n_treated, n_treated, level)


def boe_summary(inp: BoeInput) -> dict:
    """Point estimates (when q is given) and Bonferroni intervals for both targets."""
    out = {"z": inp.z, "alpha": inp.alpha, "alpha0": inp.alpha0}
    for target in Target:
        key = target.value
        out[key] = {
            "point": None if inp.q is None else boe_point(inp.att, inp.q, target),
            "ci": list(boe_ci(inp, target)),
        }
    return out
