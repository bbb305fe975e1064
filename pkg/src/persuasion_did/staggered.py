"""Staggered adoption: cohort-by-horizon persuasion rates and their event-study aggregate.

Cohort s is compared with the never-treated group between the base period
s-1 and period s+j. Aggregation over cohorts weights numerators and
denominators by the cohort shares p_s separately, then takes the ratio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import errors
from .dataset import StaggeredPanel, TwoPeriodPanel
from .errors import EstimationError
from .nuisance import EPS_TRIM, FoldPlan, Method, fit_nuisance
from .report import DELTA_DEN, jsonable, normal_ci
from .twoperiod_reg import cluster_ids, cluster_meat, fit_two_way_fe
from .twoperiod_semipar import eif_terms

log = logging.getLogger(__name__)

MIN_GROUP = 2


class StaggeredEstimator(str, Enum):
    REGRESSION = "REGRESSION"
    DR = "DR"


@dataclass
class PairwiseTheta:
    s: int
    j: int
    num: float
    den: float
    theta: float
    coefficients: dict
    n_s: int
    n_never: int
    se: float = float("nan")
    # per-unit G_r + G_adj over the full sample (zero outside the pair)
    g_num: np.ndarray | None = field(default=None, repr=False)
    g_den: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        keys = ("s", "j", "num", "den", "theta", "se", "coefficients", "n_s", "n_never")
        return jsonable({k: getattr(self, k) for k in keys})


def _check_horizon(panel: StaggeredPanel, s: int, j: int) -> None:
    if not 1 <= s <= panel.T or s + j > panel.T or s + j < 0:
        raise EstimationError(errors.HORIZON_OUT_OF_RANGE, "period s+j must lie in 0..T for cohort s",
                              s=s, j=j, T=panel.T)


def _groups(panel: StaggeredPanel, s: int) -> tuple[np.ndarray, np.ndarray]:
    in_s = panel.s == s
    never = panel.never
    if not in_s.any():
        raise EstimationError(errors.EMPTY_GROUP, f"no units adopt at s={s}", s=s)
    if not never.any():
        raise EstimationError(errors.EMPTY_GROUP, "no never-treated units")
    return in_s, never


def pairwise_theta(panel: StaggeredPanel, s: int, j: int) -> PairwiseTheta:
    """Saturated OLS on {S in (s, inf)} x {t in (s-1, s+j)}."""
    _check_horizon(panel, s, j)
    in_s, never = _groups(panel, s)
    keep = in_s | never
    base = panel.y[keep, s - 1]
    g = in_s[keep].astype(float)
    if j == -1:
        # reference period: the two periods coincide
        g0 = float(base[g == 0].mean())
        g1 = float(base[g == 1].mean()) - g0
        coef = {"gamma0": g0, "gamma1": g1, "gamma2": 0.0, "gamma": 0.0}
    else:
        # the pair regression is the two-period fit on (base, post) restricted to the pair
        fe = fit_two_way_fe(TwoPeriodPanel(base, panel.y[keep, s + j], g))
        coef = dict(zip(("gamma0", "gamma1", "gamma2", "gamma"), map(float, fe.vector)))
    num = coef["gamma"]
    den = 1 - coef["gamma0"] - coef["gamma1"] - coef["gamma2"]
    if abs(den) <= DELTA_DEN:
        raise EstimationError(errors.DEGENERATE_DENOMINATOR, "pairwise denominator is numerically zero",
                              s=s, j=j, den=den)
    return PairwiseTheta(s, j, num, den, num / den, coef, int(in_s.sum()), int(never.sum()))


@dataclass(frozen=True)
class EventStudyCoefficients:
    s: float
    anchor: int
    mu_m1: float
    alpha: dict  # event time j -> coefficient, j != -1


def event_study_regression(panel: StaggeredPanel, s: float, anchor: int | None = None) -> EventStudyCoefficients:
    """Within-group regression of Y_t on event-time dummies, t = 0..T, omitting event time -1.

    For the never-treated group pass the cohort whose event clock to use as ``anchor``.
    """
    if np.isinf(s):
        if anchor is None:
            raise EstimationError(errors.INVALID_ARGUMENT, "never-treated group needs an anchor cohort")
        rows = panel.never
        a = int(anchor)
    else:
        rows = panel.s == s
        a = int(s)
    if not rows.any():
        raise EstimationError(errors.EMPTY_GROUP, "group is empty", s=float(s))
    y = panel.y[rows]
    m, T1 = y.shape
    ev = np.arange(T1) - a  # event time of each period
    js = [int(e) for e in ev if e != -1]
    X = np.zeros((m * T1, 1 + len(js)))
    X[:, 0] = 1.0
    ev_rows = np.tile(ev, m)
    for c, e in enumerate(js, start=1):
        X[:, c] = ev_rows == e
    b = np.linalg.lstsq(X, y.ravel(), rcond=None)[0]
    return EventStudyCoefficients(float(s), a, float(b[0]), {e: float(b[c]) for c, e in enumerate(js, start=1)})


def theta_from_event_study(panel: StaggeredPanel, s: int, j: int) -> tuple[float, float, float]:
    """(num, den, theta) for cohort s at horizon j assembled from the two event-study fits."""
    _check_horizon(panel, s, j)
    own = event_study_regression(panel, s)
    ctrl = event_study_regression(panel, np.inf, anchor=s)
    a_s = 0.0 if j == -1 else own.alpha[j]
    a_inf = 0.0 if j == -1 else ctrl.alpha[j]
    num = a_s - a_inf
    den = 1 - own.mu_m1 - a_inf
    return num, den, num / den


# --------------------------------------------------------------- aggregation


@dataclass
class EsprReport:
    j: int
    theta: float
    se: float
    ci: tuple[float, float]
    level: float
    weights: dict
    components: list
    estimator: str
    numerator: float
    denominator: float
    n: int
    pretrend: bool = False
    dropped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    covariance: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return jsonable({
            "estimand": "ESPR", "estimator": self.estimator, "j": self.j, "point": self.theta,
            "se": self.se, "ci": list(self.ci), "level": self.level, "n": self.n,
            "numerator": self.numerator, "denominator": self.denominator,
            "weights": {str(k): v for k, v in self.weights.items()},
            "components": [c.to_dict() for c in self.components],
            "pretrend": self.pretrend, "dropped": self.dropped, "warnings": self.warnings,
        })


def eligible_cohorts(panel: StaggeredPanel, j: int) -> list[int]:
    return [s for s in panel.cohorts() if s + j <= panel.T and s + j >= 0]


def _pair_panel(panel: StaggeredPanel, s: int, j: int, keep: np.ndarray) -> TwoPeriodPanel:
    return TwoPeriodPanel(panel.y[keep, s - 1], panel.y[keep, s + j], (panel.s[keep] == s).astype(float),
                          panel.x[keep], None if panel.cluster is None else panel.cluster[keep],
                          panel.x_names)


def _component(panel: StaggeredPanel, s: int, j: int, estimator: StaggeredEstimator,
               method: Method, folds: FoldPlan | None, eps_trim: float) -> PairwiseTheta:
    in_s, never = _groups(panel, s)
    keep = in_s | never
    n_s = int(in_s.sum())
    if estimator is StaggeredEstimator.REGRESSION:
        comp = pairwise_theta(panel, s, j)
        ybase = panel.y[:, s - 1]
        dy = panel.y[:, s + j] - ybase
        delta = float(dy[never].mean())
        odds = n_s / int(never.sum())
        terms = eif_terms(ybase, panel.y[:, s + j], in_s.astype(float), delta,
                          np.where(never, odds, 0.0))
    else:
        sub = _pair_panel(panel, s, j, keep)
        fit = fit_nuisance(sub, method, folds=folds, eps_trim=eps_trim)
        pred = fit.predictions(sub)
        delta = np.zeros(panel.n)
        odds = np.zeros(panel.n)
        delta[keep] = pred.delta(0)
        odds[keep] = pred.odds
        ybase = panel.y[:, s - 1]
        terms = eif_terms(ybase, panel.y[:, s + j], in_s.astype(float), delta, np.where(keep, odds, 0.0))
        comp = None
    g_num = terms.pi_num + terms.pi_adj
    g_den = terms.pi_den + terms.pi_adj
    g_num[~keep] = 0.0
    g_den[~keep] = 0.0
    if comp is None:
        num = float(g_num.sum() / n_s)
        den = float(g_den.sum() / n_s)
        if abs(den) <= DELTA_DEN:
            raise EstimationError(errors.DEGENERATE_DENOMINATOR, "pairwise denominator is numerically zero",
                                  s=s, j=j)
        comp = PairwiseTheta(s, j, num, den, num / den, {"method": method.value}, n_s, int(never.sum()))
    comp.g_num, comp.g_den = g_num, g_den
    # own standard error of the cohort-level ratio
    p_s = n_s / panel.n
    psi_n = (g_num - in_s * comp.num) / p_s
    psi_d = (g_den - in_s * comp.den) / p_s
    comp.se = float(np.sqrt(np.mean(((psi_n - comp.theta * psi_d) / comp.den) ** 2) / panel.n))
    return comp


@dataclass(frozen=True)
class StackedResult:
    se: float
    variance: float
    covariance: np.ndarray  # Sigma of the stacked contributions
    J: np.ndarray
    P: np.ndarray


def stacked_inference(panel: StaggeredPanel, components: list[PairwiseTheta], j: int) -> StackedResult:
    """Delta-method variance of the aggregated ratio from stacked per-unit contributions.

    Q_i stacks, per cohort, the influence of the numerator and denominator
    estimates and the cohort indicator deviation 1(S_i = s) - p_s.
    """
    n = panel.n
    if not components:
        raise EstimationError(errors.NO_ELIGIBLE_GROUPS, "nothing to aggregate", j=j)
    m = len(components)
    p = np.array([c.n_s / n for c in components])
    th_num = np.array([c.num for c in components])
    th_den = np.array([c.den for c in components])
    ind = np.column_stack([panel.s == c.s for c in components]).astype(float)
    psi_num = np.column_stack([(c.g_num - ind[:, k] * c.num) / p[k] for k, c in enumerate(components)])
    psi_den = np.column_stack([(c.g_den - ind[:, k] * c.den) / p[k] for k, c in enumerate(components)])
    H = ind - p
    Q = np.hstack([psi_num, psi_den, H])
    ids, user = cluster_ids(panel)
    sigma = cluster_meat(Q, ids, user) / n
    if not np.all(np.isfinite(sigma)):
        raise EstimationError(errors.SINGULAR_SIGMA, "stacked covariance is not finite", j=j)
    zero = np.zeros(m)
    P = np.vstack([np.concatenate([p, zero, th_num]), np.concatenate([zero, p, th_den])])
    N = float(p @ th_num)
    D = float(p @ th_den)
    J = np.array([1 / D, -N / D**2])
    var = float(J @ P @ sigma @ P.T @ J) / n
    if not np.isfinite(var) or var < -1e-15:
        raise EstimationError(errors.SINGULAR_SIGMA, "stacked variance is not a valid variance", var=var)
    return StackedResult(float(np.sqrt(max(var, 0.0))), var, sigma, J, P)


def espr(panel: StaggeredPanel, j: int, estimator: StaggeredEstimator | str = StaggeredEstimator.REGRESSION,
         alpha: float = 0.05, method: Method | str = Method.LOGISTIC, folds: FoldPlan | None = None,
         eps_trim: float = EPS_TRIM, pretrend: bool = False) -> EsprReport:
    estimator = StaggeredEstimator(estimator)
    method = Method(method)
    if panel.x.shape[1] == 0 and estimator is StaggeredEstimator.DR and method is Method.LOGISTIC:
        method = Method.CONSTANT
    cohorts = eligible_cohorts(panel, j)
    n_never = int(panel.never.sum())
    kept, dropped, warnings = [], [], []
    for s in cohorts:
        n_s = int(np.sum(panel.s == s))
        if n_s < MIN_GROUP or n_never < MIN_GROUP:
            dropped.append(s)
            warnings.append(f"cohort {s} dropped: fewer than {MIN_GROUP} units in a comparison group")
            continue
        kept.append(s)
    if not kept:
        raise EstimationError(errors.NO_ELIGIBLE_GROUPS, "no cohort can be compared at this horizon",
                              j=j, T=panel.T, dropped=dropped)
    comps = [_component(panel, s, j, estimator, method, folds, eps_trim) for s in kept]
    weights = {s: float(np.mean(panel.s == s)) for s in kept}
    weights.update({s: 0.0 for s in dropped})
    N = sum(weights[c.s] * c.num for c in comps)
    D = sum(weights[c.s] * c.den for c in comps)
    if abs(D) <= DELTA_DEN:
        raise EstimationError(errors.DEGENERATE_DENOMINATOR, "aggregated denominator is numerically zero", j=j)
    # same ratio with shares normalized to sum to one, so one cohort reproduces its own ratio bit for bit
    total = sum(weights[c.s] for c in comps)
    theta = sum(weights[c.s] / total * c.num for c in comps) / sum(weights[c.s] / total * c.den for c in comps)
    st = stacked_inference(panel, comps, j)
    level = 1 - alpha
    return EsprReport(j, theta, st.se, normal_ci(theta, st.se, level), level, dict(sorted(weights.items())),
                      comps, estimator.value, N, D, panel.n, pretrend, dropped, warnings, st.covariance)


def espr_pretrend(panel: StaggeredPanel, j: int, **kwargs) -> EsprReport:
    """Placebo aggregate at a pre-adoption horizon (j <= -2); should be near zero under parallel trends."""
    if j > -2:
        raise EstimationError(errors.HORIZON_OUT_OF_RANGE, "pre-trend horizons are j <= -2", j=j)
    return espr(panel, j, pretrend=True, **kwargs)


def long_rows(reports: list[EsprReport]) -> list[dict]:
    """One row per (cohort, horizon) and one per aggregate, for event-study plots."""
    rows = []
    for rep in reports:
        for c in rep.components:
            lo, hi = normal_ci(c.theta, c.se, rep.level)
            rows.append({"s": c.s, "j": rep.j, "estimand": "THETA_ST", "point": c.theta, "se": c.se,
                         "ci_lo": lo, "ci_hi": hi})
        rows.append({"s": "all", "j": rep.j, "estimand": "ESPR", "point": rep.theta, "se": rep.se,
                     "ci_lo": rep.ci[0], "ci_hi": rep.ci[1]})
    return rows
