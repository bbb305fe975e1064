"""Regression routes to the persuasion rates: saturated two-way FE and the IV/GMM form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .dataset import TwoPeriodPanel
from .errors import EstimationError
from .report import DELTA_DEN, EstimateReport, Target

CONTAMINATION_WARNING = (
    "outcomes were residualized on covariates; linear partialling-out can mix "
    "effects across covariate cells (contamination bias)"
)


def cluster_ids(panel) -> tuple[np.ndarray, bool]:
    """Unit-level ids by default; user ids when supplied (flag says which)."""
    if panel.cluster is None:
        return np.arange(panel.n), False
    _, ids = np.unique(panel.cluster, return_inverse=True)
    return ids, True


def cluster_meat(scores: np.ndarray, ids: np.ndarray, user_clusters: bool) -> np.ndarray:
    """Sum of outer products of within-cluster score sums.

    With user-supplied clusters the small-cluster factor G/(G-1) is applied.
    Unit-level clustering (the default) uses no factor.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    G = int(ids.max()) + 1
    sums = np.zeros((G, scores.shape[1]))
    np.add.at(sums, ids, scores)
    meat = sums.T @ sums
    if user_clusters:
        if G < 2:
            raise EstimationError(errors.SINGULAR_SIGMA, "need at least two clusters", clusters=G)
        meat *= G / (G - 1)
    return meat


@dataclass(frozen=True)
class FeCoefficients:
    gamma0: float
    gamma1: float
    gamma2: float
    gamma: float
    vcov: np.ndarray
    n: int
    n_clusters: int

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.gamma0, self.gamma1, self.gamma2, self.gamma])

    def fitted_cells(self) -> dict:
        g0, g1, g2, g = self.vector
        return {(0, 0): g0, (0, 1): g0 + g1, (1, 0): g0 + g2, (1, 1): g0 + g1 + g2 + g}


def fit_two_way_fe(panel: TwoPeriodPanel) -> FeCoefficients:
    """OLS of Y_it on (1, G, t, tG) over the 2n stacked unit-periods, clustered by unit."""
    n = panel.n
    g = np.concatenate([panel.d1, panel.d1])
    t = np.concatenate([np.zeros(n), np.ones(n)])
    y = np.concatenate([panel.y0, panel.y1])
    X = np.column_stack([np.ones(2 * n), g, t, t * g])
    bread = np.linalg.inv(X.T @ X)
    coef = bread @ (X.T @ y)
    resid = y - X @ coef
    ids, user = cluster_ids(panel)
    meat = cluster_meat(X * resid[:, None], np.concatenate([ids, ids]), user)
    vcov = bread @ meat @ bread
    return FeCoefficients(*map(float, coef), vcov=vcov, n=n, n_clusters=int(ids.max()) + 1)


def _ratio_report(estimand, estimator, num, den, grad, vcov, n, level, warnings, diag):
    if abs(den) <= DELTA_DEN:
        raise EstimationError(errors.DEGENERATE_DENOMINATOR, "ratio denominator is numerically zero",
                              denominator=den, estimator=estimator)
    point = num / den
    se = float(np.sqrt(max(grad @ vcov @ grad, 0.0)))
    return EstimateReport.build(estimand, estimator, point, se, n, level, warnings,
                                {"numerator": num, "denominator": den, **diag})


def _warn(panel) -> list[str]:
    return [CONTAMINATION_WARNING] if panel.residualized else []


def aprt_from_fe(coef: FeCoefficients, panel: TwoPeriodPanel, alpha: float = 0.05) -> EstimateReport:
    g0, g1, g2, g = coef.vector
    den = 1 - g0 - g1 - g2
    grad = np.array([g / den**2, g / den**2, g / den**2, 1 / den]) if abs(den) > DELTA_DEN else np.zeros(4)
    return _ratio_report(Target.APRT, "FE", g, den, grad, coef.vcov, panel.n, 1 - alpha, _warn(panel),
                         {"gamma": coef.vector.tolist()})


def raprt_from_fe(coef: FeCoefficients, panel: TwoPeriodPanel, alpha: float = 0.05) -> EstimateReport:
    g0, g1, g2, g = coef.vector
    den = g0 + g1 + g2 + g
    if abs(den) > DELTA_DEN:
        grad = np.array([-g / den**2] * 3 + [1 / den - g / den**2])
    else:
        grad = np.zeros(4)
    return _ratio_report(Target.RAPRT, "FE", g, den, grad, coef.vcov, panel.n, 1 - alpha, _warn(panel),
                         {"gamma": coef.vector.tolist()})


def att_from_fe(coef: FeCoefficients, panel: TwoPeriodPanel, alpha: float = 0.05) -> EstimateReport:
    se = float(np.sqrt(coef.vcov[3, 3]))
    return EstimateReport.build("ATT", "FE", coef.gamma, se, panel.n, 1 - alpha, _warn(panel))


# ------------------------------------------------------------------- GMM/IV


def _instrumented(panel: TwoPeriodPanel, target: Target) -> np.ndarray:
    if target is Target.APRT:
        y1_tilde = panel.d1 + panel.y1 * (1 - panel.d1)
        return y1_tilde - panel.y0
    return panel.y1 * panel.d1


def gmm_iv(panel: TwoPeriodPanel, target: Target | str = Target.APRT, alpha: float = 0.05) -> EstimateReport:
    """Just-identified IV of (Y1 - Y0) on A with instrument D1; sandwich covariance of the moments."""
    target = Target(target)
    dy = panel.y1 - panel.y0
    a = _instrumented(panel, target)
    d = panel.d1
    dc = d - d.mean()
    cov_ad = np.mean((a - a.mean()) * dc)
    if abs(cov_ad) <= DELTA_DEN:
        raise EstimationError(errors.WEAK_DENOMINATOR, "instrument barely moves the regressor",
                              cov=float(cov_ad), target=target.value)
    cov_yd = np.mean((dy - dy.mean()) * dc)
    b1 = cov_yd / cov_ad
    b0 = dy.mean() - b1 * a.mean()
    u = dy - b0 - b1 * a
    g = np.column_stack([u, d * u])
    jac = -np.array([[1.0, a.mean()], [d.mean(), np.mean(d * a)]])
    ids, user = cluster_ids(panel)
    n = panel.n
    S = cluster_meat(g, ids, user) / n
    jinv = np.linalg.inv(jac)
    vcov = jinv @ S @ jinv.T / n
    se = float(np.sqrt(vcov[1, 1]))
    return EstimateReport.build(target.value, "GMM", b1, se, n, 1 - alpha, _warn(panel),
                                {"beta0": b0, "cov_instrument": cov_ad})


@dataclass(frozen=True)
class JointGmm:
    aprt: float
    raprt: float
    vcov: np.ndarray  # of (aprt, raprt)
    n: int

    def difference(self, level: float = 0.95) -> EstimateReport:
        diff = self.aprt - self.raprt
        se = float(np.sqrt(max(self.vcov[0, 0] + self.vcov[1, 1] - 2 * self.vcov[0, 1], 0.0)))
        return EstimateReport.build("ATT", "GMM-DIFF", diff, se, self.n, level,
                                    diagnostics={"contrast": "APRT - RAPRT"})


def gmm_joint(panel: TwoPeriodPanel) -> JointGmm:
    """Both targets from the four stacked moments, with their joint covariance."""
    dy = panel.y1 - panel.y0
    d = panel.d1
    n = panel.n
    parts, jac = [], np.zeros((4, 4))
    betas = []
    for k, target in enumerate((Target.APRT, Target.RAPRT)):
        a = _instrumented(panel, target)
        dc = d - d.mean()
        cov_ad = np.mean((a - a.mean()) * dc)
        if abs(cov_ad) <= DELTA_DEN:
            raise EstimationError(errors.WEAK_DENOMINATOR, "instrument barely moves the regressor",
                                  target=target.value)
        b1 = np.mean((dy - dy.mean()) * dc) / cov_ad
        b0 = dy.mean() - b1 * a.mean()
        u = dy - b0 - b1 * a
        parts += [u, d * u]
        jac[2 * k:2 * k + 2, 2 * k:2 * k + 2] = -np.array([[1.0, a.mean()], [d.mean(), np.mean(d * a)]])
        betas.append(b1)
    g = np.column_stack(parts)
    ids, user = cluster_ids(panel)
    S = cluster_meat(g, ids, user) / n
    jinv = np.linalg.inv(jac)
    full = jinv @ S @ jinv.T / n
    sel = [1, 3]
    return JointGmm(betas[0], betas[1], full[np.ix_(sel, sel)], n)


# ------------------------------------------------------------------- shares


@dataclass(frozen=True)
class TypeShares:
    tp: float
    np: float
    ap: float
    negative_att: bool = False

    def as_dict(self) -> dict:
        return {"tp": self.tp, "np": self.np, "ap": self.ap, "negative_att": self.negative_att}


def type_shares_from_summary(att: float, treated_y1_share: float) -> TypeShares:
    """Shares among the treated from ATT and Pr(Y1 = 1 | D1 = 1)."""
    return TypeShares(tp=att, np=1.0 - treated_y1_share, ap=treated_y1_share - att, negative_att=att < 0)


def type_shares(panel: TwoPeriodPanel, att: float) -> TypeShares:
    treated = panel.treated
    if not treated.any():
        raise EstimationError(errors.EMPTY_ARM, "no treated units")
    return type_shares_from_summary(att, float(panel.y1[treated].mean()))


# ------------------------------------------------------------ partialling out


def partial_out_covariates(panel: TwoPeriodPanel) -> TwoPeriodPanel:
    """Remove the linear covariate component from each period's outcome.

    Y_t is projected on (1, D1, X); the covariate part (X - mean X) b_t is
    subtracted, so arm means shift only through covariate imbalance.
    """
    if panel.k == 0:
        raise EstimationError(errors.RANK_DEFICIENT_X, "no covariates to partial out")
    xc = panel.x - panel.x.mean(axis=0)
    Z = np.column_stack([np.ones(panel.n), panel.d1, panel.x])
    rank = np.linalg.matrix_rank(Z)
    if rank < Z.shape[1]:
        raise EstimationError(errors.RANK_DEFICIENT_X, "covariates are collinear with the intercept/treatment",
                              rank=int(rank), columns=int(Z.shape[1]))
    out = []
    for y in (panel.y0, panel.y1):
        b = np.linalg.lstsq(Z, y, rcond=None)[0]
        out.append(y - xc @ b[2:])
    return TwoPeriodPanel(out[0], out[1], panel.d1, panel.x, panel.cluster, panel.x_names, residualized=True)
