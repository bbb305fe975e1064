"""First-step models: outcome probabilities by (period, arm) and the propensity score."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from . import errors
from .dataset import DEFAULT_LEVEL_CAP, TwoPeriodPanel
from .errors import EstimationError, ValidationError

log = logging.getLogger(__name__)

EPS_TRIM = 0.01
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
IRLS_RIDGE = 1e-8
SEPARATION_INDEX = 30.0

ARMS = ((0, 0), (1, 0), (0, 1), (1, 1))  # (t, d)


class Method(str, Enum):
    LOGISTIC = "LOGISTIC"
    CELL_MEANS = "CELL_MEANS"
    CONSTANT = "CONSTANT"


def _matrix(x, k: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if k is None or x.size == k else x.reshape(-1, 1)
    return x


# ----------------------------------------------------------------- logistic


@dataclass(frozen=True)
class LogitResult:
    coef: np.ndarray
    cov: np.ndarray  # inverse information
    converged: bool
    iterations: int


def fit_logistic(X: np.ndarray, y: np.ndarray, tol: float = IRLS_TOL,
                 max_iter: int = IRLS_MAX_ITER, ridge: float = IRLS_RIDGE) -> LogitResult:
    """Newton/IRLS maximum likelihood for Pr(y=1|X) = expit(X b). X includes the intercept."""
    n, k = X.shape
    if n < k:
        raise EstimationError(errors.INSUFFICIENT_ARM, "fewer observations than logistic parameters",
                              n=n, k=k)
    b = np.zeros(k)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ b
        if np.max(np.abs(eta)) > SEPARATION_INDEX:
            raise EstimationError(
                errors.SEPARATION, "logistic index diverged; outcome is (quasi-)separated by covariates",
                max_index=float(np.max(np.abs(eta))), iteration=it,
            )
        mu = 1.0 / (1.0 + np.exp(-eta))
        score = X.T @ (y - mu)
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        w = mu * (1 - mu)
        info = (X * w[:, None]).T @ X + ridge * np.eye(k)
        b = b + np.linalg.solve(info, score)
    eta = X @ b
    if np.max(np.abs(eta)) > SEPARATION_INDEX:
        raise EstimationError(errors.SEPARATION, "logistic index diverged", max_index=float(np.max(np.abs(eta))))
    mu = 1.0 / (1.0 + np.exp(-eta))
    info = (X * (mu * (1 - mu))[:, None]).T @ X + ridge * np.eye(k)
    if not converged:
        converged = bool(np.max(np.abs(X.T @ (y - mu))) < tol)
        if not converged:
            log.warning("IRLS did not converge in %d iterations", max_iter)
    return LogitResult(b, np.linalg.inv(info), converged, it)


# ------------------------------------------------------------------- models


class Model:
    """Maps a covariate matrix to probabilities (untrimmed)."""

    def predict(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantModel(Model):
    value: float

    def predict(self, x):
        return np.full(_matrix(x).shape[0], self.value)


@dataclass(frozen=True)
class CellMeansModel(Model):
    levels: np.ndarray  # (L, k) distinct covariate rows
    means: np.ndarray  # (L,)

    def predict(self, x):
        x = _matrix(x, self.levels.shape[1])
        out = np.full(x.shape[0], np.nan)
        for lev, m in zip(self.levels, self.means):
            out[np.all(x == lev, axis=1)] = m
        if np.isnan(out).any():
            bad = x[np.flatnonzero(np.isnan(out))[0]]
            raise EstimationError(errors.INSUFFICIENT_ARM, "covariate level unseen when fitting",
                                  level=bad.tolist())
        return out


@dataclass(frozen=True)
class LogisticModel(Model):
    coef: np.ndarray

    def predict(self, x):
        x = _matrix(x, self.coef.size - 1)
        return 1.0 / (1.0 + np.exp(-(self.coef[0] + x @ self.coef[1:])))


@dataclass(frozen=True)
class FunctionModel(Model):
    """Wraps an arbitrary x -> probability function (deliberately misspecified legs, oracles)."""

    fn: Callable[[np.ndarray], np.ndarray]

    def predict(self, x):
        x = _matrix(x)
        return np.broadcast_to(np.asarray(self.fn(x), dtype=float), (x.shape[0],)).copy()


@dataclass(frozen=True)
class ColumnModel(Model):
    """Returns one covariate column verbatim; used when an outcome is itself a regressor."""

    column: int = 0

    def predict(self, x):
        return _matrix(x)[:, self.column].astype(float)


# --------------------------------------------------------------------- folds


@dataclass(frozen=True)
class FoldPlan:
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(errors.INVALID_ARGUMENT, "cross-fitting needs k >= 2", k=self.k)

    def assign(self, panel: TwoPeriodPanel) -> np.ndarray:
        """Fold label per unit, stratified by arm.

        Units are ranked by their record content, so the labels follow the unit
        rather than its row position; identical records are interchangeable.
        """
        n = panel.n
        if n < self.k:
            raise ValidationError(errors.INVALID_ARGUMENT, "fewer units than folds", n=n, k=self.k)
        keys = [panel.d1, panel.y0, panel.y1] + [panel.x[:, j] for j in range(panel.k)]
        order = np.lexsort(keys[::-1])  # d1 is the primary key
        cyclic = np.arange(n) % self.k
        rng = np.random.Generator(np.random.Philox(self.seed))
        labels = np.empty(n, dtype=int)
        d_sorted = panel.d1[order]
        for d in (0.0, 1.0):
            pos = np.flatnonzero(d_sorted == d)
            labels[order[pos]] = rng.permutation(cyclic[pos])
        return labels


# ----------------------------------------------------------------------- fit


@dataclass(frozen=True)
class Predictions:
    """Per-unit nuisance values for one panel; propensity already trimmed."""

    pi: dict  # (t, d) -> array
    p: np.ndarray
    trimmed: dict = field(default_factory=dict)

    def delta(self, d: int) -> np.ndarray:
        return self.pi[(1, d)] - self.pi[(0, d)]

    @property
    def odds(self) -> np.ndarray:
        return self.p / (1 - self.p)


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    pi: dict
    p: Model
    method: str
    eps_trim: float = EPS_TRIM
    trim_outcomes: bool = True
    fit_meta: dict = field(default_factory=dict)
    folds: np.ndarray | None = None
    _oof: Predictions | None = None
    _panel: TwoPeriodPanel | None = None

    @classmethod
    def from_functions(cls, pi: Mapping[tuple, Callable], p: Callable,
                       eps_trim: float = EPS_TRIM, trim_outcomes: bool = False) -> "NuisanceFit":
        """Fit object built from user-supplied functions of the covariate matrix."""
        models = {arm: f if isinstance(f, Model) else FunctionModel(f) for arm, f in pi.items()}
        pm = p if isinstance(p, Model) else FunctionModel(p)
        return cls(models, pm, "CUSTOM", eps_trim, trim_outcomes, {"method": "CUSTOM"})

    def _trim(self, v: np.ndarray) -> tuple[np.ndarray, int]:
        lo, hi = self.eps_trim, 1 - self.eps_trim
        hits = int(np.sum((v < lo) | (v > hi)))
        return np.clip(v, lo, hi), hits

    def _evaluate(self, x: np.ndarray, pi_models: Mapping, p_model: Model) -> Predictions:
        pi, trimmed = {}, {}
        for arm, m in pi_models.items():
            v = m.predict(x)
            if self.trim_outcomes:
                v, trimmed[f"pi{arm[0]}{arm[1]}"] = self._trim(v)
            pi[arm] = v
        p, trimmed["p"] = self._trim(p_model.predict(x))
        return Predictions(pi, p, trimmed)

    def predictions(self, panel: TwoPeriodPanel) -> Predictions:
        """Nuisance values at each unit; out-of-fold values when this fit was cross-fitted on ``panel``."""
        if self._oof is not None and (panel is self._panel or panel == self._panel):
            return self._oof
        return self._evaluate(panel.x, self.pi, self.p)

    def predict_pi(self, t: int, d: int, x) -> np.ndarray:
        v = self.pi[(t, d)].predict(x)
        return self._trim(v)[0] if self.trim_outcomes else v

    def predict_p(self, x) -> np.ndarray:
        return self._trim(self.p.predict(x))[0]


def predict_delta0(fit: NuisanceFit, x) -> np.ndarray | float:
    """Control-arm trend Pi_1(0,x) - Pi_0(0,x)."""
    v = fit.predict_pi(1, 0, x) - fit.predict_pi(0, 0, x)
    return float(v[0]) if np.ndim(x) <= 1 and v.size == 1 else v


def propensity_odds(fit: NuisanceFit, x) -> np.ndarray | float:
    p = fit.predict_p(x)
    v = p / (1 - p)
    return float(v[0]) if np.ndim(x) <= 1 and v.size == 1 else v


def _design(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x])


def _fit_models(y0, y1, d1, x, method: Method, level_cap: int, column_y0: int | None):
    """Four outcome models and the propensity model on one (sub)sample."""
    outcomes = {0: y0, 1: y1}
    meta = {"converged": {}, "iterations": {}}
    pi = {}
    for t, d in ARMS:
        mask = d1 == d
        if not mask.any():
            raise EstimationError(errors.INSUFFICIENT_ARM, "empty arm in first-step fit", t=t, d=d)
        y = outcomes[t][mask]
        if t == 0 and column_y0 is not None:
            pi[(t, d)] = ColumnModel(column_y0)
            continue
        if method is Method.CONSTANT:
            pi[(t, d)] = ConstantModel(float(y.mean()))
        elif method is Method.CELL_MEANS:
            pi[(t, d)] = _cell_means(x[mask], y)
        else:
            if mask.sum() < x.shape[1] + 1:
                raise EstimationError(errors.INSUFFICIENT_ARM, "too few units for a logistic fit",
                                      t=t, d=d, n=int(mask.sum()), k=x.shape[1] + 1)
            res = fit_logistic(_design(x[mask]), y)
            pi[(t, d)] = LogisticModel(res.coef)
            meta["converged"][f"pi{t}{d}"] = res.converged
            meta["iterations"][f"pi{t}{d}"] = res.iterations
    if method is Method.CONSTANT:
        p = ConstantModel(float(d1.mean()))
    elif method is Method.CELL_MEANS:
        p = _cell_means(x, d1)
    else:
        res = fit_logistic(_design(x), d1)
        p = LogisticModel(res.coef)
        meta["converged"]["p"] = res.converged
        meta["iterations"]["p"] = res.iterations
    return pi, p, meta


def _cell_means(x: np.ndarray, y: np.ndarray) -> CellMeansModel:
    if x.shape[1] == 0:
        return CellMeansModel(np.zeros((1, 0)), np.array([y.mean()]))
    levels, inv = np.unique(x, axis=0, return_inverse=True)
    inv = inv.ravel()
    counts = np.bincount(inv, minlength=len(levels))
    sums = np.bincount(inv, weights=y, minlength=len(levels))
    return CellMeansModel(levels, sums / counts)


def fit_nuisance(panel: TwoPeriodPanel, method: Method | str = Method.LOGISTIC,
                 folds: FoldPlan | None = None, eps_trim: float = EPS_TRIM,
                 level_cap: int = DEFAULT_LEVEL_CAP, y0_column: int | None = None) -> NuisanceFit:
    """Fit Pi_t(d, .) for t, d in {0, 1} and P(.).

    Outcome predictions are trimmed to [eps, 1-eps] only for the logistic
    method; saturated methods keep their exact sample means. The propensity
    is always trimmed. ``y0_column`` names a covariate column that equals Y0,
    in which case Pi_0(d, .) is that column itself.
    """
    method = Method(method)
    if panel.residualized:
        raise ValidationError(errors.NON_BINARY_VALUE, "first-step models need 0/1 outcomes")
    if method is Method.CELL_MEANS:
        for j in range(panel.k):
            nlev = np.unique(panel.x[:, j]).size
            if nlev > level_cap:
                raise ValidationError(errors.TOO_MANY_LEVELS, "CELL_MEANS needs discrete covariates",
                                      column=panel.x_names[j], levels=nlev, cap=level_cap)
    x = panel.x
    pi, p, meta = _fit_models(panel.y0, panel.y1, panel.d1, x, method, level_cap, y0_column)
    meta = {"method": method.value, **meta, "eps_trim": eps_trim}
    trim_outcomes = method is Method.LOGISTIC
    if folds is None:
        fit = NuisanceFit(pi, p, method.value, eps_trim, trim_outcomes, meta)
        pred = fit.predictions(panel)
        meta["trimmed"] = pred.trimmed
        return fit

    labels = folds.assign(panel)
    oof_pi = {arm: np.empty(panel.n) for arm in ARMS}
    oof_p = np.empty(panel.n)
    shell = NuisanceFit(pi, p, method.value, eps_trim, trim_outcomes, meta)
    trimmed: dict = {}
    for f in range(folds.k):
        test = labels == f
        train = ~test
        fpi, fp, _ = _fit_models(panel.y0[train], panel.y1[train], panel.d1[train], x[train],
                                 method, level_cap, y0_column)
        part = shell._evaluate(x[test], fpi, fp)
        for arm in ARMS:
            oof_pi[arm][test] = part.pi[arm]
        oof_p[test] = part.p
        for key, c in part.trimmed.items():
            trimmed[key] = trimmed.get(key, 0) + c
    oof = Predictions(oof_pi, oof_p, trimmed)
    meta.update(trimmed=trimmed, cross_fit={"k": folds.k, "seed": folds.seed,
                                             "legs": ["outcome", "propensity"]})
    return NuisanceFit(pi, p, method.value, eps_trim, trim_outcomes, meta, labels, oof, panel)
