"""Simulation designs with known joint potential outcomes, exact oracles and a Monte Carlo driver.

Untreated outcomes follow Pr{Y_t(0)=1 | D1=d, x} = G(t, x) + H(d, x), so the
parallel-trends restriction holds exactly. Among the treated, persuasion
theta_c(x) moves units with Y1(0)=0 to Y1(1)=1 and backlash b(x) moves units
with Y1(0)=1 to Y1(1)=0.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

from . import errors
from .dataset import StaggeredPanel, TwoPeriodPanel
from .errors import PersuasionError, ValidationError
from .report import EstimateReport, z_quantile

log = logging.getLogger(__name__)

N_QUAD = 64
BOUND_TOL = 1e-12


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


# ----------------------------------------------------------- covariate laws


@dataclass(frozen=True)
class DiscreteCovariates:
    values: np.ndarray  # (L, k)
    probs: np.ndarray  # (L,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (v.shape[0],) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValidationError(errors.INVALID_ARGUMENT, "level probabilities must sum to one")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def nodes(self):
        return self.values, self.probs, np.arange(len(self.probs))

    def draw(self, rng, n):
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.values[idx], idx


@dataclass(frozen=True)
class GaussianCovariate:
    mean: float = 0.0
    sd: float = 1.0

    def nodes(self):
        z, w = np.polynomial.hermite_e.hermegauss(N_QUAD)
        return (self.mean + self.sd * z)[:, None], w / w.sum(), None

    def draw(self, rng, n):
        return (self.mean + self.sd * rng.standard_normal(n))[:, None], None


def _eval(param, x, idx, *args):
    """Parameters are either callables of (args..., x) or arrays indexed by level."""
    if callable(param):
        return np.asarray(param(*args, x), dtype=float) * np.ones(x.shape[0])
    arr = np.asarray(param, dtype=float)
    for a in args:
        arr = arr[a]
    if arr.ndim == 0:
        return np.full(x.shape[0], float(arr))
    if idx is None:
        raise ValidationError(errors.INVALID_ARGUMENT, "array parameters need discrete covariates")
    return arr[idx]


def _check_unit(name: str, v: np.ndarray) -> None:
    if np.any(v < -BOUND_TOL) or np.any(v > 1 + BOUND_TOL):
        raise ValidationError(errors.DOMAIN, f"{name} leaves [0, 1]; the design would need clipping",
                              min=float(np.min(v)), max=float(np.max(v)))


# ------------------------------------------------------------- two periods


@dataclass(frozen=True)
class TwoPeriodDgp:
    """Two-period design. ``G(t, x)``, ``H(d, x)``, ``propensity(x)``, ``theta_c(x)``,
    ``backlash(x)`` may be callables or per-level arrays (G, H indexed [t][level])."""

    covariates: DiscreteCovariates | GaussianCovariate
    propensity: Callable | np.ndarray
    G: Callable | np.ndarray
    H: Callable | np.ndarray
    theta_c: Callable | np.ndarray
    backlash: Callable | np.ndarray | float = 0.0
    persistence: float = 0.5
    seed: int = 0

    def __post_init__(self):
        x, _, idx = self.covariates.nodes()
        self.laws(x, idx)  # validates on the support / quadrature nodes

    def laws(self, x, idx) -> dict:
        out = {"p": _eval(self.propensity, x, idx)}
        for t in (0, 1):
            for d in (0, 1):
                v = _eval(self.G, x, idx, t) + _eval(self.H, x, idx, d)
                _check_unit(f"G({t},x)+H({d},x)", v)
                out[(t, d)] = np.clip(v, 0.0, 1.0)
        out["theta_c"] = _eval(self.theta_c, x, idx)
        out["backlash"] = _eval(self.backlash, x, idx)
        for k in ("p", "theta_c", "backlash"):
            _check_unit(k, out[k])
        return out

    @property
    def has_backlash(self) -> bool:
        x, _, idx = self.covariates.nodes()
        return bool(np.any(self.laws(x, idx)["backlash"] > 0))


def _coupled_pair(rng, a, b, rho):
    """Two Bernoullis with success probabilities a, b sharing a uniform with probability rho."""
    u0 = rng.random(a.size)
    fresh = rng.random(a.size)
    u1 = np.where(rng.random(a.size) < rho, u0, fresh)
    return (u0 < a).astype(float), (u1 < b).astype(float)


def draw_two_period(dgp: TwoPeriodDgp, n: int, rng: np.random.Generator) -> dict:
    """Draw units with all potential outcomes (for law checks and panels)."""
    x, idx = dgp.covariates.draw(rng, n)
    law = dgp.laws(x, idx)
    d = (rng.random(n) < law["p"]).astype(float)
    a0 = np.where(d == 1, law[(0, 1)], law[(0, 0)])
    a1 = np.where(d == 1, law[(1, 1)], law[(1, 0)])
    y0, y1_0 = _coupled_pair(rng, a0, a1, dgp.persistence)
    u = rng.random(n)
    y1_1 = np.where(y1_0 == 0, (u < law["theta_c"]).astype(float), (u >= law["backlash"]).astype(float))
    return {"x": x, "d": d, "y0": y0, "y1_0": y1_0, "y1_1": y1_1}


def gen_two_period(dgp: TwoPeriodDgp, n: int, rng: np.random.Generator | int | None = None) -> TwoPeriodPanel:
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = rng_for(dgp.seed if rng is None else rng)
    u = draw_two_period(dgp, n, rng)
    y1 = u["d"] * u["y1_1"] + (1 - u["d"]) * u["y1_0"]
    return TwoPeriodPanel(u["y0"], y1, u["d"], u["x"])


@dataclass(frozen=True)
class OracleValues:
    theta: float
    rtheta: float
    att: float
    theta_l: float
    rtheta_l: float
    q: float
    treated_y1_share: float
    staggered: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def oracle(dgp) -> OracleValues:
    if isinstance(dgp, StaggeredDgp):
        return dgp.oracle()
    x, w, idx = dgp.covariates.nodes()
    law = dgp.laws(x, idx)
    wt = w * law["p"]
    wt = wt / wt.sum()  # covariate law among the treated
    tau = law[(1, 1)]
    th, b = law["theta_c"], law["backlash"]
    p01 = (1 - tau) * th
    p10 = tau * b
    p11 = tau * (1 - b)
    e = lambda v: float(np.sum(wt * v))
    att = e(p01 - p10)
    pi1 = e(p01 + p11)
    return OracleValues(
        theta=e(p01) / e(1 - tau),
        rtheta=e(p01) / pi1,
        att=att,
        theta_l=att / e(1 - tau),
        rtheta_l=att / pi1,
        q=1 - pi1,
        treated_y1_share=pi1,
    )


def single_cell_dgp(joint, pre_treated: float = 0.3, pre_control: float = 0.3,
                    post_control: float | None = None, p: float = 0.5, **kw) -> TwoPeriodDgp:
    """Covariate-free design with the treated joint (p00, p01, p10, p11) of (Y1(0), Y1(1))."""
    p00, p01, p10, p11 = joint
    tau = p10 + p11
    theta_c = p01 / (p00 + p01)
    b = p10 / tau if tau > 0 else 0.0
    # G(1) + H(1) = tau; choose H(1) - H(0) = pre_treated - pre_control
    h1 = pre_treated - pre_control
    g1 = tau - h1
    if post_control is not None and abs(g1 - post_control) > 1e-12:
        raise ValidationError(errors.INVALID_ARGUMENT, "post_control is implied by the other inputs")
    cov = DiscreteCovariates(np.zeros((1, 1)), np.ones(1))
    return TwoPeriodDgp(cov, np.array([p]), np.array([[pre_control], [g1]]),
                        np.array([[0.0], [h1]]), np.array([theta_c]), np.array([b]), **kw)


# --------------------------------------------------------------- staggered


@dataclass(frozen=True)
class StaggeredDgp:
    """Staggered design on discrete covariates.

    adoption: (L, T+1) probabilities over S = 1..T then never.
    G: (T+1, L) time component; H: (T+1, L) group component for S = 1..T then never.
    theta_c: (T, L) persuasion rate by event time e = t - s >= 0.
    backlash: same shape as theta_c, or a scalar.
    violation: optional (T+1, T+1, L) additive shift to Pr{Y_t(inf)=1 | S=s, x}
    indexed [cohort slot, t, level]; breaks the parallel-trends restriction.
    """

    T: int
    covariates: DiscreteCovariates
    adoption: np.ndarray
    G: np.ndarray
    H: np.ndarray
    theta_c: np.ndarray
    backlash: np.ndarray | float = 0.0
    violation: np.ndarray | None = None
    persistence: float = 0.5
    seed: int = 0

    def __post_init__(self):
        L = len(self.covariates.probs)
        ad = np.asarray(self.adoption, dtype=float)
        if ad.shape != (L, self.T + 1) or np.any(np.abs(ad.sum(axis=1) - 1) > 1e-12):
            raise ValidationError(errors.INVALID_ARGUMENT, "adoption must be (L, T+1) with rows summing to one")
        _check_unit("untreated probability", self.untreated())
        _check_unit("theta_c", np.asarray(self.theta_c, dtype=float))
        _check_unit("backlash", np.asarray(self.backlash, dtype=float))

    def untreated(self) -> np.ndarray:
        """Pr{Y_t(inf)=1 | S slot, x} with shape (T+1 slots, T+1 periods, L)."""
        G = np.asarray(self.G, dtype=float)
        H = np.asarray(self.H, dtype=float)
        a = H[:, None, :] + G[None, :, :]
        if self.violation is not None:
            a = a + np.asarray(self.violation, dtype=float)
        return a

    def _rates(self):
        L = len(self.covariates.probs)
        th = np.broadcast_to(np.asarray(self.theta_c, dtype=float), (self.T, L))
        bk = np.broadcast_to(np.asarray(self.backlash, dtype=float), (self.T, L))
        return th, bk

    def oracle(self) -> OracleValues:
        w = self.covariates.probs
        ad = np.asarray(self.adoption, dtype=float)
        a = self.untreated()
        th, bk = self._rates()
        pairs, espr_true, espr_l = {}, {}, {}
        for j in range(-self.T, self.T):
            num_t = num_l = den = 0.0
            for s in range(1, self.T + 1):
                t = s + j
                if t < 0 or t > self.T:
                    continue
                ws = w * ad[:, s - 1]
                ps = ws.sum()
                if ps == 0:
                    continue
                tau = a[s - 1, t]
                if j >= 0:
                    p01 = (1 - tau) * th[j]
                    p10 = tau * bk[j]
                else:
                    p01 = p10 = np.zeros_like(tau)
                n_t = float(np.sum(ws * p01))
                n_l = float(np.sum(ws * (p01 - p10)))
                dn = float(np.sum(ws * (1 - tau)))
                pairs[(s, j)] = {"theta": n_t / dn, "theta_l": n_l / dn}
                num_t += n_t
                num_l += n_l
                den += dn
            if den > 0:
                espr_true[j] = num_t / den
                espr_l[j] = num_l / den
        return OracleValues(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan,
                            {"pairs": pairs, "espr": espr_true, "espr_l": espr_l})


def gen_staggered(dgp: StaggeredDgp, n: int, rng: np.random.Generator | int | None = None) -> StaggeredPanel:
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = rng_for(dgp.seed if rng is None else rng)
    T = dgp.T
    x, idx = dgp.covariates.draw(rng, n)
    ad = np.asarray(dgp.adoption, dtype=float)[idx]
    slot = (rng.random(n)[:, None] > np.cumsum(ad, axis=1)).sum(axis=1)  # 0..T; T = never
    slot = np.minimum(slot, T)
    s = np.where(slot == T, np.inf, slot + 1.0)
    a = dgp.untreated()[slot, :, idx]  # (n, T+1)
    u = rng.random(n)
    y_inf = np.empty((n, T + 1))
    y_inf[:, 0] = u < a[:, 0]
    for t in range(1, T + 1):
        u = np.where(rng.random(n) < dgp.persistence, u, rng.random(n))
        y_inf[:, t] = u < a[:, t]
    th, bk = dgp._rates()
    y = y_inf.copy()
    for t in range(1, T + 1):
        e = t - s
        treated = np.isfinite(s) & (e >= 0)
        if not treated.any():
            continue
        ei = np.where(treated, e, 0).astype(int)
        v = rng.random(n)
        move_up = v < th[ei, idx]
        move_down = v < bk[ei, idx]
        y1 = np.where(y_inf[:, t] == 0, move_up, ~move_down).astype(float)
        y[:, t] = np.where(treated, y1, y_inf[:, t])
    return StaggeredPanel(y, s, x)


# ------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class McSummary:
    truth: float
    mean: float
    bias: float
    sd: float
    rmse: float
    mc_se: float
    mean_se: float
    coverage: float
    reps: int
    failures: int
    estimates: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("estimates", "ses")}
        return d


def _point_se(r) -> tuple[float, float]:
    if isinstance(r, EstimateReport):
        return r.point, r.se
    if hasattr(r, "theta") and hasattr(r, "se"):
        return r.theta, r.se
    return float(r[0]), float(r[1])


def _one_rep(args):
    gen, dgp, estimator, n, seed, rep = args
    panel = gen(dgp, n, rng_for(seed, rep))
    out = {}
    try:
        res = estimator(panel)
    except PersuasionError as exc:
        return rep, {"__failure__": exc.code}
    for name, r in res.items():
        out[name] = _point_se(r)
    return rep, out


def monte_carlo(dgp, estimator: Callable[[object], Mapping], n: int, reps: int, seed: int,
                truth: float | Mapping[str, float], level: float = 0.95, n_jobs: int = 1,
                generator: Callable | None = None) -> dict[str, McSummary]:
    """Replicate ``estimator`` (panel -> {name: report | (point, se)}) on fresh draws.

    Replication r uses the stream keyed by (seed, r). Summaries are keyed like
    the estimator output; ``truth`` is a scalar or a mapping with the same keys.
    """
    if reps < 2:
        raise ValidationError(errors.INVALID_ARGUMENT, "need reps >= 2", reps=reps)
    gen = generator or (gen_staggered if isinstance(dgp, StaggeredDgp) else gen_two_period)
    jobs = [(gen, dgp, estimator, n, seed, r) for r in range(reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_one_rep, jobs))
    else:
        results = [_one_rep(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    names = sorted({k for _, r in results for k in r if k != "__failure__"})
    z = z_quantile(0.5 + level / 2)
    out = {}
    for name in names:
        pts = np.array([r.get(name, (np.nan, np.nan))[0] for _, r in results])
        ses = np.array([r.get(name, (np.nan, np.nan))[1] for _, r in results])
        ok = np.isfinite(pts)
        tv = truth[name] if isinstance(truth, Mapping) else truth
        p, s = pts[ok], ses[ok]
        m = len(p)
        sd = float(np.std(p, ddof=1)) if m > 1 else np.nan
        cover = float(np.mean(np.abs(p - tv) <= z * s)) if m else np.nan
        out[name] = McSummary(
            truth=float(tv), mean=float(p.mean()), bias=float(p.mean() - tv), sd=sd,
            rmse=float(np.sqrt(np.mean((p - tv) ** 2))), mc_se=sd / np.sqrt(m), mean_se=float(np.nanmean(s)),
            coverage=cover, reps=m, failures=reps - m, estimates=pts, ses=ses,
        )
    return out


def logistic_propensity(c0: float, c: np.ndarray | float) -> Callable:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return lambda x: expit(c0 + np.asarray(x, dtype=float) @ c)


# ------------------------------------------------------------ JSON configs


def _scalar_fn(form) -> Callable:
    """{"linear": [a, b1, ...]} -> a + x b; {"logistic": [...]} -> expit of that."""
    if isinstance(form, (int, float)):
        return lambda x: np.full(x.shape[0], float(form))
    (kind, coef), = form.items()
    c = np.asarray(coef, dtype=float)
    index = lambda x: c[0] + np.asarray(x, dtype=float) @ c[1:]
    if kind == "linear":
        return index
    if kind == "logistic":
        return lambda x: expit(index(x))
    raise ValidationError(errors.INVALID_ARGUMENT, "unknown parameter form", form=kind)


def _param(form, indexed: bool):
    """Arrays pass through; dict forms become callables (indexed by t or d when ``indexed``)."""
    if indexed and isinstance(form, list) and form and isinstance(form[0], dict):
        fs = [_scalar_fn(s) for s in form]
        return lambda i, x: fs[i](x)
    if isinstance(form, dict):
        return _scalar_fn(form)
    return np.asarray(form, dtype=float)


def dgp_from_dict(cfg: Mapping):
    """Build a design from a JSON-style mapping (see README for the keys)."""
    cov_cfg = cfg.get("covariates", {"values": [[0.0]], "probs": [1.0]})
    if "gaussian" in cov_cfg:
        cov = GaussianCovariate(**cov_cfg["gaussian"])
    else:
        cov = DiscreteCovariates(np.asarray(cov_cfg["values"], dtype=float), np.asarray(cov_cfg["probs"]))
    seed = int(cfg.get("seed", 0))
    kind = cfg.get("design", "two_period")
    if kind == "two_period":
        return TwoPeriodDgp(cov, _param(cfg["propensity"], False), _param(cfg["G"], True),
                            _param(cfg["H"], True), _param(cfg["theta_c"], False),
                            _param(cfg.get("backlash", 0.0), False), float(cfg.get("persistence", 0.5)), seed)
    if kind == "staggered":
        if not isinstance(cov, DiscreteCovariates):
            raise ValidationError(errors.INVALID_ARGUMENT, "staggered designs need discrete covariates")
        viol = cfg.get("violation")
        return StaggeredDgp(int(cfg["T"]), cov, np.asarray(cfg["adoption"], dtype=float),
                            np.asarray(cfg["G"], dtype=float), np.asarray(cfg["H"], dtype=float),
                            np.asarray(cfg["theta_c"], dtype=float), np.asarray(cfg.get("backlash", 0.0)),
                            None if viol is None else np.asarray(viol, dtype=float),
                            float(cfg.get("persistence", 0.5)), seed)
    raise ValidationError(errors.INVALID_ARGUMENT, "design must be two_period or staggered", design=kind)


# ------------------------------------------------------- estimator suites


@dataclass(frozen=True)
class TwoPeriodSuite:
    """Picklable estimator bundle: panel -> {"<estimator>_<target>": report}."""

    estimators: tuple[str, ...] = ("fe", "gmm", "did", "pi", "pow", "dr")
    targets: tuple[str, ...] = ("aprt", "raprt")
    method: str = "CELL_MEANS"
    alpha: float = 0.05

    def __call__(self, panel: TwoPeriodPanel) -> dict:
        from .nuisance import fit_nuisance
        from .twoperiod_reg import aprt_from_fe, fit_two_way_fe, gmm_iv, raprt_from_fe
        from .twoperiod_semipar import ESTIMATORS

        out = {}
        fe = fit_two_way_fe(panel) if "fe" in self.estimators else None
        fit = None
        for name in self.estimators:
            for t in self.targets:
                key = f"{name}_{t}"
                if name == "fe":
                    out[key] = (aprt_from_fe if t == "aprt" else raprt_from_fe)(fe, panel, self.alpha)
                elif name == "gmm":
                    out[key] = gmm_iv(panel, t.upper(), self.alpha)
                else:
                    if fit is None:
                        fit = fit_nuisance(panel, self.method)
                    out[key] = ESTIMATORS[name](panel, fit, t.upper(), self.alpha)
        return out

    def truth(self, orc: OracleValues) -> dict:
        """The DID-identified rates (equal to the true rates without backlash)."""
        return {f"{e}_{t}": orc.theta_l if t == "aprt" else orc.rtheta_l
                for e in self.estimators for t in self.targets}


@dataclass(frozen=True)
class StaggeredSuite:
    horizons: tuple[int, ...] = (0,)
    estimator: str = "REGRESSION"
    method: str = "CONSTANT"
    alpha: float = 0.05

    def __call__(self, panel: StaggeredPanel) -> dict:
        from .staggered import espr

        return {f"espr_{j}": espr(panel, j, self.estimator, self.alpha, self.method, pretrend=j <= -2)
                for j in self.horizons}

    def truth(self, orc: OracleValues) -> dict:
        return {f"espr_{j}": orc.staggered["espr_l"][j] for j in self.horizons}
