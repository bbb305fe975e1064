"""Binary-outcome panel containers, CSV ingestion and cell tabulation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import errors
from .errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_LEVEL_CAP = 20
INFINITY_TOKEN = "inf"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _as_covariates(x, n: int) -> np.ndarray:
    if x is None:
        return np.zeros((n, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(n, -1) if n else x.reshape(0, 0)
    if x.ndim != 2 or x.shape[0] != n:
        raise ValidationError(
            errors.SHAPE_MISMATCH, "covariate matrix must have one row per unit",
            shape=list(x.shape), n=n,
        )
    return x


def _check_binary(name: str, v: np.ndarray) -> None:
    bad = np.flatnonzero((v != 0) & (v != 1))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            errors.NON_BINARY_VALUE, f"column {name!r} must be 0/1",
            column=name, row=i + 1, value=float(v[i]),
        )


@dataclass(frozen=True, eq=False)
class TwoPeriodPanel:
    """One record per unit: pre-period outcome, post-period outcome, treatment.

    ``residualized`` marks panels whose outcomes were linearly adjusted for
    covariates (see :func:`persuasion_did.twoperiod_reg.partial_out_covariates`);
    such outcomes are no longer 0/1 and only the regression estimators accept them.
    """

    y0: np.ndarray
    y1: np.ndarray
    d1: np.ndarray
    x: np.ndarray = None
    cluster: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    residualized: bool = False

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float).ravel()
        n = y0.size
        y1 = np.asarray(self.y1, dtype=float).ravel()
        d1 = np.asarray(self.d1, dtype=float).ravel()
        if y1.size != n or d1.size != n:
            raise ValidationError(
                errors.SHAPE_MISMATCH, "y0, y1 and d1 must have equal length",
                n_y0=n, n_y1=y1.size, n_d1=d1.size,
            )
        x = _as_covariates(self.x, n)
        if not self.residualized:
            _check_binary("y0", y0)
            _check_binary("y1", y1)
        _check_binary("d1", d1)
        n1 = int(d1.sum())
        if n1 == 0 or n1 == n:
            raise ValidationError(
                errors.EMPTY_ARM, "panel needs both treated and control units",
                n_treated=n1, n_control=n - n1,
            )
        cluster = None if self.cluster is None else np.asarray(self.cluster).ravel()
        if cluster is not None and cluster.size != n:
            raise ValidationError(errors.SHAPE_MISMATCH, "cluster ids must have one entry per unit")
        names = tuple(self.x_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValidationError(errors.SHAPE_MISMATCH, "x_names length differs from covariate count")
        object.__setattr__(self, "y0", _frozen(y0))
        object.__setattr__(self, "y1", _frozen(y1))
        object.__setattr__(self, "d1", _frozen(d1))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "cluster", None if cluster is None else _frozen(cluster))
        object.__setattr__(self, "x_names", names)

    @property
    def n(self) -> int:
        return self.y0.size

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def treated(self) -> np.ndarray:
        return self.d1 == 1

    def subset(self, mask: np.ndarray) -> "TwoPeriodPanel":
        return TwoPeriodPanel(
            self.y0[mask], self.y1[mask], self.d1[mask], self.x[mask],
            None if self.cluster is None else self.cluster[mask],
            self.x_names, self.residualized,
        )

    def with_covariates(self, x: np.ndarray, names: Sequence[str]) -> "TwoPeriodPanel":
        return TwoPeriodPanel(self.y0, self.y1, self.d1, x, self.cluster, tuple(names), self.residualized)

    def __eq__(self, other):
        if not isinstance(other, TwoPeriodPanel):
            return NotImplemented
        same_cluster = (self.cluster is None and other.cluster is None) or (
            self.cluster is not None and other.cluster is not None
            and np.array_equal(self.cluster, other.cluster)
        )
        return (
            np.array_equal(self.y0, other.y0) and np.array_equal(self.y1, other.y1)
            and np.array_equal(self.d1, other.d1) and np.array_equal(self.x, other.x)
            and same_cluster and self.x_names == other.x_names
            and self.residualized == other.residualized
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StaggeredPanel:
    """Outcomes for periods 0..T plus adoption time (``np.inf`` = never treated)."""

    y: np.ndarray
    s: np.ndarray
    x: np.ndarray = None
    cluster: np.ndarray | None = None
    x_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2 or y.shape[1] < 2:
            raise ValidationError(
                errors.SHAPE_MISMATCH, "outcomes must be an (n, T+1) matrix with T >= 1",
                shape=list(y.shape),
            )
        n, T1 = y.shape
        T = T1 - 1
        s = np.asarray(self.s, dtype=float).ravel()
        if s.size != n:
            raise ValidationError(errors.SHAPE_MISMATCH, "one adoption time per unit required")
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            i, t = divmod(int(bad[0]), T1)
            raise ValidationError(
                errors.NON_BINARY_VALUE, "outcomes must be 0/1",
                row=i + 1, period=t, value=float(y.flat[bad[0]]),
            )
        finite = np.isfinite(s)
        bad = np.flatnonzero(finite & ((s < 1) | (s > T) | (s != np.round(s))) | np.isnan(s))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                errors.INVALID_ADOPTION_TIME, f"adoption time must be an integer in 1..{T} or infinity",
                row=i + 1, value=float(s[i]),
            )
        if np.any(s == -np.inf):
            raise ValidationError(errors.INVALID_ADOPTION_TIME, "adoption time cannot be -inf")
        if not np.any(~finite):
            raise ValidationError(errors.NO_NEVER_TREATED, "at least one never-treated unit is required")
        x = _as_covariates(self.x, n)
        names = tuple(self.x_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        cluster = None if self.cluster is None else np.asarray(self.cluster).ravel()
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "cluster", None if cluster is None else _frozen(cluster))
        object.__setattr__(self, "x_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1] - 1

    @property
    def never(self) -> np.ndarray:
        return ~np.isfinite(self.s)

    def cohorts(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.s[np.isfinite(self.s)]))

    def to_two_period(self) -> TwoPeriodPanel:
        """T=1 panels are two-period panels with D1 = 1(S = 1)."""
        if self.T != 1:
            raise ValidationError(errors.SHAPE_MISMATCH, "only T=1 panels reduce to two periods", T=self.T)
        return TwoPeriodPanel(
            self.y[:, 0], self.y[:, 1], (self.s == 1).astype(float), self.x, self.cluster, self.x_names,
        )


def validate(panel):
    """Re-run the panel invariants; returns an equal panel (idempotent)."""
    if isinstance(panel, TwoPeriodPanel):
        return TwoPeriodPanel(panel.y0, panel.y1, panel.d1, panel.x, panel.cluster,
                              panel.x_names, panel.residualized)
    if isinstance(panel, StaggeredPanel):
        return StaggeredPanel(panel.y, panel.s, panel.x, panel.cluster, panel.x_names)
    raise TypeError(f"not a panel: {type(panel).__name__}")


# --------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class TwoPeriodSchema:
    y0: str = "y0"
    y1: str = "y1"
    d: str = "d1"
    x: tuple[str, ...] = ()
    cluster: str | None = None


@dataclass(frozen=True)
class StaggeredSchema:
    y: tuple[str, ...] = ()
    s: str = "s"
    x: tuple[str, ...] = ()
    cluster: str | None = None
    # long layout: one row per unit x period
    layout: str = "wide"
    unit: str = "unit"
    period: str = "period"
    outcome: str = "y"


def _read(path) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=True, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise ValidationError(errors.MISSING_COLUMN, "file has no header row", path=str(path)) from exc
    df.columns = [c.strip() for c in df.columns]
    return df


def _require(df: pd.DataFrame, cols: Sequence[str]) -> None:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ValidationError(
            errors.MISSING_COLUMN, f"missing column(s): {', '.join(missing)}",
            missing=missing, available=list(df.columns),
        )


def _drop_missing(df: pd.DataFrame, cols: Sequence[str]) -> pd.DataFrame:
    sub = df[list(cols)].apply(lambda c: c.str.strip())
    keep = ~(sub.isna() | (sub == "")).any(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("listwise deletion: dropped %d of %d rows with missing values", dropped, len(df))
    return df.loc[keep]


def _binary_column(df: pd.DataFrame, col: str) -> np.ndarray:
    vals = pd.to_numeric(df[col].str.strip(), errors="coerce").to_numpy(dtype=float)
    ok = (vals == 0) | (vals == 1)
    if not ok.all():
        pos = int(np.flatnonzero(~ok)[0])
        raise ValidationError(
            errors.NON_BINARY_VALUE, f"column {col!r} must be 0/1",
            column=col, row=int(df.index[pos]) + 1, value=df[col].iloc[pos],
        )
    return vals


def _numeric_columns(df: pd.DataFrame, cols: Sequence[str]) -> np.ndarray:
    if not cols:
        return np.zeros((len(df), 0))
    out = np.empty((len(df), len(cols)))
    for j, c in enumerate(cols):
        v = pd.to_numeric(df[c].str.strip(), errors="coerce").to_numpy(dtype=float)
        if np.isnan(v).any():
            pos = int(np.flatnonzero(np.isnan(v))[0])
            raise ValidationError(
                errors.NON_BINARY_VALUE, f"covariate {c!r} is not numeric",
                column=c, row=int(df.index[pos]) + 1, value=df[c].iloc[pos],
            )
        out[:, j] = v
    return out


def load_two_period_csv(path, schema: TwoPeriodSchema = TwoPeriodSchema()) -> TwoPeriodPanel:
    df = _read(path)
    cols = [schema.y0, schema.y1, schema.d, *schema.x] + ([schema.cluster] if schema.cluster else [])
    _require(df, cols)
    df = _drop_missing(df, cols)
    y0 = _binary_column(df, schema.y0)
    y1 = _binary_column(df, schema.y1)
    d1 = _binary_column(df, schema.d)
    x = _numeric_columns(df, schema.x)
    cluster = df[schema.cluster].str.strip().to_numpy() if schema.cluster else None
    return TwoPeriodPanel(y0, y1, d1, x, cluster, tuple(schema.x))


def _parse_adoption(df: pd.DataFrame, col: str, infinity_token: str) -> np.ndarray:
    raw = df[col].str.strip()
    is_inf = raw.str.lower() == infinity_token.lower()
    vals = pd.to_numeric(raw.where(~is_inf), errors="coerce").to_numpy(dtype=float)
    vals[is_inf.to_numpy()] = np.inf
    bad = np.isnan(vals) | (np.isfinite(vals) & ((vals < 1) | (vals != np.round(vals))))
    if bad.any():
        pos = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            errors.INVALID_ADOPTION_TIME,
            f"adoption time must be an integer >= 1 or {infinity_token!r}",
            column=col, row=int(df.index[pos]) + 1, value=raw.iloc[pos],
        )
    return vals


def load_staggered_csv(
    path, schema: StaggeredSchema, infinity_token: str = INFINITY_TOKEN
) -> StaggeredPanel:
    df = _read(path)
    if schema.layout == "long":
        return _staggered_from_long(df, schema, infinity_token)
    if not schema.y:
        # fall back to columns named y0, y1, ... when they run consecutively from 0
        found = {int(c[1:]): c for c in df.columns if c.startswith("y") and c[1:].isdigit()}
        k = 0
        while k in found:
            k += 1
        schema = replace(schema, y=tuple(found[t] for t in range(k)))
    if len(schema.y) < 2:
        raise ValidationError(errors.MISSING_COLUMN, "at least two outcome columns (periods 0..T) required")
    cols = [*schema.y, schema.s, *schema.x] + ([schema.cluster] if schema.cluster else [])
    _require(df, cols)
    df = _drop_missing(df, cols)
    y = np.column_stack([_binary_column(df, c) for c in schema.y])
    s = _parse_adoption(df, schema.s, infinity_token)
    T = y.shape[1] - 1
    late = np.flatnonzero(np.isfinite(s) & (s > T))
    if late.size:
        pos = int(late[0])
        raise ValidationError(
            errors.INVALID_ADOPTION_TIME, f"adoption time exceeds horizon T={T}",
            row=int(df.index[pos]) + 1, value=float(s[pos]),
        )
    x = _numeric_columns(df, schema.x)
    cluster = df[schema.cluster].str.strip().to_numpy() if schema.cluster else None
    return StaggeredPanel(y, s, x, cluster, tuple(schema.x))


def _staggered_from_long(df: pd.DataFrame, schema: StaggeredSchema, infinity_token: str) -> StaggeredPanel:
    cols = [schema.unit, schema.period, schema.outcome, schema.s, *schema.x]
    cols += [schema.cluster] if schema.cluster else []
    _require(df, cols)
    df = _drop_missing(df, cols)
    y = _binary_column(df, schema.outcome)
    period = pd.to_numeric(df[schema.period], errors="coerce")
    if period.isna().any():
        pos = int(np.flatnonzero(period.isna())[0])
        raise ValidationError(errors.NON_BINARY_VALUE, "period must be an integer",
                              row=int(df.index[pos]) + 1)
    s = _parse_adoption(df, schema.s, infinity_token)
    work = pd.DataFrame({"unit": df[schema.unit].to_numpy(), "period": period.to_numpy().astype(int),
                         "y": y, "s": s})
    for c in schema.x:
        work[c] = _numeric_columns(df, [c])[:, 0]
    if schema.cluster:
        work["_cluster"] = df[schema.cluster].to_numpy()
    periods = sorted(work["period"].unique())
    if periods != list(range(len(periods))):
        raise ValidationError(errors.SHAPE_MISMATCH, "periods must be 0..T without gaps", periods=periods)
    wide = work.pivot(index="unit", columns="period", values="y")
    incomplete = wide.isna().any(axis=1)
    if incomplete.any():
        log.warning("listwise deletion: dropped %d units with incomplete period coverage",
                    int(incomplete.sum()))
        wide = wide.loc[~incomplete]
    static = work.groupby("unit", sort=True).first().loc[wide.index]
    T = len(periods) - 1
    sv = static["s"].to_numpy(dtype=float)
    if np.any(np.isfinite(sv) & (sv > T)):
        raise ValidationError(errors.INVALID_ADOPTION_TIME, f"adoption time exceeds horizon T={T}")
    x = static[list(schema.x)].to_numpy(dtype=float) if schema.x else None
    cluster = static["_cluster"].to_numpy() if schema.cluster else None
    return StaggeredPanel(wide.to_numpy(dtype=float), sv, x, cluster, tuple(schema.x))


# ------------------------------------------------------------------ cells


@dataclass(frozen=True)
class CellTable:
    """Counts of units by (y0, y1, d1[, covariate level])."""

    counts: dict
    discrete_x: bool = False
    x_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def levels(self) -> list[tuple]:
        if not self.discrete_x:
            return [()]
        return sorted({key[3] for key in self.counts})

    def mean(self, t: int, d: int, level: tuple = ()) -> float:
        """Exact Pr(Y_t = 1 | D1 = d, X = level) on the tabulated sample."""
        num = den = 0
        for key, c in self.counts.items():
            if key[2] != d or (self.discrete_x and key[3] != level):
                continue
            den += c
            num += c * key[t]
        if den == 0:
            raise ValidationError(errors.EMPTY_ARM, "no units in the requested cell", t=t, d=d, level=level)
        return num / den

    def share(self, d: int, level: tuple = ()) -> float:
        """Pr(D1 = d | X = level)."""
        tot = sum(c for k, c in self.counts.items() if not self.discrete_x or k[3] == level)
        hit = sum(c for k, c in self.counts.items()
                  if k[2] == d and (not self.discrete_x or k[3] == level))
        return hit / tot

    def level_count(self, level: tuple = (), d: int | None = None) -> int:
        return sum(c for k, c in self.counts.items()
                   if (not self.discrete_x or k[3] == level) and (d is None or k[2] == d))

    def to_panel(self) -> TwoPeriodPanel:
        """Expand back to units, in sorted cell order."""
        rows = []
        for key in sorted(self.counts):
            rows.extend([key] * self.counts[key])
        y0 = np.array([r[0] for r in rows], dtype=float)
        y1 = np.array([r[1] for r in rows], dtype=float)
        d1 = np.array([r[2] for r in rows], dtype=float)
        if self.discrete_x:
            x = np.array([r[3] for r in rows], dtype=float).reshape(len(rows), len(self.x_names))
        else:
            x = None
        return TwoPeriodPanel(y0, y1, d1, x, x_names=self.x_names if self.discrete_x else ())


def to_cells(panel: TwoPeriodPanel, discrete_x: bool = False, level_cap: int = DEFAULT_LEVEL_CAP) -> CellTable:
    if panel.residualized:
        raise ValidationError(errors.NON_BINARY_VALUE, "residualized outcomes cannot be tabulated")
    if discrete_x:
        for j, name in enumerate(panel.x_names):
            nlev = np.unique(panel.x[:, j]).size
            if nlev > level_cap:
                raise ValidationError(
                    errors.TOO_MANY_LEVELS, f"covariate {name!r} has {nlev} levels (cap {level_cap})",
                    column=name, levels=nlev, cap=level_cap,
                )
        keys = (
            (int(a), int(b), int(c), tuple(float(v) for v in xi))
            for a, b, c, xi in zip(panel.y0, panel.y1, panel.d1, panel.x)
        )
        return CellTable(dict(Counter(keys)), True, panel.x_names)
    counts = Counter((int(a), int(b), int(c)) for a, b, c in zip(panel.y0, panel.y1, panel.d1))
    full = {(a, b, c): counts.get((a, b, c), 0) for a in (0, 1) for b in (0, 1) for c in (0, 1)}
    return CellTable(full, False, ())
