"""Result records shared by every estimator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtri

DELTA_DEN = 1e-8


class Target(str, Enum):
    APRT = "APRT"
    RAPRT = "RAPRT"


class Estimand(str, Enum):
    APRT = "APRT"
    RAPRT = "RAPRT"
    ATT = "ATT"
    ESPR = "ESPR"
    THETA_ST = "THETA_ST"


def z_quantile(p: float) -> float:
    """Standard normal quantile."""
    return float(ndtri(p))


def normal_ci(point: float, se: float, level: float) -> tuple[float, float]:
    if not math.isfinite(se):
        return (float("nan"), float("nan"))
    z = z_quantile(0.5 + level / 2)
    return (point - z * se, point + z * se)


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, Enum):
        return v.value
    return v


def jsonable(v):
    """Plain-Python copy of nested results (numpy scalars, enums, non-finite -> None)."""
    return _clean(v)


@dataclass
class EstimateReport:
    estimand: str
    estimator: str
    point: float
    se: float
    ci: tuple[float, float]
    level: float
    n: int
    warnings: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def build(cls, estimand, estimator: str, point: float, se: float, n: int,
              level: float = 0.95, warnings=None, diagnostics=None) -> "EstimateReport":
        warnings = list(warnings or [])
        if math.isfinite(point) and not 0.0 <= point <= 1.0:
            warnings.append("estimate outside [0, 1]; reported unclipped")
        return cls(Estimand(estimand).value, estimator, float(point), float(se),
                   normal_ci(point, se, level), level, int(n), warnings, dict(diagnostics or {}))

    def to_dict(self) -> dict:
        return jsonable(asdict(self))
