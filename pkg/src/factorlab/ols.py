"""Ordinary least squares with the usual influence diagnostics.

The solve goes through a QR factorization of the design matrix; the
classical normal-equations route (X'X)^-1 X'y exists only as an oracle
in the tests. Rank deficiency is detected on the R diagonal with a
relative 1e-10 tolerance and reported with the offending column names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc

from .errors import DataError, NumericalError
from .ingest import FactorPanel

PanelLike = Union[FactorPanel, Mapping[str, np.ndarray]]

_RANK_TOL = 1e-10
INTERCEPT = "Intercept"


@dataclass
class DesignSpec:
    """Which regression to run: dependent, regressors, intercept."""

    dependent: str
    regressors: list[str]
    include_intercept: bool = True

    def __post_init__(self) -> None:
        if not self.regressors:
            raise DataError("design needs at least one regressor")
        if len(set(self.regressors)) != len(self.regressors):
            raise DataError(f"duplicate regressors: {self.regressors}")
        if self.dependent in self.regressors:
            raise DataError(f"dependent {self.dependent!r} cannot be a regressor")


@dataclass
class OlsFit:
    """Coefficient table plus per-observation arrays for one regression."""

    dependent: str
    terms: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    leverage: np.ndarray = field(repr=False)
    n: int
    k: int
    include_intercept: bool
    r_squared: float
    adj_r_squared: float
    multiple_r: float
    resid_se: float

    @property
    def n_params(self) -> int:
        return self.k + (1 if self.include_intercept else 0)

    @property
    def dof(self) -> int:
        return self.n - self.n_params

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def p_value(self, term: str) -> float:
        return float(self.p_values[self.terms.index(term)])

    def to_json_dict(self, include_series: bool = True) -> dict:
        doc = {
            "dependent": self.dependent,
            "terms": list(self.terms),
            "coefficients": [float(v) for v in self.coefficients],
            "standardErrors": [float(v) for v in self.standard_errors],
            "tStats": [float(v) for v in self.t_stats],
            "pValues": [float(v) for v in self.p_values],
            "nObs": int(self.n),
            "nRegressors": int(self.k),
            "includeIntercept": bool(self.include_intercept),
            "rSquared": float(self.r_squared),
            "adjRSquared": float(self.adj_r_squared),
            "multipleR": float(self.multiple_r),
            "residualStdError": float(self.resid_se),
        }
        if include_series:
            doc["residuals"] = [float(v) for v in self.residuals]
            doc["fitted"] = [float(v) for v in self.fitted]
            doc["leverage"] = [float(v) for v in self.leverage]
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "OlsFit":
        return cls(
            dependent=doc["dependent"],
            terms=list(doc["terms"]),
            coefficients=np.array(doc["coefficients"], dtype=float),
            standard_errors=np.array(doc["standardErrors"], dtype=float),
            t_stats=np.array(doc["tStats"], dtype=float),
            p_values=np.array(doc["pValues"], dtype=float),
            residuals=np.array(doc["residuals"], dtype=float),
            fitted=np.array(doc["fitted"], dtype=float),
            leverage=np.array(doc["leverage"], dtype=float),
            n=int(doc["nObs"]),
            k=int(doc["nRegressors"]),
            include_intercept=bool(doc["includeIntercept"]),
            r_squared=float(doc["rSquared"]),
            adj_r_squared=float(doc["adjRSquared"]),
            multiple_r=float(doc["multipleR"]),
            resid_se=float(doc["residualStdError"]),
        )


def student_t_cdf(x: float, df: float) -> float:
    """CDF of Student's t via the regularized incomplete beta function."""
    if df <= 0:
        raise DataError(f"degrees of freedom must be positive (got {df})")
    if np.isnan(x):
        raise DataError("student_t_cdf of NaN")
    if np.isposinf(x):
        return 1.0
    if np.isneginf(x):
        return 0.0
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + x * x)))
    return 1.0 - tail if x > 0 else tail if x < 0 else 0.5


def _columns(data: PanelLike) -> Mapping[str, np.ndarray]:
    return data.series if isinstance(data, FactorPanel) else data


def _design(data: PanelLike, spec: DesignSpec) -> tuple[np.ndarray, np.ndarray, list[str]]:
    cols = _columns(data)
    for label in [spec.dependent, *spec.regressors]:
        if label not in cols:
            raise DataError(f"label {label!r} not in panel (have {sorted(cols)})")
    y = np.asarray(cols[spec.dependent], dtype=float)
    n = y.size
    parts = []
    terms = []
    if spec.include_intercept:
        parts.append(np.ones(n))
        terms.append(INTERCEPT)
    for label in spec.regressors:
        col = np.asarray(cols[label], dtype=float)
        if col.shape != (n,):
            raise DataError(f"regressor {label!r} length {col.size} != {n}")
        parts.append(col)
        terms.append(label)
    X = np.column_stack(parts)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise DataError("regression inputs contain non-finite values")
    if n <= X.shape[1]:
        raise DataError(f"insufficient observations: n={n} with {X.shape[1]} parameters")
    return y, X, terms


def ols_fit(data: PanelLike, spec: DesignSpec) -> OlsFit:
    """Least-squares fit with standard errors, t statistics and leverage.

    Standard errors come from s^2 (X'X)^-1 computed through the R factor;
    two-sided p-values use Student's t with n - k - 1 degrees of freedom
    when an intercept is present.
    """
    y, X, terms = _design(data, spec)
    n, p = X.shape
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    tol = _RANK_TOL * float(np.max(diag))
    small = diag < tol
    if np.any(small):
        names = [terms[j] for j in np.flatnonzero(small)]
        raise DataError(f"rank deficient design: collinear columns {names}")
    coef = solve_triangular(R, Q.T @ y)
    fitted = X @ coef
    resid = y - fitted
    dof = n - p
    rss = float(resid @ resid)
    s2 = rss / dof
    r_inv = solve_triangular(R, np.eye(p))
    cov_unscaled = r_inv @ r_inv.T
    se = np.sqrt(s2 * np.diag(cov_unscaled))
    with np.errstate(divide="ignore", invalid="ignore"):
        # a perfect fit yields se = 0; the limit is t = +-inf (p = 0) for a
        # nonzero coefficient and t = 0 (p = 1) for an exactly zero one
        t_stats = np.where(se > 0, coef / se,
                           np.where(coef == 0.0, 0.0, np.sign(coef) * np.inf))
    p_values = np.array([2.0 * (1.0 - student_t_cdf(abs(t), dof)) for t in t_stats])
    leverage = np.sum(Q * Q, axis=1)
    if spec.include_intercept:
        tss = float(np.sum((y - np.mean(y)) ** 2))
    else:
        tss = float(y @ y)
    if tss == 0.0:
        raise DataError(f"dependent {spec.dependent!r} has zero variance")
    r2 = 1.0 - rss / tss
    if spec.include_intercept:
        adj = 1.0 - (1.0 - r2) * (n - 1) / dof
    else:
        adj = 1.0 - (1.0 - r2) * n / dof
    return OlsFit(
        dependent=spec.dependent,
        terms=terms,
        coefficients=np.asarray(coef, dtype=float),
        standard_errors=se,
        t_stats=np.asarray(t_stats, dtype=float),
        p_values=p_values,
        residuals=resid,
        fitted=fitted,
        leverage=leverage,
        n=n,
        k=len(spec.regressors),
        include_intercept=spec.include_intercept,
        r_squared=r2,
        adj_r_squared=adj,
        multiple_r=float(np.sqrt(max(r2, 0.0))),
        resid_se=float(np.sqrt(s2)),
    )


def cooks_distance(fit: OlsFit) -> np.ndarray:
    """Cook's distance per observation.

    D_t = e_t^2 h_t / (p s^2 (1 - h_t)^2) with p estimated parameters.
    Observations with leverage 1 come back as +inf; callers flag them.
    """
    h = fit.leverage
    s2 = fit.resid_se ** 2
    p = fit.n_params
    out = np.empty(fit.n)
    for t in range(fit.n):
        # same tolerance as standardized_residuals: a point that pins its
        # own fitted value has undefined (infinite) influence
        if h[t] >= 1.0 - 1e-12:
            out[t] = np.inf
        else:
            out[t] = fit.residuals[t] ** 2 * h[t] / (p * s2 * (1.0 - h[t]) ** 2)
    return out


def standardized_residuals(fit: OlsFit) -> np.ndarray:
    """Internally studentized residuals e_t / (s sqrt(1 - h_t))."""
    h = fit.leverage
    if np.any(h >= 1.0 - 1e-12):
        raise NumericalError("leverage of 1 makes the standardized residual undefined")
    return fit.residuals / (fit.resid_se * np.sqrt(1.0 - h))


def backward_eliminate(data: PanelLike, spec: DesignSpec, alpha_out: float = 0.05) -> list[OlsFit]:
    """Backward elimination, largest p-value first.

    Repeatedly drops the regressor with the largest p-value above
    ``alpha_out`` and refits. The intercept is never a candidate, and the
    last remaining regressor is kept even if insignificant (a design
    needs at least one regressor). The returned trail starts with the
    full fit; each entry has one regressor fewer.
    """
    if not 0.0 < alpha_out < 1.0:
        raise DataError(f"alpha_out must be in (0, 1) (got {alpha_out})")
    trail = [ols_fit(data, spec)]
    regressors = list(spec.regressors)
    while len(regressors) > 1:
        fit = trail[-1]
        worst_label = None
        worst_p = alpha_out
        for label in regressors:
            pv = fit.p_value(label)
            if pv > worst_p:
                worst_label, worst_p = label, pv
        if worst_label is None:
            break
        regressors.remove(worst_label)
        trail.append(ols_fit(data, DesignSpec(
            dependent=spec.dependent,
            regressors=list(regressors),
            include_intercept=spec.include_intercept,
        )))
    return trail


def exclude_and_refit(data: PanelLike, spec: DesignSpec, excluded: Iterable[int]) -> OlsFit:
    """Refit with the given observation row indices removed."""
    cols = _columns(data)
    n = np.asarray(cols[spec.dependent]).size
    excluded = sorted(set(int(i) for i in excluded))
    for i in excluded:
        if not 0 <= i < n:
            raise DataError(f"excluded index {i} out of range 0..{n - 1}")
    keep = np.setdiff1d(np.arange(n), np.array(excluded, dtype=int))
    subset = {label: np.asarray(values, dtype=float)[keep]
              for label, values in cols.items()}
    return ols_fit(subset, spec)
