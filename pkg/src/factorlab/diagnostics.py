"""Hypothesis tests used by the regression pipeline.

Unit-root and cointegration decisions rely on embedded critical-value
constants in response-surface form (an intercept plus 1/n, 1/n^2, 1/n^3
terms for the 1%, 5% and 10% rows), so no table lookup library is
needed. Approximate p-values are linear interpolations of the statistic
between adjacent rows and are clamped to "< 0.01" or "> 0.10" outside
the covered range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaincc

from .errors import DataError, NumericalError
from .ols import DesignSpec, PanelLike, _columns, ols_fit
from .series import ArrayLike, _values

# finite-sample critical values, constant-only univariate case
_TAU_CONSTANT = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}
# two-variable cointegration case (intercept in the first-stage fit)
_TAU_EG2 = {
    0.01: (-3.89644, -10.9519, -22.527, 0.0),
    0.05: (-3.33613, -6.1101, -6.823, 0.0),
    0.10: (-3.04445, -4.2412, -2.720, 0.0),
}


@dataclass
class TestResult:
    """One test outcome: statistic, optional p-value, verdict, context."""

    name: str
    statistic: float
    p_value: float | None
    verdict: str
    level: float | None
    aux: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "pValue": None if self.p_value is None else float(self.p_value),
            "verdict": self.verdict,
            "level": None if self.level is None else float(self.level),
            "aux": self.aux,
        }


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of the chi-square distribution."""
    if df <= 0:
        raise DataError(f"chi-square df must be positive (got {df})")
    if x < 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def _finite_1d(series: ArrayLike, min_n: int, what: str) -> np.ndarray:
    x = _values(series)
    if x.size < min_n:
        raise DataError(f"{what} needs at least {min_n} observations (got {x.size})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} input contains non-finite values")
    return x


def _critical_values(table: Mapping[float, tuple], nobs: int) -> dict[float, float]:
    inv = 1.0 / nobs
    return {
        level: b0 + b1 * inv + b2 * inv * inv + b3 * inv * inv * inv
        for level, (b0, b1, b2, b3) in table.items()
    }


def _interpolate_pvalue(stat: float, cvs: dict[float, float]) -> tuple[float | None, str | None]:
    """(p, clamp note); the note is set when the statistic leaves the table."""
    cv01, cv05, cv10 = cvs[0.01], cvs[0.05], cvs[0.10]
    if stat <= cv01:
        return None, "< 0.01"
    if stat >= cv10:
        return None, "> 0.10"
    if stat <= cv05:
        return 0.01 + (stat - cv01) / (cv05 - cv01) * 0.04, None
    return 0.05 + (stat - cv05) / (cv10 - cv05) * 0.05, None


def _schwert_maxlag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _adf_regression(y: np.ndarray, lag: int, start: int, include_constant: bool):
    """Dickey-Fuller regression rows t = start..; returns (fit, rss)."""
    d = np.diff(y)
    rows = np.arange(start, d.size)
    data = {"dy": d[rows], "level": y[rows]}
    regressors = ["level"]
    for j in range(1, lag + 1):
        data[f"dlag{j}"] = d[rows - j]
        regressors.append(f"dlag{j}")
    fit = ols_fit(data, DesignSpec("dy", regressors, include_intercept=include_constant))
    rss = float(fit.residuals @ fit.residuals)
    if rss <= 0.0:
        raise NumericalError("degenerate series in the Dickey-Fuller regression")
    return fit, rss


def _adf_statistic(y: np.ndarray, max_lag: int | None, include_constant: bool):
    n = y.size
    base_cols = 2 if include_constant else 1
    if max_lag is None:
        max_lag = _schwert_maxlag(n)
    if max_lag < 0:
        raise DataError(f"max_lag must be non-negative (got {max_lag})")
    # keep enough rows for the widest candidate regression
    feasible = (n - 1 - base_cols - 1) // 2
    max_lag = max(0, min(max_lag, feasible))
    # AIC comparison on the common sample implied by the widest candidate
    best_lag, best_aic = 0, math.inf
    for lag in range(0, max_lag + 1):
        fit, rss = _adf_regression(y, lag, start=max_lag, include_constant=include_constant)
        aic = fit.n * math.log(rss / fit.n) + 2.0 * fit.n_params
        if aic < best_aic - 1e-12:
            best_lag, best_aic = lag, aic
    fit, _ = _adf_regression(y, best_lag, start=best_lag, include_constant=include_constant)
    tau = float(fit.t_stats[fit.terms.index("level")])
    return tau, best_lag, fit.n


def adf_test(series: ArrayLike, max_lag: int | None = None, level: float = 0.05) -> TestResult:
    """Augmented Dickey-Fuller test with constant, no trend.

    The lag order starts at the Schwert rule floor(12 (n/100)^{1/4}) and
    is pruned downward by AIC on a common sample. The null is a unit
    root; rejection means the series looks stationary.
    """
    x = _finite_1d(series, 20, "adf_test")
    if level not in _TAU_CONSTANT:
        raise DataError(f"level must be one of {sorted(_TAU_CONSTANT)} (got {level})")
    tau, lag, nobs = _adf_statistic(x, max_lag, include_constant=True)
    cvs = _critical_values(_TAU_CONSTANT, nobs)
    p, note = _interpolate_pvalue(tau, cvs)
    verdict = "reject" if tau < cvs[level] else "fail-to-reject"
    aux = {
        "lags": lag,
        "nObs": nobs,
        "criticalValues": {f"{lv:.0%}": cv for lv, cv in sorted(cvs.items())},
    }
    if note:
        aux["pValueNote"] = note
    return TestResult("augmented_dickey_fuller", tau, p, verdict, level, aux)


def ljung_box(series: ArrayLike, lags: int = 12, fitted_params: int = 0,
              level: float = 0.05) -> TestResult:
    """Ljung-Box portmanteau test for autocorrelation up to ``lags``.

    ``fitted_params`` reduces the chi-square degrees of freedom when the
    input is a residual or innovation series from a fitted mean model.
    """
    if lags < 1:
        raise DataError(f"lags must be >= 1 (got {lags})")
    if not 0 <= fitted_params < lags:
        raise DataError(f"fitted_params must be in [0, lags) (got {fitted_params})")
    x = _finite_1d(series, lags + 2, "ljung_box")
    n = x.size
    d = x - np.mean(x)
    denom = float(d @ d)
    if denom == 0.0:
        raise DataError("ljung_box input has zero variance")
    autocorr = []
    q = 0.0
    for k in range(1, lags + 1):
        rho = float(d[:-k] @ d[k:]) / denom
        autocorr.append(rho)
        q += rho * rho / (n - k)
    q *= n * (n + 2.0)
    df = lags - fitted_params
    p = chi2_sf(q, df)
    verdict = "reject" if p < level else "fail-to-reject"
    aux = {"lags": lags, "fittedParams": fitted_params, "df": df,
           "autocorrelations": autocorr}
    return TestResult("ljung_box", q, p, verdict, level, aux)


def durbin_watson(residuals: ArrayLike) -> TestResult:
    """Durbin-Watson statistic with the 1.5..2.5 no-concern band.

    No p-value is attached; the verdict follows the band rule only.
    """
    e = _finite_1d(residuals, 2, "durbin_watson")
    denom = float(e @ e)
    if denom == 0.0:
        raise DataError("durbin_watson input is identically zero")
    d = float(np.sum(np.diff(e) ** 2)) / denom
    verdict = ("no discernible autocorrelation" if 1.5 <= d <= 2.5
               else "possible autocorrelation")
    return TestResult("durbin_watson", d, None, verdict, None,
                      {"lowerBound": 1.5, "upperBound": 2.5})


def jarque_bera(residuals: ArrayLike, level: float = 0.05) -> TestResult:
    """Jarque-Bera normality test from sample skewness and kurtosis.

    Moments use the n divisor; the statistic is chi-square with 2
    degrees of freedom under normality.
    """
    e = _finite_1d(residuals, 8, "jarque_bera")
    n = e.size
    d = e - np.mean(e)
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        raise DataError("jarque_bera input has zero variance")
    skew = float(np.mean(d ** 3)) / m2 ** 1.5
    kurt = float(np.mean(d ** 4)) / (m2 * m2)
    jb = n / 6.0 * (skew * skew + (kurt - 3.0) ** 2 / 4.0)
    p = chi2_sf(jb, 2)
    verdict = "reject" if p < level else "fail-to-reject"
    return TestResult("jarque_bera", jb, p, verdict, level,
                      {"skewness": skew, "kurtosis": kurt})


def vif(data: PanelLike, labels: Sequence[str]) -> dict[str, float]:
    """Variance inflation factors 1 / (1 - R_j^2) per regressor.

    Each label is regressed on the others with an intercept. Perfect
    collinearity yields +inf for the labels involved.
    """
    labels = list(labels)
    if len(labels) < 2:
        raise DataError("vif needs at least 2 labels")
    cols = _columns(data)
    for label in labels:
        if label not in cols:
            raise DataError(f"label {label!r} not in panel (have {sorted(cols)})")
    out: dict[str, float] = {}
    for label in labels:
        others = [lab for lab in labels if lab != label]
        try:
            aux = ols_fit(data, DesignSpec(label, others, include_intercept=True))
        except DataError as exc:
            if "collinear" in str(exc) or "zero variance" in str(exc):
                out[label] = math.inf
                continue
            raise
        r2 = aux.r_squared
        out[label] = math.inf if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)
    return out


def engle_granger(y: ArrayLike, x: ArrayLike, max_lag: int | None = None,
                  level: float = 0.05) -> TestResult:
    """Two-step Engle-Granger cointegration test.

    Step one regresses y on x with an intercept; step two applies a
    Dickey-Fuller regression without constant to the residuals and
    compares the statistic to two-variable cointegration critical
    values. Identical inputs leave nothing to test: the result is
    flagged indeterminate with degenerate residuals.
    """
    ya = _finite_1d(y, 30, "engle_granger")
    xa = _finite_1d(x, 30, "engle_granger")
    if ya.size != xa.size:
        raise DataError(f"series lengths differ: {ya.size} vs {xa.size}")
    if level not in _TAU_EG2:
        raise DataError(f"level must be one of {sorted(_TAU_EG2)} (got {level})")
    step1 = ols_fit({"y": ya, "x": xa}, DesignSpec("y", ["x"], include_intercept=True))
    resid = step1.residuals
    tss = float(np.sum((ya - np.mean(ya)) ** 2))
    rss = float(resid @ resid)
    slope = step1.coefficient("x")
    intercept = step1.coefficient("Intercept")
    if rss <= 1e-20 * max(tss, 1.0):
        return TestResult(
            "engle_granger", 0.0, None, "indeterminate", level,
            {"slope": slope, "intercept": intercept, "degenerateResiduals": True},
        )
    tau, lag, nobs = _adf_statistic(resid, max_lag, include_constant=False)
    cvs = _critical_values(_TAU_EG2, nobs)
    p, note = _interpolate_pvalue(tau, cvs)
    verdict = "reject" if tau < cvs[level] else "fail-to-reject"
    aux = {
        "slope": slope,
        "intercept": intercept,
        "lags": lag,
        "nObs": nobs,
        "criticalValues": {f"{lv:.0%}": cv for lv, cv in sorted(cvs.items())},
        "degenerateResiduals": False,
    }
    if note:
        aux["pValueNote"] = note
    return TestResult("engle_granger", tau, p, verdict, level, aux)
