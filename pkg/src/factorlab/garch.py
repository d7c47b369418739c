"""ARMA(1,1)-GARCH(1,1) with Gaussian innovations.

Model for a return series r_t:

    r_t      = mu + phi * (r_{t-1} - mu) + theta * a_{t-1} + a_t
    a_t      = eps_t * sigma_t,   eps_t ~ N(0, 1)
    sigma_t2 = omega + alpha * a_{t-1}^2 + beta * sigma_{t-1}^2

The filter runs the recursion forward with pre-sample values a_0 = 0,
sigma_0^2 = sample variance, and the pre-sample deviation r_0 - mu = 0.
Estimation maximizes the Gaussian likelihood with a derivative-free
simplex search over unconstrained coordinates: phi and theta through
tanh, omega through exp, and (alpha, beta) through a softmax map onto
{alpha, beta >= 0, alpha + beta < 1}. The recursion kernels are JIT
compiled; a likelihood evaluation is a single allocation-free pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .errors import DataError, NumericalError
from .series import ArrayLike, ReturnSeries, _values

_LOG_2PI = math.log(2.0 * math.pi)
_PENALTY = 1e10
_PERSISTENCE_CAP = 0.999
PARAM_NAMES = ("mu", "phi", "theta", "omega", "alpha", "beta")


@dataclass
class ArmaGarchParams:
    """Parameter vector; see the module docstring for the recursion."""

    mu: float
    phi: float
    theta: float
    omega: float
    alpha: float
    beta: float

    def validate(self) -> None:
        vec = self.as_array()
        if not np.all(np.isfinite(vec)):
            raise DataError("parameters must be finite")
        if abs(self.phi) >= 1.0 or abs(self.theta) >= 1.0:
            raise DataError(f"|phi| and |theta| must be < 1 (phi={self.phi}, theta={self.theta})")
        if self.omega <= 0.0:
            raise DataError(f"omega must be positive (omega={self.omega})")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise DataError(f"alpha and beta must be non-negative ({self.alpha}, {self.beta})")
        if self.alpha + self.beta >= 1.0:
            raise DataError(f"alpha + beta must be < 1 (got {self.alpha + self.beta})")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.phi, self.theta, self.omega, self.alpha, self.beta])

    @classmethod
    def from_array(cls, vec: np.ndarray) -> "ArmaGarchParams":
        return cls(*(float(v) for v in vec))

    def to_json_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ArmaGarchParams":
        return cls(**{name: float(doc[name]) for name in PARAM_NAMES})


@dataclass
class ArmaGarchFit:
    """Filter or estimation output aligned with the input series."""

    params: ArmaGarchParams
    log_likelihood: float
    sigma: np.ndarray = field(repr=False)
    shocks: np.ndarray = field(repr=False)
    innovations: np.ndarray = field(repr=False)
    converged: bool
    iterations: int
    label: str | None = None
    reason: str | None = None

    def to_json_dict(self, include_series: bool = True) -> dict:
        doc = {
            "params": self.params.to_json_dict(),
            "logLikelihood": float(self.log_likelihood),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "label": self.label,
            "reason": self.reason,
        }
        if include_series:
            doc["sigma"] = [float(v) for v in self.sigma]
            doc["shocks"] = [float(v) for v in self.shocks]
            doc["innovations"] = [float(v) for v in self.innovations]
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ArmaGarchFit":
        return cls(
            params=ArmaGarchParams.from_json_dict(doc["params"]),
            log_likelihood=float(doc["logLikelihood"]),
            sigma=np.array(doc["sigma"], dtype=float),
            shocks=np.array(doc["shocks"], dtype=float),
            innovations=np.array(doc["innovations"], dtype=float),
            converged=bool(doc["converged"]),
            iterations=int(doc["iterations"]),
            label=doc.get("label"),
            reason=doc.get("reason"),
        )


@njit(cache=True)
def _nll_kernel(r, mu, phi, theta, omega, alpha, beta, sig2_0):
    n = r.shape[0]
    a_prev = 0.0
    s_prev = sig2_0
    dev_prev = 0.0  # pre-sample deviation r_0 - mu
    nll = 0.0
    for t in range(n):
        s_t = omega + alpha * a_prev * a_prev + beta * s_prev
        a_t = r[t] - mu - phi * dev_prev - theta * a_prev
        nll += _LOG_2PI + math.log(s_t) + a_t * a_t / s_t
        a_prev = a_t
        s_prev = s_t
        dev_prev = r[t] - mu
    return 0.5 * nll


@njit(cache=True)
def _filter_kernel(r, mu, phi, theta, omega, alpha, beta, sig2_0):
    n = r.shape[0]
    a = np.empty(n)
    sig2 = np.empty(n)
    a_prev = 0.0
    s_prev = sig2_0
    dev_prev = 0.0
    for t in range(n):
        s_t = omega + alpha * a_prev * a_prev + beta * s_prev
        a_t = r[t] - mu - phi * dev_prev - theta * a_prev
        a[t] = a_t
        sig2[t] = s_t
        a_prev = a_t
        s_prev = s_t
        dev_prev = r[t] - mu
    return a, sig2


@njit(cache=True)
def _simulate_kernel(eps, mu, phi, theta, omega, alpha, beta):
    n = eps.shape[0]
    r = np.empty(n)
    a_prev = 0.0
    s_prev = omega / (1.0 - alpha - beta)  # unconditional variance
    r_prev = mu
    for t in range(n):
        s_t = omega + alpha * a_prev * a_prev + beta * s_prev
        a_t = eps[t] * math.sqrt(s_t)
        r[t] = mu + phi * (r_prev - mu) + theta * a_prev + a_t
        a_prev = a_t
        s_prev = s_t
        r_prev = r[t]
    return r


def _series_array(series: ArrayLike, min_n: int, what: str) -> np.ndarray:
    x = _values(series)
    if x.size < min_n:
        raise DataError(f"{what} needs at least {min_n} observations (got {x.size})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} input contains non-finite values")
    return np.ascontiguousarray(x, dtype=float)


def neg_log_likelihood(params: ArmaGarchParams, series: ArrayLike) -> float:
    """Negative Gaussian log-likelihood of the series under ``params``.

    Non-finite results (parameter blow-up) are returned as +inf so a
    minimizer treats them as infinitely bad.
    """
    params.validate()
    x = _series_array(series, 10, "neg_log_likelihood")
    sig2_0 = _start_variance(x)
    value = _nll_kernel(x, params.mu, params.phi, params.theta,
                        params.omega, params.alpha, params.beta, sig2_0)
    return float(value) if np.isfinite(value) else float("inf")


def _start_variance(x: np.ndarray) -> float:
    # an exactly constant array can still carry rounding noise in its
    # sample variance, so compare the extremes instead of testing var == 0
    if float(np.min(x)) == float(np.max(x)):
        raise DataError("degenerate input: series has zero variance")
    return float(np.var(x, ddof=1))


def filter_series(params: ArmaGarchParams, series: ArrayLike,
                  label: str | None = None) -> ArmaGarchFit:
    """Run the recursion at fixed parameters and extract innovations.

    Returns conditional standard deviations sigma_t, shocks a_t, and the
    standardized innovations eps_t = a_t / sigma_t, each as long as the
    input.
    """
    params.validate()
    x = _series_array(series, 10, "filter_series")
    if isinstance(series, ReturnSeries) and label is None:
        label = series.label
    sig2_0 = _start_variance(x)
    a, sig2 = _filter_kernel(x, params.mu, params.phi, params.theta,
                             params.omega, params.alpha, params.beta, sig2_0)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(sig2))):
        raise NumericalError("filter produced non-finite values")
    sigma = np.sqrt(sig2)
    # same kernel as neg_log_likelihood so the two agree bit for bit
    nll = float(_nll_kernel(x, params.mu, params.phi, params.theta,
                            params.omega, params.alpha, params.beta, sig2_0))
    return ArmaGarchFit(
        params=params,
        log_likelihood=-nll,
        sigma=sigma,
        shocks=a,
        innovations=a / sigma,
        converged=True,
        iterations=0,
        label=label,
    )


def _to_natural(u: np.ndarray) -> ArmaGarchParams:
    # stable softmax over (u4, u5, 0) keeps alpha + beta < 1 strictly
    m = max(u[4], u[5], 0.0)
    ea = math.exp(u[4] - m)
    eb = math.exp(u[5] - m)
    e0 = math.exp(-m)
    denom = ea + eb + e0
    return ArmaGarchParams(
        mu=float(u[0]),
        phi=math.tanh(u[1]),
        theta=math.tanh(u[2]),
        omega=math.exp(u[3]),
        alpha=ea / denom,
        beta=eb / denom,
    )


def _from_natural(p: ArmaGarchParams) -> np.ndarray:
    rest = 1.0 - p.alpha - p.beta
    return np.array([
        p.mu,
        math.atanh(p.phi),
        math.atanh(p.theta),
        math.log(p.omega),
        math.log(p.alpha / rest),
        math.log(p.beta / rest),
    ])


def fit(
    series: ArrayLike,
    seed: int = 0,
    restarts: int = 4,
    max_iter: int = 5000,
    f_tol: float = 1e-8,
    x_tol: float = 1e-6,
    label: str | None = None,
    collect_trace: bool = False,
) -> ArmaGarchFit:
    """Maximum-likelihood fit by Nelder-Mead in transformed coordinates.

    Two deterministic starts: the canonical one at mu = sample mean,
    phi = 0.1, theta = 0, omega = 0.05 * sample variance (variance
    targeting), alpha = 0.05, beta = 0.90, and a low-persistence one
    near the constant-variance model (alpha = 0.05, beta = 0.10); with
    only high-persistence starts a series without ARCH effects strands
    the simplex in the degenerate alpha -> 0, beta -> 1 corner.
    ``restarts`` additional starts jitter the canonical one with draws
    seeded by ``seed``. The best likelihood wins and gets one polish run
    from a fresh simplex. If the winner sits above the persistence cap
    alpha + beta > 0.999 the pair is scaled back onto the cap and the
    fit is flagged as not converged.

    With ``collect_trace`` the fit carries ``trace``: per start, the
    best objective value after each accepted simplex iteration.
    """
    x = _series_array(series, 30, "fit")
    if isinstance(series, ReturnSeries) and label is None:
        label = series.label
    var = _start_variance(x)
    sd = math.sqrt(var)
    sig2_0 = var

    def objective(u: np.ndarray) -> float:
        p = _to_natural(u)
        value = _nll_kernel(x, p.mu, p.phi, p.theta, p.omega, p.alpha, p.beta, sig2_0)
        return float(value) if np.isfinite(value) else _PENALTY

    start = _from_natural(ArmaGarchParams(
        mu=float(np.mean(x)), phi=0.1, theta=0.0,
        omega=0.05 * var, alpha=0.05, beta=0.90,
    ))
    flat_start = _from_natural(ArmaGarchParams(
        mu=float(np.mean(x)), phi=0.0, theta=0.0,
        omega=0.85 * var, alpha=0.05, beta=0.10,
    ))
    rng = np.random.default_rng(seed)
    jitter_scale = np.array([0.5 * sd, 0.3, 0.3, 0.3, 0.5, 0.5])
    starts = [start, flat_start]
    for _ in range(restarts):
        starts.append(start + rng.normal(0.0, 1.0, size=6) * jitter_scale)

    best = None
    total_iterations = 0
    traces: list[list[float]] = []

    def run_simplex(u0: np.ndarray):
        nonlocal total_iterations
        cache: dict[bytes, float] = {}
        trace: list[float] = []

        def wrapped(u: np.ndarray) -> float:
            value = objective(u)
            cache[u.tobytes()] = value
            return value

        def on_iteration(uk: np.ndarray) -> None:
            trace.append(cache.get(uk.tobytes(), objective(uk)))

        res = minimize(
            wrapped, u0, method="Nelder-Mead",
            callback=on_iteration if collect_trace else None,
            options={
                "maxiter": max_iter, "maxfev": 4 * max_iter,
                "xatol": x_tol, "fatol": f_tol, "adaptive": True,
            },
        )
        total_iterations += int(res.nit)
        if collect_trace:
            traces.append(trace)
        return res

    for u0 in starts:
        res = run_simplex(u0)
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    # a fresh simplex at the winner escapes premature collapse
    polish = run_simplex(best.x)
    if polish.fun < best.fun:
        best = polish

    params = _to_natural(best.x)
    converged = bool(best.success)
    reason = None
    if not converged:
        reason = "iteration limit reached before convergence"
    if params.alpha + params.beta > _PERSISTENCE_CAP:
        scale = _PERSISTENCE_CAP / (params.alpha + params.beta)
        params = ArmaGarchParams(params.mu, params.phi, params.theta,
                                 params.omega, params.alpha * scale, params.beta * scale)
        converged = False
        reason = f"persistence clamped to {_PERSISTENCE_CAP}"
    params.validate()

    result = filter_series(params, x, label=label)
    result.converged = converged
    result.iterations = total_iterations
    result.reason = reason
    if collect_trace:
        result.trace = traces  # type: ignore[attr-defined]
    return result


def simulate(params: ArmaGarchParams, n: int, seed: int, burn_in: int = 500) -> np.ndarray:
    """Simulate ``n`` observations after discarding ``burn_in`` start-up draws.

    Deterministic for a given seed; the variance recursion starts at the
    unconditional variance omega / (1 - alpha - beta).
    """
    params.validate()
    if n < 1:
        raise DataError("simulate needs n >= 1")
    if burn_in < 0:
        raise DataError("burn_in must be non-negative")
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(n + burn_in)
    r = _simulate_kernel(eps, params.mu, params.phi, params.theta,
                         params.omega, params.alpha, params.beta)
    return r[burn_in:]


def asymptotic_standard_errors(params: ArmaGarchParams, series: ArrayLike) -> np.ndarray:
    """Standard errors from the inverse numerical Hessian of the NLL.

    Central differences in natural parameter space, with steps shrunk
    near the constraint boundary. Order matches PARAM_NAMES.
    """
    params.validate()
    x = _series_array(series, 30, "asymptotic_standard_errors")
    vec = params.as_array()
    typical = np.array([max(abs(vec[0]), np.std(x, ddof=1)), 0.1, 0.1,
                        max(vec[3], 1e-12), 0.05, 0.05])
    h = np.maximum(np.abs(vec), typical) * 1e-4
    # keep evaluation points strictly inside the valid region
    slack = 1.0 - params.alpha - params.beta
    h[1] = min(h[1], 0.4 * (1.0 - abs(params.phi)))
    h[2] = min(h[2], 0.4 * (1.0 - abs(params.theta)))
    h[3] = min(h[3], 0.4 * params.omega)
    h[4] = min(h[4], 0.4 * min(max(params.alpha, 1e-8), slack))
    h[5] = min(h[5], 0.4 * min(max(params.beta, 1e-8), slack))

    def f(v: np.ndarray) -> float:
        return neg_log_likelihood(ArmaGarchParams.from_array(v), x)

    k = vec.size
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k); ei[i] = h[i]
            ej = np.zeros(k); ej[j] = h[j]
            if i == j:
                val = (f(vec + ei) - 2.0 * f(vec) + f(vec - ei)) / (h[i] * h[i])
            else:
                val = (f(vec + ei + ej) - f(vec + ei - ej)
                       - f(vec - ei + ej) + f(vec - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = val
            hess[j, i] = val
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hessian is singular: {exc}") from None
    diag = np.diag(cov)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericalError("Hessian is not positive definite at the optimum")
    return np.sqrt(diag)
