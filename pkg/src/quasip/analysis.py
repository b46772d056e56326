"""Decay-time extraction and model comparison for observable time series.

Four decay models are supported:

* ``exponential``   a * exp(-t / tau_c) + d
* ``gaussian``      a * exp(-(t / tau_c)^2) + d
* ``power``         a * (1 + t / theta)^(-beta)
* ``shifted_power`` a * (1 + max(t - t0, 0) / theta)^(-beta)   (constant a before t0)

Fits are nonlinear least squares (scipy), with initialization: d0 = mean of
the last 10% of values, a0 = first value - d0, tau0 = time at which the
normalized decay crosses 1/e (fallback: half the span).  Standard errors come
from the Jacobian at the optimum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from quasip.phasespace import CircularStats


class DegenerateSeriesError(ValueError):
    """Raised for series whose values carry no usable variation."""


class FitConvergenceError(RuntimeError):
    """Raised when the optimizer fails; carries the best iterate found."""

    def __init__(self, message, best_params=None, residual_norm=None):
        super().__init__(message)
        self.best_params = best_params
        self.residual_norm = residual_norm


@dataclass
class DecaySeries:
    """Time-tagged observable series (times in ps, strictly increasing)."""

    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None
    stderrs: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")
        for name in ("weights", "stderrs"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != self.times.shape:
                    raise ValueError(f"{name} must match the series length")
                setattr(self, name, arr)

    def __len__(self) -> int:
        return self.times.size


@dataclass
class FitResult:
    model: str
    params: dict
    stderrs: dict
    residual_norm: float
    n_points: int
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def tau_c(self) -> float | None:
        return self.params.get("tau_c")

    @property
    def tau_c_err(self) -> float | None:
        return self.stderrs.get("tau_c")


def _model_exponential(t, a, tau_c, d):
    return a * np.exp(-t / tau_c) + d


def _model_gaussian(t, a, tau_c, d):
    return a * np.exp(-((t / tau_c) ** 2)) + d


def _model_power(t, a, theta, beta):
    return a * (1.0 + t / theta) ** (-beta)


def _model_shifted_power(t, a, t0, theta, beta):
    shifted = np.maximum(t - t0, 0.0)
    return a * (1.0 + shifted / theta) ** (-beta)


MODELS = {
    "exponential": (_model_exponential, ("a", "tau_c", "d")),
    "gaussian": (_model_gaussian, ("a", "tau_c", "d")),
    "power": (_model_power, ("a", "theta", "beta")),
    "shifted_power": (_model_shifted_power, ("a", "t0", "theta", "beta")),
}


def _initial_guess(model: str, t: np.ndarray, v: np.ndarray):
    n_tail = max(1, int(0.1 * len(v)))
    d0 = float(np.mean(v[-n_tail:]))
    a0 = float(v[0] - d0)
    span = t[-1] - t[0]
    tau0 = 0.5 * span
    if a0 != 0.0:
        norm = (v - d0) / a0
        crossed = np.flatnonzero(norm < np.exp(-1.0))
        if crossed.size and crossed[0] > 0:
            tau0 = float(t[crossed[0]] - t[0])
    tau0 = max(tau0, 1e-6 * max(span, 1.0))
    if model in ("exponential", "gaussian"):
        return [a0 if a0 != 0.0 else 1.0, tau0, d0]
    if model == "power":
        return [v[0] if v[0] != 0.0 else 1.0, tau0, 1.0]
    return [v[0] if v[0] != 0.0 else 1.0, t[0] + 0.1 * span, tau0, 1.0]


def _bounds(model: str, t: np.ndarray):
    big = np.inf
    span = max(t[-1] - t[0], 1.0)
    if model in ("exponential", "gaussian"):
        return ([-big, 1e-9 * span, -big], [big, 1e6 * span, big])
    if model == "power":
        return ([-big, 1e-9 * span, -100.0], [big, 1e6 * span, 100.0])
    return ([-big, t[0] - span, 1e-9 * span, -100.0], [big, t[-1], 1e6 * span, 100.0])


def fit_decay(series: DecaySeries, model: str = "exponential", weighted: bool = False) -> FitResult:
    """Least-squares fit of ``model`` to the series.

    ``weighted=True`` applies inverse-variance weights from the series
    stderrs when available (default unweighted).  Raises
    :class:`DegenerateSeriesError` for flat input and
    :class:`FitConvergenceError` when the optimizer fails.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {sorted(MODELS)}")
    if len(series) < 4:
        raise ValueError("need at least 4 points to fit a decay")
    t = series.times
    v = series.values
    if float(np.var(v)) < 1e-12:
        raise DegenerateSeriesError("series variance below 1e-12; decay time undefined")
    fn, names = MODELS[model]

    w = None
    if weighted and series.stderrs is not None:
        w = 1.0 / np.maximum(series.stderrs, 1e-12 + 0.0 * series.stderrs)
        w = w / w.mean()

    def resid(params):
        r = fn(t, *params) - v
        return r * w if w is not None else r

    x0 = np.asarray(_initial_guess(model, t, v), dtype=float)
    lo, hi = _bounds(model, t)
    x0 = np.clip(x0, lo, hi)
    sol = least_squares(resid, x0, bounds=(lo, hi), method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success and sol.status <= 0:
        raise FitConvergenceError(
            f"{model} fit did not converge: {sol.message}",
            best_params=dict(zip(names, sol.x)),
            residual_norm=float(np.linalg.norm(sol.fun)),
        )

    dof = max(len(series) - len(names), 1)
    s2 = float(np.sum(sol.fun**2)) / dof
    jtj = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(jtj) * s2
        errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        errs = np.full(len(names), np.nan)
    return FitResult(
        model=model,
        params=dict(zip(names, [float(x) for x in sol.x])),
        stderrs=dict(zip(names, [float(e) for e in errs])),
        residual_norm=float(np.linalg.norm(sol.fun)),
        n_points=len(series),
        residuals=fn(t, *sol.x) - v,
    )


def compare_models(series: DecaySeries, models: tuple = tuple(MODELS)) -> list:
    """Fit every model and rank them; per-model failures are reported as
    warnings without aborting the comparison.

    Ranking uses a parsimony-penalized residual (BIC with a scale floor):
    ranking by the raw residual norm alone would let the shifted power law
    beat the plain power law on power-law data purely by overfitting its
    extra parameter.  Residual norms are reported on every result.
    """
    if len(series) < 6:
        raise ValueError("need at least 6 points for a model comparison")
    results = []
    for model in models:
        try:
            results.append(fit_decay(series, model))
        except (FitConvergenceError, DegenerateSeriesError, ValueError) as exc:
            warnings.warn(f"model {model} failed: {exc}")
    n = len(series)
    floor = n * (1e-12 * float(np.linalg.norm(series.values))) ** 2

    def bic(r: FitResult):
        rss = max(r.residual_norm**2, floor)
        k = len(r.params)
        return (n * np.log(rss / n) + k * np.log(n), k)

    results.sort(key=bic)
    return results


def weighted_mean_tau(results: list, weights) -> dict:
    """Mean decay time over fits, weighted e.g. by the number of data points.

    Zero-weight entries are ignored; the standard error propagates the
    individual tau uncertainties through the weighted mean.
    """
    weights = np.asarray(weights, dtype=float)
    if len(results) == 0:
        raise ValueError("no fit results given")
    if weights.shape != (len(results),):
        raise ValueError("weights length must match the number of results")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    taus = np.array([r.tau_c for r in results], dtype=float)
    errs = np.array([r.tau_c_err if r.tau_c_err is not None else np.nan for r in results])
    if np.any(~np.isfinite(taus)):
        raise ValueError("every result must carry a decay time")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    mean = float(np.sum(weights * taus) / total)
    if np.all(np.isfinite(errs)):
        stderr = float(np.sqrt(np.sum((weights * errs) ** 2)) / total)
    else:
        stderr = float("nan")
    return {"tau_mean": mean, "stderr": stderr}


def circular_stats_from_phases(phases) -> CircularStats:
    """Circular statistics of raw phase samples (unit-circle amplitudes)."""
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise ValueError("need at least one phase sample")
    resultant = complex(np.mean(np.exp(1j * phases)))
    return CircularStats(resultant, 1.0 - abs(resultant), 1.0)
