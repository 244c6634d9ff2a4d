"""ARIMA(p,d,q) estimated by conditional sum of squares.

Innovations are computed recursively with zero pre-sample values (the first
p differenced observations are conditioned on, not modeled), so the AR part
reduces to ordinary least squares and mixed models need only a short
derivative-free search. Forecasts iterate the recursion with future
innovations set to zero, then re-integrate d times anchored at the last
observed levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..errors import (
    FitFailedError,
    InsufficientDataError,
    InvalidInputError,
    InvalidParameterError,
    SelectionFailedError,
)
from ..serialize import load_npz, save_npz

__all__ = [
    "ArimaModel",
    "arima_fit",
    "arima_select_order",
    "arima_forecast",
    "arima_forecast_from",
    "save_arima",
    "load_arima",
]

# Differencing continues while it shrinks the sample variance below this
# ratio. Deliberately stricter than "any reduction": stationary AR series
# with strong positive autocorrelation also lose variance under differencing
# (an AR(1) at phi=0.7 drops to 0.6x), and over-differencing them trades a
# clean AR fit for a non-invertible MA component.
_DIFF_VAR_RATIO = 0.4

_MIN_EXTRA_ROWS = 10  # differenced length must be >= p + q + this


@dataclass
class ArimaModel:
    """Fitted orders, coefficients, innovation variance, and forecasting tails."""

    order: tuple[int, int, int]
    phi: np.ndarray
    theta: np.ndarray
    intercept: float
    sigma2: float
    aic: float
    css: float
    n_obs: int
    w_tail: np.ndarray  # trailing differenced values (newest last)
    e_tail: np.ndarray  # trailing residuals (newest last)
    level_tails: np.ndarray  # last value at each differencing level 0..d-1


def _innovations(w: np.ndarray, c: float, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One-step innovations with zero pre-sample conditioning; e[:p] is 0."""
    n = w.size
    p = phi.size
    u = np.zeros(n)
    u[p:] = w[p:] - c
    for i in range(1, p + 1):
        u[p:] -= phi[i - 1] * w[p - i : n - i]
    if theta.size:
        return lfilter([1.0], np.concatenate(([1.0], theta)), u)
    return u


def _css(w: np.ndarray, c: float, phi: np.ndarray, theta: np.ndarray) -> float:
    e = _innovations(w, c, phi, theta)
    p = phi.size
    return float(np.dot(e[p:], e[p:]))


def _fit_ar_ols(w: np.ndarray, p: int) -> tuple[float, np.ndarray]:
    """Exact CSS minimizer for pure AR: least squares on lagged values."""
    n = w.size
    cols = [np.ones(n - p)]
    for i in range(1, p + 1):
        cols.append(w[p - i : n - i])
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, w[p:], rcond=None)
    return float(coef[0]), coef[1:]


def arima_fit(series, order: tuple[int, int, int]) -> ArimaModel:
    """Estimate phi, theta, and the intercept for a fixed (p, d, q)."""
    p, d, q = order
    if p < 0 or q < 0 or d not in (0, 1, 2):
        raise InvalidParameterError(f"unsupported order {order}")
    y = np.asarray(series, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("series contains non-finite values")
    if y.size <= d:
        raise InsufficientDataError(f"series of length {y.size} cannot be differenced {d} times")
    w = np.diff(y, n=d) if d else y.copy()
    if w.size < p + q + _MIN_EXTRA_ROWS:
        raise InsufficientDataError(
            f"need at least {p + q + _MIN_EXTRA_ROWS} differenced observations, got {w.size}"
        )

    c0, phi0 = _fit_ar_ols(w, p)
    if q == 0:
        c, phi, theta = c0, phi0, np.zeros(0)
    else:
        x0 = np.concatenate(([c0], phi0, np.zeros(q)))

        def objective(x):
            val = _css(w, float(x[0]), x[1 : 1 + p], x[1 + p :])
            return val if np.isfinite(val) else 1e300

        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 2000 * (p + q + 1), "maxfev": 2000 * (p + q + 1)},
        )
        if not result.success:
            raise FitFailedError(
                f"CSS optimizer did not converge for order {order}: {result.message} "
                f"({result.nit} iterations)"
            )
        c = float(result.x[0])
        phi = result.x[1 : 1 + p].copy()
        theta = result.x[1 + p :].copy()

    e = _innovations(w, c, phi, theta)
    css = float(np.dot(e[p:], e[p:]))
    n_eff = w.size - p
    sigma2 = css / n_eff
    aic = n_eff * np.log(max(sigma2, 1e-300)) + 2.0 * (p + q + 1)

    level_tails = np.array([np.diff(y, n=k)[-1] for k in range(d)]) if d else np.zeros(0)
    keep = max(p, 1)
    return ArimaModel(
        order=(p, d, q),
        phi=phi,
        theta=theta,
        intercept=c,
        sigma2=sigma2,
        aic=float(aic),
        css=css,
        n_obs=int(y.size),
        w_tail=w[-keep:].copy(),
        e_tail=e[-q:].copy() if q else np.zeros(0),
        level_tails=level_tails,
    )


def arima_select_order(series, p_max: int = 3, q_max: int = 3, d_max: int = 2) -> tuple[int, int, int]:
    """Pick d by the variance-reduction heuristic, then (p, q) by minimum AIC.

    Ties break toward smaller p+q, then smaller p, so the search is fully
    deterministic.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    w = y
    d = 0
    while d < d_max and w.size > 2:
        dn = np.diff(w)
        v0 = float(w.var())
        if v0 > 0.0 and float(dn.var()) < _DIFF_VAR_RATIO * v0:
            w = dn
            d += 1
        else:
            break

    best: tuple[float, int, int, int] | None = None
    failures: list[str] = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                fit = arima_fit(y, (p, d, q))
            except (InsufficientDataError, FitFailedError) as exc:
                failures.append(f"({p},{d},{q}): {exc}")
                continue
            key = (fit.aic, p + q, p, q)
            if best is None or key < best:
                best = key
    if best is None:
        raise SelectionFailedError("no candidate order could be fitted: " + "; ".join(failures))
    return best[2], d, best[3]


def _iterate_forecast(
    phi: np.ndarray, theta: np.ndarray, c: float, w_tail: np.ndarray, e_tail: np.ndarray, h: int
) -> np.ndarray:
    w_hist = list(w_tail)
    e_hist = list(e_tail)
    out = np.empty(h)
    for k in range(h):
        val = c
        for i in range(1, phi.size + 1):
            val += phi[i - 1] * (w_hist[-i] if i <= len(w_hist) else 0.0)
        for j in range(1, theta.size + 1):
            val += theta[j - 1] * (e_hist[-j] if j <= len(e_hist) else 0.0)
        out[k] = val
        w_hist.append(val)
        e_hist.append(0.0)  # expected future innovation
    return out


def _integrate(preds: np.ndarray, level_tails: np.ndarray) -> np.ndarray:
    out = preds
    for level in range(level_tails.size - 1, -1, -1):
        out = np.cumsum(out) + level_tails[level]
    return out


def arima_forecast(model: ArimaModel, h: int) -> np.ndarray:
    """h-step expectation forecast continuing from the end of the training series."""
    if h < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {h}")
    w_pred = _iterate_forecast(model.phi, model.theta, model.intercept, model.w_tail, model.e_tail, h)
    return _integrate(w_pred, model.level_tails)


def arima_forecast_from(model: ArimaModel, context, h: int) -> np.ndarray:
    """Forecast h steps beyond a new context series using the fitted coefficients.

    The context (same preprocessing as the training series) is differenced,
    its innovations are rebuilt with zero pre-sample values, and the forecast
    recursion starts from the context's tail instead of the training tail.
    """
    if h < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {h}")
    p, d, q = model.order
    y = np.asarray(context, dtype=np.float64).ravel()
    if y.size < d + p + 1:
        raise InsufficientDataError(
            f"context of length {y.size} too short for order {model.order} (need {d + p + 1})"
        )
    w = np.diff(y, n=d) if d else y
    e = _innovations(w, model.intercept, model.phi, model.theta)
    level_tails = np.array([np.diff(y, n=k)[-1] for k in range(d)]) if d else np.zeros(0)
    keep = max(p, 1)
    w_pred = _iterate_forecast(
        model.phi, model.theta, model.intercept, w[-keep:], e[-q:] if q else np.zeros(0), h
    )
    return _integrate(w_pred, level_tails)


def save_arima(model: ArimaModel, path: str | Path) -> None:
    meta = {
        "kind": "arima",
        "order": list(model.order),
        "intercept": model.intercept,
        "sigma2": model.sigma2,
        "aic": model.aic,
        "css": model.css,
        "n_obs": model.n_obs,
    }
    save_npz(
        path,
        meta,
        {
            "phi": model.phi,
            "theta": model.theta,
            "w_tail": model.w_tail,
            "e_tail": model.e_tail,
            "level_tails": model.level_tails,
        },
    )


def load_arima(path: str | Path) -> ArimaModel:
    meta, data = load_npz(path)
    if meta.get("kind") != "arima":
        raise InvalidInputError(f"{path}: not an ARIMA model file")
    return ArimaModel(
        order=tuple(meta["order"]),
        phi=data["phi"],
        theta=data["theta"],
        intercept=float(meta["intercept"]),
        sigma2=float(meta["sigma2"]),
        aic=float(meta["aic"]),
        css=float(meta["css"]),
        n_obs=int(meta["n_obs"]),
        w_tail=data["w_tail"],
        e_tail=data["e_tail"],
        level_tails=data["level_tails"],
    )
