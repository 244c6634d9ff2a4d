"""Gaussian process regression with a squared-exponential kernel.

Targets are centered by the training mean; the kernel matrix plus noise is
Cholesky-factored (escalating jitter only when factorization fails), and
hyperparameters are chosen by maximizing the log marginal likelihood over a
log-spaced grid anchored at data-driven scales. Multi-horizon forecasting
fits one independent single-output model per horizon step.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..dataset import SupervisedWindows
from ..errors import IllConditionedKernelError, InvalidInputError, OptimizationFailedError
from ..serialize import load_npz, save_npz

__all__ = [
    "GprHyper",
    "GprModel",
    "GprForecaster",
    "gpr_fit",
    "gpr_optimize",
    "gpr_predict",
    "gpr_fit_windows",
    "gpr_predict_window",
    "save_gpr",
    "load_gpr",
]

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class GprHyper:
    """Squared-exponential kernel hyperparameters."""

    length_scale: float
    signal_var: float
    noise_var: float

    def __post_init__(self):
        if self.length_scale <= 0 or self.signal_var <= 0 or self.noise_var < 0:
            raise InvalidInputError(f"invalid kernel hyperparameters: {self}")


@dataclass
class GprModel:
    """One fitted single-output GP: training data, Cholesky factor, precomputed weights."""

    x: np.ndarray
    y_mean: float
    hyper: GprHyper
    chol: np.ndarray  # lower-triangular factor of K + noise*I (+ jitter if needed)
    alpha: np.ndarray  # (K + noise*I)^-1 (y - mean)
    jitter: float


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def _kernel(hyper: GprHyper, d2: np.ndarray) -> np.ndarray:
    return hyper.signal_var * np.exp(-d2 / (2.0 * hyper.length_scale**2))


def _chol_with_jitter(k: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    n = k.shape[0]
    for jitter in _JITTERS:
        try:
            return cholesky(k + (noise + jitter) * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedKernelError(
        f"kernel matrix not positive definite even with jitter {_JITTERS[-1]}"
    )


def _as_2d(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def gpr_fit(x, y, hyper: GprHyper) -> GprModel:
    """Fit the GP posterior solve for fixed hyperparameters."""
    xm = _as_2d(x)
    ym = np.asarray(y, dtype=np.float64).ravel()
    if xm.shape[0] != ym.size:
        raise InvalidInputError(f"{xm.shape[0]} rows vs {ym.size} targets")
    y_mean = float(ym.mean())
    k = _kernel(hyper, _sq_dists(xm, xm))
    chol, jitter = _chol_with_jitter(k, hyper.noise_var)
    alpha = cho_solve((chol, True), ym - y_mean)
    return GprModel(x=xm.copy(), y_mean=y_mean, hyper=hyper, chol=chol, alpha=alpha, jitter=jitter)


def gpr_predict(model: GprModel, x_query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance at the query rows."""
    q = _as_2d(x_query)
    if q.shape[1] != model.x.shape[1]:
        raise InvalidInputError(
            f"query has {q.shape[1]} columns, training data has {model.x.shape[1]}"
        )
    k_star = _kernel(model.hyper, _sq_dists(model.x, q))
    mean = k_star.T @ model.alpha + model.y_mean
    v = solve_triangular(model.chol, k_star, lower=True)
    var = model.hyper.signal_var - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def _log_marginal_likelihood(chol: np.ndarray, centered_y: np.ndarray) -> float:
    alpha = cho_solve((chol, True), centered_y)
    n = centered_y.size
    return float(
        -0.5 * centered_y @ alpha
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * n * np.log(2.0 * np.pi)
    )


def default_hyper_grid(x, y, n_candidates: int = 7) -> list[GprHyper]:
    """Log-spaced grid anchored at the median pairwise distance and target variance."""
    xm = _as_2d(x)
    ym = np.asarray(y, dtype=np.float64).ravel()
    d2 = _sq_dists(xm, xm)
    pos = d2[d2 > 0.0]
    med = float(np.sqrt(np.median(pos))) if pos.size else 1.0
    var_y = float(ym.var())
    if var_y <= 0.0:
        var_y = 1.0
    scales = med * np.logspace(-1.0, 1.0, n_candidates)
    signals = var_y * np.logspace(-2.0, 1.0, n_candidates)
    noises = var_y * np.logspace(-6.0, 0.0, n_candidates)
    return [
        GprHyper(float(l), float(s), float(n))
        for l in scales
        for s in signals
        for n in noises
    ]


def gpr_optimize(x, y, grid: list[GprHyper] | None = None) -> GprHyper:
    """Pick the grid candidate with the highest log marginal likelihood.

    Kernel correlation matrices are shared across candidates with the same
    length scale, so the grid costs one Cholesky per candidate.
    """
    xm = _as_2d(x)
    ym = np.asarray(y, dtype=np.float64).ravel()
    if ym.size < 2:
        raise InvalidInputError("need at least two rows to optimize hyperparameters")
    if grid is None:
        grid = default_hyper_grid(xm, ym)
    if not grid:
        raise InvalidInputError("empty hyperparameter grid")

    d2 = _sq_dists(xm, xm)
    centered = ym - ym.mean()
    corr_cache: dict[float, np.ndarray] = {}
    best: tuple[float, int] | None = None
    for idx, hyper in enumerate(grid):
        corr = corr_cache.get(hyper.length_scale)
        if corr is None:
            corr = np.exp(-d2 / (2.0 * hyper.length_scale**2))
            corr_cache[hyper.length_scale] = corr
        try:
            chol, _ = _chol_with_jitter(hyper.signal_var * corr, hyper.noise_var)
        except IllConditionedKernelError:
            continue
        lml = _log_marginal_likelihood(chol, centered)
        if best is None or lml > best[0]:
            best = (lml, idx)
    if best is None:
        raise OptimizationFailedError("every hyperparameter candidate was ill-conditioned")
    return grid[best[1]]


# ---------------------------------------------------------------------------
# Windowed multi-horizon wrapper
# ---------------------------------------------------------------------------

@dataclass
class GprForecaster:
    """Per-horizon-step GP models over flattened windows."""

    models: list[GprModel]
    input_months: int
    n_features: int

    @property
    def horizon(self) -> int:
        return len(self.models)


def gpr_fit_windows(windows: SupervisedWindows, optimize: bool = True,
                    hyper: GprHyper | None = None) -> GprForecaster:
    """Fit one GP per horizon step on flattened windows.

    With optimize=True each step runs the marginal-likelihood grid search;
    otherwise `hyper` is used as-is for every step.
    """
    if windows.n_windows == 0:
        raise InvalidInputError("empty training dataset")
    x = windows.inputs.reshape(windows.n_windows, -1)
    models = []
    for h in range(windows.horizon):
        y = windows.targets[:, h]
        step_hyper = gpr_optimize(x, y) if optimize else hyper
        if step_hyper is None:
            raise InvalidInputError("hyper must be given when optimize=False")
        models.append(gpr_fit(x, y, step_hyper))
    return GprForecaster(models=models, input_months=windows.input_months, n_features=windows.n_features)


def gpr_predict_window(forecaster: GprForecaster, window: np.ndarray) -> np.ndarray:
    """Posterior-mean forecast of all horizon steps for one window."""
    row = np.asarray(window, dtype=np.float64).reshape(1, -1)
    return np.array([float(gpr_predict(m, row)[0][0]) for m in forecaster.models])


def save_gpr(forecaster: GprForecaster, path: str | Path) -> None:
    meta = {
        "kind": "gpr",
        "horizon": forecaster.horizon,
        "input_months": forecaster.input_months,
        "n_features": forecaster.n_features,
        "steps": [
            {
                "y_mean": m.y_mean,
                "length_scale": m.hyper.length_scale,
                "signal_var": m.hyper.signal_var,
                "noise_var": m.hyper.noise_var,
                "jitter": m.jitter,
            }
            for m in forecaster.models
        ],
    }
    arrays: dict[str, np.ndarray] = {}
    for i, m in enumerate(forecaster.models):
        arrays[f"x_{i}"] = m.x
        arrays[f"chol_{i}"] = m.chol
        arrays[f"alpha_{i}"] = m.alpha
    save_npz(path, meta, arrays)


def load_gpr(path: str | Path) -> GprForecaster:
    meta, data = load_npz(path)
    if meta.get("kind") != "gpr":
        raise InvalidInputError(f"{path}: not a GPR model file")
    models = []
    for i, step in enumerate(meta["steps"]):
        models.append(
            GprModel(
                x=data[f"x_{i}"],
                y_mean=float(step["y_mean"]),
                hyper=GprHyper(step["length_scale"], step["signal_var"], step["noise_var"]),
                chol=data[f"chol_{i}"],
                alpha=data[f"alpha_{i}"],
                jitter=float(step["jitter"]),
            )
        )
    return GprForecaster(
        models=models,
        input_months=int(meta["input_months"]),
        n_features=int(meta["n_features"]),
    )
