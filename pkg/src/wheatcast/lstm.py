"""From-scratch LSTM forecaster: forward pass, BPTT, MAE loss, ADAM, and the training loop.

One recurrent layer of gated cells followed by a rectified dense head that
emits all horizon steps jointly. Gate pre-activations are computed with
stacked weight matrices (slice order: input, forget, candidate, output) so a
whole mini-batch advances one timestep per matrix product; the per-gate
matrices of the published cell are exposed as views.

Everything is float64 and seeded, so two runs with equal seeds and data are
bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit as _sigmoid

from .dataset import CaseSpec, SupervisedWindows
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    TrainingDivergedError,
)
from .serialize import load_npz, save_npz
from .series import MinMaxScaler, minmax_apply

__all__ = [
    "LstmParams",
    "DenseHead",
    "TrainConfig",
    "AdamState",
    "LstmModel",
    "lstm_forward",
    "bptt_backward",
    "mae_loss",
    "clip_gradients",
    "adam_step",
    "train",
    "predict",
    "predict_batch",
    "save_model",
    "load_model",
]

_GATES = ("i", "f", "g", "o")  # stacked row-block order


@dataclass
class LstmParams:
    """Gate weights for one recurrent layer.

    w_x: (4*hidden, n_features) input weights, w_h: (4*hidden, hidden)
    recurrent weights, b: (4*hidden,) biases; row blocks follow _GATES.
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4, f = self.w_x.shape
        if h4 % 4 or h4 < 4:
            raise InvalidInputError("stacked weight rows must be 4 * hidden_size")
        h = h4 // 4
        if self.w_h.shape != (h4, h) or self.b.shape != (h4,):
            raise InvalidInputError("inconsistent LSTM parameter shapes")
        for a in (self.w_x, self.w_h, self.b):
            if not np.all(np.isfinite(a)):
                raise InvalidInputError("non-finite LSTM parameters")

    @property
    def hidden_size(self) -> int:
        return self.w_x.shape[0] // 4

    @property
    def n_features(self) -> int:
        return self.w_x.shape[1]

    def _block(self, a: np.ndarray, gate: str) -> np.ndarray:
        k = _GATES.index(gate)
        h = self.hidden_size
        return a[k * h : (k + 1) * h]

    # per-gate views matching the classic cell notation
    @property
    def w_i(self):
        return self._block(self.w_x, "i")

    @property
    def w_f(self):
        return self._block(self.w_x, "f")

    @property
    def w_c(self):
        return self._block(self.w_x, "g")

    @property
    def w_o(self):
        return self._block(self.w_x, "o")

    @property
    def u_i(self):
        return self._block(self.w_h, "i")

    @property
    def u_f(self):
        return self._block(self.w_h, "f")

    @property
    def u_c(self):
        return self._block(self.w_h, "g")

    @property
    def u_o(self):
        return self._block(self.w_h, "o")

    @property
    def b_i(self):
        return self._block(self.b, "i")

    @property
    def b_f(self):
        return self._block(self.b, "f")

    @property
    def b_c(self):
        return self._block(self.b, "g")

    @property
    def b_o(self):
        return self._block(self.b, "o")


@dataclass
class DenseHead:
    """Rectified linear output layer mapping the final hidden state to all horizon steps."""

    w: np.ndarray  # (horizon, hidden)
    b: np.ndarray  # (horizon,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise InvalidInputError("inconsistent dense head shapes")

    @property
    def horizon(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults follow the published settings."""

    seed: int
    max_epochs: int = 50
    mini_batch_size: int = 10
    hidden_size: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    gradient_clip_norm: float = 1.0

    def __post_init__(self):
        if self.max_epochs < 1 or self.mini_batch_size < 1 or self.hidden_size < 1:
            raise InvalidParameterError("epochs, batch size, and hidden size must be >= 1")
        if self.learning_rate <= 0 or self.gradient_clip_norm <= 0:
            raise InvalidParameterError("learning rate and clip norm must be positive")


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring the parameter tensors."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, tensors: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in tensors.items()},
            v={k: np.zeros_like(a) for k, a in tensors.items()},
        )


@dataclass
class LstmModel:
    """A trained forecaster: cell parameters, head, scaler state, and provenance."""

    params: LstmParams
    head: DenseHead
    scaler: MinMaxScaler
    case: CaseSpec
    config: TrainConfig
    feature_names: tuple[str, ...]
    target_feature: int
    loss_history: list[float] = field(default_factory=list)


def _param_tensors(params: LstmParams, head: DenseHead) -> dict[str, np.ndarray]:
    return {"w_x": params.w_x, "w_h": params.w_h, "b": params.b, "head_w": head.w, "head_b": head.b}


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _forward_batch(params: LstmParams, windows: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run the cell over (batch, time, features); returns final h and the BPTT cache."""
    if windows.ndim != 3 or windows.shape[2] != params.n_features:
        raise InvalidInputError(
            f"window batch shape {windows.shape} incompatible with {params.n_features} features"
        )
    bsz, steps, _ = windows.shape
    hsz = params.hidden_size
    h = np.zeros((bsz, hsz))
    c = np.zeros((bsz, hsz))
    cache = {
        "x": windows,
        "i": np.empty((steps, bsz, hsz)),
        "f": np.empty((steps, bsz, hsz)),
        "g": np.empty((steps, bsz, hsz)),
        "o": np.empty((steps, bsz, hsz)),
        "c": np.empty((steps, bsz, hsz)),
        "tc": np.empty((steps, bsz, hsz)),
        "c_prev": np.empty((steps, bsz, hsz)),
        "h_prev": np.empty((steps, bsz, hsz)),
        "shape": (bsz, steps, params.n_features, hsz),
    }
    wx_t = params.w_x.T
    wh_t = params.w_h.T
    for t in range(steps):
        cache["h_prev"][t] = h
        cache["c_prev"][t] = c
        z = windows[:, t, :] @ wx_t + h @ wh_t + params.b
        i = _sigmoid(z[:, :hsz])
        f = _sigmoid(z[:, hsz : 2 * hsz])
        g = np.tanh(z[:, 2 * hsz : 3 * hsz])
        o = _sigmoid(z[:, 3 * hsz :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t] = i, f, g, o
        cache["c"][t], cache["tc"][t] = c, tc
    cache["h_final"] = h
    return h, cache


def _backward_batch(params: LstmParams, cache: dict, dh_final: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of the forward recurrences."""
    bsz, steps, nfeat, hsz = cache["shape"]
    if (params.hidden_size, params.n_features) != (hsz, nfeat):
        raise InvalidStateError("cache was produced by a different parameter geometry")
    if dh_final.shape != (bsz, hsz):
        raise InvalidInputError(f"upstream gradient shape {dh_final.shape} != {(bsz, hsz)}")
    d_wx = np.zeros_like(params.w_x)
    d_wh = np.zeros_like(params.w_h)
    d_b = np.zeros_like(params.b)
    dh = dh_final.copy()
    dc = np.zeros((bsz, hsz))
    dz = np.empty((bsz, 4 * hsz))
    for t in range(steps - 1, -1, -1):
        i, f, g, o = cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t]
        tc = cache["tc"][t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :hsz] = dc * g * i * (1.0 - i)
        dz[:, hsz : 2 * hsz] = dc * cache["c_prev"][t] * f * (1.0 - f)
        dz[:, 2 * hsz : 3 * hsz] = dc * i * (1.0 - g * g)
        dz[:, 3 * hsz :] = dh * tc * o * (1.0 - o)
        d_wx += dz.T @ cache["x"][:, t, :]
        d_wh += dz.T @ cache["h_prev"][t]
        d_b += dz.sum(axis=0)
        dh = dz @ params.w_h
        dc = dc * f
    return {"w_x": d_wx, "w_h": d_wh, "b": d_b}


def lstm_forward(params: LstmParams, window: np.ndarray) -> tuple[np.ndarray, dict]:
    """Single-window forward pass: (input_months, n_features) -> final hidden state + cache."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise InvalidInputError(f"window must be a 2-D matrix, got shape {w.shape}")
    h, cache = _forward_batch(params, w[None, :, :])
    return h[0], cache


def bptt_backward(params: LstmParams, cache: dict, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every cell tensor for a single-window cache and dL/dh_final."""
    up = np.asarray(upstream, dtype=np.float64)
    if up.ndim == 1:
        up = up[None, :]
    return _backward_batch(params, cache, up)


def _head_forward(head: DenseHead, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = h @ head.w.T + head.b
    return np.maximum(z, 0.0), z


def _head_backward(head: DenseHead, h: np.ndarray, z: np.ndarray, dpred: np.ndarray):
    dz = dpred * (z > 0.0)
    return {"head_w": dz.T @ h, "head_b": dz.sum(axis=0)}, dz @ head.w


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error over all entries, with its subgradient w.r.t. pred."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise InvalidInputError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    diff = p - t
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def model_loss_and_grads(
    params: LstmParams, head: DenseHead, windows: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Full pipeline loss (cell -> head -> MAE) and gradients for every tensor."""
    h, cache = _forward_batch(params, windows)
    pred, z = _head_forward(head, h)
    loss, dpred = mae_loss(pred, targets)
    grads, dh = _head_backward(head, h, z, dpred)
    grads.update(_backward_batch(params, cache, dh))
    return loss, grads


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale so the global L2 norm does not exceed clip_norm; returns (grads, norm)."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > clip_norm:
        scale = clip_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


def adam_step(
    state: AdamState,
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected ADAM update, applied in place to the parameter tensors."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, p in tensors.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        p -= lr * (state.m[k] / bc1) / (np.sqrt(state.v[k] / bc2) + eps)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _init_params(rng: np.random.Generator, hidden: int, n_features: int, horizon: int):
    k = 1.0 / np.sqrt(hidden)
    params = LstmParams(
        w_x=rng.uniform(-k, k, size=(4 * hidden, n_features)),
        w_h=rng.uniform(-k, k, size=(4 * hidden, hidden)),
        b=np.zeros(4 * hidden),
    )
    params.b[hidden : 2 * hidden] = 1.0  # forget-gate bias, keeps early memory alive
    head = DenseHead(w=rng.uniform(-k, k, size=(horizon, hidden)), b=np.zeros(horizon))
    return params, head


def _fit_scaler(windows: SupervisedWindows) -> MinMaxScaler:
    """Per-feature min/max over all training input rows, with the target column
    widened to cover the training targets as well."""
    flat = windows.inputs.reshape(-1, windows.n_features)
    mins = flat.min(axis=0)
    maxs = flat.max(axis=0)
    ti = windows.target_feature_index
    mins[ti] = min(mins[ti], float(windows.targets.min()))
    maxs[ti] = max(maxs[ti], float(windows.targets.max()))
    return MinMaxScaler(mins, maxs)


def _scale_inputs(scaler: MinMaxScaler, inputs: np.ndarray) -> np.ndarray:
    flat = minmax_apply(scaler, inputs.reshape(-1, inputs.shape[-1]))
    return flat.reshape(inputs.shape)


def _scale_target(scaler: MinMaxScaler, values: np.ndarray, ti: int) -> np.ndarray:
    span = scaler.spans[ti]
    return (values - scaler.mins[ti]) / span


def _unscale_target(scaler: MinMaxScaler, values: np.ndarray, ti: int) -> np.ndarray:
    return values * scaler.spans[ti] + scaler.mins[ti]


def train(windows: SupervisedWindows, config: TrainConfig, case: CaseSpec) -> LstmModel:
    """Fit the forecaster on training windows.

    Scaler fits on the training inputs/targets only; each epoch runs a seeded
    shuffle, mini-batches of the configured size (remainder batch kept), and
    forward -> MAE -> BPTT -> clip -> ADAM. Exactly max_epochs epochs, no
    early stopping.
    """
    if windows.n_windows == 0:
        raise InvalidInputError("empty training dataset")
    if windows.input_months != case.input_months or windows.horizon != case.horizon:
        raise InvalidInputError("window geometry does not match the case")
    if windows.n_features != (1 if case.n_features == 1 else case.n_features):
        raise InvalidInputError("window feature count does not match the case")

    rng = np.random.default_rng(config.seed)
    params, head = _init_params(rng, config.hidden_size, windows.n_features, case.horizon)
    scaler = _fit_scaler(windows)
    ti = windows.target_feature_index

    x = _scale_inputs(scaler, windows.inputs)
    y = _scale_target(scaler, windows.targets, ti)

    tensors = _param_tensors(params, head)
    state = AdamState.for_params(tensors)
    history: list[float] = []
    n = windows.n_windows
    bsz = config.mini_batch_size
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        abs_sum = 0.0
        for lo in range(0, n, bsz):
            batch = order[lo : lo + bsz]
            loss, grads = model_loss_and_grads(params, head, x[batch], y[batch])
            grads, _ = clip_gradients(grads, config.gradient_clip_norm)
            adam_step(state, tensors, grads, config.learning_rate, config.beta1, config.beta2, config.epsilon)
            abs_sum += loss * batch.size * case.horizon
        epoch_loss = abs_sum / (n * case.horizon)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
        history.append(epoch_loss)

    return LstmModel(
        params=params,
        head=head,
        scaler=scaler,
        case=case,
        config=config,
        feature_names=windows.feature_names,
        target_feature=ti,
        loss_history=history,
    )


def predict_batch(model: LstmModel, windows: np.ndarray) -> np.ndarray:
    """Forecast a batch of raw-unit windows: (n, input_months, n_features) -> (n, horizon)."""
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 3 or w.shape[1] != model.case.input_months or w.shape[2] != model.params.n_features:
        raise InvalidInputError(
            f"window batch shape {w.shape} incompatible with case {model.case.case_id}"
        )
    h, _ = _forward_batch(model.params, _scale_inputs(model.scaler, w))
    pred, _ = _head_forward(model.head, h)
    return _unscale_target(model.scaler, pred, model.target_feature)


def predict(model: LstmModel, window: np.ndarray) -> np.ndarray:
    """Forecast one window; returns horizon prices in original units."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise InvalidInputError(f"window must be 2-D, got shape {w.shape}")
    return predict_batch(model, w[None])[0]


# ---------------------------------------------------------------------------
# Serialization (.npz with a JSON meta record; bitwise round trip)
# ---------------------------------------------------------------------------

def save_model(model: LstmModel, path: str | Path) -> None:
    meta = {
        "kind": "lstm",
        "case": [model.case.case_id, model.case.n_features, model.case.input_months, model.case.horizon],
        "config": {
            "seed": model.config.seed,
            "max_epochs": model.config.max_epochs,
            "mini_batch_size": model.config.mini_batch_size,
            "hidden_size": model.config.hidden_size,
            "learning_rate": model.config.learning_rate,
            "beta1": model.config.beta1,
            "beta2": model.config.beta2,
            "epsilon": model.config.epsilon,
            "gradient_clip_norm": model.config.gradient_clip_norm,
        },
        "feature_names": list(model.feature_names),
        "target_feature": model.target_feature,
    }
    save_npz(
        path,
        meta,
        {
            "w_x": model.params.w_x,
            "w_h": model.params.w_h,
            "b": model.params.b,
            "head_w": model.head.w,
            "head_b": model.head.b,
            "scaler_mins": model.scaler.mins,
            "scaler_maxs": model.scaler.maxs,
            "loss_history": np.asarray(model.loss_history),
        },
    )


def load_model(path: str | Path) -> LstmModel:
    meta, data = load_npz(path)
    if meta.get("kind") != "lstm":
        raise InvalidInputError(f"{path}: not an LSTM model file")
    return LstmModel(
        params=LstmParams(w_x=data["w_x"], w_h=data["w_h"], b=data["b"]),
        head=DenseHead(w=data["head_w"], b=data["head_b"]),
        scaler=MinMaxScaler(data["scaler_mins"], data["scaler_maxs"]),
        case=CaseSpec(*meta["case"]),
        config=TrainConfig(**meta["config"]),
        feature_names=tuple(meta["feature_names"]),
        target_feature=int(meta["target_feature"]),
        loss_history=[float(v) for v in data["loss_history"]],
    )
