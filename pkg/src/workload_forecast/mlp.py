"""Feed-forward forecaster: a d_in-128-128-1 relu network trained with Adam.

All parameters of a model live in one flat float64 buffer; per-layer weight
and bias arrays are views into it. Gradients use the same layout, so one
optimizer kernel call updates the whole network.

Checkpoint format (JSON, UTF-8, sorted keys)::

    {"format": "workload-forecast-mlp", "version": 1,
     "layer_dims": [d_in, 128, 128, 1], "activation": "relu", "seed": int,
     "normalizer": null | {"x_mean": [...], "x_scale": [...],
                           "y_mean": float, "y_scale": float},
     "params": [...]}   # flat buffer: W1, b1, W2, b2, W3, b3; W row-major (out, in)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import SubjectSeries
from .errors import DimensionMismatch, InsufficientData, IoFailure, ValidationError
from .windows import ForecastMode, HorizonConfig, WindowBatch, build_window_batch

HIDDEN = (128, 128)
CHECKPOINT_FORMAT = "workload-forecast-mlp"
CHECKPOINT_VERSION = 1


def _layout(dims: Sequence[int]) -> list[tuple[int, int, int, int]]:
    """(w_offset, b_offset, n_out, n_in) per layer."""
    out, off = [], 0
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        out.append((off, off + n_out * n_in, n_out, n_in))
        off += n_out * n_in + n_out
    return out


def n_params(dims: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))


def split_params(flat: np.ndarray, dims: Sequence[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-layer ``(W, b)`` views into a flat parameter-shaped buffer."""
    return [(flat[w:b].reshape(n_out, n_in), flat[b:b + n_out])
            for w, b, n_out, n_in in _layout(dims)]


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-scoring of features and target.

    Constant dimensions get a unit divisor.
    """

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0

    @classmethod
    def fit(cls, x: np.ndarray, y: np.ndarray) -> "Normalizer":
        x_mean = x.mean(axis=0)
        x_sd = x.std(axis=0)
        y_sd = float(y.std())
        return cls(x_mean, np.where(x_sd > 0, x_sd, 1.0), float(y.mean()), y_sd if y_sd > 0 else 1.0)

    @classmethod
    def identity(cls, d_in: int) -> "Normalizer":
        return cls(np.zeros(d_in), np.ones(d_in))

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_mean) / self.x_scale

    def transform_y(self, y):
        return (y - self.y_mean) / self.y_scale

    def inverse_y(self, y):
        return y * self.y_scale + self.y_mean


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    params: np.ndarray
    activation: str = "relu"
    seed: int = 0
    normalizer: Normalizer | None = None

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) != 4 or self.layer_dims[1:] != HIDDEN + (1,):
            raise ValidationError(f"layer dims must be [d_in, 128, 128, 1], got {list(self.layer_dims)}")
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (n_params(self.layer_dims),):
            raise DimensionMismatch("parameter buffer does not match layer dims")

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return split_params(self.params, self.layer_dims)

    @property
    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in self.layers]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self.layers]

    def copy(self) -> "MlpModel":
        return replace(self, params=self.params.copy())


def init_mlp(d_in: int, seed: int) -> MlpModel:
    if d_in < 1:
        raise ValidationError("d_in must be >= 1")
    dims = (d_in,) + HIDDEN + (1,)
    rng = np.random.default_rng(seed)
    params = np.zeros(n_params(dims))
    for w, _ in split_params(params, dims):
        bound = 1.0 / math.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return MlpModel(dims, params, seed=seed)


def _check_dims(m: MlpModel, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != m.d_in:
        raise DimensionMismatch(f"expected {m.d_in} features, got shape {x.shape}")


def forward_batch(m: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_dims(m, x)
    (w1, b1), (w2, b2), (w3, b3) = m.layers
    a = np.maximum(x @ w1.T + b1, 0.0)
    a = np.maximum(a @ w2.T + b2, 0.0)
    return (a @ w3.T + b3)[:, 0]


def forward(m: MlpModel, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("forward takes one feature vector")
    return float(forward_batch(m, x[None, :])[0])


def _as_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, WindowBatch):
        return batch.features, batch.targets
    if isinstance(batch, tuple):
        return np.asarray(batch[0], dtype=np.float64), np.asarray(batch[1], dtype=np.float64)
    wb = WindowBatch.from_samples(list(batch))
    return wb.features, wb.targets


def _loss_grad(m: MlpModel, x: np.ndarray, y: np.ndarray, grad: np.ndarray) -> float:
    """MSE loss; writes the exact gradient into ``grad`` (flat, parameter-shaped)."""
    (w1, b1), (w2, b2), (w3, b3) = m.layers
    (gw1, gb1), (gw2, gb2), (gw3, gb3) = split_params(grad, m.layer_dims)
    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2
    a2 = np.maximum(z2, 0.0)
    err = (a2 @ w3.T)[:, 0] + b3[0] - y
    loss = float(err @ err) / len(y)

    d3 = (2.0 / len(y)) * err[:, None]
    np.dot(d3.T, a2, out=gw3)
    gb3[...] = d3.sum(axis=0)
    d2 = (d3 @ w3) * (z2 > 0)
    np.dot(d2.T, a1, out=gw2)
    gb2[...] = d2.sum(axis=0)
    d1 = (d2 @ w2) * (z1 > 0)
    np.dot(d1.T, x, out=gw1)
    gb1[...] = d1.sum(axis=0)
    return loss


def loss_and_gradients(m: MlpModel, batch) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean squared error over ``batch`` and its analytic gradient.

    ``batch`` is a sequence of :class:`WindowSample`, a :class:`WindowBatch`
    or an ``(x, y)`` pair. Gradients come back as per-layer ``(dW, db)``.
    """
    x, y = _as_arrays(batch)
    if len(y) == 0:
        raise InsufficientData("empty batch")
    _check_dims(m, x)
    grad = np.zeros_like(m.params)
    loss = _loss_grad(m, x, y, grad)
    return loss, split_params(grad, m.layer_dims)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.val_fraction < 0.5:
            raise ValidationError("val_fraction must lie in (0, 0.5)")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValidationError("patience, max_epochs and batch_size must be >= 1")
        if min(self.learning_rate, self.adam_eps) <= 0 or not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValidationError("learning rate, eps must be positive and betas in [0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, t: int,
              cfg: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update of flat ``params`` in place; returns ``(params, state)``."""
    if t < 1:
        raise ValidationError("Adam step count starts at 1")
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise DimensionMismatch("params, grads and moments must share a shape")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    kernels.adam_update(params, np.ascontiguousarray(grads), state.m, state.v,
                        cfg.learning_rate, b1, b2, cfg.adam_eps, 1.0 - b1 ** t, 1.0 - b2 ** t)
    state.t = t
    return params, state


@dataclass
class TrainReport:
    epochs_run: int
    best_val_loss: float
    best_epoch: int
    stopped_early: bool
    train_loss_curve: list[float] = field(default_factory=list)
    val_loss_curve: list[float] = field(default_factory=list)


def temporal_split(windows: WindowBatch, val_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (fit, val): the last ``val_fraction`` of each subject's windows go to val."""
    fit, val = [], []
    ids = np.array(windows.subject_ids)
    for sid in sorted(set(windows.subject_ids)):
        rows = np.flatnonzero(ids == sid)
        rows = rows[np.argsort(windows.target_index[rows], kind="stable")]
        n_val = max(1, int(round(val_fraction * len(rows))))
        if n_val >= len(rows):
            raise InsufficientData(f"{sid}: {len(rows)} window(s) cannot be split for validation")
        fit.append(rows[:-n_val])
        val.append(rows[-n_val:])
    return np.concatenate(fit), np.concatenate(val)


def train_early_stopping(windows, cfg: TrainConfig, d_in: int) -> tuple[MlpModel, TrainReport]:
    """Train on the fit split, early-stop on the per-subject temporal tail.

    Returns the parameters of the best validation epoch.
    """
    if not isinstance(windows, WindowBatch):
        windows = WindowBatch.from_samples(list(windows))
    if windows.features.shape[1] != d_in:
        raise DimensionMismatch(f"windows have {windows.features.shape[1]} features, model expects {d_in}")
    fit_idx, val_idx = temporal_split(windows, cfg.val_fraction)
    if len(fit_idx) < 1 or len(val_idx) < 1:
        raise InsufficientData("need at least one training and one validation window")

    norm = Normalizer.fit(windows.features[fit_idx], windows.targets[fit_idx])
    x_fit = norm.transform_x(windows.features[fit_idx])
    y_fit = norm.transform_y(windows.targets[fit_idx])
    x_val = norm.transform_x(windows.features[val_idx])
    y_val = norm.transform_y(windows.targets[val_idx])

    model = init_mlp(d_in, cfg.seed)
    model.normalizer = norm
    rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState.zeros(model.params.size)
    grad = np.zeros_like(model.params)
    best = model.params.copy()
    best_loss, best_epoch, since_best, t = math.inf, 0, 0, 0
    report = TrainReport(0, math.inf, 0, False)
    n = len(y_fit)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            total += _loss_grad(model, x_fit[rows], y_fit[rows], grad) * len(rows)
            t += 1
            adam_step(model.params, grad, state, t, cfg)
        report.train_loss_curve.append(total / n)
        err = forward_batch(model, x_val) - y_val
        val_loss = float(err @ err) / len(err)
        report.val_loss_curve.append(val_loss)
        report.epochs_run = epoch
        if val_loss < best_loss:
            best_loss, best_epoch, since_best = val_loss, epoch, 0
            best[...] = model.params
        else:
            since_best += 1
            if since_best >= cfg.patience:
                report.stopped_early = True
                break

    model.params[...] = best
    report.best_val_loss = best_loss
    report.best_epoch = best_epoch
    return model, report


def predict_block(m: MlpModel, s: SubjectSeries, cfg: HorizonConfig, mode: ForecastMode,
                  block: tuple[int, int]) -> list[tuple[float, float, float]]:
    """``(target_time_s, prediction, truth)`` for every window inside ``block``."""
    wb = build_window_batch(s, cfg, mode, block)
    pred = predict_batch(m, wb.features)
    times = s.start_time_s + wb.target_index * s.sample_period_s
    return list(zip(times.tolist(), pred.tolist(), wb.targets.tolist()))


def predict_batch(m: MlpModel, features: np.ndarray) -> np.ndarray:
    if m.normalizer is None:
        return forward_batch(m, features)
    return m.normalizer.inverse_y(forward_batch(m, m.normalizer.transform_x(features)))


def save_model(m: MlpModel, path) -> None:
    norm = None
    if m.normalizer is not None:
        n = m.normalizer
        norm = {"x_mean": n.x_mean.tolist(), "x_scale": n.x_scale.tolist(),
                "y_mean": n.y_mean, "y_scale": n.y_scale}
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "layer_dims": list(m.layer_dims), "activation": m.activation, "seed": m.seed,
           "normalizer": norm, "params": m.params.tolist()}
    try:
        Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_model(path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
    norm = doc["normalizer"]
    if norm is not None:
        norm = Normalizer(np.array(norm["x_mean"]), np.array(norm["x_scale"]),
                          float(norm["y_mean"]), float(norm["y_scale"]))
    return MlpModel(tuple(doc["layer_dims"]), np.array(doc["params"], dtype=np.float64),
                    doc["activation"], int(doc["seed"]), norm)
