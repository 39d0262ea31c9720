"""One-hidden-layer perceptron (tanh hidden, sigmoid output) trained with Adam on BCE."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import NumericError, TrainingError

CLAMP = 1e-12
PARAMS = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 20
    epochs: int = 20
    batch: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MlpModel:
    """Weights, input standardization and Adam state.

    ``w1`` has shape (inputs, hidden) and ``w2`` (hidden, 1). Inputs are
    standardized with the stored ``means``/``scales`` before the first layer.
    """

    feature_names: tuple[str, ...]
    means: np.ndarray
    scales: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    config: MlpConfig = field(default_factory=MlpConfig)
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0
    losses: list = field(default_factory=list)

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAMS}

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.means) / self.scales

    def forward(self, z: np.ndarray):
        """Hidden activations and output probabilities for standardized rows."""
        h = np.tanh(z @ self.w1 + self.b1)
        out = _sigmoid(h @ self.w2 + self.b2)[:, 0]
        return h, out

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            **{k: getattr(self, k).tolist() for k in PARAMS},
            "config": self.config.to_dict(),
            "step": self.step,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def loss_and_grads(m: MlpModel, z: np.ndarray, y: np.ndarray):
    """Mean BCE over the batch and its gradient for every parameter.

    Where the clamp on ``p`` is active the loss is flat in ``p``, so those
    rows contribute no gradient.
    """
    n = y.size
    h, p = m.forward(z)
    loss = bce_loss(p, y)
    active = (p > CLAMP) & (p < 1.0 - CLAMP)
    # d loss / d logit simplifies to (p - y) / n for sigmoid + BCE
    d_logit = np.where(active, (p - y) / n, 0.0)[:, None]
    grads = {
        "w2": h.T @ d_logit,
        "b2": d_logit.sum(axis=0),
    }
    d_h = (d_logit @ m.w2.T) * (1.0 - h * h)
    grads["w1"] = z.T @ d_h
    grads["b1"] = d_h.sum(axis=0)
    return loss, grads


def init_model(names, means, scales, cfg: MlpConfig) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x4D4C50]))
    n_in = len(names)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    w1 = glorot(n_in, cfg.hidden)
    w2 = glorot(cfg.hidden, 1)
    m = MlpModel(tuple(names), np.asarray(means, dtype=np.float64),
                 np.asarray(scales, dtype=np.float64), w1, np.zeros(cfg.hidden), w2,
                 np.zeros(1), cfg)
    m.adam_m = {k: np.zeros_like(v) for k, v in m.params().items()}
    m.adam_v = {k: np.zeros_like(v) for k, v in m.params().items()}
    return m


def adam_step(m: MlpModel, grads: dict) -> None:
    cfg = m.config
    m.step += 1
    for k in PARAMS:
        g = grads[k]
        m.adam_m[k] = cfg.beta1 * m.adam_m[k] + (1.0 - cfg.beta1) * g
        m.adam_v[k] = cfg.beta2 * m.adam_v[k] + (1.0 - cfg.beta2) * g * g
        m_hat = m.adam_m[k] / (1.0 - cfg.beta1 ** m.step)
        v_hat = m.adam_v[k] / (1.0 - cfg.beta2 ** m.step)
        setattr(m, k, getattr(m, k) - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps))


def standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    return means, scales


def train_steps(m: MlpModel, z: np.ndarray, y: np.ndarray, epochs: int, rng) -> None:
    """Run mini-batch Adam for ``epochs`` passes over standardized ``z``."""
    n = y.size
    batch = m.config.batch
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch)):
            rows = order[start:start + batch]
            loss, grads = loss_and_grads(m, z[rows], y[rows])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            adam_step(m, grads)
            total += loss * rows.size
        m.losses.append(total / n)


def train_mlp(d: Dataset, cfg: MlpConfig = MlpConfig()) -> MlpModel:
    """Mini-batch Adam on BCE; standardization is fit on ``d`` and stored."""
    if np.unique(d.labels).size < 2:
        raise TrainingError("MLP training needs both classes")
    X = d.feature_matrix()
    if not np.all(np.isfinite(X)):
        raise NumericError("training features contain non-finite values")
    means, scales = standardization(X)
    m = init_model(d.feature_names, means, scales, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5348]))
    train_steps(m, m.standardize(X), d.labels.astype(np.float64), cfg.epochs, rng)
    return m


def predict_proba(m: MlpModel, d: Dataset) -> np.ndarray:
    if list(d.feature_names) != list(m.feature_names):
        raise ValueError(f"schema mismatch: model features {list(m.feature_names)}, "
                         f"dataset features {d.feature_names}")
    return m.forward(m.standardize(d.feature_matrix()))[1]


def predict_mlp(m: MlpModel, d: Dataset, threshold: float = 0.5) -> np.ndarray:
    """Attack (1) wherever the output probability reaches ``threshold``."""
    return (predict_proba(m, d) >= threshold).astype(np.int8)


def gradient_check(m: MlpModel, X: np.ndarray, y, eps: float = 1e-5) -> float:
    """Max relative gap between backprop and central-difference gradients.

    ``X`` holds raw feature rows; they are standardized with the model's
    statistics and derivatives are taken in that standardized space.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = m.standardize(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    _, analytic = loss_and_grads(m, z, y)
    worst = 0.0
    for k in PARAMS:
        param = getattr(m, k)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + eps
            plus = bce_loss(m.forward(z)[1], y)
            param[idx] = saved - eps
            minus = bce_loss(m.forward(z)[1], y)
            param[idx] = saved
            numeric = (plus - minus) / (2.0 * eps)
            a = analytic[k][idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, rel)
    return worst
