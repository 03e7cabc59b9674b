"""Fully connected autoencoder trained with Adam, written directly in numpy.

Hidden layers use tanh, the output layer is linear. The per-row anomaly
score is the mean squared reconstruction error of that row.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteLoss, TooFewRows
from .base import NO_DEADLINE, Deadline, DetectorConfig, FittedModel, TrainStats

MIN_ROWS = 20


def layer_sizes(d: int, hidden=None) -> list[int]:
    if hidden:
        return [d, *[int(h) for h in hidden], d]
    half = max(2, math.ceil(d / 2))
    return [d, half, max(1, math.ceil(d / 4)), half, d]


def init_weights(sizes: list[int], rng: np.random.Generator) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases; returned as ``[W0, b0, W1, b1, ...]``."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params: list[np.ndarray], X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        h = np.tanh(z) if i < n_layers - 1 else z
        acts.append(h)
    return h, acts


def reconstruction_errors(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    out, _ = forward(params, X)
    return np.mean((out - X) ** 2, axis=1)


def loss_and_grads(params: list[np.ndarray], X: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared reconstruction error over all cells and its gradient."""
    out, acts = forward(params, X)
    diff = out - X
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(diff**2))
    delta = 2.0 * diff / diff.size
    grads: list[np.ndarray] = [None] * len(params)
    n_layers = len(params) // 2
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[2 * i].T) * (1.0 - acts[i] ** 2)
    return loss, grads


def train(
    X: np.ndarray,
    sizes: list[int],
    *,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    deadline: Deadline = NO_DEADLINE,
) -> tuple[list[np.ndarray], list[float]]:
    rng = np.random.default_rng(seed)
    params = init_weights(sizes, rng)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    n = X.shape[0]
    for _ in range(int(epochs)):
        deadline.check()
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = X[order[start : start + batch_size]]
            loss, grads = loss_and_grads(params, batch)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"training loss became {loss} at step {step}")
            step += 1
            for j, g in enumerate(grads):
                m[j] = beta1 * m[j] + (1 - beta1) * g
                v[j] = beta2 * v[j] + (1 - beta2) * g * g
                m_hat = m[j] / (1 - beta1**step)
                v_hat = v[j] / (1 - beta2**step)
                params[j] = params[j] - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        epoch_loss = float(np.mean(reconstruction_errors(params, X)))
        if not math.isfinite(epoch_loss):
            raise NonFiniteLoss(f"training loss became {epoch_loss}")
        history.append(epoch_loss)
    return params, history


def fit(X: np.ndarray, schema, cfg: DetectorConfig, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < MIN_ROWS:
        raise TooFewRows(f"autoencoder needs at least {MIN_ROWS} rows, got {X.shape[0]}")
    sizes = layer_sizes(X.shape[1], cfg.get("hidden_sizes"))
    params, history = train(
        X,
        sizes,
        epochs=int(cfg.get("epochs")),
        learning_rate=float(cfg.get("learning_rate")),
        batch_size=int(cfg.get("batch_size")),
        seed=cfg.seed,
        deadline=deadline,
    )
    errors = reconstruction_errors(params, X)
    return FittedModel(
        kind="DNN_AutoEncoder",
        params={f"p{i}": p for i, p in enumerate(params)},
        train_stats=TrainStats.of(errors),
        schema=tuple(schema),
        meta={"layers": sizes, "final_loss": history[-1] if history else None},
    )


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    params = [model.params[f"p{i}"] for i in range(len(model.params))]
    return reconstruction_errors(params, np.asarray(X, dtype=np.float64))
