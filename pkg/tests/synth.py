"""Seeded synthetic series for tests."""

from __future__ import annotations

import numpy as np

T0 = 1_704_067_200_000  # 2024-01-01T00:00:00Z in epoch ms
STEP = 60_000


def timestamps(n: int) -> np.ndarray:
    return T0 + STEP * np.arange(n, dtype=np.int64)


def injected_series(seed: int, n: int = 2000, d: int = 5, rate: float = 0.01, magnitude: float = 6.0):
    """Correlated smooth multivariate series with isolated point anomalies.

    Columns mix two slow latent factors plus noise. Each anomalous row gets
    a displacement of ``magnitude`` column standard deviations (random sign)
    on every column. Anomalous rows are at least 10 rows apart.
    Returns ``(X, truth)`` with truth in {+1, -1}.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    latent = np.column_stack(
        [np.sin(2 * np.pi * t / rng.uniform(80, 200) + rng.uniform(0, 6)), np.cos(2 * np.pi * t / rng.uniform(150, 400))]
    )
    mixing = rng.normal(size=(2, d))
    X = latent @ mixing + 0.3 * rng.normal(size=(n, d))
    std = X.std(axis=0)
    count = int(round(rate * n))
    candidates = np.arange(20, n - 20, 10)
    rows = np.sort(rng.choice(candidates, size=count, replace=False))
    signs = rng.choice([-1.0, 1.0], size=(count, d))
    X[rows] += magnitude * std * signs
    truth = np.ones(n, dtype=int)
    truth[rows] = -1
    return X, truth


def csv_text(columns: dict[str, np.ndarray], ts: np.ndarray | None = None, time_column: str = "timestamp") -> str:
    n = len(next(iter(columns.values())))
    ts = timestamps(n) if ts is None else ts
    lines = [",".join([time_column, *columns])]
    for i in range(n):
        lines.append(",".join([str(int(ts[i])), *(repr(float(v[i])) for v in columns.values())]))
    return "\n".join(lines) + "\n"


def spike_series(seed: int = 0, n: int = 300, at: int = 150, size: float = 12.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x[at] += size
    return x
