"""Regenerate the bundled three-asset synthetic benchmark under src/ads/data/mini."""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1] / "src" / "ads" / "data" / "mini" / "synthetic"
START_MS = 1_700_000_000_000
STEP_MS = 60_000


def series(rng: np.random.Generator, n: int, d: int, offset: int) -> np.ndarray:
    t = np.arange(offset, offset + n)
    latent = np.column_stack([np.sin(2 * np.pi * t / 60), np.cos(2 * np.pi * t / 95)])
    mix = rng.normal(size=(2, d))
    return latent @ mix + 0.15 * rng.standard_normal((n, d))


def write_csv(path: Path, X: np.ndarray, offset: int) -> None:
    names = [f"m{j}" for j in range(X.shape[1])]
    lines = ["timestamp," + ",".join(names)]
    for i, row in enumerate(X):
        lines.append(f"{START_MS + (offset + i) * STEP_MS}," + ",".join(f"{v:.6f}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def make_asset(path: Path, seed: int, n_train: int = 400, n_test: int = 400, d: int = 3) -> None:
    rng = np.random.default_rng(seed)
    X = series(rng, n_train + n_test, d, 0)
    train, test = X[:n_train], X[n_train:].copy()
    labels = np.ones(n_test, dtype=int)
    starts = rng.choice(np.arange(20, n_test - 20, 40), size=3, replace=False)
    for s in sorted(starts):
        length = int(rng.integers(1, 6))
        sd = train.std(axis=0)
        test[s : s + length] += rng.choice([-1, 1], size=d) * 5 * sd
        labels[s : s + length] = -1
    path.mkdir(parents=True, exist_ok=True)
    write_csv(path / "train.csv", train, 0)
    write_csv(path / "test.csv", test, n_train)
    (path / "labels.csv").write_text("label\n" + "\n".join(str(v) for v in labels) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    for k in range(3):
        make_asset(args.out / f"asset_{k + 1}", args.seed + k)
    print(f"wrote 3 assets under {args.out}")


if __name__ == "__main__":
    main()
