"""Gaussian mixture models fit by expectation-maximization.

Two covariance structures are offered:

* ``L0``: diagonal covariances (off-diagonal terms forced to zero);
* ``L1``: full covariances whose off-diagonal terms are shrunk toward zero
  by the factor ``1 - l1_weight`` after every M-step.

Shrinkage is not a maximum-likelihood update, so the L1 M-step is run as a
generalized EM step: if the shrunk covariance would lower the expected
complete-data log-likelihood below that of the previous iterate, the weight
is halved until it does not (falling back to the unshrunk estimate, then to
the previous covariance). The observed log-likelihood is then non-decreasing.

The number of components is picked by BIC over ``1..max_components``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from ..errors import DegenerateComponent, SchemaMismatch, TooFewRows
from .base import NO_DEADLINE, Deadline, DetectorConfig, FittedModel, TrainStats

LOG_2PI = math.log(2 * math.pi)
MIN_ROWS_PER_COMPONENT = 5


@dataclass
class MixtureFit:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    chols: np.ndarray
    log_likelihood: float
    history: list[float]
    converged: bool
    dropped: int = 0

    @property
    def n_components(self) -> int:
        return len(self.weights)


def component_log_pdf(X: np.ndarray, means: np.ndarray, chols: np.ndarray) -> np.ndarray:
    n, d = X.shape
    out = np.empty((n, len(means)))
    for k, (mu, L) in enumerate(zip(means, chols)):
        z = solve_triangular(L, (X - mu).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, k] = -0.5 * (d * LOG_2PI + logdet + np.sum(z * z, axis=0))
    return out


def _joint_log_prob(X, weights, means, chols):
    with np.errstate(divide="ignore"):
        return component_log_pdf(X, means, chols) + np.log(weights)


def _regularize(S: np.ndarray, variant: str, l1_weight: float, floor: float) -> np.ndarray:
    if variant == "L0":
        S = np.diag(np.diag(S))
    else:
        off = ~np.eye(S.shape[0], dtype=bool)
        S = S.copy()
        S[off] *= 1.0 - l1_weight
    idx = np.diag_indices_from(S)
    S[idx] = np.maximum(S[idx], floor)
    return S


def _cholesky(S: np.ndarray, floor: float) -> np.ndarray:
    """Cholesky factor, or DegenerateComponent when an eigenvalue sits below the floor."""
    if np.linalg.eigvalsh(S)[0] < floor * (1 - 1e-9):
        raise DegenerateComponent("covariance not positive definite after flooring")
    return np.linalg.cholesky(S)


def _expected_ll(S: np.ndarray, L: np.ndarray) -> float:
    """Per-row expected complete-data log-likelihood term, up to constants."""
    Linv = solve_triangular(L, np.eye(len(L)), lower=True)
    return -(2.0 * np.sum(np.log(np.diag(L))) + float(np.sum((Linv.T @ Linv) * S)))


def _m_step(X, resp, variant, l1_weight, floor, previous=None):
    nk = resp.sum(axis=0)
    weights = nk / X.shape[0]
    means = (resp.T @ X) / nk[:, None]
    covs, chols = [], []
    for k in range(resp.shape[1]):
        diff = X - means[k]
        S = (resp[:, k, None] * diff).T @ diff / nk[k]
        C = _regularize(S, variant, l1_weight, floor)
        try:
            L = _cholesky(C, floor)
        except DegenerateComponent as exc:
            exc.details["component"] = k
            raise
        if variant == "L1" and previous is not None and l1_weight > 0:
            target = _expected_ll(S, previous[1][k])
            lam = l1_weight
            while _expected_ll(S, L) < target:
                if lam == 0.0:
                    C, L = previous[0][k], previous[1][k]
                    break
                lam = lam / 2 if lam > l1_weight / 256 else 0.0
                try:
                    C = _regularize(S, variant, lam, floor)
                    L = _cholesky(C, floor)
                except DegenerateComponent:
                    C, L = previous[0][k], previous[1][k]
                    break
        covs.append(C)
        chols.append(L)
    return weights, means, np.array(covs), np.array(chols)


def kmeans_init(X: np.ndarray, K: int, rng: np.random.Generator, iters: int = 20) -> np.ndarray:
    """k-means++ seeding followed by a few Lloyd iterations; returns hard responsibilities."""
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
    centers = np.array(centers)
    for _ in range(iters):
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        new = np.array([X[labels == k].mean(axis=0) if np.any(labels == k) else centers[k] for k in range(K)])
        if np.allclose(new, centers):
            break
        centers = new
    labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0
    return resp


def run_em(
    X: np.ndarray,
    resp: np.ndarray,
    variant: str,
    *,
    l1_weight: float = 0.05,
    floor: float = 1e-6,
    max_iter: int = 200,
    tol: float = 1e-6,
    deadline: Deadline = NO_DEADLINE,
) -> MixtureFit:
    """EM from initial responsibilities; empty components are dropped and EM restarts."""
    n = X.shape[0]
    dropped = 0

    def m_step(resp, previous=None):
        nonlocal dropped
        try:
            return resp, _m_step(X, resp, variant, l1_weight, floor, previous)
        except DegenerateComponent as exc:
            if resp.shape[1] == 1:
                raise
            resp = np.delete(resp, exc.details["component"], axis=1)
            resp /= resp.sum(axis=1, keepdims=True)
            dropped += 1
            return resp, None

    while True:
        keep = resp.sum(axis=0) > max(1e-8 * n, 1e-12)
        if not np.all(keep):
            dropped += int((~keep).sum())
            resp = resp[:, keep]
            resp /= resp.sum(axis=1, keepdims=True)
        resp, params = m_step(resp)
        if params is None:
            continue
        weights, means, covs, chols = params
        history: list[float] = []
        converged = False
        restart = False
        for _ in range(int(max_iter)):
            deadline.check()
            log_prob = _joint_log_prob(X, weights, means, chols)
            lse = logsumexp(log_prob, axis=1)
            ll = float(lse.sum())
            if history and abs(ll - history[-1]) / n < tol:
                history.append(ll)
                converged = True
                break
            history.append(ll)
            resp = np.exp(log_prob - lse[:, None])
            if np.any(resp.sum(axis=0) <= max(1e-8 * n, 1e-12)):
                restart = True
                break
            resp, params = m_step(resp, (covs, chols))
            if params is None:
                restart = True
                break
            weights, means, covs, chols = params
        if not restart:
            if not converged:
                log_prob = _joint_log_prob(X, weights, means, chols)
                ll = float(logsumexp(log_prob, axis=1).sum())
                history.append(ll)
            return MixtureFit(weights, means, covs, chols, history[-1], history, converged, dropped)


def n_parameters(K: int, d: int, variant: str) -> int:
    cov = d if variant == "L0" else d * (d + 1) // 2
    return (K - 1) + K * d + K * cov


def bic(fit: MixtureFit, n: int, d: int, variant: str) -> float:
    return -2.0 * fit.log_likelihood + n_parameters(fit.n_components, d, variant) * math.log(n)


def select_mixture(X: np.ndarray, variant: str, cfg: DetectorConfig, deadline: Deadline = NO_DEADLINE):
    n, d = X.shape
    k_max = min(int(cfg.get("max_components")), n // MIN_ROWS_PER_COMPONENT)
    if k_max < 1:
        raise TooFewRows(f"mixture model needs at least {MIN_ROWS_PER_COMPONENT} rows per component")
    rng = np.random.default_rng(cfg.seed)
    options = dict(
        l1_weight=float(cfg.get("l1_weight")),
        floor=float(cfg.get("covariance_floor")),
        max_iter=int(cfg.get("max_iter")),
        tol=float(cfg.get("tol")),
        deadline=deadline,
    )
    best, best_bic, table = None, math.inf, {}
    for K in range(1, k_max + 1):
        fits = []
        for _ in range(max(1, int(cfg.get("n_init")))):
            fits.append(run_em(X, kmeans_init(X, K, rng), variant, **options))
        fit = max(fits, key=lambda f: f.log_likelihood)
        score = bic(fit, n, d, variant)
        table[K] = score
        if score < best_bic:
            best, best_bic = fit, score
    return best, table


def fit(X: np.ndarray, schema, variant: str, cfg: DetectorConfig, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    if variant not in ("L0", "L1"):
        raise ValueError(f"variant must be L0 or L1, got {variant!r}")
    if X.shape[0] < MIN_ROWS_PER_COMPONENT:
        raise TooFewRows(f"mixture model needs at least {MIN_ROWS_PER_COMPONENT} rows")
    mix, table = select_mixture(X, variant, cfg, deadline)
    params = {"weights": mix.weights, "means": mix.means, "covs": mix.covs, "chols": mix.chols}
    nll = -logsumexp(_joint_log_prob(X, mix.weights, mix.means, mix.chols), axis=1)
    offset = float(nll.min())
    meta = {
        "variant": variant,
        "n_components": mix.n_components,
        "bic": {str(k): v for k, v in table.items()},
        "ll_history": mix.history,
        "converged": mix.converged,
        "nll_offset": offset,
    }
    return FittedModel(f"GMM_{variant}", params, TrainStats.of(nll - offset), tuple(schema), meta)


def negative_log_likelihood(model: FittedModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    return -logsumexp(_joint_log_prob(np.asarray(X, dtype=np.float64), p["weights"], p["means"], p["chols"]), axis=1)


def responsibilities(model: FittedModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    log_prob = _joint_log_prob(np.asarray(X, dtype=np.float64), p["weights"], p["means"], p["chols"])
    return np.exp(log_prob - logsumexp(log_prob, axis=1)[:, None])


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Row NLL shifted by the smallest training NLL and clipped at zero."""
    return np.maximum(negative_log_likelihood(model, X) - model.meta["nll_offset"], 0.0)


def identify_mode(model: FittedModel, X: np.ndarray, names=None):
    """Return ``(mode, responsibility, unseen)`` arrays for each row of ``X``.

    A row is in an unseen mode when its score exceeds the training mean by
    more than three training standard deviations.
    """
    if not model.kind.startswith("GMM"):
        raise SchemaMismatch(f"identify_mode needs a mixture model, got {model.kind}")
    if names is not None:
        model.check_schema(names)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    resp = responsibilities(model, X)
    mode = np.argmax(resp, axis=1)
    limit = model.train_stats.mean + 3.0 * model.train_stats.std
    unseen = score(model, X) > limit
    return mode, resp[np.arange(len(mode)), mode], unseen
