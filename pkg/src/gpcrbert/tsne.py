"""Exact (O(n^2)) t-SNE.

Per-point Gaussian bandwidths are found by bisection so that each
conditional distribution has the requested perplexity; the symmetrised
affinities are matched by a Student-t (one degree of freedom) kernel in the
embedding, minimising KL(P || Q) with momentum gradient descent, adaptive
gains, and early exaggeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 15.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    n_components: int = 2
    min_gain: float = 0.01
    entropy_tol: float = 1e-5
    max_search_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 250:
            raise ValueError("iterations must be >= 250")
        if self.perplexity <= 1:
            raise ValueError("perplexity must exceed 1")


@dataclass
class TsneResult:
    coords: np.ndarray
    kl_trace: list[float]  # KL(P||Q) before the first step and after every step
    P: np.ndarray
    betas: np.ndarray
    entropies: np.ndarray
    q_sums: list[float] = field(default_factory=list)


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_distribution(d: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    shifted = d - d.min()
    w = np.exp(-beta * shifted)
    z = w.sum()
    p = w / z
    entropy = float(np.log(z) + beta * (p * shifted).sum())
    return p, entropy


def conditional_affinities(D2: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 50):
    """Row-wise ``p_{j|i}`` with natural-log entropy matched to ``log(perplexity)``.

    Returns (P_cond, betas, entropies); the diagonal of ``P_cond`` is 0.
    """
    n = D2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.zeros(n)
    for i in range(n):
        d = np.delete(D2[i], i)
        spread = d.mean() - d.min()
        beta = 1.0 / spread if spread > 0 else 1.0
        lo, hi = 0.0, np.inf
        p, h = _row_distribution(d, beta)
        for _ in range(max_iter):
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            p, h = _row_distribution(d, beta)
        P[i, np.arange(n) != i] = p
        betas[i] = beta
        entropies[i] = h
    return P, betas, entropies


def joint_affinities(X: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 50):
    P_cond, betas, entropies = conditional_affinities(squared_distances(X), perplexity, tol, max_iter)
    P = P_cond + P_cond.T
    P /= P.sum()
    return P, betas, entropies


def student_t_affinities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())


def tsne(X, cfg: TsneConfig | None = None) -> TsneResult:
    cfg = cfg or TsneConfig()
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 5:
        raise ValueError(f"t-SNE needs at least 5 points, got {n}")
    if cfg.perplexity >= n:
        raise ValueError(f"perplexity {cfg.perplexity} must be smaller than the number of points {n}")
    P, betas, entropies = joint_affinities(X, cfg.perplexity, cfg.entropy_tol, cfg.max_search_iters)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, cfg.n_components))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    Q, _ = student_t_affinities(Y)
    kl_trace = [kl_divergence(P, Q)]
    q_sums = [float(Q.sum())]
    for it in range(cfg.iterations):
        exaggeration = cfg.early_exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = cfg.momentum_initial if it < cfg.momentum_switch else cfg.momentum_final
        Q, num = student_t_affinities(Y)
        W = (exaggeration * P - Q) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, cfg.min_gain, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        Q, _ = student_t_affinities(Y)
        kl_trace.append(kl_divergence(P, Q))
        q_sums.append(float(Q.sum()))
    return TsneResult(Y, kl_trace, P, betas, entropies, q_sums)


def nearest_centroid_purity(coords: np.ndarray, labels) -> float:
    """Fraction of points whose nearest class centroid is their own class's."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    centroids = np.stack([coords[labels == c].mean(axis=0) for c in classes])
    d = ((coords[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float((classes[d.argmin(axis=1)] == labels).mean())
