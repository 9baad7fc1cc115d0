"""Gaussian Gram matrices and the empirical kernel dependence estimator.

The dependence statistic between two sample-aligned Gram matrices K and L is

    (U - 1)^-2 * trace(K H L H),   H = I - (1/U) 1 1^T,

computed here without materializing H (double centering by row/column means).
``hsic_brute_force`` re-derives the same number from the summation expansion
with explicit loops; it exists purely as an oracle for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


class KernelError(Exception):
    pass


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric kernel matrix with unit diagonal and entries in [0, 1]."""

    entries: np.ndarray
    bandwidth: float

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise KernelError(f"Gram matrix must be square, got shape {e.shape}")
        object.__setattr__(self, "entries", e)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def validate(self, tol: float = 1e-12) -> None:
        e = self.entries
        if not np.isfinite(e).all():
            raise KernelError("Gram matrix contains non-finite entries")
        if np.abs(e - e.T).max(initial=0.0) > tol:
            raise KernelError("Gram matrix is not symmetric")
        if np.abs(np.diag(e) - 1.0).max(initial=0.0) > tol:
            raise KernelError("Gram matrix diagonal is not 1")
        if e.min(initial=1.0) < -tol or e.max(initial=0.0) > 1.0 + tol:
            raise KernelError("Gram matrix entries outside [0, 1]")


def gaussian_gram(rows: np.ndarray, sigma: float) -> GramMatrix:
    """k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)) for every row pair."""
    if sigma <= 0:
        raise KernelError(f"bandwidth must be positive, got {sigma}")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise KernelError(f"expected 2-d row matrix, got shape {rows.shape}")
    if not np.isfinite(rows).all():
        raise KernelError("rows contain non-finite values")
    sq = cdist(rows, rows, "sqeuclidean")
    sq = 0.5 * (sq + sq.T)  # enforce exact symmetry
    entries = np.exp(-sq / (2.0 * sigma * sigma))
    np.fill_diagonal(entries, 1.0)
    return GramMatrix(entries=entries, bandwidth=float(sigma))


def _entries(gram) -> np.ndarray:
    if isinstance(gram, GramMatrix):
        return gram.entries
    arr = np.asarray(gram, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise KernelError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def double_center(matrix) -> np.ndarray:
    """H M H without building H: subtract row and column means, add back the grand mean."""
    m = _entries(matrix)
    row = m.mean(axis=1, keepdims=True)
    col = m.mean(axis=0, keepdims=True)
    return m - row - col + m.mean()


def hsic_estimate(k, l) -> float:
    """Empirical dependence between two aligned Gram matrices.

    Nonnegative up to rounding when both inputs are PSD; zero when either
    side is constant across samples.
    """
    km = _entries(k)
    lm = _entries(l)
    u = km.shape[0]
    if lm.shape[0] != u:
        raise KernelError(f"Gram sizes differ: {u} vs {lm.shape[0]}")
    if u < 2:
        raise KernelError(f"need at least 2 samples, got {u}")
    return float(np.sum(double_center(km) * lm) / (u - 1) ** 2)


def hsic_brute_force(k, l) -> float:
    """Oracle: expand trace(KHLH) into plain summation loops.

    (U-1)^-2 [ sum_ij K_ij L_ij - (2/U) sum_ijl K_ij L_il + (1/U^2) (sum K)(sum L) ]
    """
    km = _entries(k)
    lm = _entries(l)
    u = km.shape[0]
    if lm.shape[0] != u or u < 2:
        raise KernelError(f"bad sizes for brute force: {km.shape} vs {lm.shape}")
    kr = km.tolist()
    lr = lm.tolist()
    term_pair = 0.0
    term_triple = 0.0
    sum_k = 0.0
    sum_l = 0.0
    for i in range(u):
        ki = kr[i]
        li = lr[i]
        for j in range(u):
            kij = ki[j]
            term_pair += kij * li[j]
            sum_k += kij
            sum_l += li[j]
            acc = 0.0
            for t in range(u):
                acc += li[t]
            term_triple += kij * acc
    trace_term = term_pair - (2.0 / u) * term_triple + (sum_k * sum_l) / (u * u)
    return trace_term / (u - 1) ** 2


def permutation_independence_check(
    z_rows: np.ndarray,
    y_rows: np.ndarray,
    sigma: float,
    trials: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Fraction of label-permuted dependence values >= the unpermuted value.

    High fractions mean the observed dependence is indistinguishable from
    chance pairing; low fractions mean the pairing carries signal.
    """
    if trials < 100:
        raise KernelError(f"need at least 100 trials for a stable fraction, got {trials}")
    if rng is None:
        rng = np.random.default_rng()
    k = gaussian_gram(np.asarray(z_rows, dtype=np.float64), sigma)
    l = gaussian_gram(np.asarray(y_rows, dtype=np.float64), sigma)
    base = hsic_estimate(k, l)
    lm = l.entries
    u = lm.shape[0]
    hits = 0
    for _ in range(trials):
        p = rng.permutation(u)
        if hsic_estimate(k.entries, lm[np.ix_(p, p)]) >= base:
            hits += 1
    return hits / trials
