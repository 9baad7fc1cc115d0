"""Fisher-criterion separability and leave-one-out influence scoring.

For a pseudo-labeled set, psi = trace((S_bar + rho I)^-1 S_B) measures class
separability.  The influence of instance u is the drop in psi when u is
removed with the global mean held fixed (the reduced within-set mean of u's
class is recomputed).  A rank-one downdate of the ridged scatter inverse
(Sherman-Morrison) turns the per-instance evaluation into O(d^2) work; a
closed-form upper bound on the influence needs inner products only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Generalized harmonic number sum_{k=1..4} k^(-1/2); appears in the closed-form bound.
HARMONIC_4_HALF = 1.0 + 2.0**-0.5 + 3.0**-0.5 + 0.5

RIDGE_SCALE = 1e-3  # default rho = RIDGE_SCALE * trace(S_bar) / dim
COND_LIMIT = 1e12
DENOM_TOL = 1e-12  # Sherman-Morrison denominator guard


class DiscriminantError(Exception):
    pass


class ClassVanishedError(DiscriminantError):
    """Removing the instance would empty its pseudo-class."""


class BoundUndefinedError(DiscriminantError):
    """The closed-form bound needs f~.f~ > rho."""


class IllConditionedError(DiscriminantError):
    pass


@dataclass(frozen=True)
class ScatterPair:
    """Within-set and between-class scatter of a centered pseudo-labeled set.

    class_means are centered (global mean subtracted); class_ids lists the
    label values present, aligned with class_means rows and class_counts.
    """

    s_bar: np.ndarray
    s_b: np.ndarray
    mean: np.ndarray
    class_ids: np.ndarray
    class_means: np.ndarray
    class_counts: np.ndarray
    ridge: float

    @property
    def dim(self) -> int:
        return self.s_bar.shape[0]

    @property
    def count(self) -> int:
        return int(self.class_counts.sum())


@dataclass(frozen=True)
class InstanceScore:
    """Leave-one-out influence of one pseudo-labeled instance."""

    index: int
    d_psi: float
    bound: float | None
    pseudo_label: int


def scatter_matrices(features: np.ndarray, labels: np.ndarray, ridge: float | None = None) -> ScatterPair:
    """Accumulate S_bar = sum (f-mu)(f-mu)^T and S_B = sum_c M_c (mu_c-mu)(mu_c-mu)^T.

    Classes with no members simply contribute nothing.  ridge=None resolves
    to the scale-adaptive default; an explicit 0.0 is allowed (pseudo-inverse
    path in fisher_criterion).
    """
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    if feats.ndim != 2 or labs.shape != (feats.shape[0],):
        raise DiscriminantError(f"bad shapes: {feats.shape} vs {labs.shape}")
    u = feats.shape[0]
    if u < 2:
        raise DiscriminantError(f"need at least 2 pseudo-labeled rows, got {u}")
    if (labs < 0).any():
        raise DiscriminantError("negative pseudo-label")
    mean = feats.mean(axis=0)
    centered = feats - mean
    s_bar = centered.T @ centered
    class_ids, inverse, counts = np.unique(labs, return_inverse=True, return_counts=True)
    sums = np.zeros((class_ids.size, feats.shape[1]))
    np.add.at(sums, inverse, centered)
    class_means = sums / counts[:, None]
    s_b = class_means.T @ (counts[:, None] * class_means)
    if ridge is None:
        ridge = RIDGE_SCALE * max(float(np.trace(s_bar)) / feats.shape[1], 1e-12)
    elif ridge < 0:
        raise DiscriminantError(f"ridge must be >= 0, got {ridge}")
    return ScatterPair(
        s_bar=s_bar,
        s_b=s_b,
        mean=mean,
        class_ids=class_ids,
        class_means=class_means,
        class_counts=counts,
        ridge=float(ridge),
    )


def fisher_criterion(pair: ScatterPair) -> float:
    """trace((S_bar + rho I)^-1 S_B); with rho = 0, the pseudo-inverse is used.

    Nonnegative for any valid scatter pair.
    """
    if pair.ridge == 0.0:
        return float(np.trace(np.linalg.pinv(pair.s_bar) @ pair.s_b))
    a = pair.s_bar + pair.ridge * np.eye(pair.dim)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"ridged scatter condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return float(np.trace(np.linalg.solve(a, pair.s_b)))


def _reduced_pair_fixed_mean(pair: ScatterPair, centered: np.ndarray, labs: np.ndarray, u: int) -> ScatterPair:
    # Remove row u but keep the original global mean; only u's class mean moves.
    keep = np.ones(labs.shape[0], dtype=bool)
    keep[u] = False
    c2 = centered[keep]
    l2 = labs[keep]
    s_bar = c2.T @ c2
    class_ids, inverse, counts = np.unique(l2, return_inverse=True, return_counts=True)
    sums = np.zeros((class_ids.size, centered.shape[1]))
    np.add.at(sums, inverse, c2)
    class_means = sums / counts[:, None]
    s_b = class_means.T @ (counts[:, None] * class_means)
    return ScatterPair(
        s_bar=s_bar, s_b=s_b, mean=pair.mean, class_ids=class_ids,
        class_means=class_means, class_counts=counts, ridge=pair.ridge,
    )


def influence_naive(
    features: np.ndarray,
    labels: np.ndarray,
    u: int,
    ridge: float | None = None,
    *,
    recompute_mean: bool = False,
) -> float:
    """Reference path: psi(full) - psi(without u), two explicit solves.

    recompute_mean=True re-centers the reduced set around its own mean
    instead of holding the full-set mean fixed.
    """
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] < 3:
        raise DiscriminantError(f"need at least 3 rows to remove one, got {feats.shape[0]}")
    if not 0 <= u < feats.shape[0]:
        raise DiscriminantError(f"index {u} out of range for {feats.shape[0]} rows")
    pair = scatter_matrices(feats, labs, ridge)
    m_u = int(np.sum(labs == labs[u]))
    if m_u < 2:
        raise ClassVanishedError(
            f"removing index {u} would empty pseudo-class {labs[u]} (population 1)"
        )
    psi_full = fisher_criterion(pair)
    if recompute_mean:
        keep = np.ones(labs.shape[0], dtype=bool)
        keep[u] = False
        reduced = scatter_matrices(feats[keep], labs[keep], ridge=pair.ridge)
    else:
        reduced = _reduced_pair_fixed_mean(pair, feats - pair.mean, labs, u)
    return psi_full - fisher_criterion(reduced)


def influence_bound(features: np.ndarray, labels: np.ndarray, u: int, ridge: float | None = None) -> float:
    """Closed-form upper bound on the influence of instance u (inner products only)."""
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    pair = scatter_matrices(feats, labs, ridge)
    if not 0 <= u < feats.shape[0]:
        raise DiscriminantError(f"index {u} out of range for {feats.shape[0]} rows")
    rho = pair.ridge
    if rho <= 0:
        raise DiscriminantError("the closed-form bound requires a positive ridge")
    pos = int(np.searchsorted(pair.class_ids, labs[u]))
    m_u = int(pair.class_counts[pos])
    if m_u < 2:
        raise ClassVanishedError(f"instance {u} is the sole member of pseudo-class {labs[u]}")
    f = feats[u] - pair.mean
    mu = pair.class_means[pos]
    ff = float(f @ f)
    if ff <= rho:
        raise BoundUndefinedError(
            f"bound undefined at index {u}: centered squared norm {ff:.3e} <= ridge {rho:.3e}"
        )
    mm = float(mu @ mu)
    mf = float(mu @ f)
    radicand = mm * mm - 4.0 * mm * mf + 2.0 * ff * mm + 2.0 * mf * mf
    nu = m_u * np.sqrt(max(radicand, 0.0))
    delta = float(np.sum(pair.class_counts * np.einsum("ij,ij->i", pair.class_means, pair.class_means)))
    term1 = delta * ff / (rho * (ff - rho))
    term2 = HARMONIC_4_HALF * (nu + ff) / (rho * (m_u - 1))
    term3 = ff * (nu + ff) / (rho * (ff - rho) * (m_u - 1))
    return float(term1 + term2 + term3)


def influence_fast_all(
    features: np.ndarray,
    labels: np.ndarray,
    ridge: float | None = None,
    *,
    with_bounds: bool = False,
    on_singleton: str = "raise",
) -> list[InstanceScore]:
    """Influence of every instance via one factorization plus rank-one downdates.

    Exactly matches influence_naive (fixed-mean convention) up to rounding.
    Instances whose pseudo-class has a single member have no defined score;
    on_singleton="raise" rejects the set, "skip" omits them.
    """
    if on_singleton not in ("raise", "skip"):
        raise DiscriminantError(f"on_singleton must be 'raise' or 'skip', got {on_singleton!r}")
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] < 3:
        raise DiscriminantError(f"need at least 3 rows, got {feats.shape[0]}")
    pair = scatter_matrices(feats, labs, ridge)
    rho = pair.ridge
    if rho <= 0:
        raise DiscriminantError("the fast path requires a positive ridge")
    u_count = feats.shape[0]
    pos = np.searchsorted(pair.class_ids, labs)
    m_u = pair.class_counts[pos]
    singles = m_u < 2
    if singles.any() and on_singleton == "raise":
        raise ClassVanishedError(
            f"index {int(np.argmax(singles))} is the sole member of its pseudo-class"
        )

    a = pair.s_bar + rho * np.eye(pair.dim)
    a_inv = np.linalg.inv(a)
    t0 = float(np.trace(a_inv @ pair.s_b))

    centered = feats - pair.mean
    v = centered @ a_inv  # row u = (A^-1 f~_u)^T, A^-1 symmetric
    s = np.einsum("ij,ij->i", v, centered)  # f~^T A^-1 f~
    denom = 1.0 - s  # > 0 in exact arithmetic since A - f~ f~^T is PD
    v_sb_v = np.einsum("ij,ij->i", v @ pair.s_b, v)
    mu_rows = pair.class_means[pos]
    mv = np.einsum("ij,ij->i", v, mu_rows)  # f~^T A^-1 mu~
    q = np.einsum("ij,ij->i", pair.class_means @ a_inv, pair.class_means)[pos]

    with np.errstate(divide="ignore", invalid="ignore"):
        m_f = m_u.astype(np.float64)
        tr_eb = (m_f * q - 2.0 * m_f * mv + s) / (m_f - 1.0)
        v_eb_v = (m_f * mv**2 - 2.0 * m_f * mv * s + s**2) / (m_f - 1.0)
        d_psi = -(v_sb_v / denom + tr_eb + v_eb_v / denom)

    bounds: np.ndarray | None = None
    bound_ok: np.ndarray | None = None
    if with_bounds:
        ff = np.einsum("ij,ij->i", centered, centered)
        mm = np.einsum("ij,ij->i", mu_rows, mu_rows)
        mf = np.einsum("ij,ij->i", mu_rows, centered)
        radicand = np.maximum(mm * mm - 4.0 * mm * mf + 2.0 * ff * mm + 2.0 * mf * mf, 0.0)
        nu = m_f * np.sqrt(radicand)
        delta = float(np.sum(pair.class_counts * np.einsum("ij,ij->i", pair.class_means, pair.class_means)))
        bound_ok = (ff > rho) & ~singles
        with np.errstate(divide="ignore", invalid="ignore"):
            bounds = (
                delta * ff / (rho * (ff - rho))
                + HARMONIC_4_HALF * (nu + ff) / (rho * (m_f - 1.0))
                + ff * (nu + ff) / (rho * (ff - rho) * (m_f - 1.0))
            )

    scores: list[InstanceScore] = []
    for i in range(u_count):
        if singles[i]:
            continue
        if abs(denom[i]) <= DENOM_TOL:
            # numerically degenerate downdate; fall back to the two-solve path
            val = influence_naive(feats, labs, i, ridge=rho)
        else:
            val = float(d_psi[i])
        b = None
        if with_bounds and bound_ok is not None and bound_ok[i]:
            b = float(bounds[i])
        scores.append(InstanceScore(index=i, d_psi=val, bound=b, pseudo_label=int(labs[i])))
    return scores


def rank_and_select(scores: list[InstanceScore], k_per_class: int) -> list[int]:
    """Top-k indices per pseudo-class by descending influence; ties break on index."""
    if k_per_class < 0:
        raise DiscriminantError(f"k_per_class must be >= 0, got {k_per_class}")
    if k_per_class == 0:
        return []
    by_class: dict[int, list[InstanceScore]] = {}
    for sc in scores:
        by_class.setdefault(sc.pseudo_label, []).append(sc)
    chosen: list[int] = []
    for label in sorted(by_class):
        ranked = sorted(by_class[label], key=lambda sc: (-sc.d_psi, sc.index))
        chosen.extend(sc.index for sc in ranked[:k_per_class])
    return sorted(chosen)
