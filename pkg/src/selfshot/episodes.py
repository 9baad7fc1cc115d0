"""Few-shot episode sampling and a synthetic Gaussian task generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import EmbeddingSet

MODES = ("transductive", "semi")


class EpisodeError(Exception):
    pass


@dataclass(frozen=True)
class TaskSpec:
    """Episode geometry: N-way, K-shot, Q query per class, U unlabeled per class.

    In transductive mode the query rows double as the unlabeled set; in semi
    mode a disjoint unlabeled pool of u_per_class rows per class is drawn.
    """

    n_way: int = 5
    k_shot: int = 1
    q_per_class: int = 15
    u_per_class: int = 50
    mode: str = "transductive"

    def __post_init__(self):
        if self.n_way < 2:
            raise EpisodeError(f"n_way must be >= 2, got {self.n_way}")
        if self.k_shot < 1:
            raise EpisodeError(f"k_shot must be >= 1, got {self.k_shot}")
        if self.q_per_class < 1:
            raise EpisodeError(f"q_per_class must be >= 1, got {self.q_per_class}")
        if self.u_per_class < 0:
            raise EpisodeError(f"u_per_class must be >= 0, got {self.u_per_class}")
        if self.mode not in MODES:
            raise EpisodeError(f"mode must be one of {MODES}, got {self.mode!r}")

    def rows_needed_per_class(self) -> int:
        extra = self.u_per_class if self.mode == "semi" else 0
        return self.k_shot + self.q_per_class + extra


@dataclass(frozen=True)
class Episode:
    """Index views into one embedding set; labels are episode-local 0..N-1."""

    class_ids: np.ndarray
    support_indices: np.ndarray
    support_labels: np.ndarray
    query_indices: np.ndarray
    query_labels: np.ndarray
    unlabeled_indices: np.ndarray
    unlabeled_labels: np.ndarray  # ground truth, for diagnostics only
    mode: str

    @property
    def n_way(self) -> int:
        return self.class_ids.shape[0]


def sample_episode(rng: np.random.Generator, es: EmbeddingSet, spec: TaskSpec) -> Episode:
    """Draw one episode without replacement within each sampled class."""
    if spec.n_way > es.n_classes:
        raise EpisodeError(f"{spec.n_way}-way task from {es.n_classes} classes")
    need = spec.rows_needed_per_class()
    class_ids = rng.choice(es.n_classes, size=spec.n_way, replace=False)
    sup_idx, sup_lab = [], []
    qry_idx, qry_lab = [], []
    unl_idx, unl_lab = [], []
    for local, cid in enumerate(class_ids):
        rows = np.flatnonzero(es.labels == cid)
        if rows.size < need:
            raise EpisodeError(
                f"class {int(cid)} has {rows.size} rows, episode needs {need}"
            )
        perm = rows[rng.permutation(rows.size)]
        k, q = spec.k_shot, spec.q_per_class
        sup_idx.append(perm[:k])
        sup_lab.append(np.full(k, local))
        qry_idx.append(perm[k:k + q])
        qry_lab.append(np.full(q, local))
        if spec.mode == "semi":
            u = spec.u_per_class
            unl_idx.append(perm[k + q:k + q + u])
            unl_lab.append(np.full(u, local))
    if spec.mode == "transductive":
        unl_idx, unl_lab = qry_idx, qry_lab
    return Episode(
        class_ids=np.asarray(class_ids, dtype=np.int64),
        support_indices=np.concatenate(sup_idx),
        support_labels=np.concatenate(sup_lab),
        query_indices=np.concatenate(qry_idx),
        query_labels=np.concatenate(qry_lab),
        unlabeled_indices=np.concatenate(unl_idx) if unl_idx else np.empty(0, dtype=np.int64),
        unlabeled_labels=np.concatenate(unl_lab) if unl_lab else np.empty(0, dtype=np.int64),
        mode=spec.mode,
    )


def synth_gaussian_tasks(
    rng: np.random.Generator,
    n_classes: int = 20,
    dim: int = 10,
    separation: float = 3.0,
    spread: float = 1.0,
    per_class: int = 40,
) -> EmbeddingSet:
    """Isotropic Gaussian blobs with class means on a sphere of radius `separation`."""
    if n_classes < 2 or dim < 1 or per_class < 1:
        raise EpisodeError(
            f"bad synthetic shape: n_classes={n_classes}, dim={dim}, per_class={per_class}"
        )
    if separation < 0 or spread <= 0:
        raise EpisodeError(f"bad synthetic scales: separation={separation}, spread={spread}")
    directions = rng.normal(size=(n_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = separation * directions
    feats = np.repeat(centers, per_class, axis=0) + rng.normal(
        0.0, spread, size=(n_classes * per_class, dim)
    )
    labels = np.repeat(np.arange(n_classes), per_class)
    names = tuple(f"synth-{c:03d}" for c in range(n_classes))
    ids = tuple(f"synth-{c:03d}/{i:04d}" for c in range(n_classes) for i in range(per_class))
    return EmbeddingSet(features=feats, labels=labels, class_names=names, ids=ids)
