"""Iterated pseudo-label selection: train, infer, score, merge, repeat.

Each round retrains the softmax head from prototype init on the augmented
support set, infers pseudo-labels for the full unlabeled set, and stops when
consecutive pseudo-label vectors are identical (or the round cap is hit).
Otherwise a selector scores the unlabeled instances and the top
k_per_class from the not-yet-selected pool join the support set with their
pseudo-labels frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    TrainConfig,
    TrainTrace,
    predict_proba,
    prototype_init,
    pseudo_label,
    train,
)
from .discriminant import (
    DiscriminantError,
    InstanceScore,
    fisher_criterion,
    influence_fast_all,
    rank_and_select,
    scatter_matrices,
)
from .episodes import Episode
from .store import EmbeddingSet

SELECTORS = ("ida", "random", "nearest-prototype", "confidence")


class SelfTrainError(Exception):
    pass


@dataclass(frozen=True)
class LoopConfig:
    k_per_class: int = 5
    max_iterations: int = 10
    selector: str = "ida"
    train: TrainConfig = field(default_factory=TrainConfig)
    ridge: float | None = None
    dm_over_full_pool: bool = True  # False: dependence term sees only the remaining pool

    def __post_init__(self):
        if self.k_per_class < 0:
            raise SelfTrainError(f"k_per_class must be >= 0, got {self.k_per_class}")
        if self.max_iterations < 1:
            raise SelfTrainError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.selector not in SELECTORS:
            raise SelfTrainError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.ridge is not None and self.ridge <= 0:
            raise SelfTrainError(f"ridge must be positive when given, got {self.ridge}")


@dataclass
class EpisodeState:
    """Bookkeeping for one episode's loop; positions index the unlabeled arrays."""

    extra_positions: list[int] = field(default_factory=list)
    extra_labels: list[int] = field(default_factory=list)
    pool: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    def check(self) -> None:
        if len(self.extra_positions) != len(set(self.extra_positions)):
            raise SelfTrainError("a pseudo-labeled instance was merged twice")
        if any(self.pool[p] for p in self.extra_positions):
            raise SelfTrainError("merged instance still marked selectable")


@dataclass
class IterationRecord:
    iteration: int
    psi: float | None
    pseudo_accuracy: float | None
    ce_final: float
    dependence_initial: float | None
    dependence_final: float | None
    pool_size: int
    selected: int = 0


@dataclass
class EpisodeResult:
    classifier: object
    accuracy: float
    iterations: int
    stabilized: bool
    records: list[IterationRecord]
    selection_log: list[dict]
    pseudo_labels: np.ndarray | None
    traces: list[TrainTrace] | None = None


def stabilized(previous: np.ndarray, current: np.ndarray) -> bool:
    """Exact equality of consecutive pseudo-label vectors."""
    previous = np.asarray(previous)
    current = np.asarray(current)
    if previous.shape != current.shape:
        raise SelfTrainError(
            f"pseudo-label vectors changed length: {previous.shape} vs {current.shape}"
        )
    return bool(np.array_equal(previous, current))


def select_top_per_class(
    candidates: np.ndarray,
    labels: np.ndarray,
    values: np.ndarray,
    k_per_class: int,
) -> list[int]:
    """Shared selection contract: per pseudo-class, highest values win, ties
    break on the lower index; at most k_per_class each."""
    if k_per_class == 0 or candidates.size == 0:
        return []
    chosen: list[int] = []
    for label in np.unique(labels):
        members = candidates[labels == label]
        vals = values[labels == label]
        order = np.lexsort((members, -vals))  # descending value, ascending index
        chosen.extend(int(i) for i in members[order[:k_per_class]])
    return sorted(chosen)


def baseline_select(
    selector: str,
    features: np.ndarray,
    pseudo_labels_vec: np.ndarray,
    k_per_class: int,
    *,
    candidates: np.ndarray | None = None,
    confidences: np.ndarray | None = None,
    prototypes: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Non-influence selectors sharing rank_and_select's contract.

    confidence: highest predicted probability.  nearest-prototype: smallest
    distance to the prototype of the pseudo-class.  random: uniform draw.
    """
    u = features.shape[0]
    if candidates is None:
        candidates = np.arange(u)
    if selector == "confidence":
        if confidences is None:
            raise SelfTrainError("confidence selection needs the confidence vector")
        values = np.asarray(confidences, dtype=np.float64)
    elif selector == "nearest-prototype":
        if prototypes is None:
            raise SelfTrainError("nearest-prototype selection needs class prototypes")
        diffs = features - prototypes[pseudo_labels_vec]
        values = -np.einsum("ij,ij->i", diffs, diffs)
    elif selector == "random":
        if rng is None:
            raise SelfTrainError("random selection needs an rng")
        values = rng.random(u)
    else:
        raise SelfTrainError(f"unknown baseline selector {selector!r}")
    return select_top_per_class(
        candidates, pseudo_labels_vec[candidates], values[candidates], k_per_class
    )


def _influence_select(
    features: np.ndarray,
    labels_vec: np.ndarray,
    k_per_class: int,
    pool: np.ndarray,
    ridge: float | None,
) -> list[int]:
    # Score the full pseudo-labeled set, then keep only still-selectable indices.
    try:
        scores = influence_fast_all(features, labels_vec, ridge, on_singleton="skip")
    except DiscriminantError:
        return []
    selectable = [sc for sc in scores if pool[sc.index]]
    return rank_and_select(selectable, k_per_class)


def run_episode(
    episode: Episode,
    es: EmbeddingSet,
    cfg: LoopConfig,
    rng: np.random.Generator | None = None,
    *,
    keep_traces: bool = False,
) -> EpisodeResult:
    """Run the full loop for one episode and score the query set."""
    if cfg.selector == "random" and cfg.k_per_class > 0 and rng is None:
        raise SelfTrainError("selector 'random' needs an rng")
    feats = es.features
    sup_f = feats[episode.support_indices]
    sup_y = episode.support_labels
    n_way = episode.n_way
    unl_f = feats[episode.unlabeled_indices]
    u_count = unl_f.shape[0]
    truth = episode.unlabeled_labels if episode.unlabeled_labels.size == u_count else None

    state = EpisodeState(pool=np.ones(u_count, dtype=bool))
    records: list[IterationRecord] = []
    selection_log: list[dict] = []
    traces: list[TrainTrace] | None = [] if keep_traces else None
    prev: np.ndarray | None = None
    settled = False
    clf = None
    cur = None

    for it in range(1, cfg.max_iterations + 1):
        if state.extra_positions:
            tr_f = np.vstack([sup_f, unl_f[state.extra_positions]])
            tr_y = np.concatenate([sup_y, np.asarray(state.extra_labels, dtype=np.int64)])
        else:
            tr_f, tr_y = sup_f, sup_y
        dm_f = unl_f if cfg.dm_over_full_pool else unl_f[state.pool]
        clf, trace = train(prototype_init(tr_f, tr_y, n_way), tr_f, tr_y, dm_f, cfg.train)
        if traces is not None:
            traces.append(trace)
        if u_count == 0:
            records.append(IterationRecord(
                iteration=it, psi=None, pseudo_accuracy=None, ce_final=trace.ce[-1],
                dependence_initial=None, dependence_final=None, pool_size=0,
            ))
            settled = True
            break
        cur, conf = pseudo_label(clf, unl_f)
        psi = None
        if u_count >= 2:
            psi = fisher_criterion(scatter_matrices(unl_f, cur, cfg.ridge))
        rec = IterationRecord(
            iteration=it,
            psi=psi,
            pseudo_accuracy=float(np.mean(cur == truth)) if truth is not None else None,
            ce_final=trace.ce[-1],
            dependence_initial=trace.dependence[0] if trace.dependence else None,
            dependence_final=trace.dependence[-1] if trace.dependence else None,
            pool_size=int(state.pool.sum()),
        )
        if prev is not None and stabilized(prev, cur):
            records.append(rec)
            settled = True
            break
        prev = cur
        if cfg.k_per_class == 0 or not state.pool.any():
            records.append(rec)
            break
        if cfg.selector == "ida":
            picked = _influence_select(unl_f, cur, cfg.k_per_class, state.pool, cfg.ridge)
        else:
            protos = np.stack([tr_f[tr_y == c].mean(axis=0) for c in range(n_way)])
            picked = baseline_select(
                cfg.selector, unl_f, cur, cfg.k_per_class,
                candidates=np.flatnonzero(state.pool),
                confidences=conf, prototypes=protos, rng=rng,
            )
        if not picked:
            records.append(rec)
            break
        state.extra_positions.extend(picked)
        state.extra_labels.extend(int(cur[p]) for p in picked)
        state.pool[picked] = False
        state.check()
        rec.selected = len(picked)
        records.append(rec)
        selection_log.append({
            "iteration": it,
            "indices": [int(episode.unlabeled_indices[p]) for p in picked],
            "labels": [int(cur[p]) for p in picked],
        })

    qry_f = feats[episode.query_indices]
    pred = np.argmax(predict_proba(clf, qry_f), axis=1)
    accuracy = float(np.mean(pred == episode.query_labels))
    return EpisodeResult(
        classifier=clf,
        accuracy=accuracy,
        iterations=len(records),
        stabilized=settled,
        records=records,
        selection_log=selection_log,
        pseudo_labels=cur,
        traces=traces,
    )
