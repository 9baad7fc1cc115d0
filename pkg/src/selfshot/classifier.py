"""Prototype-initialized softmax classifier with a dependence-regularized objective.

Training minimizes

    CE(support) / (N * K)  -  lambda * dependence(features, predictions)

by full-batch Adam (or plain gradient descent).  The dependence term pushes
the unlabeled predictions to co-vary with the unlabeled features under a
Gaussian kernel on each side.  An alternative unlabeled term, the mean
prediction entropy, is available for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernels import double_center, gaussian_gram

LOSSES = ("ce", "ce+dm", "ce+cond-ent")
OPTIMIZERS = ("adam", "gd")


class ClassifierError(Exception):
    pass


class DivergenceError(ClassifierError):
    """Training produced a non-finite loss."""


@dataclass
class SoftmaxClassifier:
    """Linear softmax head: logits = features @ weights + bias."""

    weights: np.ndarray  # (dim, n_way)
    bias: np.ndarray  # (n_way,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ClassifierError(
                f"inconsistent parameter shapes {self.weights.shape} / {self.bias.shape}"
            )

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_way(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "SoftmaxClassifier":
        return SoftmaxClassifier(self.weights.copy(), self.bias.copy())

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the reference configuration."""

    lam: float = 0.01
    sigma: float = 0.5
    sigma_pred: float | None = None  # None -> sigma
    lr: float = 1e-4
    iters: int = 1000
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "ce+dm"
    cond_ent_weight: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ClassifierError(f"lam must be >= 0, got {self.lam}")
        if self.sigma <= 0:
            raise ClassifierError(f"sigma must be > 0, got {self.sigma}")
        if self.sigma_pred is not None and self.sigma_pred <= 0:
            raise ClassifierError(f"sigma_pred must be > 0, got {self.sigma_pred}")
        if self.lr <= 0:
            raise ClassifierError(f"lr must be > 0, got {self.lr}")
        if self.iters < 0:
            raise ClassifierError(f"iters must be >= 0, got {self.iters}")
        if self.optimizer not in OPTIMIZERS:
            raise ClassifierError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ClassifierError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    @property
    def pred_bandwidth(self) -> float:
        return self.sigma if self.sigma_pred is None else self.sigma_pred


@dataclass
class Objective:
    """Value and parameter gradient of the combined objective at one point."""

    loss: float
    ce: float
    dependence: float | None
    entropy: float | None
    grad_w: np.ndarray
    grad_b: np.ndarray
    dm_skipped: bool = False


@dataclass
class TrainTrace:
    """Per-iteration series, including the state after the last update
    (length iters + 1)."""

    ce: list[float] = field(default_factory=list)
    dependence: list[float] | None = None
    entropy: list[float] | None = None
    total: list[float] = field(default_factory=list)
    accuracy: list[float] | None = None


def prototype_init(features: np.ndarray, labels: np.ndarray, n_way: int | None = None) -> SoftmaxClassifier:
    """Weights 2*mu_c, bias -||mu_c||^2: argmax equals nearest class mean.

    (2 mu.z - mu.mu = ||z||^2 - ||z - mu||^2, and ||z||^2 is shared across classes.)
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ClassifierError(
            f"bad shapes: features {features.shape}, labels {labels.shape}"
        )
    if n_way is None:
        n_way = int(labels.max()) + 1
    dim = features.shape[1]
    weights = np.empty((dim, n_way))
    bias = np.empty(n_way)
    for c in range(n_way):
        members = features[labels == c]
        if members.shape[0] == 0:
            raise ClassifierError(f"class {c} has no support samples")
        mu = members.mean(axis=0)
        weights[:, c] = 2.0 * mu
        bias[c] = -float(mu @ mu)
    return SoftmaxClassifier(weights, bias)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def predict_proba(clf: SoftmaxClassifier, features: np.ndarray) -> np.ndarray:
    """Row-stochastic class probabilities."""
    return np.exp(_log_softmax(clf.logits(features)))


def pseudo_label(clf: SoftmaxClassifier, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """argmax labels plus their probabilities; ties resolve to the lowest class id."""
    probs = predict_proba(clf, features)
    labels = np.argmax(probs, axis=1)
    return labels, probs[np.arange(probs.shape[0]), labels]


def _softmax_chain(probs: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. probabilities back through row-wise softmax."""
    inner = np.sum(probs * grad_y, axis=1, keepdims=True)
    return probs * (grad_y - inner)


def _ce_and_grad(clf, features, labels):
    n = features.shape[0]
    logp = _log_softmax(clf.logits(features))
    ce = -float(logp[np.arange(n), labels].mean())
    g_logits = (np.exp(logp) - np.eye(clf.n_way)[labels]) / n
    return ce, features.T @ g_logits, g_logits.sum(axis=0)


def _dependence_and_grad(clf, unlabeled, cfg, centered_k):
    """Dependence value and the gradient of (-lam * dependence).

    With A = -lam * (U-1)^-2 * (H K H) and M = A * L elementwise, the
    gradient of the penalized term w.r.t. the prediction rows Y is
    (2 / sigma_l^2) (M Y - rowsum(M) . Y); chain through softmax, then
    through the linear head.
    """
    u = unlabeled.shape[0]
    probs = predict_proba(clf, unlabeled)
    l = gaussian_gram(probs, cfg.pred_bandwidth).entries
    inv_u2 = 1.0 / (u - 1) ** 2
    dep = float(np.sum(centered_k * l) * inv_u2)
    m = (-cfg.lam * inv_u2 * centered_k) * l
    grad_y = (2.0 / cfg.pred_bandwidth**2) * (m @ probs - m.sum(axis=1, keepdims=True) * probs)
    g_logits = _softmax_chain(probs, grad_y)
    return dep, unlabeled.T @ g_logits, g_logits.sum(axis=0)


def conditional_entropy_and_grad(clf, unlabeled_features, cfg=None):
    """Mean prediction entropy over unlabeled rows, with its analytic gradient."""
    unlabeled = np.asarray(unlabeled_features, dtype=np.float64)
    u = unlabeled.shape[0]
    if u < 1:
        raise ClassifierError("conditional entropy needs at least one unlabeled row")
    logp = _log_softmax(clf.logits(unlabeled))
    probs = np.exp(logp)
    ent = -float(np.sum(probs * logp) / u)
    grad_y = (-logp - 1.0) / u
    g_logits = _softmax_chain(probs, grad_y)
    return ent, unlabeled.T @ g_logits, g_logits.sum(axis=0)


def objective_and_grad(
    clf: SoftmaxClassifier,
    support_features: np.ndarray,
    support_labels: np.ndarray,
    unlabeled_features: np.ndarray,
    cfg: TrainConfig,
    *,
    centered_feature_gram: np.ndarray | None = None,
) -> Objective:
    """CE(support) - lam * dependence(unlabeled features, predictions)."""
    support = np.asarray(support_features, dtype=np.float64)
    labels = np.asarray(support_labels, dtype=np.int64)
    unlabeled = np.asarray(unlabeled_features, dtype=np.float64)
    ce, gw, gb = _ce_and_grad(clf, support, labels)
    dep = None
    skipped = False
    if cfg.lam > 0:
        if unlabeled.shape[0] >= 2:
            if centered_feature_gram is None:
                centered_feature_gram = double_center(gaussian_gram(unlabeled, cfg.sigma))
            dep, gw_d, gb_d = _dependence_and_grad(clf, unlabeled, cfg, centered_feature_gram)
            gw = gw + gw_d
            gb = gb + gb_d
        else:
            skipped = True  # dependence undefined below 2 samples; term treated as 0
    loss = ce - cfg.lam * dep if dep is not None else ce
    return Objective(
        loss=loss, ce=ce, dependence=dep, entropy=None,
        grad_w=gw, grad_b=gb, dm_skipped=skipped,
    )


def _evaluate(clf, support, labels, unlabeled, cfg, centered_k):
    if cfg.loss == "ce+dm":
        return objective_and_grad(
            clf, support, labels, unlabeled, cfg, centered_feature_gram=centered_k
        )
    ce, gw, gb = _ce_and_grad(clf, support, labels)
    if cfg.loss == "ce":
        return Objective(loss=ce, ce=ce, dependence=None, entropy=None, grad_w=gw, grad_b=gb)
    ent, gw_e, gb_e = conditional_entropy_and_grad(clf, unlabeled, cfg)
    w = cfg.cond_ent_weight
    return Objective(
        loss=ce + w * ent, ce=ce, dependence=None, entropy=ent,
        grad_w=gw + w * gw_e, grad_b=gb + w * gb_e,
    )


def train(
    clf: SoftmaxClassifier,
    support_features: np.ndarray,
    support_labels: np.ndarray,
    unlabeled_features: np.ndarray,
    cfg: TrainConfig,
    *,
    eval_features: np.ndarray | None = None,
    eval_labels: np.ndarray | None = None,
) -> tuple[SoftmaxClassifier, TrainTrace]:
    """Full-batch optimization from the given (usually prototype) init.

    Returns a new classifier; the input is not modified.  The trace holds
    iters + 1 entries: the state before each update plus the final state.
    """
    clf = clf.copy()
    support = np.asarray(support_features, dtype=np.float64)
    labels = np.asarray(support_labels, dtype=np.int64)
    unlabeled = np.asarray(unlabeled_features, dtype=np.float64)
    if cfg.loss == "ce+cond-ent" and unlabeled.shape[0] < 1:
        raise ClassifierError("ce+cond-ent needs at least one unlabeled row")

    centered_k = None
    if cfg.loss == "ce+dm" and cfg.lam > 0 and unlabeled.shape[0] >= 2:
        centered_k = double_center(gaussian_gram(unlabeled, cfg.sigma))

    dm_active = cfg.loss == "ce+dm" and cfg.lam > 0 and unlabeled.shape[0] >= 2
    trace = TrainTrace(
        dependence=[] if dm_active else None,
        entropy=[] if cfg.loss == "ce+cond-ent" else None,
        accuracy=[] if eval_features is not None else None,
    )

    def record(obj):
        trace.ce.append(obj.ce)
        trace.total.append(obj.loss)
        if trace.dependence is not None:
            trace.dependence.append(obj.dependence)
        if trace.entropy is not None:
            trace.entropy.append(obj.entropy)
        if trace.accuracy is not None:
            pred = np.argmax(clf.logits(eval_features), axis=1)
            trace.accuracy.append(float(np.mean(pred == eval_labels)))

    m_w = np.zeros_like(clf.weights)
    v_w = np.zeros_like(clf.weights)
    m_b = np.zeros_like(clf.bias)
    v_b = np.zeros_like(clf.bias)

    for t in range(1, cfg.iters + 1):
        obj = _evaluate(clf, support, labels, unlabeled, cfg, centered_k)
        if not np.isfinite(obj.loss):
            raise DivergenceError(f"non-finite loss at iteration {t}")
        record(obj)
        if cfg.optimizer == "adam":
            m_w = cfg.beta1 * m_w + (1 - cfg.beta1) * obj.grad_w
            v_w = cfg.beta2 * v_w + (1 - cfg.beta2) * obj.grad_w**2
            m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * obj.grad_b
            v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * obj.grad_b**2
            bc1 = 1 - cfg.beta1**t
            bc2 = 1 - cfg.beta2**t
            clf.weights -= cfg.lr * (m_w / bc1) / (np.sqrt(v_w / bc2) + cfg.eps)
            clf.bias -= cfg.lr * (m_b / bc1) / (np.sqrt(v_b / bc2) + cfg.eps)
        else:
            clf.weights -= cfg.lr * obj.grad_w
            clf.bias -= cfg.lr * obj.grad_b
    final = _evaluate(clf, support, labels, unlabeled, cfg, centered_k)
    if not np.isfinite(final.loss):
        raise DivergenceError(f"non-finite loss after final update (iteration {cfg.iters})")
    record(final)
    return clf, trace
