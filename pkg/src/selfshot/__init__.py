"""Few-shot classification over precomputed embeddings.

A linear softmax head is prototype-initialized from the support set and
trained with cross-entropy plus a kernel dependence term over the unlabeled
features; a Fisher-criterion influence score then picks trustworthy
pseudo-labels to grow the support set, and the loop repeats until the
pseudo-labels settle.
"""

from .store import (
    EmbeddingSet,
    EmbeddingStoreError,
    Manifest,
    l2_normalize,
    load_embeddings,
    save_embeddings,
)
from .kernels import (
    GramMatrix,
    KernelError,
    gaussian_gram,
    hsic_brute_force,
    hsic_estimate,
    permutation_independence_check,
)
from .classifier import (
    ClassifierError,
    DivergenceError,
    Objective,
    SoftmaxClassifier,
    TrainConfig,
    TrainTrace,
    conditional_entropy_and_grad,
    objective_and_grad,
    predict_proba,
    prototype_init,
    pseudo_label,
    train,
)
from .discriminant import (
    BoundUndefinedError,
    ClassVanishedError,
    DiscriminantError,
    InstanceScore,
    ScatterPair,
    fisher_criterion,
    influence_bound,
    influence_fast_all,
    influence_naive,
    rank_and_select,
    scatter_matrices,
)
from .episodes import Episode, EpisodeError, TaskSpec, sample_episode, synth_gaussian_tasks
from .selftrain import (
    EpisodeResult,
    LoopConfig,
    SelfTrainError,
    baseline_select,
    run_episode,
    stabilized,
)
from .benchmark import (
    BenchmarkError,
    RunReport,
    run_ablation,
    run_benchmark,
    write_ablation,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddingSet", "EmbeddingStoreError", "Manifest",
    "l2_normalize", "load_embeddings", "save_embeddings",
    "GramMatrix", "KernelError", "gaussian_gram",
    "hsic_brute_force", "hsic_estimate", "permutation_independence_check",
    "ClassifierError", "DivergenceError", "Objective", "SoftmaxClassifier",
    "TrainConfig", "TrainTrace", "conditional_entropy_and_grad",
    "objective_and_grad", "predict_proba", "prototype_init", "pseudo_label", "train",
    "BoundUndefinedError", "ClassVanishedError", "DiscriminantError",
    "InstanceScore", "ScatterPair", "fisher_criterion", "influence_bound",
    "influence_fast_all", "influence_naive", "rank_and_select", "scatter_matrices",
    "Episode", "EpisodeError", "TaskSpec", "sample_episode", "synth_gaussian_tasks",
    "EpisodeResult", "LoopConfig", "SelfTrainError", "baseline_select",
    "run_episode", "stabilized",
    "BenchmarkError", "RunReport", "run_ablation", "run_benchmark",
    "write_ablation", "write_report",
    "__version__",
]
