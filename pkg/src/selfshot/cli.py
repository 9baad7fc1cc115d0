"""Command-line surface: run / ablate / verify / synth / export-info.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .benchmark import (
    BenchmarkError,
    run_ablation,
    run_benchmark,
    write_ablation,
    write_report,
)
from .classifier import ClassifierError, TrainConfig
from .discriminant import DiscriminantError
from .episodes import EpisodeError, TaskSpec, synth_gaussian_tasks
from .kernels import KernelError
from .selftrain import LoopConfig, SelfTrainError
from .store import EmbeddingStoreError, load_embeddings, save_embeddings
from . import verify as verify_mod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

REF = "[reference configuration default]"

SELECTOR_ALIASES = {
    "rand": "random",
    "nn": "nearest-prototype",
    "confid": "confidence",
}

CONFIG_ERRORS = (
    EmbeddingStoreError,
    EpisodeError,
    ClassifierError,
    SelfTrainError,
    DiscriminantError,
    KernelError,
    ValueError,
)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; config errors must exit 1
    def error(self, message):
        raise CliError(message)


def _add_source_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", metavar="PATH",
                     help="embedding manifest (JSON) or CSV to evaluate")
    src.add_argument("--synth", metavar="SPEC",
                     help="generate Gaussian blobs: n_classes,dim,separation,spread,per_class")


def _add_task_flags(p):
    g = p.add_argument_group("task")
    g.add_argument("--mode", choices=("transductive", "semi"), default="transductive",
                   help="unlabeled set equals the query set, or a disjoint pool")
    g.add_argument("--n-way", type=int, default=5, help="classes per episode %s" % REF)
    g.add_argument("--k-shot", type=int, default=1, help="support rows per class %s" % REF)
    g.add_argument("--q-per-class", type=int, default=15, help="query rows per class %s" % REF)
    g.add_argument("--u-per-class", type=int, default=50,
                   help="unlabeled rows per class in semi mode %s" % REF)


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--sigma", type=float, default=0.5,
                   help="Gaussian kernel bandwidth for the dependence term %s" % REF)
    g.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="dependence term weight %s" % REF)
    g.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate %s" % REF)
    g.add_argument("--iters", type=int, default=1000,
                   help="full-batch training iterations %s" % REF)
    g.add_argument("--loss", choices=("ce", "ce+dm", "ce+cond-ent"), default="ce+dm",
                   help="objective for the classifier head")


def _add_loop_flags(p):
    g = p.add_argument_group("self-training loop")
    g.add_argument("--select-per-class", type=int, default=5,
                   help="pseudo-labeled rows merged per class per round %s" % REF)
    g.add_argument("--max-loop-iters", type=int, default=10,
                   help="hard cap on train/select rounds")
    g.add_argument("--selector",
                   choices=("ida", "random", "nearest-prototype", "confidence", "none",
                            "rand", "nn", "confid"),
                   default="ida",
                   help="pseudo-label ranking rule; 'none' disables augmentation")
    g.add_argument("--ridge", type=float, default=None,
                   help="scatter ridge; default adapts to trace(S_bar)/dim")


def _add_eval_flags(p, default_episodes):
    g = p.add_argument_group("evaluation")
    g.add_argument("--episodes", type=int, default=default_episodes,
                   help="number of sampled tasks %s" % (REF if default_episodes == 10000 else ""))
    g.add_argument("--seed", type=int, default=0, help="base RNG seed")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="episode-level parallelism; results do not depend on it")
    g.add_argument("--no-normalize", action="store_true",
                   help="skip row-wise L2 normalization of features")
    g.add_argument("--out", metavar="PATH", default=None,
                   help="directory for report.json / episodes.csv / timing.json / figures")
    g.add_argument("--no-figures", action="store_true",
                   help="do not render PNG figures alongside the delimited output")
    g.add_argument("--keep-traces", type=int, default=0, metavar="N",
                   help="embed full training traces for the first N episodes")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="selfshot",
        description="Few-shot evaluation over embedding caches: dependence-regularized "
                    "classifier training with discriminant-guided pseudo-label selection.",
        epilog="Flags marked %s default to the reference evaluation setup; "
               "change them freely." % REF,
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate episodes and write a report")
    _add_source_flags(run)
    _add_task_flags(run)
    _add_train_flags(run)
    _add_loop_flags(run)
    _add_eval_flags(run, default_episodes=10000)

    abl = sub.add_parser("ablate", help="loss x selector grid on one config")
    _add_source_flags(abl)
    _add_task_flags(abl)
    _add_train_flags(abl)
    _add_loop_flags(abl)
    _add_eval_flags(abl, default_episodes=500)

    ver = sub.add_parser("verify", help="run the numerical verification suite")
    ver.add_argument("--seed", type=int, default=0, help="varies check instances, not outcomes")
    ver.add_argument("--inject-gradient-bug", type=float, default=0.0, help=argparse.SUPPRESS)

    syn = sub.add_parser("synth", help="materialize a synthetic embedding set")
    syn.add_argument("--spec", default="20,10,3.0,1.0,40",
                     help="n_classes,dim,separation,spread,per_class")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True, metavar="DIR",
                     help="directory for manifest.json + features.f32")

    info = sub.add_parser("export-info", help="print a manifest summary")
    info.add_argument("--features", required=True, metavar="PATH")
    return p


def _parse_synth(spec: str, seed: int):
    parts = spec.split(",")
    if len(parts) != 5:
        raise CliError(
            f"--synth needs n_classes,dim,separation,spread,per_class, got {spec!r}"
        )
    try:
        n_classes, dim, per_class = int(parts[0]), int(parts[1]), int(parts[4])
        separation, spread = float(parts[2]), float(parts[3])
    except ValueError:
        raise CliError(f"--synth has a non-numeric field: {spec!r}") from None
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    return synth_gaussian_tasks(rng, n_classes, dim, separation, spread, per_class)


def _load_source(args):
    if args.features is not None:
        return load_embeddings(args.features)
    return _parse_synth(args.synth, args.seed)


def _configs(args):
    spec = TaskSpec(
        n_way=args.n_way, k_shot=args.k_shot, q_per_class=args.q_per_class,
        u_per_class=args.u_per_class, mode=args.mode,
    )
    train = TrainConfig(
        lam=args.lam, sigma=args.sigma, lr=args.lr, iters=args.iters, loss=args.loss,
    )
    selector = SELECTOR_ALIASES.get(args.selector, args.selector)
    k = args.select_per_class
    if selector == "none":
        selector, k = "ida", 0
    loop = LoopConfig(
        k_per_class=k, max_iterations=args.max_loop_iters, selector=selector,
        train=train, ridge=args.ridge,
    )
    return spec, loop


def _check_eval(args) -> None:
    if args.episodes < 1:
        raise CliError(f"--episodes must be >= 1, got {args.episodes}")
    if args.threads < 1:
        raise CliError(f"--threads must be >= 1, got {args.threads}")
    if args.keep_traces < 0:
        raise CliError(f"--keep-traces must be >= 0, got {args.keep_traces}")


def cmd_run(args) -> int:
    _check_eval(args)
    es = _load_source(args)
    spec, loop = _configs(args)
    report = run_benchmark(
        es, spec, loop,
        episodes=args.episodes, seed=args.seed, threads=args.threads,
        normalize=not args.no_normalize, keep_first_traces=args.keep_traces,
    )
    print(f"episodes {report.episodes}")
    print(f"mean_accuracy {report.mean_accuracy:.6f}")
    print(f"ci95_half_width {report.ci95:.6f}")
    print(f"failures {len(report.failures)}")
    if report.timing.get("total_seconds") is not None:
        print(f"wall_seconds {report.timing['total_seconds']:.2f}", file=sys.stderr)
    if args.out:
        paths = write_report(report, args.out, figures=not args.no_figures)
        for name in sorted(paths):
            print(f"wrote {paths[name]}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    _check_eval(args)
    es = _load_source(args)
    spec, loop = _configs(args)
    rows = run_ablation(
        es, spec, loop,
        episodes=args.episodes, seed=args.seed, threads=args.threads,
        normalize=not args.no_normalize,
    )
    width = max(len(r["selector"]) for r in rows)
    print(f"{'loss':<12} {'selector':<{width}} {'accuracy':>9} {'ci95':>8}")
    for r in rows:
        print(f"{r['loss']:<12} {r['selector']:<{width}} "
              f"{r['mean_accuracy']:>9.4f} {r['ci95_half_width']:>8.4f}")
    if args.out:
        paths = write_ablation(rows, args.out, figures=not args.no_figures)
        for name in sorted(paths):
            print(f"wrote {paths[name]}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify_mod.run_all(
        seed=args.seed, gradient_perturbation=args.inject_gradient_bug
    )
    failed = 0
    for res in results:
        tag = "ok  " if res.passed else "FAIL"
        print(f"{tag} {res.name}: {res.detail}")
        failed += not res.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def cmd_synth(args) -> int:
    es = _parse_synth(args.spec, args.seed)
    path = save_embeddings(es, args.out)
    print(f"wrote {path} ({es.count} rows, dim {es.dim}, {es.n_classes} classes)")
    return EXIT_OK


def cmd_export_info(args) -> int:
    es = load_embeddings(args.features)
    counts = es.class_counts
    norms = np.linalg.norm(es.features, axis=1)
    print(f"rows {es.count}")
    print(f"dim {es.dim}")
    print(f"classes {es.n_classes}")
    print(f"rows_per_class min {int(counts.min())} max {int(counts.max())}")
    print(f"row_norm min {norms.min():.4f} mean {norms.mean():.4f} max {norms.max():.4f}")
    if es.class_names is not None:
        shown = ", ".join(es.class_names[:5])
        more = "" if es.n_classes <= 5 else f", ... ({es.n_classes - 5} more)"
        print(f"class_names {shown}{more}")
    print(f"ids {'present' if es.ids is not None else 'absent'}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "ablate": cmd_ablate,
    "verify": cmd_verify,
    "synth": cmd_synth,
    "export-info": cmd_export_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (CliError, *CONFIG_ERRORS) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BenchmarkError as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # anything unplanned is a runtime failure, not a crash
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
