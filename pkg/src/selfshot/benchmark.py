"""Batch episode evaluation with deterministic, reproducible reports.

Identical (seed, config) inputs yield byte-identical report.json and
episodes.csv regardless of thread count; wall-clock numbers live in a
separate timing.json outside that guarantee.  Per-episode RNG streams are
keyed by (seed, episode_index), so episode i is the same no matter how the
batch is scheduled.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .episodes import EpisodeError, TaskSpec, sample_episode
from .selftrain import LoopConfig, run_episode
from .store import EmbeddingSet, l2_normalize

MAX_FAILURE_FRACTION = 0.01
NEGATIVE_DEP_TOL = 1e-9  # tiny negative dependence values are rounding noise


class BenchmarkError(Exception):
    pass


@dataclass
class RunReport:
    config: dict
    seed: int
    episodes: int
    mean_accuracy: float
    ci95: float
    records: list[dict]
    failures: list[dict]
    traces: list[dict] = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Deterministic payload; timing is deliberately excluded."""
        return {
            "schema_version": 1,
            "config": self.config,
            "seed": self.seed,
            "episodes": self.episodes,
            "summary": {
                "mean_accuracy": self.mean_accuracy,
                "ci95_half_width": self.ci95,
                "failure_count": len(self.failures),
            },
            "records": self.records,
            "failures": self.failures,
            "traces": self.traces,
        }


def _clean_dep(v: float | None) -> float | None:
    if v is None:
        return None
    if -NEGATIVE_DEP_TOL < v < 0.0:
        return 0.0
    return float(v)


def _episode_record(index: int, result) -> dict:
    first = result.records[0] if result.records else None
    last = result.records[-1] if result.records else None
    return {
        "index": index,
        "accuracy": result.accuracy,
        "iterations": result.iterations,
        "stabilized": result.stabilized,
        "selected_total": int(sum(r.selected for r in result.records)),
        "psi_final": last.psi if last else None,
        "pseudo_accuracy_final": last.pseudo_accuracy if last else None,
        "ce_final": last.ce_final if last else None,
        "dependence_initial": _clean_dep(first.dependence_initial) if first else None,
        "dependence_final": _clean_dep(last.dependence_final) if last else None,
    }


def _config_echo(spec: TaskSpec, loop: LoopConfig, normalize: bool) -> dict:
    out = {"task": asdict(spec), "loop": asdict(loop), "normalize": normalize}
    return out


def run_benchmark(
    es: EmbeddingSet,
    spec: TaskSpec,
    loop: LoopConfig,
    *,
    episodes: int,
    seed: int,
    threads: int = 1,
    normalize: bool = True,
    keep_first_traces: int = 0,
) -> RunReport:
    """Evaluate `episodes` independent tasks and aggregate accuracy."""
    if episodes < 1:
        raise BenchmarkError(f"episodes must be >= 1, got {episodes}")
    if threads < 1:
        raise BenchmarkError(f"threads must be >= 1, got {threads}")
    data = l2_normalize(es) if normalize else es
    need = spec.rows_needed_per_class()
    counts = data.class_counts
    short = np.flatnonzero(counts < need)
    if short.size > 0:
        raise EpisodeError(
            f"classes {short.tolist()} have fewer than {need} rows required per episode"
        )

    def one(i: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        ep = sample_episode(rng, data, spec)
        res = run_episode(ep, data, loop, rng, keep_traces=i < keep_first_traces)
        rec = _episode_record(i, res)
        tr = None
        if res.traces:
            tr = {
                "index": i,
                "rounds": [
                    {"ce": t.ce, "dependence": t.dependence, "total": t.total}
                    for t in res.traces
                ],
            }
        return rec, tr

    t_start = time.perf_counter()
    records: dict[int, dict] = {}
    traces: dict[int, dict] = {}
    failures: list[dict] = []
    if threads == 1:
        outcomes = ((i, _attempt(one, i)) for i in range(episodes))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: (i, _attempt(one, i)), range(episodes)))
        outcomes = iter(results)
    for i, outcome in outcomes:
        ok, payload = outcome
        if ok:
            rec, tr = payload
            records[i] = rec
            if tr is not None:
                traces[i] = tr
        else:
            failures.append({"index": i, "error": payload})
    elapsed = time.perf_counter() - t_start

    if len(failures) > MAX_FAILURE_FRACTION * episodes:
        detail = "; ".join(f"#{f['index']}: {f['error']}" for f in failures[:3])
        raise BenchmarkError(
            f"{len(failures)}/{episodes} episodes failed (limit {MAX_FAILURE_FRACTION:.0%}): {detail}"
        )

    acc = np.array([records[i]["accuracy"] for i in sorted(records)])
    mean = float(acc.mean()) if acc.size else 0.0
    ci = float(1.96 * acc.std(ddof=1) / np.sqrt(acc.size)) if acc.size > 1 else 0.0
    return RunReport(
        config=_config_echo(spec, loop, normalize),
        seed=seed,
        episodes=episodes,
        mean_accuracy=mean,
        ci95=ci,
        records=[records[i] for i in sorted(records)],
        failures=sorted(failures, key=lambda f: f["index"]),
        traces=[traces[i] for i in sorted(traces)],
        timing={
            "total_seconds": elapsed,
            "episodes_per_second": episodes / elapsed if elapsed > 0 else None,
            "threads": threads,
        },
    )


def _attempt(fn, i):
    try:
        return True, fn(i)
    except Exception as e:  # recorded per episode; the run aborts past the failure cap
        return False, f"{type(e).__name__}: {e}"


ABLATE_LOSSES = ("ce", "ce+dm", "ce+cond-ent")
ABLATE_SELECTORS = ("none", "random", "nearest-prototype", "confidence", "ida")


def run_ablation(
    es: EmbeddingSet,
    spec: TaskSpec,
    base_loop: LoopConfig,
    *,
    episodes: int,
    seed: int,
    threads: int = 1,
    normalize: bool = True,
    losses: tuple[str, ...] = ABLATE_LOSSES,
    selectors: tuple[str, ...] = ABLATE_SELECTORS,
) -> list[dict]:
    """Loss x selector grid over identical episode streams (same seed)."""
    rows = []
    for loss in losses:
        for sel in selectors:
            loop = replace(
                base_loop,
                selector="ida" if sel == "none" else sel,
                k_per_class=0 if sel == "none" else base_loop.k_per_class,
                train=replace(base_loop.train, loss=loss),
            )
            rep = run_benchmark(
                es, spec, loop,
                episodes=episodes, seed=seed, threads=threads, normalize=normalize,
            )
            rows.append({
                "loss": loss,
                "selector": sel,
                "k_per_class": loop.k_per_class,
                "mean_accuracy": rep.mean_accuracy,
                "ci95_half_width": rep.ci95,
                "episodes": rep.episodes,
            })
    return rows


def _dump_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


EPISODE_CSV_FIELDS = (
    "index", "accuracy", "iterations", "stabilized", "selected_total",
    "psi_final", "pseudo_accuracy_final", "ce_final",
    "dependence_initial", "dependence_final",
)


def write_report(report: RunReport, out_dir: str | Path, *, figures: bool = True) -> dict[str, Path]:
    """report.json + episodes.csv (+ timing.json, + figures) under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["report"] = out / "report.json"
    _dump_json(report.to_dict(), paths["report"])

    paths["episodes"] = out / "episodes.csv"
    with paths["episodes"].open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EPISODE_CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in report.records:
            writer.writerow({k: _csv_cell(rec[k]) for k in EPISODE_CSV_FIELDS})

    paths["timing"] = out / "timing.json"
    _dump_json(report.timing, paths["timing"])

    if figures:
        from . import figures as figmod

        accs = [r["accuracy"] for r in report.records]
        paths["accuracy_figure"] = figmod.save_accuracy_hist(
            accs, report.mean_accuracy, report.ci95, out / "accuracy.png"
        )
        if report.traces:
            paths["convergence_figure"] = figmod.save_convergence(
                report.traces, out / "convergence.png"
            )
    return paths


def write_ablation(rows: list[dict], out_dir: str | Path, *, figures: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    paths["ablation"] = out / "ablation.json"
    _dump_json({"schema_version": 1, "rows": rows}, paths["ablation"])
    paths["ablation_csv"] = out / "ablation.csv"
    fields = ("loss", "selector", "mean_accuracy", "ci95_half_width", "episodes")
    with paths["ablation_csv"].open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row[k]) for k in fields})
    if figures:
        from . import figures as figmod

        paths["ablation_figure"] = figmod.save_ablation(rows, out / "ablation.png")
    return paths


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v
