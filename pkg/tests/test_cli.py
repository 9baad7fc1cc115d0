"""Command-line interface: exit codes, determinism, artifacts."""

import json
import subprocess
import sys

import numpy as np
import pytest

from selfshot import load_embeddings

CLI = [sys.executable, "-m", "selfshot.cli"]


def run_cli(*args, **kwargs):
    return subprocess.run(
        CLI + list(args), capture_output=True, text=True, timeout=300, **kwargs
    )


@pytest.fixture(scope="module")
def synth_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    proc = run_cli(
        "synth", "--spec", "8,6,6.0,1.0,30", "--seed", "3", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    return out / "manifest.json"


class TestExitCodes:
    def test_unknown_flag_is_config_error(self):
        proc = run_cli("run", "--no-such-flag")
        assert proc.returncode == 1

    def test_missing_subcommand_is_config_error(self):
        proc = run_cli()
        assert proc.returncode == 1

    def test_missing_manifest_is_config_error(self, tmp_path):
        missing = tmp_path / "nope" / "manifest.json"
        proc = run_cli("run", "--features", str(missing), "--episodes", "1")
        assert proc.returncode == 1
        assert "manifest.json" in proc.stderr

    def test_bad_loss_is_config_error(self, synth_manifest):
        proc = run_cli(
            "run", "--features", str(synth_manifest),
            "--episodes", "1", "--loss", "hinge",
        )
        assert proc.returncode == 1

    def test_zero_episodes_is_config_error(self, synth_manifest):
        proc = run_cli("run", "--features", str(synth_manifest), "--episodes", "0")
        assert proc.returncode == 1

    def test_infeasible_task_is_config_error(self, synth_manifest):
        # 30 rows per class cannot cover K=1 + Q=40
        proc = run_cli(
            "run", "--features", str(synth_manifest),
            "--episodes", "1", "--q-per-class", "40",
        )
        assert proc.returncode == 1


class TestSynth:
    def test_writes_loadable_manifest(self, synth_manifest):
        es = load_embeddings(synth_manifest)
        assert es.count == 240
        assert es.dim == 6
        assert es.n_classes == 8

    def test_deterministic_bytes(self, tmp_path):
        for sub in ("a", "b"):
            proc = run_cli(
                "synth", "--spec", "4,3,2.0,1.0,5", "--seed", "11",
                "--out", str(tmp_path / sub),
            )
            assert proc.returncode == 0
        blob_a = (tmp_path / "a" / "features.f32").read_bytes()
        blob_b = (tmp_path / "b" / "features.f32").read_bytes()
        assert blob_a == blob_b
        man_a = (tmp_path / "a" / "manifest.json").read_bytes()
        man_b = (tmp_path / "b" / "manifest.json").read_bytes()
        assert man_a == man_b

    def test_bad_spec_string(self, tmp_path):
        proc = run_cli("synth", "--spec", "4,3", "--seed", "0", "--out", str(tmp_path))
        assert proc.returncode == 1


class TestExportInfo:
    def test_summary_lines(self, synth_manifest):
        proc = run_cli("export-info", "--features", str(synth_manifest))
        assert proc.returncode == 0
        assert "rows" in proc.stdout
        assert "8" in proc.stdout


class TestRun:
    def test_stdout_summary_and_artifacts(self, synth_manifest, tmp_path):
        out = tmp_path / "rep"
        proc = run_cli(
            "run", "--features", str(synth_manifest),
            "--episodes", "3", "--seed", "4", "--iters", "40",
            "--lr", "0.05", "--select-per-class", "3",
            "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        assert "mean_accuracy" in proc.stdout
        assert (out / "report.json").exists()
        assert (out / "episodes.csv").exists()
        assert (out / "timing.json").exists()
        assert (out / "accuracy.png").exists()

    def test_no_figures(self, synth_manifest, tmp_path):
        out = tmp_path / "rep"
        proc = run_cli(
            "run", "--features", str(synth_manifest),
            "--episodes", "2", "--seed", "4", "--iters", "20",
            "--out", str(out), "--no-figures",
        )
        assert proc.returncode == 0, proc.stderr
        assert not list(out.glob("*.png"))

    def test_deterministic_report_bytes(self, synth_manifest, tmp_path):
        outs = []
        for sub, threads in (("a", "1"), ("b", "2")):
            out = tmp_path / sub
            proc = run_cli(
                "run", "--features", str(synth_manifest),
                "--episodes", "3", "--seed", "5", "--iters", "30",
                "--threads", threads, "--out", str(out), "--no-figures",
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        a, b = outs
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "episodes.csv").read_bytes() == (b / "episodes.csv").read_bytes()

    def test_synth_flag_inline(self, tmp_path):
        proc = run_cli(
            "run", "--synth", "8,6,6.0,1.0,30", "--episodes", "2",
            "--seed", "0", "--iters", "20",
        )
        assert proc.returncode == 0, proc.stderr
        assert "episodes 2" in proc.stdout

    def test_features_and_synth_conflict(self, synth_manifest):
        proc = run_cli(
            "run", "--features", str(synth_manifest), "--synth", "4,3,2.0,1.0,10",
            "--episodes", "1",
        )
        assert proc.returncode == 1

    def test_semi_mode(self, tmp_path):
        proc = run_cli(
            "run", "--synth", "8,6,6.0,1.0,30", "--mode", "semi",
            "--q-per-class", "5", "--u-per-class", "10",
            "--episodes", "2", "--seed", "1", "--iters", "20",
        )
        assert proc.returncode == 0, proc.stderr


class TestAblate:
    def test_grid_table(self, tmp_path):
        out = tmp_path / "abl"
        proc = run_cli(
            "ablate", "--synth", "8,6,6.0,1.0,30", "--episodes", "2",
            "--seed", "2", "--iters", "20", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        doc = json.loads((out / "ablation.json").read_text())
        assert len(doc["rows"]) == 15  # 3 losses x 5 selectors
        # table printed with one line per combo
        lines = [l for l in proc.stdout.splitlines() if l.strip()]
        assert len(lines) >= 15


class TestVerify:
    def test_all_checks_pass(self):
        proc = run_cli("verify", "--seed", "0")
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert "checks passed" in proc.stdout

    def test_injected_gradient_bug_detected(self):
        # negative control: a deliberately scaled gradient must fail the suite
        proc = run_cli("verify", "--seed", "0", "--inject-gradient-bug", "0.01")
        assert proc.returncode == 3
        assert "FAIL" in proc.stdout
