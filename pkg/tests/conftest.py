"""Shared builders for the test suite."""

import numpy as np
import pytest

from selfshot import EmbeddingSet


def pytest_runtest_logreport(report):
    """One uncaptured PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    name = name.removeprefix("test_").replace("_", "-")
    detail = ""
    for key, value in report.user_properties:
        if key == "detail":
            detail = f"  ({value})"
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {status}{detail}", flush=True)


def make_set(features, labels, prefix="x"):
    """EmbeddingSet with auto-generated names and ids."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    names = tuple(f"{prefix}-class-{c}" for c in range(n_classes))
    ids = tuple(f"{prefix}-{i}" for i in range(len(labels)))
    return EmbeddingSet(features, labels, names, ids)


@pytest.fixture
def two_blob_set():
    """Two well-separated 2-d blobs, 8 rows each."""
    rng = np.random.default_rng(0)
    a = rng.normal([0.0, 0.0], 0.1, size=(8, 2))
    b = rng.normal([5.0, 5.0], 0.1, size=(8, 2))
    return make_set(np.vstack([a, b]), [0] * 8 + [1] * 8)
