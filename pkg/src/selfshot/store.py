"""Load, validate, normalize, and persist labeled embedding sets.

On-disk layout: a JSON manifest describing a raw little-endian float32 blob
(row-major, no header), or alternatively a CSV with header
``id,label,f0..f{d-1}``.  Storage is float32; everything in memory is float64.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BLOB_DTYPE = "f32le"
MANIFEST_VERSION = 1


class EmbeddingStoreError(Exception):
    """Raised for malformed manifests, blobs, or embedding sets."""


@dataclass(frozen=True)
class Manifest:
    """Sidecar description of a feature blob."""

    dim: int
    count: int
    blob: str
    labels: list[int]
    class_names: list[str] | None = None
    ids: list[str] | None = None
    version: int = MANIFEST_VERSION
    dtype: str = BLOB_DTYPE

    def to_dict(self) -> dict:
        out = {
            "version": self.version,
            "dtype": self.dtype,
            "dim": self.dim,
            "count": self.count,
            "blob": self.blob,
            "labels": list(self.labels),
        }
        if self.class_names is not None:
            out["class_names"] = list(self.class_names)
        if self.ids is not None:
            out["ids"] = list(self.ids)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Manifest":
        for key in ("version", "dtype", "dim", "count", "blob", "labels"):
            if key not in raw:
                raise EmbeddingStoreError(f"manifest missing required key {key!r}")
        if raw["version"] != MANIFEST_VERSION:
            raise EmbeddingStoreError(
                f"unsupported manifest version {raw['version']!r} (expected {MANIFEST_VERSION})"
            )
        if raw["dtype"] != BLOB_DTYPE:
            raise EmbeddingStoreError(
                f"unsupported blob dtype {raw['dtype']!r} (expected {BLOB_DTYPE!r})"
            )
        dim, count = raw["dim"], raw["count"]
        if not isinstance(dim, int) or dim < 1:
            raise EmbeddingStoreError(f"manifest dim must be a positive int, got {dim!r}")
        if not isinstance(count, int) or count < 1:
            raise EmbeddingStoreError(f"manifest count must be a positive int, got {count!r}")
        labels = raw["labels"]
        if not isinstance(labels, list) or len(labels) != count:
            raise EmbeddingStoreError(
                f"manifest labels must list one entry per row ({count}), got {len(labels) if isinstance(labels, list) else type(labels).__name__}"
            )
        return cls(
            dim=dim,
            count=count,
            blob=str(raw["blob"]),
            labels=[int(v) for v in labels],
            class_names=[str(s) for s in raw["class_names"]] if raw.get("class_names") is not None else None,
            ids=[str(s) for s in raw["ids"]] if raw.get("ids") is not None else None,
        )


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable (features, labels) pair with optional names and row ids.

    features: (count, dim) float64; labels: (count,) int64 covering
    0..n_classes-1 with no gaps.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labs = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if feats.ndim != 2:
            raise EmbeddingStoreError(f"features must be 2-d, got shape {feats.shape}")
        if labs.shape != (feats.shape[0],):
            raise EmbeddingStoreError(
                f"labels shape {labs.shape} does not match feature count {feats.shape[0]}"
            )
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise EmbeddingStoreError(f"empty embedding set (shape {feats.shape})")
        bad = ~np.isfinite(feats)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise EmbeddingStoreError(f"non-finite feature value at row {r}, column {c}")
        if (labs < 0).any():
            r = int(np.argmax(labs < 0))
            raise EmbeddingStoreError(f"negative label {labs[r]} at row {r}")
        present = np.unique(labs)
        expected = np.arange(present[-1] + 1)
        if present.size != expected.size:
            missing = sorted(set(expected.tolist()) - set(present.tolist()))
            raise EmbeddingStoreError(f"label gap: classes {missing} have no rows")
        if self.class_names is not None and len(self.class_names) != present.size:
            raise EmbeddingStoreError(
                f"{len(self.class_names)} class names for {present.size} classes"
            )
        if self.ids is not None and len(self.ids) != feats.shape[0]:
            raise EmbeddingStoreError(f"{len(self.ids)} ids for {feats.shape[0]} rows")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def l2_normalize(es: EmbeddingSet) -> EmbeddingSet:
    """Scale every row to unit Euclidean norm.  Idempotent."""
    norms = np.linalg.norm(es.features, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise EmbeddingStoreError(f"zero-norm row at index {int(np.argmax(zero))}")
    return EmbeddingSet(
        features=es.features / norms[:, None],
        labels=es.labels,
        class_names=es.class_names,
        ids=es.ids,
    )


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Read a manifest (or a CSV when the suffix is .csv) into an EmbeddingSet."""
    path = Path(path)
    if not path.exists():
        raise EmbeddingStoreError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise EmbeddingStoreError(f"manifest {path} is not valid JSON: {e}") from e
    man = Manifest.from_dict(raw)
    blob_path = path.parent / man.blob
    if not blob_path.exists():
        raise EmbeddingStoreError(f"blob {blob_path} named by {path} does not exist")
    data = blob_path.read_bytes()
    expected = man.count * man.dim * 4
    if len(data) != expected:
        raise EmbeddingStoreError(
            f"blob {blob_path} holds {len(data)} bytes, expected {expected} "
            f"(count {man.count} x dim {man.dim} x 4)"
        )
    feats = np.frombuffer(data, dtype="<f4").reshape(man.count, man.dim)
    return EmbeddingSet(
        features=feats.astype(np.float64),
        labels=np.asarray(man.labels, dtype=np.int64),
        class_names=tuple(man.class_names) if man.class_names is not None else None,
        ids=tuple(man.ids) if man.ids is not None else None,
    )


def save_embeddings(
    es: EmbeddingSet,
    out_dir: str | Path,
    *,
    blob_name: str = "features.f32",
    manifest_name: str = "manifest.json",
) -> Path:
    """Write blob + manifest under out_dir; returns the manifest path.

    Round trip loses only float64->float32 precision.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob_path = out_dir / blob_name
    blob_path.write_bytes(np.ascontiguousarray(es.features, dtype="<f4").tobytes())
    man = Manifest(
        dim=es.dim,
        count=es.count,
        blob=blob_name,
        labels=[int(v) for v in es.labels],
        class_names=list(es.class_names) if es.class_names is not None else None,
        ids=list(es.ids) if es.ids is not None else None,
    )
    man_path = out_dir / manifest_name
    man_path.write_text(json.dumps(man.to_dict(), indent=2, sort_keys=True) + "\n")
    return man_path


def _load_csv(path: Path) -> EmbeddingSet:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmbeddingStoreError(f"{path} is empty") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise EmbeddingStoreError(
                f"{path}: header must be id,label,f0..f{{d-1}}, got {header[:3]}..."
            )
        dim = len(header) - 2
        for j in range(dim):
            if header[2 + j] != f"f{j}":
                raise EmbeddingStoreError(
                    f"{path}: feature column {2 + j} named {header[2 + j]!r}, expected f{j!r}"
                )
        ids, labels, rows = [], [], []
        for n, row in enumerate(reader):
            if len(row) != dim + 2:
                raise EmbeddingStoreError(
                    f"{path}: row {n} has {len(row)} fields, expected {dim + 2}"
                )
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise EmbeddingStoreError(f"{path}: row {n} label {row[1]!r} is not an int") from None
            try:
                rows.append([float(v) for v in row[2:]])
            except ValueError:
                raise EmbeddingStoreError(f"{path}: row {n} has a non-numeric feature") from None
    if not rows:
        raise EmbeddingStoreError(f"{path} has a header but no rows")
    return EmbeddingSet(
        features=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        ids=tuple(ids),
    )
