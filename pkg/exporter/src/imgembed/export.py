"""Walk a class-per-folder image tree and export backbone features.

Output is a JSON manifest next to a raw little-endian float32 blob
(row-major, no header), the same cache layout the downstream few-shot
tooling reads.  Labels index into the sorted list of class folder names;
ids are image paths relative to the dataset root.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import transforms

from .backbone import build_backbone

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class DatasetLayoutError(Exception):
    """The dataset root does not look like one folder per class."""


@dataclass(frozen=True)
class ExportJob:
    """What to export: dataset location, backbone, preprocessing, destination."""

    root: str | Path
    out_dir: str | Path
    backbone: str = "resnet18"
    weights: str = "pretrained"
    image_size: int = 84
    batch_size: int = 32
    init_seed: int = 0

    def __post_init__(self):
        if self.image_size < 8:
            raise ValueError(f"image_size must be at least 8, got {self.image_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


@dataclass(frozen=True)
class ExportResult:
    """Where the export landed and what it covered."""

    manifest_path: Path
    blob_path: Path
    count: int
    dim: int
    class_names: tuple[str, ...]
    skipped: tuple[str, ...] = field(default_factory=tuple)


def discover_dataset(root: str | Path) -> tuple[list[str], list[tuple[str, int]]]:
    """List (relative_path, label) pairs under one-folder-per-class root.

    Class names are the folder names in sorted order; that order defines the
    label integers.  Files are sorted within each folder so the export order
    is stable across runs and machines.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {root} is not a directory")
    class_dirs = sorted(
        p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")
    )
    if not class_dirs:
        raise DatasetLayoutError(f"dataset root {root} contains no class folders")
    class_names = [p.name for p in class_dirs]
    entries: list[tuple[str, int]] = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(
            p for p in cdir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise DatasetLayoutError(f"class folder {cdir} contains no image files")
        entries.extend((str(p.relative_to(root)), label) for p in files)
    return class_names, entries


def build_transform(image_size: int) -> transforms.Compose:
    """Deterministic eval preprocessing: resize, center crop, normalize."""
    return transforms.Compose(
        [
            transforms.Resize(image_size),
            transforms.CenterCrop(image_size),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def _load_image(path: Path, tf: transforms.Compose) -> torch.Tensor | None:
    try:
        with Image.open(path) as img:
            return tf(img.convert("RGB"))
    except Exception as exc:
        warnings.warn(f"skipping unreadable image {path}: {exc}", stacklevel=2)
        return None


def export(job: ExportJob) -> ExportResult:
    """Run the export and return where everything was written.

    Unreadable images are skipped with a warning and listed in the result;
    every other failure raises.
    """
    root = Path(job.root)
    class_names, entries = discover_dataset(root)
    model, dim = build_backbone(job.backbone, job.weights, job.init_seed)
    tf = build_transform(job.image_size)

    kept_ids: list[str] = []
    kept_labels: list[int] = []
    skipped: list[str] = []
    chunks: list[np.ndarray] = []
    batch: list[torch.Tensor] = []

    def flush():
        if not batch:
            return
        with torch.no_grad():
            feats = model(torch.stack(batch))
        chunks.append(feats.cpu().to(torch.float32).numpy())
        batch.clear()

    for rel, label in entries:
        tensor = _load_image(root / rel, tf)
        if tensor is None:
            skipped.append(rel)
            continue
        kept_ids.append(rel)
        kept_labels.append(label)
        batch.append(tensor)
        if len(batch) == job.batch_size:
            flush()
    flush()

    if not kept_ids:
        raise DatasetLayoutError(f"no readable images under {root}")
    missing = sorted(set(range(len(class_names))) - set(kept_labels))
    if missing:
        names = ", ".join(class_names[i] for i in missing)
        raise DatasetLayoutError(f"every image in class folder(s) {names} was unreadable")

    features = np.concatenate(chunks, axis=0)
    assert features.shape == (len(kept_ids), dim)

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob_path = out_dir / "features.f32"
    blob_path.write_bytes(np.ascontiguousarray(features, dtype="<f4").tobytes())
    manifest = {
        "version": 1,
        "dtype": "f32le",
        "dim": dim,
        "count": len(kept_ids),
        "blob": blob_path.name,
        "labels": kept_labels,
        "class_names": class_names,
        "ids": kept_ids,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExportResult(
        manifest_path=manifest_path,
        blob_path=blob_path,
        count=len(kept_ids),
        dim=dim,
        class_names=tuple(class_names),
        skipped=tuple(skipped),
    )
