"""Image-folder to embedding-cache exporter."""

from .backbone import BACKBONES, WeightsUnavailableError, build_backbone
from .export import (
    DatasetLayoutError,
    ExportJob,
    ExportResult,
    build_transform,
    discover_dataset,
    export,
)

__all__ = [
    "BACKBONES",
    "DatasetLayoutError",
    "ExportJob",
    "ExportResult",
    "WeightsUnavailableError",
    "build_backbone",
    "build_transform",
    "discover_dataset",
    "export",
]
