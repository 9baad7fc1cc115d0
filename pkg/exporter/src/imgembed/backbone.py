"""Feature-extraction backbones built on torchvision classifiers.

Each supported backbone is a stock torchvision model with its classification
head removed, so the forward pass maps a batch of images to a batch of
penultimate-layer feature vectors.
"""

from __future__ import annotations

import torch
from torch import nn


class WeightsUnavailableError(RuntimeError):
    """Pretrained weights could not be loaded (offline, no cache)."""


def _resnet(ctor, weights_enum, pretrained: bool) -> tuple[nn.Module, int]:
    model = ctor(weights=weights_enum.DEFAULT if pretrained else None)
    dim = model.fc.in_features
    model.fc = nn.Identity()
    return model, dim


def _mobilenet_v3_small(pretrained: bool) -> tuple[nn.Module, int]:
    from torchvision.models import MobileNet_V3_Small_Weights, mobilenet_v3_small

    model = mobilenet_v3_small(
        weights=MobileNet_V3_Small_Weights.DEFAULT if pretrained else None
    )
    # classifier[0] is the projection off the pooled trunk; keep it, drop the rest
    dim = model.classifier[0].out_features
    model.classifier = nn.Sequential(model.classifier[0], model.classifier[1])
    return model, dim


def _build(name: str, pretrained: bool) -> tuple[nn.Module, int]:
    if name == "resnet18":
        from torchvision.models import ResNet18_Weights, resnet18

        return _resnet(resnet18, ResNet18_Weights, pretrained)
    if name == "resnet34":
        from torchvision.models import ResNet34_Weights, resnet34

        return _resnet(resnet34, ResNet34_Weights, pretrained)
    if name == "mobilenet-v3-small":
        return _mobilenet_v3_small(pretrained)
    raise ValueError(
        f"unknown backbone {name!r}; supported: {', '.join(sorted(BACKBONES))}"
    )


BACKBONES = ("resnet18", "resnet34", "mobilenet-v3-small")


def build_backbone(
    name: str, weights: str = "pretrained", init_seed: int = 0
) -> tuple[nn.Module, int]:
    """Return (model, feature_dim) for a named backbone.

    weights="pretrained" loads the torchvision default checkpoint and raises
    WeightsUnavailableError when it cannot be fetched or found in the local
    cache.  weights="none" builds a randomly initialized network seeded by
    init_seed, which is deterministic and needs no network access.
    """
    if weights not in ("pretrained", "none"):
        raise ValueError(f"weights must be 'pretrained' or 'none', got {weights!r}")
    if weights == "none":
        torch.manual_seed(init_seed)
        model, dim = _build(name, pretrained=False)
    else:
        try:
            model, dim = _build(name, pretrained=True)
        except ValueError:
            raise
        except Exception as exc:
            raise WeightsUnavailableError(
                f"could not load pretrained weights for {name!r}: {exc}. "
                "Check network access or the torch hub cache, or rerun with "
                "weights='none' for a randomly initialized backbone."
            ) from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, dim
