"""Frozen ResNet backbones and pre-activation bottleneck feature taps.

Features are taken after each bottleneck's residual addition but before the
final ReLU. Stage names follow the conv3_x..conv5_x convention (torchvision's
layer2..layer4); the stage-final block is exported by default, every block
with per_block=True.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torchvision.models import resnet50, resnet101

# stage name -> (torchvision layer attribute, output stride)
_STAGES = {
    "conv3_x": ("layer2", 8),
    "conv4_x": ("layer3", 16),
    "conv5_x": ("layer4", 32),
}

_BACKBONES = {"resnet50": resnet50, "resnet101": resnet101}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class LayerInfo:
    key: str  # e.g. "conv5_x" or "conv5_x.b2"
    channels: int
    stride: int


def known_stages() -> tuple[str, ...]:
    return tuple(_STAGES)


def build_backbone(backbone: str, weights: str = "pretrained", seed: int = 0) -> torch.nn.Module:
    """Construct a frozen eval-mode backbone.

    weights: "pretrained" (ImageNet), "none" (random, seeded), or a path to a
    state-dict file.
    """
    if backbone not in _BACKBONES:
        raise ValueError(f"unknown backbone {backbone!r}, expected one of {sorted(_BACKBONES)}")
    ctor = _BACKBONES[backbone]
    if weights == "pretrained":
        model = ctor(weights="IMAGENET1K_V1")
    elif weights == "none":
        torch.manual_seed(seed)
        model = ctor(weights=None)
    else:
        model = ctor(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def validate_stages(stages: tuple[str, ...]) -> None:
    if not stages:
        raise ValueError("layer selection must be non-empty")
    unknown = [s for s in stages if s not in _STAGES]
    if unknown:
        raise ValueError(f"unknown layers {unknown}, expected a subset of {list(_STAGES)}")


def stack_depths(backbone: str, stages: tuple[str, ...], per_block: bool = False) -> list[LayerInfo]:
    """Layer table (channels, stride) for the selected stages."""
    validate_stages(stages)
    model = _BACKBONES.get(backbone)
    if model is None:
        raise ValueError(f"unknown backbone {backbone!r}, expected one of {sorted(_BACKBONES)}")
    net = model(weights=None)
    infos = []
    for stage in sorted(stages, key=list(_STAGES).index):
        attr, stride = _STAGES[stage]
        layer = getattr(net, attr)
        channels = layer[-1].bn3.num_features
        if per_block:
            for bidx in range(len(layer)):
                infos.append(LayerInfo(f"{stage}.b{bidx}", channels, stride))
        else:
            infos.append(LayerInfo(stage, channels, stride))
    return infos


def _bottleneck_prerelu(block: torch.nn.Module, x: torch.Tensor) -> torch.Tensor:
    out = block.relu(block.bn1(block.conv1(x)))
    out = block.relu(block.bn2(block.conv2(out)))
    out = block.bn3(block.conv3(out))
    identity = block.downsample(x) if block.downsample is not None else x
    return out + identity


@torch.no_grad()
def extract_features(
    model: torch.nn.Module,
    batch: torch.Tensor,
    stages: tuple[str, ...],
    per_block: bool = False,
) -> dict[str, torch.Tensor]:
    """Pre-activation bottleneck features for the selected stages.

    Returns a dict keyed like stack_depths() rows, values (c, h, w) float32
    tensors for a batch of one image.
    """
    validate_stages(stages)
    x = model.maxpool(model.relu(model.bn1(model.conv1(batch))))
    taps: dict[str, torch.Tensor] = {}
    for stage, (attr, _) in _STAGES.items():
        layer = getattr(model, attr)
        if attr == "layer2":
            # run conv2_x first; its features are not exported
            x = model.layer1(x)
        for bidx, block in enumerate(layer):
            pre = _bottleneck_prerelu(block, x)
            x = torch.relu(pre)
            if stage in stages:
                if per_block:
                    taps[f"{stage}.b{bidx}"] = pre[0].float()
                elif bidx == len(layer) - 1:
                    taps[stage] = pre[0].float()
    return taps
