"""Pluggable feature extractors and edge models, referenced as ``"module:attr"``."""

from __future__ import annotations

import importlib
from typing import Callable

import torch
import torch.nn as nn


def load_callable(ref: str) -> Callable:
    """Resolve ``"package.module:attribute"``."""
    module_name, _, attr = ref.partition(":")
    if not module_name or not attr:
        raise ValueError(f"adapter reference {ref!r} must look like 'module:attribute'")
    return getattr(importlib.import_module(module_name), attr)


def load_adapter(ref: str) -> Callable:
    """Adapters are referenced by a zero-argument factory returning the callable."""
    return load_callable(ref)()


class RandomFeatures(nn.Module):
    """Frozen, seeded convolutional features for a desk-scale perceptual term."""

    def __init__(self, seed: int = 0, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 3, 1, 1), nn.ReLU(),
            nn.Conv2d(width, width, 4, 2, 1), nn.ReLU(),
            nn.Conv2d(width, width * 2, 4, 2, 1), nn.ReLU(),
        )
        gen = torch.Generator().manual_seed(seed)
        for m in self.net:
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, generator=gen)
                nn.init.zeros_(m.bias)
        self.requires_grad_(False)

    def forward(self, x):
        return self.net(x)


def random_features(seed: int = 0) -> RandomFeatures:
    return RandomFeatures(seed)


class VGG16Features(nn.Module):
    """ImageNet VGG-16 up to relu4_3; weights come from torchvision's cache."""

    def __init__(self):
        super().__init__()
        from torchvision.models import VGG16_Weights, vgg16

        self.net = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features[:23].eval()
        self.requires_grad_(False)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        return self.net(((x + 1) / 2 - self.mean) / self.std)


def vgg16_features() -> VGG16Features:
    return VGG16Features()
