"""Patch-discriminator architecture strings and receptive-field arithmetic.

An architecture is a sequence of layer codes, e.g. ``"A,A,A,A,C"`` or
``"A->A->A->A->C"``:

====  ======  ======
code  kernel  stride
====  ======  ======
A     4       2
B     4       1
C     1       1
D     4       3
====  ======  ======

Every architecture ends in a ``C`` layer that maps features to one logit
per patch.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

LAYER_CODES: dict[str, tuple[int, int]] = {
    "A": (4, 2),
    "B": (4, 1),
    "C": (1, 1),
    "D": (4, 3),
}
CONV_CODES = ("A", "B", "D")

# name -> (spec, receptive field) for the baseline and its eight variants
REFERENCE_MODELS: dict[str, tuple[str, int]] = {
    "UNIT": ("A,A,A,A,C", 46),
    "Model 1": ("D,D,A,C", 40),
    "Model 2": ("A,A,A,C", 22),
    "Model 3": ("A,B,B,B,C", 22),
    "Model 4": ("A,B,B,C", 16),
    "Model 5": ("A,A,C", 10),
    "Model 6": ("A,B,C", 10),
    "Model 7": ("B,B,B,C", 10),
    "Model 8": ("B,B,C", 7),
}


class ArchSpecError(ValueError):
    pass


class EmptySpec(ArchSpecError):
    pass


class UnknownLayerCode(ArchSpecError):
    pass


class MissingFinalC(ArchSpecError):
    pass


class NonPositiveIntermediateSize(ArchSpecError):
    pass


class DegenerateResponse(RuntimeError):
    pass


def padding_for(kernel: int) -> int:
    return 1 if kernel == 4 else 0


@dataclass(frozen=True)
class ChannelPlan:
    """Channel widths of the discriminator.

    The first layer emits ``base_channels``; each later layer with stride
    greater than one multiplies the width by ``growth`` (capped at ``cap``).
    The trailing ``C`` layer always emits a single channel.
    """

    base_channels: int = 64
    growth: int = 2
    cap: int = 512

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.cap < self.base_channels:
            raise ValueError("cap must be >= base_channels")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")

    def widths(self, codes: Sequence[str]) -> list[int]:
        out = []
        width = self.base_channels
        for i, code in enumerate(codes):
            if i == len(codes) - 1:
                out.append(1)
                break
            if i > 0 and LAYER_CODES[code][1] > 1:
                width = min(width * self.growth, self.cap)
            out.append(width)
        return out


DEFAULT_PLAN = ChannelPlan()


@dataclass(frozen=True)
class ConvLayerSpec:
    code: str
    kernel: int
    stride: int
    padding: int
    out_channels: int

    def __post_init__(self):
        if LAYER_CODES.get(self.code) != (self.kernel, self.stride):
            raise UnknownLayerCode(
                f"layer {self.code!r} with kernel {self.kernel}, stride {self.stride}"
            )
        if self.padding != padding_for(self.kernel):
            raise ValueError(f"padding {self.padding} invalid for kernel {self.kernel}")


@dataclass(frozen=True)
class DiscriminatorArch:
    name: str
    layers: tuple[ConvLayerSpec, ...] = field(repr=False)

    def __post_init__(self):
        if not self.layers:
            raise EmptySpec("architecture has no layers")
        if self.layers[-1].code != "C":
            raise MissingFinalC(f"{self.spec} does not end in C")

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(layer.code for layer in self.layers)

    @property
    def spec(self) -> str:
        return ",".join(self.codes)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @cached_property
    def receptive_field(self) -> int:
        return receptive_field(self)

    @cached_property
    def total_stride(self) -> int:
        return int(np.prod([layer.stride for layer in self.layers]))


def split_codes(spec: str) -> list[str]:
    if spec is None or not spec.strip():
        raise EmptySpec("empty architecture spec")
    tokens = [t.strip().upper() for t in re.split(r"->|,|→", spec)]
    if any(t == "" for t in tokens):
        raise EmptySpec(f"empty layer code in {spec!r}")
    for t in tokens:
        if t not in LAYER_CODES:
            raise UnknownLayerCode(f"unknown layer code {t!r} in {spec!r}")
    return tokens


def parse_arch(spec: str, plan: ChannelPlan = DEFAULT_PLAN, name: str | None = None) -> DiscriminatorArch:
    codes = split_codes(spec)
    if codes[-1] != "C":
        raise MissingFinalC(f"{spec!r} must end in C")
    widths = plan.widths(codes)
    layers = tuple(
        ConvLayerSpec(code, *LAYER_CODES[code], padding_for(LAYER_CODES[code][0]), width)
        for code, width in zip(codes, widths)
    )
    return DiscriminatorArch(name or ",".join(codes), layers)


def as_arch(arch: DiscriminatorArch | str) -> DiscriminatorArch:
    return parse_arch(arch) if isinstance(arch, str) else arch


def receptive_field(arch: DiscriminatorArch | str) -> int:
    arch = as_arch(arch)
    rf, jump = 1, 1
    for layer in arch.layers:
        rf += (layer.kernel - 1) * jump
        jump *= layer.stride
    return rf


def output_grid_size(arch: DiscriminatorArch | str, input_size: int) -> int:
    arch = as_arch(arch)
    if input_size < 1:
        raise ValueError("input_size must be >= 1")
    size = input_size
    for i, layer in enumerate(arch.layers):
        size = (size + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if size < 1:
            raise NonPositiveIntermediateSize(
                f"{arch.spec} at input {input_size}: layer {i} ({layer.code}) gives size {size}"
            )
    return size


def enumerate_archs(max_conv_layers: int, rf_min: int, rf_max: int) -> list[DiscriminatorArch]:
    """All stacks of 1..max_conv_layers A/B/D layers plus a trailing C with
    receptive field in ``[rf_min, rf_max]``, sorted by (RF, depth, spec)."""
    if rf_min > rf_max:
        raise ValueError(f"rf_min {rf_min} > rf_max {rf_max}")
    if not 1 <= max_conv_layers <= 8:
        raise ValueError("max_conv_layers must be in [1, 8]")
    found = []
    for depth in range(1, max_conv_layers + 1):
        for combo in itertools.product(CONV_CODES, repeat=depth):
            arch = parse_arch(",".join(combo + ("C",)))
            if rf_min <= arch.receptive_field <= rf_max:
                found.append(arch)
    found.sort(key=lambda a: (a.receptive_field, a.depth, a.spec))
    return found


def parameter_count(arch: DiscriminatorArch | str, plan: ChannelPlan = DEFAULT_PLAN,
                    in_channels: int = 3) -> int:
    codes = as_arch(arch).codes
    total = 0
    c_in = in_channels
    for code, c_out in zip(codes, plan.widths(codes)):
        k = LAYER_CODES[code][0]
        total += k * k * c_in * c_out + c_out
        c_in = c_out
    return total


def empirical_receptive_field(patch_response: Callable, input_size: int, channels: int = 3,
                              seed: int = 0) -> int:
    """Side of the bounding box of input pixels that influence the central
    output unit of ``patch_response`` (measured by autograd)."""
    import torch

    gen = torch.Generator().manual_seed(seed)
    x = (0.5 + 0.5 * torch.rand(1, channels, input_size, input_size, generator=gen,
                                dtype=torch.float64))
    x.requires_grad_(True)
    out = patch_response(x)
    if out.dim() == 4:
        out = out[0].sum(0)
    elif out.dim() == 3:
        out = out.sum(0)
    h, w = out.shape[-2:]
    out[h // 2, w // 2].backward()
    sens = x.grad.abs().sum(dim=(0, 1))
    nz = torch.nonzero(sens > 0)
    if nz.numel() == 0:
        raise DegenerateResponse("central output unit has no input sensitivity")
    extent = nz.max(0).values - nz.min(0).values + 1
    return int(extent.max())


def describe(arch: DiscriminatorArch | str, input_size: int | None = None,
             plan: ChannelPlan = DEFAULT_PLAN, in_channels: int = 3) -> dict:
    arch = as_arch(arch)
    info = {
        "arch": arch.spec,
        "receptive_field": arch.receptive_field,
        "total_stride": arch.total_stride,
        "depth": arch.depth,
        "parameter_count": parameter_count(arch, plan, in_channels),
    }
    if input_size is not None:
        info["input_size"] = input_size
        info["output_grid"] = output_grid_size(arch, input_size)
    return info


def reference_archs(names: Iterable[str] | None = None) -> list[DiscriminatorArch]:
    names = list(REFERENCE_MODELS) if names is None else list(names)
    return [parse_arch(REFERENCE_MODELS[n][0], name=n) for n in names]
