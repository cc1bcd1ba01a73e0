"""Coupled VAE-GAN translation model with receptive-field-configurable
patch discriminators.

Each domain has its own encoder front, generator back and discriminator.
The last encoder block and the first generator block are single modules
referenced by both domains, which ties the two latent spaces together.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import torch
import torch.nn as nn
import torch.nn.functional as F

from .archspec import DEFAULT_PLAN, ChannelPlan, DiscriminatorArch, NonPositiveIntermediateSize, \
    as_arch, output_grid_size, parse_arch
from .scd import BadImageShape

DOMAINS = ("sim", "real")
CHECKPOINT_FORMAT = "rfgan-checkpoint"
CHECKPOINT_VERSION = 1


class IncompatibleGeometry(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


def _other(domain: str) -> str:
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    return "real" if domain == "sim" else "sim"


def parse_direction(direction: str) -> tuple[str, str]:
    """``"sim2real"``, ``"sim->real"`` or ``"sim→real"`` -> ("sim", "real")."""
    norm = direction.replace("->", "2").replace("→", "2").replace("_to_", "2")
    try:
        src, dst = norm.split("2")
    except ValueError:
        raise ValueError(f"bad direction {direction!r}") from None
    if src not in DOMAINS or dst != _other(src):
        raise ValueError(f"bad direction {direction!r}")
    return src, dst


def init_weights(module: nn.Module, generator: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class Encoder(nn.Module):
    """Domain-specific downsampling front followed by the shared block."""

    def __init__(self, front: nn.Module, shared: nn.Module):
        super().__init__()
        self.front = front
        self.shared = shared

    def forward(self, x):
        return self.shared(self.front(x))


class Generator(nn.Module):
    """Shared block followed by the domain-specific upsampling back."""

    def __init__(self, shared: nn.Module, back: nn.Module):
        super().__init__()
        self.shared = shared
        self.back = back

    def forward(self, z):
        return self.back(self.shared(z))


def _encoder_front(latent_dims: int, n_down: int, n_res: int) -> nn.Sequential:
    ch = latent_dims >> n_down
    layers = [nn.Conv2d(3, ch, 7, 1, 3, padding_mode="reflect"), nn.InstanceNorm2d(ch), nn.ReLU()]
    for _ in range(n_down):
        layers += [nn.Conv2d(ch, ch * 2, 4, 2, 1, padding_mode="reflect"),
                   nn.InstanceNorm2d(ch * 2), nn.ReLU()]
        ch *= 2
    layers += [ResBlock(ch) for _ in range(n_res)]
    return nn.Sequential(*layers)


def _generator_back(latent_dims: int, n_down: int, n_res: int) -> nn.Sequential:
    ch = latent_dims
    layers: list[nn.Module] = [ResBlock(ch) for _ in range(n_res)]
    for _ in range(n_down):
        layers += [nn.ConvTranspose2d(ch, ch // 2, 4, 2, 1), nn.InstanceNorm2d(ch // 2), nn.ReLU()]
        ch //= 2
    layers += [nn.Conv2d(ch, 3, 7, 1, 3, padding_mode="reflect"), nn.Tanh()]
    return nn.Sequential(*layers)


class PatchDiscriminator(nn.Module):
    """Fully convolutional discriminator emitting one logit per patch."""

    def __init__(self, arch: DiscriminatorArch, in_channels: int = 3, slope: float = 0.2):
        super().__init__()
        self.arch = arch
        layers: list[nn.Module] = []
        c_in = in_channels
        for i, spec in enumerate(arch.layers):
            layers.append(nn.Conv2d(c_in, spec.out_channels, spec.kernel, spec.stride, spec.padding))
            if i < len(arch.layers) - 1:
                layers.append(nn.LeakyReLU(slope))
            c_in = spec.out_channels
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


@dataclass
class PatchMap:
    grid: torch.Tensor      # (B, 1, S, S) logits
    scalar: torch.Tensor    # mean of sigmoid(grid)


@dataclass
class LatentCode:
    mean: torch.Tensor


def sample_latent(code: LatentCode, noise: torch.Tensor | float | None = None) -> torch.Tensor:
    if noise is None:
        return code.mean
    return code.mean + noise


def _draw_noise(like: torch.Tensor, noise: torch.Generator | None) -> torch.Tensor | None:
    if noise is None:
        return None
    return torch.randn(like.shape, generator=noise, dtype=like.dtype)


class TranslationModel(nn.Module):
    def __init__(self, arch: DiscriminatorArch, image_size: int, channel_plan: ChannelPlan,
                 latent_dims: int, n_downsample: int, n_res: int):
        super().__init__()
        self.arch = arch
        self.image_size = image_size
        self.build_config = {
            "arch": arch.spec,
            "image_size": image_size,
            "channel_plan": asdict(channel_plan),
            "latent_dims": latent_dims,
            "n_downsample": n_downsample,
            "n_res": n_res,
        }
        self.shared_encoder_block = ResBlock(latent_dims)
        self.shared_generator_block = ResBlock(latent_dims)
        self.encoder_sim = Encoder(_encoder_front(latent_dims, n_downsample, n_res), self.shared_encoder_block)
        self.encoder_real = Encoder(_encoder_front(latent_dims, n_downsample, n_res), self.shared_encoder_block)
        self.generator_sim = Generator(self.shared_generator_block, _generator_back(latent_dims, n_downsample, n_res))
        self.generator_real = Generator(self.shared_generator_block, _generator_back(latent_dims, n_downsample, n_res))
        self.discriminator_sim = PatchDiscriminator(arch)
        self.discriminator_real = PatchDiscriminator(arch)

    def encoder(self, domain: str) -> nn.Module:
        _other(domain)
        return self.encoder_sim if domain == "sim" else self.encoder_real

    def generator(self, domain: str) -> nn.Module:
        _other(domain)
        return self.generator_sim if domain == "sim" else self.generator_real

    def discriminator(self, domain: str) -> PatchDiscriminator:
        _other(domain)
        return self.discriminator_sim if domain == "sim" else self.discriminator_real

    def generator_parameters(self) -> list[nn.Parameter]:
        seen: dict[int, nn.Parameter] = {}
        for mod in (self.encoder_sim, self.encoder_real, self.generator_sim, self.generator_real):
            for p in mod.parameters():
                seen.setdefault(id(p), p)
        return list(seen.values())

    def discriminator_parameters(self) -> list[nn.Parameter]:
        return list(self.discriminator_sim.parameters()) + list(self.discriminator_real.parameters())

    def check_image(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() == 3:
            image = image.unsqueeze(0)
        if image.dim() != 4 or image.shape[1] != 3 or image.shape[2:] != (self.image_size, self.image_size):
            raise BadImageShape(
                f"expected (B, 3, {self.image_size}, {self.image_size}), got {tuple(image.shape)}")
        return image

    def encode(self, image: torch.Tensor, domain: str) -> LatentCode:
        return LatentCode(self.encoder(domain)(self.check_image(image)))

    def translate(self, image: torch.Tensor, direction: str = "sim2real",
                  noise: torch.Generator | None = None) -> torch.Tensor:
        src, dst = parse_direction(direction)
        code = self.encode(image, src)
        return self.generator(dst)(sample_latent(code, _draw_noise(code.mean, noise)))

    def reconstruct(self, image: torch.Tensor, domain: str,
                    noise: torch.Generator | None = None) -> torch.Tensor:
        code = self.encode(image, domain)
        return self.generator(domain)(sample_latent(code, _draw_noise(code.mean, noise)))

    def cycle(self, image: torch.Tensor, direction: str = "sim2real",
              noise: torch.Generator | None = None) -> torch.Tensor:
        src, dst = parse_direction(direction)
        there = self.translate(image, f"{src}2{dst}", noise)
        return self.translate(there, f"{dst}2{src}", noise)


def default_downsampling(image_size: int) -> int:
    return 3 if image_size >= 128 else 2


def build_model(arch: DiscriminatorArch | str, image_size: int, channel_plan: ChannelPlan = DEFAULT_PLAN,
                latent_dims: int = 256, n_downsample: int | None = None, n_res: int = 1,
                seed: int = 0) -> TranslationModel:
    base = as_arch(arch)
    arch = parse_arch(base.spec, channel_plan, name=base.name)
    n_down = default_downsampling(image_size) if n_downsample is None else n_downsample
    if image_size % (2 ** n_down):
        raise IncompatibleGeometry(f"image size {image_size} not divisible by encoder stride {2 ** n_down}")
    if latent_dims % (2 ** n_down) or latent_dims >> n_down < 1:
        raise IncompatibleGeometry(f"latent_dims {latent_dims} not divisible by {2 ** n_down}")
    try:
        output_grid_size(arch, image_size)
    except NonPositiveIntermediateSize as exc:
        raise IncompatibleGeometry(str(exc)) from exc
    model = TranslationModel(arch, image_size, channel_plan, latent_dims, n_down, n_res)
    init_weights(model, torch.Generator().manual_seed(seed))
    return model


def discriminate(disc: PatchDiscriminator, image: torch.Tensor) -> PatchMap:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[1] != 3:
        raise BadImageShape(f"expected (B, 3, H, W), got {tuple(image.shape)}")
    grid = disc(image)
    return PatchMap(grid, torch.sigmoid(grid).mean())


# ---------------------------------------------------------------- losses

@dataclass(frozen=True)
class LossWeights:
    gan: float = 1.0
    recon: float = 10.0
    kl: float = 0.01
    cycle: float = 10.0
    perceptual: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in asdict(self).values()):
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    recon_sim: torch.Tensor | None = None
    recon_real: torch.Tensor | None = None
    kl_sim: torch.Tensor | None = None
    kl_real: torch.Tensor | None = None
    gan_g_sim: torch.Tensor | None = None
    gan_g_real: torch.Tensor | None = None
    gan_d_sim: torch.Tensor | None = None
    gan_d_real: torch.Tensor | None = None
    cycle_sim: torch.Tensor | None = None
    cycle_real: torch.Tensor | None = None
    perceptual: torch.Tensor | None = None
    weights: LossWeights = field(default_factory=LossWeights)

    TERMS = ("recon_sim", "recon_real", "kl_sim", "kl_real", "gan_g_sim", "gan_g_real",
             "gan_d_sim", "gan_d_real", "cycle_sim", "cycle_real", "perceptual")

    def terms(self) -> dict[str, torch.Tensor]:
        return {k: getattr(self, k) for k in self.TERMS if getattr(self, k) is not None}

    def as_dict(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.terms().items()}

    def weighted(self, name: str) -> torch.Tensor:
        kind = name.split("_")[0] if name != "perceptual" else "perceptual"
        return getattr(self.weights, kind) * getattr(self, name)

    def generator_total(self) -> torch.Tensor:
        return sum(self.weighted(k) for k in self.terms() if not k.startswith("gan_d"))

    def discriminator_total(self) -> torch.Tensor:
        return sum(self.weighted(k) for k in self.terms() if k.startswith("gan_d"))

    def check_finite(self) -> None:
        bad = [k for k, v in self.as_dict().items() if not math.isfinite(v)]
        if bad:
            raise NonFiniteLoss(f"non-finite loss terms: {', '.join(bad)}")

    def merged(self, other: "LossBreakdown") -> "LossBreakdown":
        kw = {k: getattr(other, k) if getattr(other, k) is not None else getattr(self, k)
              for k in self.TERMS}
        return LossBreakdown(**kw, weights=self.weights)


def _bce(logits: torch.Tensor, target: float) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, torch.full_like(logits, target))


def feature_distance(fa: torch.Tensor, fb: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(F.instance_norm(fa), F.instance_norm(fb))


def discriminator_losses(model: TranslationModel, x_sim: torch.Tensor, x_real: torch.Tensor,
                         fake_sim: torch.Tensor, fake_real: torch.Tensor) -> dict[str, torch.Tensor]:
    d_sim, d_real = model.discriminator_sim, model.discriminator_real
    return {
        "gan_d_sim": _bce(d_sim(x_sim), 1.0) + _bce(d_sim(fake_sim), 0.0),
        "gan_d_real": _bce(d_real(x_real), 1.0) + _bce(d_real(fake_real), 0.0),
    }


def compute_losses(model: TranslationModel, batch: dict[str, torch.Tensor],
                   weights: LossWeights = LossWeights(), noise: torch.Generator | None = None,
                   perceptual_enabled: bool = False,
                   feature_extractor: Callable[[torch.Tensor], torch.Tensor] | None = None,
                   terms: str = "all") -> LossBreakdown:
    """All loss terms for one sim image and one real image.

    ``terms`` selects ``"all"``, ``"generator"`` or ``"discriminator"``;
    discriminator terms always see detached translations.
    """
    x_a = model.check_image(batch["sim"])
    x_b = model.check_image(batch["real"])
    out = LossBreakdown(weights=weights)

    code_a = model.encode(x_a, "sim")
    code_b = model.encode(x_b, "real")
    z_a = sample_latent(code_a, _draw_noise(code_a.mean, noise))
    z_b = sample_latent(code_b, _draw_noise(code_b.mean, noise))
    x_ab = model.generator_real(z_a)
    x_ba = model.generator_sim(z_b)

    if terms in ("all", "discriminator"):
        for k, v in discriminator_losses(model, x_a, x_b, x_ba.detach(), x_ab.detach()).items():
            setattr(out, k, v)
    if terms == "discriminator":
        return out
    if terms not in ("all", "generator"):
        raise ValueError(f"unknown terms selection {terms!r}")

    x_aa = model.generator_sim(z_a)
    x_bb = model.generator_real(z_b)
    code_ab = model.encode(x_ab, "real")
    code_ba = model.encode(x_ba, "sim")
    x_aba = model.generator_sim(sample_latent(code_ab, _draw_noise(code_ab.mean, noise)))
    x_bab = model.generator_real(sample_latent(code_ba, _draw_noise(code_ba.mean, noise)))

    out.recon_sim = F.l1_loss(x_aa, x_a)
    out.recon_real = F.l1_loss(x_bb, x_b)
    out.kl_sim = 0.5 * code_a.mean.pow(2).mean()
    out.kl_real = 0.5 * code_b.mean.pow(2).mean()
    out.gan_g_sim = _bce(model.discriminator_sim(x_ba), 1.0)
    out.gan_g_real = _bce(model.discriminator_real(x_ab), 1.0)
    out.cycle_sim = F.l1_loss(x_aba, x_a)
    out.cycle_real = F.l1_loss(x_bab, x_b)
    if perceptual_enabled:
        if feature_extractor is None:
            raise ValueError("perceptual loss enabled without a feature extractor")
        out.perceptual = (feature_distance(feature_extractor(x_a), feature_extractor(x_ab))
                          + feature_distance(feature_extractor(x_b), feature_extractor(x_ba)))
    return out


# ------------------------------------------------------------ checkpoints

def save_checkpoint(model: TranslationModel, path: str | Path, **extra) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "build": model.build_config,
        "state_dict": model.state_dict(),
        **extra,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[TranslationModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an rfgan checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    build = dict(payload["build"])
    plan = ChannelPlan(**build.pop("channel_plan"))
    model = build_model(build.pop("arch"), build.pop("image_size"), plan, **build)
    model.load_state_dict(payload["state_dict"])
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return model, meta


def loss_field_names() -> list[str]:
    return [f.name for f in fields(LossBreakdown) if f.name != "weights"]
