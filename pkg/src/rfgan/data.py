"""Procedural two-domain trailer scenes and image-folder ingestion.

The simulated domain only ever shows A-frame (triangular) couplers in a
flat style; the real domain only shows straight (bar) couplers in a
textured style. Everything else is drawn from shared distributions, so
the two domains are mismatched in content as well as appearance.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image, ImageDraw

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}
DOMAIN_CODES = {"sim": 1, "real": 2}

# coupler colours never occur anywhere else in a scene
COUPLER_COLOR = {"flat": (250, 210, 0), "textured": (10, 10, 10)}


class OutOfBoundsGeometry(ValueError):
    pass


class EmptyFolder(FileNotFoundError):
    pass


class DatasetUnavailable(FileNotFoundError):
    pass


@dataclass(frozen=True)
class MismatchConfig:
    sim_coupler: str = "a_frame"
    real_coupler: str = "straight"
    sim_style: str = "flat"
    real_style: str = "textured"

    def coupler(self, domain: str) -> str:
        return self.sim_coupler if domain == "sim" else self.real_coupler

    def style(self, domain: str) -> str:
        return self.sim_style if domain == "sim" else self.real_style


@dataclass(frozen=True)
class ToySceneParams:
    coupler_type: str                       # "a_frame" or "straight"
    body_rect: tuple[int, int, int, int]    # x, y, w, h
    coupler_length: int
    coupler_width: int
    orientation: float                      # degrees, about the hitch point
    style: str                              # "flat" or "textured"
    palette_seed: int
    horizon: int
    n_bars: int = 3
    sun_disc: tuple[int, int, int] | None = None  # x, y, radius
    image_size: int = 64

    def __post_init__(self):
        if self.coupler_type not in ("a_frame", "straight"):
            raise ValueError(f"unknown coupler type {self.coupler_type!r}")
        if self.style not in ("flat", "textured"):
            raise ValueError(f"unknown style {self.style!r}")

    @property
    def hitch_point(self) -> tuple[float, float]:
        x, y, w, h = self.body_rect
        return x + w / 2.0, float(y + h)

    @property
    def coupler_polygon(self) -> list[tuple[int, int]]:
        """Outer vertices of the coupler, (x, y) pixel coordinates."""
        hx, hy = self.hitch_point
        half = self.coupler_width / 2.0
        if self.coupler_type == "a_frame":
            local = [(-half, 0.0), (half, 0.0), (0.0, float(self.coupler_length))]
        else:
            local = [(-half, 0.0), (half, 0.0), (half, float(self.coupler_length)),
                     (-half, float(self.coupler_length))]
        return [(round(hx + px), round(hy + py)) for px, py in _rotate(local, self.orientation)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToySceneParams":
        d = dict(d)
        d["body_rect"] = tuple(d["body_rect"])
        if d.get("sun_disc") is not None:
            d["sun_disc"] = tuple(d["sun_disc"])
        return cls(**d)


def _rotate(points, degrees):
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return [(c * x - s * y, s * x + c * y) for x, y in points]


def _palette(style: str, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 99])
    j = lambda base, spread=12: np.clip(np.asarray(base) + rng.integers(-spread, spread + 1, 3), 0, 255)
    if style == "flat":
        return {"sky": j((110, 170, 235)), "ground": j((120, 120, 130)),
                "body": j((200, 60, 50)), "bars": j((120, 30, 25)), "sun": j((255, 150, 40), 5)}
    return {"sky": j((185, 195, 200)), "ground": j((95, 85, 75)),
            "body": j((215, 215, 220)), "bars": j((140, 140, 150)), "sun": j((250, 240, 200), 5)}


def _polygon_mask(size: int, polygon: Sequence[tuple[float, float]]) -> np.ndarray:
    mask = Image.new("L", (size, size), 0)
    ImageDraw.Draw(mask).polygon([tuple(p) for p in polygon], fill=1)
    return np.asarray(mask, dtype=bool)


def coupler_mask(params: ToySceneParams) -> np.ndarray:
    size = params.image_size
    poly = params.coupler_polygon
    mask = _polygon_mask(size, poly)
    if params.coupler_type == "a_frame":
        # hollow triangle: cut out an inner triangle shrunk about the centroid
        cx = sum(p[0] for p in poly) / 3.0
        cy = sum(p[1] for p in poly) / 3.0
        shrink = 0.45
        inner = [(cx + shrink * (x - cx), cy + shrink * (y - cy)) for x, y in poly]
        mask &= ~_polygon_mask(size, inner)
    return mask


def render_toy_scene(params: ToySceneParams) -> tuple[np.ndarray, dict]:
    """Rasterise a scene (no anti-aliasing) -> (HxWx3 uint8 image, annotation)."""
    size = params.image_size
    for x, y in params.coupler_polygon:
        if not (0 <= x < size and 0 <= y < size):
            raise OutOfBoundsGeometry(f"coupler vertex {(x, y)} outside {size}x{size} image")
    bx, by, bw, bh = params.body_rect
    if bx < 0 or by < 0 or bx + bw > size or by + bh > size:
        raise OutOfBoundsGeometry(f"body {params.body_rect} outside {size}x{size} image")

    pal = _palette(params.style, params.palette_seed)
    img = np.empty((size, size, 3), dtype=np.float64)
    img[: params.horizon] = pal["sky"]
    img[params.horizon:] = pal["ground"]
    if params.style == "textured":
        rng = np.random.default_rng([params.palette_seed, 7])
        grain = rng.normal(0.0, 5.0, (size, size, 1))
        stripes = 4.0 * np.sin(np.arange(size) * 1.3)[:, None, None]
        img += np.clip(grain, -12, 12) + stripes * (np.arange(size)[:, None, None] >= params.horizon)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    canvas = Image.fromarray(img)
    draw = ImageDraw.Draw(canvas)
    if params.sun_disc is not None:
        sx, sy, r = params.sun_disc
        draw.ellipse([sx - r, sy - r, sx + r, sy + r], fill=tuple(int(v) for v in pal["sun"]))
    draw.rectangle([bx, by, bx + bw - 1, by + bh - 1], fill=tuple(int(v) for v in pal["body"]))
    bar_w = max(1, size // 64)
    for i in range(1, params.n_bars + 1):
        x = bx + round(i * bw / (params.n_bars + 1))
        draw.rectangle([x, by, x + bar_w - 1, by + bh - 1], fill=tuple(int(v) for v in pal["bars"]))
    img = np.array(canvas)

    mask = coupler_mask(params)
    img[mask] = COUPLER_COLOR[params.style]
    rows, cols = np.nonzero(mask)
    annotation = {
        "coupler_type": params.coupler_type,
        "coupler_polygon": [list(p) for p in params.coupler_polygon],
        "n_outer_vertices": len(params.coupler_polygon),
        "coupler_bbox": [int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())],
        "coupler_pixels": int(mask.sum()),
        "coupler_color": list(COUPLER_COLOR[params.style]),
        "body_box": [bx, by, bx + bw - 1, by + bh - 1],
        "sun_disc": list(params.sun_disc) if params.sun_disc is not None else None,
        "params": params.to_dict(),
    }
    return img, annotation


MIN_SCENE_SIZE = 24


def sample_scene_params(domain: str, seed: int, index: int, image_size: int = 64,
                        mismatch: MismatchConfig = MismatchConfig()) -> ToySceneParams:
    """Scene parameters keyed by (seed, domain, index); retries until in bounds."""
    if image_size < MIN_SCENE_SIZE:
        raise OutOfBoundsGeometry(f"scenes need at least {MIN_SCENE_SIZE} px, got {image_size}")
    rng = np.random.default_rng([seed, DOMAIN_CODES[domain], index])
    u = image_size / 64.0
    while True:
        bw = int(rng.integers(round(18 * u), round(26 * u) + 1))
        bh = int(rng.integers(round(9 * u), round(13 * u) + 1))
        bx = int(rng.integers(round(14 * u), image_size - bw - round(14 * u) + 1))
        by = int(rng.integers(round(10 * u), round(20 * u) + 1))
        coupler = mismatch.coupler(domain)
        length = int(rng.integers(round(12 * u), round(18 * u) + 1))
        width = int(rng.integers(round(11 * u), round(16 * u) + 1)) if coupler == "a_frame" \
            else max(2, round(3 * u))
        sun = None
        if rng.random() < 0.5:
            r = int(rng.integers(round(3 * u), round(5 * u) + 1))
            sun = (int(rng.integers(r + 1, image_size - r - 1)), int(rng.integers(r + 1, round(10 * u))), r)
        params = ToySceneParams(
            coupler_type=coupler,
            body_rect=(bx, by, bw, bh),
            coupler_length=length,
            coupler_width=width,
            orientation=float(np.round(rng.uniform(-25.0, 25.0), 2)),
            style=mismatch.style(domain),
            palette_seed=int(rng.integers(0, 2**31 - 1)),
            horizon=int(rng.integers(round(18 * u), round(26 * u) + 1)),
            n_bars=int(rng.integers(2, 5)),
            sun_disc=sun,
            image_size=image_size,
        )
        if all(0 <= x < image_size and 0 <= y < image_size for x, y in params.coupler_polygon):
            return params


@dataclass
class DatasetManifest:
    domain: str
    count: int
    seed: int
    image_size: int
    annotations: list[dict] = field(default_factory=list)
    mismatch: dict = field(default_factory=dict)
    image_sha256: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def generate_domain(domain: str, count: int, seed: int, image_size: int = 64,
                    mismatch_config: MismatchConfig = MismatchConfig()) -> tuple[DatasetManifest, np.ndarray]:
    if domain not in DOMAIN_CODES:
        raise ValueError(f"unknown domain {domain!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    images = np.empty((count, image_size, image_size, 3), dtype=np.uint8)
    annotations = []
    for i in range(count):
        images[i], ann = render_toy_scene(sample_scene_params(domain, seed, i, image_size, mismatch_config))
        annotations.append(ann)
    manifest = DatasetManifest(domain, count, seed, image_size, annotations, asdict(mismatch_config),
                               hashlib.sha256(images.tobytes()).hexdigest())
    return manifest, images


def write_domain(out_dir: str | Path, manifest: DatasetManifest, images: np.ndarray) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        Image.fromarray(img).save(out / f"{i:05d}.png")
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True))
    return out


# ------------------------------------------------------------ preprocessing

def to_unit_range(img: np.ndarray) -> torch.Tensor:
    """HxWx3 uint8 -> 3xHxW float32 in [-1, 1]."""
    t = torch.from_numpy(np.array(img)).permute(2, 0, 1).float()
    return t / 127.5 - 1.0


def to_uint8(t: torch.Tensor) -> np.ndarray:
    """3xHxW (or 1x3xHxW) tensor in [-1, 1] -> HxWx3 uint8."""
    if t.dim() == 4:
        t = t[0]
    arr = ((t.detach().float().clamp(-1, 1) + 1.0) * 127.5).round()
    return arr.permute(1, 2, 0).to(torch.uint8).numpy()


def resize_shorter_side(img: Image.Image, size: int) -> Image.Image:
    w, h = img.size
    if min(w, h) == size:
        return img
    scale = size / min(w, h)
    new = (max(size, round(w * scale)), max(size, round(h * scale)))
    return img.resize(new, Image.BICUBIC)


def crop_box(w: int, h: int, size: int, rng: np.random.Generator | None = None) -> tuple[int, int, int, int]:
    if rng is None:
        left, top = (w - size) // 2, (h - size) // 2
    else:
        left = int(rng.integers(0, w - size + 1))
        top = int(rng.integers(0, h - size + 1))
    return left, top, left + size, top + size


class ArrayDataset:
    """Images held in memory as an (N, H, W, 3) uint8 array."""

    def __init__(self, images: np.ndarray, names: Sequence[str] | None = None):
        self.images = images
        self.names = list(names) if names is not None else [f"{i:05d}" for i in range(len(images))]

    def __len__(self) -> int:
        return len(self.images)

    def get(self, index: int, epoch: int = 0) -> torch.Tensor:
        return to_unit_range(self.images[index])

    def __getitem__(self, index: int) -> torch.Tensor:
        return self.get(index)


class FolderDataset:
    """Decoded images from a directory, resized on the shorter side and cropped.

    ``mode="eval"`` center-crops; ``mode="train"`` takes a random crop keyed
    by (seed, index, epoch).
    """

    def __init__(self, path: str | Path, image_size: int, seed: int = 0, mode: str = "eval"):
        path = Path(path)
        if not path.is_dir():
            raise DatasetUnavailable(f"{path} is not a directory")
        if mode not in ("eval", "train"):
            raise ValueError(f"unknown mode {mode!r}")
        self.image_size, self.seed, self.mode = image_size, seed, mode
        self.paths: list[Path] = []
        self.skipped: list[str] = []
        for p in sorted(path.iterdir()):
            if p.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(p) as im:
                    im.verify()
                self.paths.append(p)
            except Exception:
                log.warning("skipping undecodable image %s", p)
                self.skipped.append(p.name)
        if not self.paths:
            raise EmptyFolder(f"no decodable images in {path}")

    @property
    def names(self) -> list[str]:
        return [p.stem for p in self.paths]

    def __len__(self) -> int:
        return len(self.paths)

    def load_array(self, index: int, epoch: int = 0) -> np.ndarray:
        with Image.open(self.paths[index]) as im:
            im = resize_shorter_side(im.convert("RGB"), self.image_size)
            rng = None
            if self.mode == "train":
                rng = np.random.default_rng([self.seed, index, epoch])
            im = im.crop(crop_box(*im.size, self.image_size, rng))
            return np.asarray(im, dtype=np.uint8)

    def get(self, index: int, epoch: int = 0) -> torch.Tensor:
        return to_unit_range(self.load_array(index, epoch))

    def __getitem__(self, index: int) -> torch.Tensor:
        return self.get(index)


def load_image_folder(path: str | Path, image_size: int, seed: int = 0, mode: str = "eval") -> FolderDataset:
    return FolderDataset(path, image_size, seed, mode)


def epoch_order(n: int, seed: int, epoch: int, domain: str) -> np.ndarray:
    return np.random.default_rng([seed, epoch, DOMAIN_CODES[domain]]).permutation(n)


def make_batch(sim_stream, real_stream, seed: int, step: int) -> dict[str, torch.Tensor]:
    """One image per domain; each domain is reshuffled independently every epoch."""
    batch = {}
    for domain, stream in (("sim", sim_stream), ("real", real_stream)):
        n = len(stream)
        if n == 0:
            raise DatasetUnavailable(f"{domain} stream is empty")
        epoch, pos = divmod(step, n)
        index = int(epoch_order(n, seed, epoch, domain)[pos])
        batch[domain] = stream.get(index, epoch).unsqueeze(0)
    return batch
