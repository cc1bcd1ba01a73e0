"""Semantic content discrepancy between an image and its translation.

Edges are extracted from both images, thresholded into point sets, and
compared with the Modified Hausdorff Distance (Dubuisson & Jain, 1994).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

DEFAULT_EVAL_SIZE = 256
DEFAULT_THRESHOLD = 0.5
DEFAULT_SIGMA = 1.0


class BackendUnavailable(RuntimeError):
    pass


class BadImageShape(ValueError):
    pass


class EmptyPointSet(ValueError):
    def __init__(self, message: str, image_id: str | None = None):
        super().__init__(message if image_id is None else f"{image_id}: {message}")
        self.image_id = image_id


class EmptyRecordList(ValueError):
    pass


@dataclass(frozen=True)
class EdgeMap:
    strength: np.ndarray

    def __post_init__(self):
        s = self.strength
        if s.ndim != 2:
            raise BadImageShape(f"edge map must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)) or s.min(initial=0.0) < 0 or s.max(initial=0.0) > 1:
            raise ValueError("edge strengths must be finite and within [0, 1]")

    @property
    def height(self) -> int:
        return self.strength.shape[0]

    @property
    def width(self) -> int:
        return self.strength.shape[1]


@dataclass(frozen=True)
class PointSet:
    """Integer (row, col) pixel coordinates, shape ``(n, 2)``."""

    points: np.ndarray

    @classmethod
    def from_iterable(cls, coords: Iterable[Sequence[int]]) -> "PointSet":
        arr = np.asarray(list(coords), dtype=np.int64).reshape(-1, 2)
        return cls(np.unique(arr, axis=0))

    def __len__(self) -> int:
        return len(self.points)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in self.points}


@dataclass(frozen=True)
class SCDRecord:
    image_id: str
    scd: float
    model_name: str
    receptive_field: int

    def __post_init__(self):
        if not (math.isfinite(self.scd) and self.scd >= 0):
            raise ValueError(f"scd must be finite and >= 0, got {self.scd}")
        if self.receptive_field < 1:
            raise ValueError("receptive_field must be positive")


@dataclass(frozen=True)
class EdgeConfig:
    sigma: float = DEFAULT_SIGMA
    # callable(image HxWx3 in [0,1]) -> 2-D edge strength array, any resolution
    adapter: Callable[[np.ndarray], np.ndarray] | None = None


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise BadImageShape(f"expected HxWx3 image, got shape {image.shape}")
    return image


def to_gray(image: np.ndarray) -> np.ndarray:
    return image @ np.array([0.299, 0.587, 0.114])


def _normalize(mag: np.ndarray) -> np.ndarray:
    peak = mag.max()
    if peak <= 0:
        return np.zeros_like(mag)
    return np.clip(mag / peak, 0.0, 1.0)


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resample of a float HxWxC image to ``size`` x ``size``."""
    if image.shape[0] == size and image.shape[1] == size:
        return image
    channels = [
        np.asarray(Image.fromarray(image[..., c].astype(np.float32), mode="F")
                   .resize((size, size), Image.BILINEAR), dtype=np.float64)
        for c in range(image.shape[2])
    ]
    return np.stack(channels, axis=-1)


def extract_edges(image: np.ndarray, backend: str = "classical",
                  config: EdgeConfig | None = None) -> EdgeMap:
    config = config or EdgeConfig()
    image = _check_image(image)
    if backend == "classical":
        gray = ndimage.gaussian_filter(to_gray(image), config.sigma, mode="nearest")
        gy, gx = np.gradient(gray)
        return EdgeMap(_normalize(np.hypot(gx, gy)))
    if backend == "neural":
        if config.adapter is None:
            raise BackendUnavailable("neural edge backend requested but no adapter configured")
        raw = np.asarray(config.adapter(image), dtype=np.float64)
        if raw.ndim == 3:
            raw = raw[..., 0] if raw.shape[-1] == 1 else raw.squeeze(0)
        h, w = image.shape[:2]
        if raw.shape != (h, w):
            raw = np.asarray(Image.fromarray(raw.astype(np.float32), mode="F")
                             .resize((w, h), Image.BILINEAR), dtype=np.float64)
        raw = raw - raw.min()
        return EdgeMap(_normalize(raw))
    raise ValueError(f"unknown edge backend {backend!r}")


def edge_points(edge_map: EdgeMap, threshold: float = DEFAULT_THRESHOLD) -> PointSet:
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return PointSet(np.argwhere(edge_map.strength >= threshold).astype(np.int64))


def _coords(points: PointSet | np.ndarray) -> np.ndarray:
    arr = points.points if isinstance(points, PointSet) else np.asarray(points)
    return arr.reshape(-1, 2).astype(np.float64)


def directed_mhd(a: PointSet | np.ndarray, b: PointSet | np.ndarray) -> float:
    """Mean over ``a`` of the Euclidean distance to the nearest point of ``b``."""
    a, b = _coords(a), _coords(b)
    if len(a) == 0 or len(b) == 0:
        raise EmptyPointSet("point set is empty")
    dist, _ = cKDTree(b).query(a, k=1)
    return float(np.mean(dist))


def mhd(a: PointSet | np.ndarray, b: PointSet | np.ndarray) -> float:
    return max(directed_mhd(a, b), directed_mhd(b, a))


def scd(input_image: np.ndarray, translated_image: np.ndarray, backend: str = "classical",
        threshold: float = DEFAULT_THRESHOLD, eval_size: int = DEFAULT_EVAL_SIZE,
        config: EdgeConfig | None = None, image_id: str | None = None) -> float:
    """SCD of a translation; images are HxWx3 floats in [0, 1]."""
    sets = []
    for image in (input_image, translated_image):
        image = resize_image(_check_image(image), eval_size)
        sets.append(edge_points(extract_edges(image, backend, config), threshold))
    for which, pts in zip(("input", "translated"), sets):
        if len(pts) == 0:
            raise EmptyPointSet(f"{which} image has no edge points", image_id)
    return mhd(*sets)


@dataclass(frozen=True)
class Aggregate:
    per_model: dict[str, float]
    per_rf: dict[int, float]
    model_rf: dict[str, int]


def scd_aggregate(records: Sequence[SCDRecord]) -> Aggregate:
    """Per-model mean SCD, then the mean of model means sharing a receptive field."""
    if not records:
        raise EmptyRecordList("no SCD records to aggregate")
    by_model: dict[str, list[float]] = defaultdict(list)
    model_rf: dict[str, int] = {}
    for rec in records:
        if model_rf.setdefault(rec.model_name, rec.receptive_field) != rec.receptive_field:
            raise ValueError(f"model {rec.model_name!r} has records with different receptive fields")
        by_model[rec.model_name].append(rec.scd)
    per_model = {m: float(np.mean(v)) for m, v in by_model.items()}
    by_rf: dict[int, list[float]] = defaultdict(list)
    for m, mean in per_model.items():
        by_rf[model_rf[m]].append(mean)
    per_rf = {rf: float(np.mean(v)) for rf, v in sorted(by_rf.items(), reverse=True)}
    return Aggregate(per_model, per_rf, model_rf)
