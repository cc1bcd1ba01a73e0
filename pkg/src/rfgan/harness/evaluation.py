"""Translate held-out images with a trained model and score them with SCD."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..adapters import load_adapter
from ..data import ArrayDataset, generate_domain, load_image_folder, to_uint8
from ..nets import TranslationModel, load_checkpoint, parse_direction
from ..scd import EdgeConfig, EmptyPointSet, SCDRecord, scd
from .config import EvalConfig

log = logging.getLogger(__name__)


@dataclass
class EvalResult:
    records: list[SCDRecord]
    excluded: list[str] = field(default_factory=list)
    n_images: int = 0
    samples: list[tuple[str, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def mean_scd(self) -> float:
        return float(np.mean([r.scd for r in self.records])) if self.records else float("nan")


def edge_config(cfg: EvalConfig) -> EdgeConfig:
    adapter = load_adapter(cfg.adapter) if cfg.adapter else None
    return EdgeConfig(sigma=cfg.sigma, adapter=adapter)


def eval_dataset(cfg: EvalConfig, image_size: int):
    """Held-out images of the direction's source domain."""
    src, _ = parse_direction(cfg.direction)
    if cfg.folder:
        return load_image_folder(cfg.folder, image_size, mode="eval")
    _, images = generate_domain(src, cfg.count, cfg.seed, image_size)
    return ArrayDataset(images)


def as_unit_image(img_uint8: np.ndarray) -> np.ndarray:
    return img_uint8.astype(np.float64) / 255.0


def evaluate(checkpoint: TranslationModel | str | Path, dataset, cfg: EvalConfig,
             model_name: str, save_dir: str | Path | None = None) -> EvalResult:
    """SCD for every image of ``dataset``, translated with zero latent noise.

    Images whose edge maps are empty are excluded and listed in
    ``EvalResult.excluded``. Translations are stored as 8-bit images and
    scored in that form.
    """
    model = load_checkpoint(checkpoint)[0] if isinstance(checkpoint, (str, Path)) else checkpoint
    model.eval()
    edges = edge_config(cfg)
    rf = model.arch.receptive_field
    result = EvalResult(records=[], n_images=len(dataset))
    if save_dir is not None:
        save_dir = Path(save_dir)
        save_dir.mkdir(parents=True, exist_ok=True)
    names = getattr(dataset, "names", [f"{i:05d}" for i in range(len(dataset))])
    with torch.no_grad():
        for i in range(len(dataset)):
            image_id = names[i]
            x = dataset.get(i)
            y = model.translate(x.unsqueeze(0), cfg.direction)
            src, out = to_uint8(x), to_uint8(y)
            if save_dir is not None:
                Image.fromarray(out).save(save_dir / f"{image_id}.png")
            if i < cfg.n_samples:
                result.samples.append((image_id, src, out))
            try:
                value = scd(as_unit_image(src), as_unit_image(out), cfg.backend, cfg.threshold,
                            cfg.eval_size, edges, image_id=image_id)
            except EmptyPointSet as exc:
                log.warning("excluding %s: %s", image_id, exc)
                result.excluded.append(image_id)
                continue
            result.records.append(SCDRecord(image_id, value, model_name, rf))
    return result
