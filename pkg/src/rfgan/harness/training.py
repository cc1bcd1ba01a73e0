"""Alternating discriminator / generator training for one configuration."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..adapters import load_adapter
from ..data import ArrayDataset, DatasetUnavailable, generate_domain, load_image_folder, make_batch
from ..nets import (LossBreakdown, NonFiniteLoss, TranslationModel, build_model, compute_losses,
                    discriminator_losses, loss_field_names, save_checkpoint)
from .config import TrainConfig

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.pt"
LOSS_LOG_NAME = "losses.csv"
MANIFEST_NAME = "manifest.json"

OPEN_DECISIONS = [
    "generator/encoder internals (instance norm, residual shared blocks)",
    "adversarial loss form (per-patch binary cross-entropy)",
    "discriminator widths and activation (LeakyReLU 0.2, no normalization)",
    "optimizer decay rates read as Adam beta1/beta2",
]


def set_deterministic(seed: int, threads: int = 1) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


def training_streams(config: TrainConfig):
    data = config.data
    if data.kind == "procedural":
        _, sim = generate_domain("sim", data.count, data.seed, config.image_size)
        _, real = generate_domain("real", data.count, data.seed, config.image_size)
        return ArrayDataset(sim), ArrayDataset(real)
    try:
        return (load_image_folder(data.sim_dir, config.image_size, data.seed, mode="train"),
                load_image_folder(data.real_dir, config.image_size, data.seed, mode="train"))
    except FileNotFoundError as exc:
        raise DatasetUnavailable(str(exc)) from exc


def model_for(config: TrainConfig) -> TranslationModel:
    return build_model(config.arch_spec, config.image_size, config.channel_plan,
                       latent_dims=config.latent_dims, n_downsample=config.n_downsample,
                       n_res=config.n_res, seed=config.seed)


def _set_requires_grad(params, flag: bool) -> None:
    for p in params:
        p.requires_grad_(flag)


def train_step(model: TranslationModel, batch: dict, opt_d, opt_g, config: TrainConfig,
               noise: torch.Generator, feature_extractor=None) -> LossBreakdown:
    """One discriminator update followed by one generator update."""
    x_sim, x_real = batch["sim"], batch["real"]
    with torch.no_grad():
        fake_real = model.translate(x_sim, "sim2real", noise)
        fake_sim = model.translate(x_real, "real2sim", noise)
    d_terms = discriminator_losses(model, x_sim, x_real, fake_sim, fake_real)
    d_part = LossBreakdown(weights=config.weights, **d_terms)
    d_part.check_finite()
    opt_d.zero_grad(set_to_none=True)
    d_part.discriminator_total().backward()
    opt_d.step()

    d_params = model.discriminator_parameters()
    _set_requires_grad(d_params, False)
    try:
        g_part = compute_losses(model, batch, config.weights, noise, config.perceptual_enabled,
                                feature_extractor, terms="generator")
        g_part.check_finite()
        opt_g.zero_grad(set_to_none=True)
        g_part.generator_total().backward()
        opt_g.step()
    finally:
        _set_requires_grad(d_params, True)
    return d_part.merged(g_part)


def _optimizers(model: TranslationModel, config: TrainConfig):
    betas = tuple(config.decay_rates)
    opt_d = torch.optim.Adam(model.discriminator_parameters(), lr=config.learning_rate, betas=betas)
    opt_g = torch.optim.Adam(model.generator_parameters(), lr=config.learning_rate, betas=betas)
    return opt_d, opt_g


def _write_log(path: Path, rows: list[dict]) -> None:
    cols = ["step"] + loss_field_names()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_loss_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items() if v != ""}
                for row in csv.DictReader(fh)]


def manifest_for(config: TrainConfig, step: int, status: str, extra: dict | None = None) -> dict:
    return {
        "name": config.name,
        "arch": config.arch_spec,
        "receptive_field": config.receptive_field,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "training_hash": config.training_hash,
        "loss_weights": asdict(config.weights),
        "perceptual_enabled": config.perceptual_enabled,
        "steps_completed": step,
        "status": status,
        "code_version": __version__,
        "torch_version": torch.__version__,
        "python": platform.python_version(),
        "open_decisions": OPEN_DECISIONS,
        "config": config.to_dict(),
        **(extra or {}),
    }


def _save(run_dir: Path, model, opt_d, opt_g, noise, config, step, rows, status="running"):
    # log before checkpoint: a resumed run drops log rows past the checkpoint step
    _write_log(run_dir / LOSS_LOG_NAME, rows)
    save_checkpoint(model, run_dir / CHECKPOINT_NAME, step=step, arch=config.arch_spec,
                    channel_plan=asdict(config.channel_plan), loss_weights=asdict(config.weights),
                    training_hash=config.training_hash, opt_d=opt_d.state_dict(),
                    opt_g=opt_g.state_dict(), noise_state=noise.get_state())
    (run_dir / MANIFEST_NAME).write_text(json.dumps(manifest_for(config, step, status), indent=2, sort_keys=True))


def train(config: TrainConfig, run_dir: str | Path, resume: bool = True, progress: bool = False) -> Path:
    """Train one model into ``run_dir`` (checkpoint, loss log, manifest).

    An existing checkpoint with the same training hash is resumed. On a
    non-finite loss the run aborts and the last good checkpoint is kept.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    set_deterministic(config.seed)
    sim, real = training_streams(config)
    model = model_for(config)
    opt_d, opt_g = _optimizers(model, config)
    noise = torch.Generator().manual_seed(config.seed + 1)
    extractor = load_adapter(config.perceptual_adapter) if config.perceptual_enabled else None

    start, rows = 0, []
    ckpt = run_dir / CHECKPOINT_NAME
    if resume and ckpt.exists():
        payload = torch.load(ckpt, map_location="cpu", weights_only=False)
        if payload.get("training_hash") == config.training_hash:
            model.load_state_dict(payload["state_dict"])
            opt_d.load_state_dict(payload["opt_d"])
            opt_g.load_state_dict(payload["opt_g"])
            noise.set_state(payload["noise_state"])
            start = payload["step"]
            rows = [r for r in read_loss_log(run_dir / LOSS_LOG_NAME) if r["step"] < start]
            log.info("resuming %s at step %d", config.name, start)

    model.train()
    t0 = time.time()
    for step in range(start, config.steps):
        batch = make_batch(sim, real, config.data.seed, step)
        try:
            losses = train_step(model, batch, opt_d, opt_g, config, noise, extractor)
        except NonFiniteLoss:
            manifest = manifest_for(config, step, "diverged")
            (run_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
            raise
        rows.append({"step": step, **losses.as_dict()})
        done = step + 1
        if done % config.checkpoint_every == 0 or done == config.steps:
            _save(run_dir, model, opt_d, opt_g, noise, config, done, rows,
                  "complete" if done == config.steps else "running")
            if progress:
                recent = np.mean([r["recon_sim"] for r in rows[-config.checkpoint_every:]])
                log.info("%s step %d/%d  recon_sim %.4f  %.1fs", config.name, done, config.steps,
                         recent, time.time() - t0)
    if start >= config.steps and not (run_dir / MANIFEST_NAME).exists():
        _save(run_dir, model, opt_d, opt_g, noise, config, start, rows, "complete")
    return run_dir


def run_is_complete(run_dir: str | Path, config: TrainConfig) -> bool:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists() or not (Path(run_dir) / CHECKPOINT_NAME).exists():
        return False
    manifest = json.loads(path.read_text())
    return manifest.get("status") == "complete" and manifest.get("training_hash") == config.training_hash
