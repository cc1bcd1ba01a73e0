"""Train and evaluate one model per discriminator architecture, then report
mean SCD per model and per receptive field."""

from __future__ import annotations

import csv
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from PIL import Image

from .. import __version__
from ..archspec import parameter_count, parse_arch
from ..scd import SCDRecord, scd_aggregate
from .config import TrainConfig, canonical_hash
from .evaluation import eval_dataset, evaluate
from .plotting import emit_plot
from .report import ReportRow, SweepReport
from .training import CHECKPOINT_NAME, run_is_complete, train

log = logging.getLogger(__name__)


def safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def run_dir_for(cache_dir: Path, config: TrainConfig) -> Path:
    return cache_dir / f"{safe_name(config.name)}-{config.training_hash[:12]}"


def check_sweep(configs: Sequence[TrainConfig]) -> None:
    if len(configs) < 2:
        raise ValueError("a sweep needs at least two configs")
    specs = [parse_arch(c.arch_spec).spec for c in configs]
    if len(set(specs)) != len(specs):
        raise ValueError(f"duplicate architectures in sweep: {specs}")
    if len({c.name for c in configs}) != len(configs):
        raise ValueError("config names must be unique")
    first = configs[0]
    for c in configs[1:]:
        if (c.data, c.eval, c.image_size) != (first.data, first.eval, first.image_size):
            raise ValueError(f"config {c.name!r} does not share data/eval settings with {first.name!r}")


def write_records(path: Path, records: Sequence[SCDRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("image_id", "model_name", "receptive_field", "scd"))
        for r in records:
            w.writerow((r.image_id, r.model_name, r.receptive_field, repr(r.scd)))


def sweep(configs: Sequence[TrainConfig], out_dir: str | Path, cache_dir: str | Path | None = None,
          progress: bool = False) -> SweepReport:
    """Run (or reuse cached) training for every config and assemble the report.

    Training runs are cached under ``cache_dir`` keyed by the hash of every
    setting that affects the weights. If any entry fails, a report marked
    incomplete is written before the error propagates.
    """
    check_sweep(configs)
    out = Path(out_dir)
    cache = Path(cache_dir) if cache_dir is not None else out / "runs"
    out.mkdir(parents=True, exist_ok=True)
    first = configs[0]
    dataset = eval_dataset(first.eval, first.image_size)

    rows: list[ReportRow] = []
    records: list[SCDRecord] = []
    provenance = {
        "config_hash": canonical_hash(sorted(c.config_hash for c in configs)),
        "configs": {c.name: c.config_hash for c in configs},
        "seed": sorted({c.seed for c in configs}),
        "code_version": __version__,
        "eval": {"count": len(dataset), "seed": first.eval.seed, "direction": first.eval.direction,
                 "eval_size": first.eval.eval_size, "threshold": first.eval.threshold},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    samples_dir = out / "samples"

    def finish(complete: bool) -> SweepReport:
        per_rf = scd_aggregate(records).per_rf if records else {}
        report = SweepReport(rows, per_rf, provenance, complete)
        report.write(out)
        write_records(out / "records.csv", records)
        if rows:
            emit_plot(report, out / "scd_vs_rf.png")
        return report

    try:
        for config in configs:
            run_dir = run_dir_for(cache, config)
            if run_is_complete(run_dir, config):
                log.info("reusing cached run %s", run_dir)
            else:
                log.info("training %s (%s)", config.name, config.arch_spec)
                train(config, run_dir, progress=progress)
            result = evaluate(run_dir / CHECKPOINT_NAME, dataset, config.eval, config.name)
            if not result.records:
                raise RuntimeError(f"{config.name}: every evaluation image was excluded")
            records.extend(result.records)
            (samples_dir / safe_name(config.name)).mkdir(parents=True, exist_ok=True)
            (samples_dir / "input").mkdir(parents=True, exist_ok=True)
            for image_id, src, translated in result.samples:
                Image.fromarray(src).save(samples_dir / "input" / f"{image_id}.png")
                Image.fromarray(translated).save(samples_dir / safe_name(config.name) / f"{image_id}.png")
            arch = parse_arch(config.arch_spec, config.channel_plan)
            rows.append(ReportRow(
                model_name=config.name,
                arch_spec=arch.spec,
                receptive_field=arch.receptive_field,
                depth=arch.depth,
                parameter_count=parameter_count(arch, config.channel_plan, 3),
                mean_scd=result.mean_scd,
                n_images=result.n_images,
                n_excluded=len(result.excluded),
            ))
            log.info("%s: RF %d, mean SCD %.4f", config.name, arch.receptive_field, result.mean_scd)
    except Exception:
        finish(complete=False)
        raise
    return finish(complete=True)
