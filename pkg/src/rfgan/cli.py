"""Command-line entry point: ``rfgan <command>``."""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml
from PIL import Image

from . import archspec
from .scd import EdgeConfig, EmptyPointSet, SCDRecord, scd


def _parse_rf(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)


@main.command()
@click.option("--arch", "spec", required=True, help='Layer codes, e.g. "A,A,A,A,C" or "A->B->C".')
@click.option("--input-size", type=int, default=None)
@click.option("--base-channels", type=int, default=64, show_default=True)
@click.option("--growth", type=int, default=2, show_default=True)
@click.option("--cap", type=int, default=512, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Also print a JSON record.")
def analyze(spec, input_size, base_channels, growth, cap, as_json):
    """Receptive field, stride, output grid and parameter count of an architecture."""
    try:
        plan = archspec.ChannelPlan(base_channels, growth, cap)
        info = archspec.describe(archspec.parse_arch(spec, plan), input_size, plan)
    except archspec.ArchSpecError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    for key in ("arch", "receptive_field", "total_stride", "depth", "input_size", "output_grid",
                "parameter_count"):
        if key in info:
            click.echo(f"{key}: {info[key]}")
    if as_json:
        click.echo(json.dumps(info, sort_keys=True))


@main.command("enumerate")
@click.option("--max-conv-layers", type=int, required=True)
@click.option("--rf", "rf_range", required=True, help="MIN or MIN:MAX")
def enumerate_cmd(max_conv_layers, rf_range):
    """Every A/B/D stack (+ trailing C) whose receptive field is in range."""
    lo, hi = _parse_rf(rf_range)
    try:
        found = archspec.enumerate_archs(max_conv_layers, lo, hi)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    for arch in found:
        click.echo(arch.spec)


@main.command("gen-data")
@click.option("--domain", type=click.Choice(["sim", "real"]), required=True)
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def gen_data(domain, count, seed, size, out_dir):
    """Write a procedural domain as PNGs plus manifest.json."""
    from .data import generate_domain, write_domain

    manifest, images = generate_domain(domain, count, seed, size)
    write_domain(out_dir, manifest, images)
    click.echo(f"wrote {count} {domain} images to {out_dir} (manifest {manifest.digest()[:16]})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--run-dir", type=click.Path(file_okay=False), default=None,
              help="Defaults to runs/<config name>.")
@click.option("--steps", type=int, default=None, help="Override the configured step count.")
def train(config_path, run_dir, steps):
    """Train one translation model."""
    from .harness.config import load_config
    from .harness.training import train as run_train

    config = load_config(config_path)
    if steps is not None:
        config = config.with_overrides(steps=steps)
    out = run_train(config, run_dir or Path("runs") / config.name, progress=True)
    click.echo(str(out))


def _image_files(path: Path) -> dict[str, Path]:
    from .data import IMAGE_SUFFIXES

    return {p.stem: p for p in sorted(path.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def _read_unit(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


@main.command("eval-scd")
@click.option("--inputs", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--translations", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--backend", type=click.Choice(["classical", "neural"]), default="classical", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--eval-size", type=int, default=256, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--model-name", default=None, help="Defaults to the translations directory name.")
@click.option("--arch", default=None, help="Discriminator spec of the model (for the RF column).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML with an eval.adapter (or top-level adapter) for the neural backend.")
@click.option("--adapter", default=None, help="module:factory of a neural edge model.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def eval_scd(inputs, translations, backend, threshold, eval_size, sigma, model_name, arch,
             config_path, adapter, out_path):
    """SCD between input images and their translations, matched by file name."""
    from .adapters import load_adapter

    inputs, translations = Path(inputs), Path(translations)
    if adapter is None and config_path:
        raw = yaml.safe_load(Path(config_path).read_text()) or {}
        adapter = (raw.get("eval") or {}).get("adapter") or raw.get("adapter")
    if arch is None:
        manifest = translations / "manifest.json"
        if manifest.exists():
            arch = json.loads(manifest.read_text()).get("arch")
    if arch is None:
        raise click.ClickException("pass --arch so the report can carry the receptive field")
    rf = archspec.parse_arch(arch).receptive_field
    model_name = model_name or translations.name
    edges = EdgeConfig(sigma=sigma, adapter=load_adapter(adapter) if adapter else None)

    src, dst = _image_files(inputs), _image_files(translations)
    common = sorted(set(src) & set(dst))
    if not common:
        raise click.ClickException("no image names in common between the two directories")
    records, excluded = [], []
    for image_id in common:
        try:
            value = scd(_read_unit(src[image_id]), _read_unit(dst[image_id]), backend, threshold,
                        eval_size, edges, image_id=image_id)
        except EmptyPointSet as exc:
            click.echo(f"excluded {image_id}: {exc}", err=True)
            excluded.append(image_id)
            continue
        records.append(SCDRecord(image_id, value, model_name, rf))
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("image_id", "model_name", "receptive_field", "scd"))
        for r in records:
            w.writerow((r.image_id, r.model_name, r.receptive_field, repr(r.scd)))
    mean = float(np.mean([r.scd for r in records])) if records else float("nan")
    click.echo(f"{len(records)} scored, {len(excluded)} excluded, mean SCD {mean:.4f}")


@main.command("sweep")
@click.option("--configs", "config_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--cache", "cache_dir", type=click.Path(file_okay=False), default=None,
              help="Checkpoint cache (default: OUT/runs).")
def sweep_cmd(config_dir, out_dir, cache_dir):
    """Train/evaluate every config in a directory and write the SCD report."""
    from .harness.config import load_config_dir
    from .harness.sweep import sweep

    report = sweep(load_config_dir(config_dir), out_dir, cache_dir, progress=True)
    click.echo(report.rows_csv(), nl=False)
    click.echo(report.per_rf_csv(), nl=False)


@main.command()
@click.option("--report", "report_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def plot(report_path, out_path):
    """Plot mean SCD against receptive field (PNG or SVG by extension)."""
    from .harness.plotting import emit_plot
    from .harness.report import load_report

    for rf, value in emit_plot(load_report(report_path), out_path):
        click.echo(f"{rf},{value!r}")


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="A sweep output directory.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--rows", "n_rows", type=int, default=4, show_default=True)
@click.option("--edges", is_flag=True, help="Overlay edge points on every image.")
def grid(run_dir, out_path, n_rows, edges):
    """Input column followed by one column per model, by decreasing receptive field."""
    from .harness.plotting import emit_grid
    from .harness.report import load_report
    from .harness.sweep import safe_name

    run_dir = Path(run_dir)
    report = load_report(run_dir)
    samples = run_dir / "samples"
    inputs = _image_files(samples / "input")
    ids = sorted(inputs)[:n_rows]
    if not ids:
        raise click.ClickException(f"no sample images under {samples}")
    ordered = report.sorted_rows()
    rows = []
    for image_id in ids:
        row = [np.asarray(Image.open(inputs[image_id]).convert("RGB"))]
        for r in ordered:
            row.append(np.asarray(Image.open(samples / safe_name(r.model_name) / f"{image_id}.png").convert("RGB")))
        rows.append(row)
    captions = ["input"] + [f"{r.model_name} ({r.receptive_field})" for r in ordered]
    n, m = emit_grid(rows, captions, out_path, edges=edges)
    click.echo(f"{out_path}: {n} rows x {m} columns")


if __name__ == "__main__":
    main()
