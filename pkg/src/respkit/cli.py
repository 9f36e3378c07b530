"""Command-line orchestration: prepare / train / evaluate / fuse / report."""

from __future__ import annotations

import csv
import functools
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from respkit import dataio, features, fusion, metrics
from respkit.augment import batch_augmenter, one_hot
from respkit.config import ExperimentConfig
from respkit.errors import (
    AnnotationParseError,
    ContractError,
    SplitConfigError,
    SplitIntegrityError,
)
from respkit.features import SpectrogramKind, load_spectrogram, save_spectrogram
from respkit.models import (
    build_backbone,
    build_inception_net,
    load_checkpoint,
    load_manifest,
    resolve_provider,
    save_checkpoint,
)
from respkit.train import (
    embed_in_batches,
    predict_in_batches,
    train_mlp_on_embeddings,
    train_model,
)

MANIFEST_COLUMNS = ("cycle_id", "recording_id", "patient_id", "label", "split")

_ERRORS = (
    ContractError,
    AnnotationParseError,
    SplitConfigError,
    SplitIntegrityError,
    FileNotFoundError,
)


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _ERRORS as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapped


def _load_config(config_path, seed, out):
    cfg = ExperimentConfig.from_file(config_path)
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    if out is not None:
        cfg.output_dir = str(out)
    return cfg


def _feature_path(cache_dir: Path, cycle_id: str, kind: SpectrogramKind) -> Path:
    return cache_dir / "features" / f"{cycle_id}.{kind.value}.npz"


def read_manifest(cache_dir: Path) -> list[dict]:
    path = Path(cache_dir) / "manifest.csv"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}; run 'prepare' first")
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _load_features(cache_dir: Path, rows, kind: SpectrogramKind):
    specs = []
    for row in rows:
        path = _feature_path(cache_dir, row["cycle_id"], kind)
        if not path.exists():
            raise ContractError(
                f"cycle {row['cycle_id']} has no cached {kind.value} features "
                f"({path}); re-run 'prepare'"
            )
        spec, _ = load_spectrogram(path)
        specs.append(spec)
    return specs


@click.group()
def main():
    """Respiratory-cycle classification experiments."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Cache directory.")
@click.option("--workers", type=int, default=1)
@_cli_errors
def prepare(config_path, seed, out, workers):
    """Extract cycles, compute both spectrogram kinds, write cache + manifest."""
    cfg = _load_config(config_path, seed, out)
    cache_dir = Path(out) if out is not None else cfg.effective_cache_dir
    data_dir = Path(cfg.data_dir)
    table = dataio.parse_split_table(Path(cfg.split_file).read_text())

    wavs = sorted(data_dir.glob("*.wav"))
    if not wavs:
        raise ContractError(f"no WAV files found in {data_dir}")
    all_records, clips = [], {}
    for wav in wavs:
        ann = wav.with_suffix(".txt")
        if not ann.exists():
            raise ContractError(f"missing annotation file {ann}")
        records = dataio.parse_annotations(ann.read_text(), wav.stem)
        recording = dataio.load_wav(wav)
        for rec in records:
            cycle = dataio.fix_duration(dataio.extract_cycle(recording, rec))
            clips[rec.cycle_id] = cycle
        all_records.extend(records)

    split = dataio.make_split(all_records, table)
    (cache_dir / "features").mkdir(parents=True, exist_ok=True)

    def extract(rec):
        clip = clips[rec.cycle_id]
        meta = {
            "cycle_id": rec.cycle_id,
            "recording_id": rec.recording_id,
            "label": int(rec.label),
        }
        save_spectrogram(
            _feature_path(cache_dir, rec.cycle_id, SpectrogramKind.LOGMEL),
            features.logmel(clip),
            meta,
        )
        save_spectrogram(
            _feature_path(cache_dir, rec.cycle_id, SpectrogramKind.WAVELET),
            features.wavelet_scalogram(clip),
            meta,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(extract, all_records))
    else:
        for rec in all_records:
            extract(rec)

    with open(cache_dir / "manifest.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in all_records:
            writer.writerow(
                [
                    rec.cycle_id,
                    rec.recording_id,
                    rec.patient_id,
                    int(rec.label),
                    split.side(rec.recording_id).value,
                ]
            )
    click.echo(f"prepared {len(all_records)} cycles into {cache_dir}")


def _fusion_embeddings(cache_dir, rows, provider, inception_handle, tap):
    logmels = _load_features(cache_dir, rows, SpectrogramKind.LOGMEL)
    wavelets = _load_features(cache_dir, rows, SpectrogramKind.WAVELET)
    pre = embed_in_batches(provider, logmels)
    incep = np.concatenate(
        [
            inception_handle.embedding(
                np.stack([w.values for w in wavelets[i : i + 16]]), tap
            )
            for i in range(0, len(wavelets), 16)
        ]
    )
    return np.concatenate([pre, incep], axis=1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@_cli_errors
def train(config_path, seed, out, ):
    """Train the configured framework; write checkpoint + history CSV."""
    cfg = _load_config(config_path, seed, out)
    cache_dir = cfg.effective_cache_dir
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in read_manifest(cache_dir) if r["split"] == "train"]
    if not rows:
        raise ContractError("no training cycles in the manifest")
    labels = [one_hot(int(r["label"])) for r in rows]
    extra = {"framework": cfg.framework}

    import torch

    torch.manual_seed(cfg.seed)  # model init is part of the seeded run
    if cfg.framework in ("inception", "backbone"):
        specs = _load_features(cache_dir, rows, SpectrogramKind.WAVELET)
        handle = (
            build_inception_net(cfg.model_spec)
            if cfg.framework == "inception"
            else build_backbone(cfg.model_spec)
        )
        augmenters = None
        if cfg.augment.enabled:
            augmenters = batch_augmenter(
                mixup_alpha=cfg.augment.mixup_alpha,
                time_masks=cfg.augment.time_masks,
                time_width=cfg.augment.time_width,
                freq_masks=cfg.augment.freq_masks,
                freq_width=cfg.augment.freq_width,
            )
        handle, history = train_model(
            handle, list(zip(specs, labels)), cfg.train, augmenters=augmenters
        )
    elif cfg.framework == "transfer":
        specs = _load_features(cache_dir, rows, SpectrogramKind.LOGMEL)
        provider = resolve_provider(cfg.provider_id)
        handle, history = train_mlp_on_embeddings(
            provider, list(zip(specs, labels)), cfg.train
        )
        extra["provider_id"] = cfg.provider_id
    else:  # early_fusion / middle_fusion
        if not cfg.inception_checkpoint:
            raise ContractError(
                f"{cfg.framework} requires 'inception_checkpoint' in the config"
            )
        inception_handle = load_checkpoint(cfg.inception_checkpoint)
        if inception_handle.builder != "inception":
            raise ContractError("inception_checkpoint must hold an Inc-0x network")
        tap = "GMP" if cfg.framework == "early_fusion" else "FC2"
        provider = resolve_provider(cfg.provider_id)
        vectors = _fusion_embeddings(cache_dir, rows, provider, inception_handle, tap)
        from respkit.models import build_mlp_head

        handle, history = train_model(
            build_mlp_head(vectors.shape[1]), list(zip(vectors, labels)), cfg.train
        )
        extra.update(
            provider_id=cfg.provider_id,
            inception_checkpoint=str(Path(cfg.inception_checkpoint).resolve()),
            tap=tap,
        )

    ckpt = out_dir / "checkpoint.pt"
    save_checkpoint(handle, ckpt, extra=extra)
    history.write_csv(out_dir / "history.csv")
    shutil.copy(config_path, out_dir / "config.json")
    click.echo(f"trained {handle.name}: checkpoint {ckpt}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["train", "test"]), default="test")
@click.option("--out", type=click.Path(), default=None)
@_cli_errors
def evaluate(checkpoint, config_path, split, out):
    """Write per-cycle probabilities and the ICBHI score report."""
    cfg = _load_config(config_path, None, out)
    cache_dir = cfg.effective_cache_dir
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in read_manifest(cache_dir) if r["split"] == split]
    if not rows:
        raise ContractError(f"no cycles on the {split} split")
    handle = load_checkpoint(checkpoint)
    extra = load_manifest(checkpoint).get("extra", {})
    framework = extra.get("framework", handle.builder)

    if framework in ("inception", "backbone"):
        specs = _load_features(cache_dir, rows, SpectrogramKind.WAVELET)
        probs = predict_in_batches(handle, specs)
    elif framework == "transfer":
        specs = _load_features(cache_dir, rows, SpectrogramKind.LOGMEL)
        provider = resolve_provider(extra["provider_id"])
        probs = predict_in_batches(handle, embed_in_batches(provider, specs))
    else:
        provider = resolve_provider(extra["provider_id"])
        inception_handle = load_checkpoint(extra["inception_checkpoint"])
        vectors = _fusion_embeddings(
            cache_dir, rows, provider, inception_handle, extra["tap"]
        )
        probs = predict_in_batches(handle, vectors)

    by_cycle = {r["cycle_id"]: probs[i] for i, r in enumerate(rows)}
    fusion.write_predictions(out_dir / "predictions.csv", by_cycle)
    true = [int(r["label"]) for r in rows]
    pred = [fusion.predict_label(by_cycle[r["cycle_id"]]) for r in rows]
    report = metrics.icbhi_scores(metrics.confusion(true, pred))
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.md").write_text(report.to_markdown())
    click.echo(report.to_markdown())


def _score_against_manifest(by_cycle, manifest_path):
    with open(manifest_path, newline="") as f:
        label_of = {r["cycle_id"]: int(r["label"]) for r in csv.DictReader(f)}
    missing = set(by_cycle) - set(label_of)
    if missing:
        raise ContractError(f"manifest lacks labels for {sorted(missing)[:3]}...")
    ids = sorted(by_cycle)
    true = [label_of[c] for c in ids]
    pred = [fusion.predict_label(by_cycle[c]) for c in ids]
    return metrics.icbhi_scores(metrics.confusion(true, pred))


@main.command()
@click.argument("prediction_csvs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--strategy", type=click.Choice(["late"]), default="late")
@click.option("--out", type=click.Path(), required=True)
@click.option("--manifest", type=click.Path(exists=True), default=None)
@_cli_errors
def fuse(prediction_csvs, strategy, out, manifest):
    """PROD-fuse two or more prediction files (late fusion)."""
    fused = fusion.fuse_prediction_files(list(prediction_csvs))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fusion.write_predictions(out_dir / "fused.csv", fused)
    with open(out_dir / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["cycle_id", "label"])
        for cid in sorted(fused):
            writer.writerow([cid, fusion.predict_label(fused[cid])])
    if manifest:
        report = _score_against_manifest(fused, manifest)
        (out_dir / "report.json").write_text(report.to_json())
        (out_dir / "report.md").write_text(report.to_markdown())
        click.echo(report.to_markdown())
    click.echo(f"fused {len(fused)} cycles into {out_dir}")


@main.command()
@click.option("--predictions", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@_cli_errors
def report(predictions, manifest, out):
    """Score a prediction file against manifest labels."""
    by_cycle = fusion.read_predictions(predictions)
    rep = _score_against_manifest(by_cycle, manifest)
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(rep.to_json())
        (out_dir / "report.md").write_text(rep.to_markdown())
    click.echo(rep.to_markdown())


if __name__ == "__main__":
    main()
