"""Command-line entry point for the full pipeline.

Exit codes: 0 success, 1 runtime failure (one machine-parseable error
line on stderr), 2 usage errors.  Every run logs the resolved config
and seed, and writes the merged effective config next to its outputs.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from .audio import Manifest, ManifestEntry, load_wav, save_wav
from .checkpoint import load_cleaner
from .config import dump_effective_config, load_config
from .degrade import build_degraded_corpus, load_paired_manifest
from .errors import ResynthError
from .evaluate import evaluate as run_evaluate
from .evaluate import restore as run_restore
from .features import (
    extract_speech_features,
    extract_speaker_embedding,
    extract_text_condition,
    write_tensor,
)
from .training import train_cleaner, train_vocoder

CONFIG_ENV_VAR = "RESYNTH_CONFIG"


def _fail(exc: Exception) -> "NoReturn":
    category = type(exc).__name__
    click.echo(f"error category={category} message={exc}", err=True)
    sys.exit(1)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ResynthError, OSError, KeyError) as exc:
            _fail(exc)

    return wrapper


def _resolve_config(config_path, overrides):
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    return load_config(path, overrides)


def _announce(cfg: dict, seed: int, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_effective_config(cfg, out_dir / "effective_config.yaml")
    click.echo(f"seed={seed} config={out_dir / 'effective_config.yaml'}", err=True)


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help=f"YAML config file (or ${CONFIG_ENV_VAR}).",
)


@click.group()
def main():
    """Speech restoration pipeline: degrade, extract, train, restore, evaluate."""


@main.command("degrade-corpus")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--noise", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pattern", default=None,
              type=click.Choice(["clean+noise", "+reverb", "+codec", "+reverb+codec"]))
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--backend", default=None, type=click.Choice(["surrogate", "external"]))
@click.option("--workers", type=int, default=None)
@config_option
@handle_errors
def degrade_corpus(manifest, noise, pattern, seed, out, backend, workers, config_path):
    """Build a paired (clean, degraded) corpus with per-utterance recipes."""
    overrides = {}
    if pattern is not None:
        overrides["degrade.pattern"] = pattern
    if backend is not None:
        overrides["degrade.backend"] = backend
    if workers is not None:
        overrides["degrade.workers"] = workers
    cfg = _resolve_config(config_path, overrides)
    out_dir = Path(out)
    _announce(cfg, seed, out_dir)
    paired, recipes = build_degraded_corpus(
        Manifest.load(manifest),
        Manifest.load(noise),
        cfg["degrade"]["pattern"],
        seed,
        out_dir,
        backend_name=cfg["degrade"]["backend"],
        workers=cfg["degrade"]["workers"],
    )
    click.echo(json.dumps({"paired_manifest": str(paired), "recipes": str(recipes)}))


@main.command("extract-features")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
@config_option
@handle_errors
def extract_features(manifest, out, seed, config_path):
    """Bulk-extract features for a manifest into tensor-exchange files."""
    overrides = {"extractor.rng_seed": seed} if seed is not None else {}
    cfg = _resolve_config(config_path, overrides)
    spec = cfg["extractor"]
    out_dir = Path(out)
    _announce(cfg, spec.rng_seed, out_dir)
    for entry in Manifest.load(manifest):
        clip = load_wav(entry.audio_path, utt_id=entry.utt_id)
        write_tensor(out_dir / f"{entry.utt_id}.speech.tensor",
                     extract_speech_features(clip, spec).values)
        write_tensor(out_dir / f"{entry.utt_id}.spk.tensor",
                     extract_speaker_embedding(clip, spec).values)
        if entry.transcript:
            write_tensor(out_dir / f"{entry.utt_id}.text.tensor",
                         extract_text_condition(entry.transcript, spec).values)
    click.echo(json.dumps({"features_dir": str(out_dir)}))


@main.command("train-cleaner")
@click.option("--paired-manifest", "paired", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
@config_option
@handle_errors
def train_cleaner_cmd(paired, out, seed, config_path):
    """Train the feature cleaner on a paired corpus."""
    overrides = {"train_cleaner.seed": seed} if seed is not None else {}
    cfg = _resolve_config(config_path, overrides)
    out_dir = Path(out)
    _announce(cfg, cfg["train_cleaner"].seed, out_dir)
    spec = cfg["extractor"]
    ccfg = cfg["cleaner"]
    ccfg.D, ccfg.W, ccfg.Q = spec.D, spec.W, spec.Q
    train_cleaner(cfg["train_cleaner"], load_paired_manifest(paired), spec,
                  cleaner_config=ccfg, out_dir=out_dir)
    click.echo(json.dumps({"checkpoint": str(out_dir / "cleaner.ckpt")}))


@main.command("train-vocoder")
@click.option("--paired-manifest", "paired", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--stage", required=True,
              type=click.Choice(["pretrain_clean", "finetune_predicted"]))
@click.option("--cleaner", "cleaner_ckpt", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--init", "init_ckpt", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Vocoder checkpoint to continue from (fine-tuning).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
@config_option
@handle_errors
def train_vocoder_cmd(paired, stage, cleaner_ckpt, init_ckpt, out, seed, config_path):
    """Train the vocoder (pretrain on clean, or fine-tune on predicted)."""
    overrides = {"train_vocoder.seed": seed} if seed is not None else {}
    cfg = _resolve_config(config_path, overrides)
    out_dir = Path(out)
    _announce(cfg, cfg["train_vocoder"].seed, out_dir)
    spec = cfg["extractor"]
    vcfg = cfg["vocoder"]
    vcfg.D, vcfg.Q = spec.D, spec.Q
    init_model = None
    if init_ckpt is not None:
        from .checkpoint import load_vocoder

        init_model, _ = load_vocoder(init_ckpt)
    train_vocoder(cfg["train_vocoder"], stage, load_paired_manifest(paired), spec,
                  vocoder_config=vcfg, cleaner_ckpt=cleaner_ckpt,
                  init_model=init_model, out_dir=out_dir)
    click.echo(json.dumps({"checkpoint": str(out_dir / "vocoder.ckpt")}))


@main.command("restore")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--transcript", required=True,
              help="Transcript text, or @file to read it from a file.")
@click.option("--cleaner", "cleaner_ckpt", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vocoder", "vocoder_ckpt", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0)
@config_option
@handle_errors
def restore_cmd(in_path, transcript, cleaner_ckpt, vocoder_ckpt, out, seed, config_path):
    """Restore one degraded WAV to a 24 kHz studio-like WAV."""
    cfg = _resolve_config(config_path, {})
    if transcript.startswith("@"):
        transcript = Path(transcript[1:]).read_text(encoding="utf-8").strip()
    out_path = Path(out)
    _announce(cfg, seed, out_path.parent if out_path.parent != Path("") else Path("."))
    clip = load_wav(in_path, utt_id=Path(in_path).stem)
    _, spec = load_cleaner(cleaner_ckpt)
    restored = run_restore(clip, transcript, cleaner_ckpt, vocoder_ckpt,
                           extractor=spec, rng_seed=seed)
    save_wav(restored, out_path)
    click.echo(json.dumps({"restored": str(out_path), "sample_rate": restored.sample_rate}))


@main.command("evaluate")
@click.option("--restored", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--clean", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--degraded", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@config_option
@handle_errors
def evaluate_cmd(restored, clean, degraded, out, config_path):
    """Objective metrics (speaker similarity, log-mel distance) vs clean."""
    cfg = _resolve_config(config_path, {})
    out_dir = Path(out)
    _announce(cfg, cfg["extractor"].rng_seed, out_dir)
    report = run_evaluate(
        Manifest.load(restored), Manifest.load(clean), Manifest.load(degraded),
        extractor=cfg["extractor"],
    )
    (out_dir / "eval_report.json").write_text(report.to_json())
    click.echo(report.table())


if __name__ == "__main__":
    main()
