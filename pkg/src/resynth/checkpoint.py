"""Versioned checkpoint containers for cleaner and vocoder models."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import torch

from .cleaner import CleanerConfig, FeatureCleaner
from .errors import FormatError, ValidationError
from .features import ExtractorSpec
from .vocoder import MultiPeriodDiscriminator, Vocoder, VocoderConfig

FORMAT_VERSION = 1


def save_cleaner(model: FeatureCleaner, extractor: ExtractorSpec, path) -> None:
    torch.save(
        {
            "format_version": FORMAT_VERSION,
            "kind": "cleaner",
            "config": asdict(model.config),
            "extractor": asdict(extractor),
            "state": model.state_dict(),
        },
        path,
    )


def save_vocoder(model: Vocoder, extractor: ExtractorSpec, path,
                 mpd: MultiPeriodDiscriminator | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "vocoder",
        "config": asdict(model.config),
        "extractor": asdict(extractor),
        "state": model.state_dict(),
    }
    if mpd is not None:
        payload["mpd_state"] = mpd.state_dict()
    torch.save(payload, path)


def _load(path, kind: str) -> dict:
    if not Path(path).exists():
        raise ValidationError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(blob, dict) or blob.get("kind") != kind:
        raise FormatError(f"{path}: not a {kind} checkpoint")
    if blob.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {blob.get('format_version')}")
    return blob


def load_cleaner(path) -> tuple[FeatureCleaner, ExtractorSpec]:
    blob = _load(path, "cleaner")
    model = FeatureCleaner(CleanerConfig(**blob["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, ExtractorSpec(**blob["extractor"])


def load_vocoder(path) -> tuple[Vocoder, ExtractorSpec]:
    blob = _load(path, "vocoder")
    cfg = dict(blob["config"])
    for key in ("ublock_factors", "mpd_periods"):
        cfg[key] = tuple(cfg[key])
    cfg["stft_loss_resolutions"] = tuple(tuple(r) for r in cfg["stft_loss_resolutions"])
    model = Vocoder(VocoderConfig(**cfg))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, ExtractorSpec(**blob["extractor"])
