"""One YAML config format for every CLI subcommand.

Sections map onto the dataclass configs; unknown sections or keys are
hard errors so typos never silently fall back to defaults.  CLI flags
override config values, and the merged effective config is written
next to each command's outputs.
"""

from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path

import yaml

from .cleaner import CleanerConfig
from .errors import ValidationError
from .features import ExtractorSpec
from .training import TrainConfig
from .vocoder import VocoderConfig

SECTIONS = {
    "extractor": ExtractorSpec,
    "cleaner": CleanerConfig,
    "vocoder": VocoderConfig,
    "train_cleaner": TrainConfig,
    "train_vocoder": TrainConfig,
    "degrade": dict,  # free-form keys validated below
}

_DEGRADE_KEYS = {"pattern", "backend", "workers"}


def _build(cls, section: str, values: dict):
    allowed = {f.name for f in fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in [{section}]: {sorted(unknown)}")
    tuple_fields = {"ublock_factors", "mpd_periods", "stft_loss_resolutions"}
    kwargs = {
        k: tuple(tuple(x) if isinstance(x, list) else x for x in v)
        if k in tuple_fields and isinstance(v, list) else v
        for k, v in values.items()
    }
    return cls(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Parse a config file into section objects, applying overrides.

    ``overrides`` maps "section.key" to a value (already typed).
    """
    raw = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValidationError(f"{path}: config root must be a mapping")
        raw = loaded
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    merged = {k: dict(v or {}) for k, v in raw.items()}
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if section not in SECTIONS:
            raise ValidationError(f"unknown config section {section!r}")
        merged.setdefault(section, {})[key] = value

    out = {}
    for section, cls in SECTIONS.items():
        values = merged.get(section, {})
        if cls is dict:
            bad = set(values) - _DEGRADE_KEYS
            if bad:
                raise ValidationError(f"unknown keys in [degrade]: {sorted(bad)}")
            out[section] = {"pattern": "clean+noise", "backend": "surrogate",
                            "workers": 1, **values}
        else:
            out[section] = _build(cls, section, values)
    return out


def dump_effective_config(config: dict, path) -> None:
    doc = {
        section: (value if isinstance(value, dict) else asdict(value))
        for section, value in config.items()
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))
