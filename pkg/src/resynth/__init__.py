"""Desk-scale speech restoration: degradation synthesis, conditioned
feature cleaning, and vocoder re-synthesis, with training and
evaluation harnesses."""

from .audio import AudioClip, Manifest, ManifestEntry, MelConfig, load_wav, log_mel, resample, save_wav
from .errors import BackendError, FormatError, ResynthError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "BackendError",
    "FormatError",
    "Manifest",
    "ManifestEntry",
    "MelConfig",
    "ResynthError",
    "ValidationError",
    "load_wav",
    "log_mel",
    "resample",
    "save_wav",
]
