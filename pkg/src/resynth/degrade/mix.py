"""Additive-noise mixing at a requested SNR.

RMS levels are measured over active frames only (20 ms frames within
50 dB of the clip's loudest frame) so long silences do not skew the
gain.  The threshold is relative to the clip's own peak frame, which
makes the measurement scale-invariant and the achieved SNR exact.
"""

from __future__ import annotations

import numpy as np

from ..audio import AudioClip
from ..errors import ValidationError

_FRAME_MS = 20.0
_ACTIVE_THRESHOLD_DB = -50.0


def active_rms(samples: np.ndarray, sample_rate: int) -> float:
    """RMS over frames within 50 dB of the loudest 20 ms frame."""
    frame = max(1, int(sample_rate * _FRAME_MS / 1000.0))
    n = (samples.shape[0] // frame) * frame
    if n == 0:
        power = np.array([np.mean(samples**2)])
    else:
        power = np.mean(samples[:n].reshape(-1, frame) ** 2, axis=1)
    peak = power.max()
    if peak <= 0.0:
        return 0.0
    active = power[power > peak * 10.0 ** (_ACTIVE_THRESHOLD_DB / 10.0)]
    return float(np.sqrt(active.mean()))


def measure_snr_db(speech: np.ndarray, noise: np.ndarray, sample_rate: int) -> float:
    rs = active_rms(speech, sample_rate)
    rn = active_rms(noise, sample_rate)
    if rs <= 0.0 or rn <= 0.0:
        raise ValidationError("cannot measure SNR of a silent signal")
    return float(20.0 * np.log10(rs / rn))


def fit_noise_to_length(
    noise: np.ndarray, length: int, rng: np.random.Generator
) -> np.ndarray:
    """Randomly crop, or loop with a random start offset, to ``length``."""
    n = noise.shape[0]
    if n >= length:
        off = int(rng.integers(0, n - length + 1))
        return noise[off : off + length]
    off = int(rng.integers(0, n))
    reps = int(np.ceil((length + off) / n))
    return np.tile(noise, reps)[off : off + length]


def mix_at_snr(
    speech: AudioClip, noise: AudioClip, snr_db: float, rng_seed: int
) -> AudioClip:
    """Mix noise into speech so the active-frame SNR equals ``snr_db``."""
    if speech.sample_rate != noise.sample_rate:
        raise ValidationError("speech and noise sample rates differ")
    rng = np.random.default_rng(rng_seed)
    n = fit_noise_to_length(noise.samples, speech.samples.shape[0], rng)
    rms_s = active_rms(speech.samples, speech.sample_rate)
    rms_n = active_rms(n, noise.sample_rate)
    if rms_n <= 0.0:
        raise ValidationError("silent noise clip")
    if rms_s <= 0.0:
        raise ValidationError("silent speech clip")
    gain = (rms_s / rms_n) * 10.0 ** (-snr_db / 20.0)
    mixed = speech.samples + gain * n
    peak = np.max(np.abs(mixed))
    if peak > 1.0:
        mixed = mixed / peak
    return speech.with_samples(mixed)
