"""Codec artifact simulation.

Two pluggable backends:

  * ``SurrogateCodecBackend`` — deterministic built-in approximation:
    a bitrate-dependent brickwall low-pass plus companded quantization
    (exact G.711 A-law for the A-law codec).  Tests and default corpus
    builds use this; nothing in the package shells out to real encoders.
  * ``ExternalCodecBackend`` — invokes a real encoder/decoder via
    ffmpeg when available; output is realigned to the input by
    cross-correlation so length and timing match.
"""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import AudioClip
from ..errors import BackendError, ValidationError

# codec -> (selection probability, allowed bitrates in bit/s)
CODEC_TABLE: dict[str, tuple[float, tuple[int, ...]]] = {
    "mp3": (0.5, (16000, 32000, 64000, 128000)),
    "vorbis": (0.075, (32000, 48000, 64000)),
    "alaw": (0.025, (64000,)),
    "amr_wb": (
        0.025,
        (6600, 8850, 12650, 14250, 15850, 18250, 19850, 23050, 23850),
    ),
    "opus": (0.375, (8000, 16000, 32000, 64000, 128000)),
}

# surrogate low-pass cutoff (Hz) per codec and bitrate; AMR-WB is a
# wideband codec, so its cutoff is the 7 kHz band edge at every bitrate
_SURROGATE_CUTOFF: dict[str, dict[int, float]] = {
    "mp3": {16000: 4000.0, 32000: 7000.0, 64000: 10000.0, 128000: 11000.0},
    "vorbis": {32000: 6500.0, 48000: 8500.0, 64000: 10000.0},
    "opus": {8000: 3500.0, 16000: 6000.0, 32000: 9000.0, 64000: 10500.0, 128000: 11500.0},
    "amr_wb": {b: 7000.0 for b in CODEC_TABLE["amr_wb"][1]},
}


@dataclass(frozen=True)
class CodecSpec:
    codec: str
    bitrate: int

    def validate(self) -> None:
        if self.codec not in CODEC_TABLE:
            raise ValidationError(f"unknown codec {self.codec!r}")
        allowed = CODEC_TABLE[self.codec][1]
        if self.bitrate not in allowed:
            raise ValidationError(
                f"bitrate {self.bitrate} not allowed for {self.codec} {allowed}"
            )


def a_law_compand(x: np.ndarray, a: float = 87.6) -> np.ndarray:
    ax = np.abs(x)
    den = 1.0 + np.log(a)
    y = np.where(ax < 1.0 / a, a * ax / den, (1.0 + np.log(np.maximum(a * ax, 1e-30))) / den)
    return np.sign(x) * y


def a_law_expand(y: np.ndarray, a: float = 87.6) -> np.ndarray:
    ay = np.abs(y)
    den = 1.0 + np.log(a)
    x = np.where(ay < 1.0 / den, ay * den / a, np.exp(ay * den - 1.0) / a)
    return np.sign(y) * x


def _brickwall_lowpass(x: np.ndarray, sample_rate: int, cutoff: float) -> np.ndarray:
    if cutoff >= sample_rate / 2:
        return x
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.shape[0], d=1.0 / sample_rate)
    spec[freqs > cutoff] = 0.0
    return np.fft.irfft(spec, n=x.shape[0])


def realign(reference: np.ndarray, degraded: np.ndarray) -> np.ndarray:
    """Shift ``degraded`` to maximize cross-correlation with ``reference``
    and pad/trim it to the reference length (codec priming-delay fix)."""
    n = reference.shape[0]
    m = degraded.shape[0]
    size = int(2 ** np.ceil(np.log2(n + m)))
    corr = np.fft.irfft(
        np.fft.rfft(reference, size) * np.conj(np.fft.rfft(degraded, size)), size
    )
    lags = np.concatenate([np.arange(size // 2), np.arange(-size // 2, 0)])
    lag = int(lags[np.argmax(corr)])
    if lag >= 0:
        out = np.concatenate([np.zeros(lag), degraded])
    else:
        out = degraded[-lag:]
    if out.shape[0] < n:
        out = np.pad(out, (0, n - out.shape[0]))
    return out[:n]


class SurrogateCodecBackend:
    """Built-in deterministic codec approximation (no external tools)."""

    name = "surrogate"

    def apply(self, clip: AudioClip, spec: CodecSpec) -> AudioClip:
        x = clip.samples
        if spec.codec == "alaw":
            levels = 128  # 8-bit signed companded code
            y = a_law_compand(x)
            y = np.round(y * levels) / levels
            y = a_law_expand(y)
        else:
            cutoff = _SURROGATE_CUTOFF[spec.codec][spec.bitrate]
            y = _brickwall_lowpass(x, clip.sample_rate, cutoff)
            # mild quantization noise, heavier at low bitrates
            bits = np.clip(8.0 + 4.0 * np.log2(spec.bitrate / 8000.0), 8.0, 15.0)
            step = 2.0 ** (1.0 - bits)
            y = np.round(y / step) * step
        return clip.with_samples(y)


class ExternalCodecBackend:
    """Round-trips audio through a real encoder via ffmpeg."""

    name = "external"

    _FFMPEG_CODECS = {
        "mp3": ("libmp3lame", "mp3"),
        "vorbis": ("libvorbis", "ogg"),
        "alaw": ("pcm_alaw", "wav"),
        "amr_wb": ("libvo_amrwbenc", "amr"),
        "opus": ("libopus", "ogg"),
    }

    def __init__(self, ffmpeg: str = "ffmpeg"):
        self.ffmpeg = ffmpeg

    def apply(self, clip: AudioClip, spec: CodecSpec) -> AudioClip:
        from ..audio import load_wav, save_wav

        if shutil.which(self.ffmpeg) is None:
            raise BackendError(f"{self.ffmpeg} not found for codec {spec.codec}")
        encoder, container = self._FFMPEG_CODECS[spec.codec]
        with tempfile.TemporaryDirectory() as tmp:
            src = Path(tmp) / "in.wav"
            enc = Path(tmp) / f"enc.{container}"
            dec = Path(tmp) / "out.wav"
            save_wav(clip, src)
            for args in (
                [self.ffmpeg, "-y", "-i", str(src), "-c:a", encoder,
                 "-b:a", str(spec.bitrate), str(enc)],
                [self.ffmpeg, "-y", "-i", str(enc), "-ar", str(clip.sample_rate),
                 "-c:a", "pcm_s16le", str(dec)],
            ):
                proc = subprocess.run(args, capture_output=True)
                if proc.returncode != 0:
                    raise BackendError(
                        f"ffmpeg failed for {spec.codec}: {proc.stderr.decode(errors='replace')[-300:]}"
                    )
            out = load_wav(dec, utt_id=clip.utt_id)
        y = realign(clip.samples, out.samples)
        return clip.with_samples(y)


def apply_codec(clip: AudioClip, spec: CodecSpec, backend) -> AudioClip:
    """Apply codec artifacts; never silently passes audio through."""
    spec.validate()
    return backend.apply(clip, spec)


def get_backend(name: str):
    if name == "surrogate":
        return SurrogateCodecBackend()
    if name == "external":
        return ExternalCodecBackend()
    raise ValidationError(f"unknown codec backend {name!r}")
