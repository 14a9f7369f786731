"""Audio I/O, resampling, spectral utilities and corpus manifests.

Conventions fixed here and used everywhere else:
  * WAV ingest is limited to mono PCM-16 and 32-bit-float RIFF files.
  * ``save_wav`` always writes PCM-16, so a save/load round trip is exact
    up to one quantization step (2**-15).
  * log-mel frames use a center-padded STFT with frame count
    ``1 + T // hop_samples``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import FormatError, ValidationError

PIPELINE_RATES = (16000, 24000)

LOG_MEL_FLOOR = 1e-5


@dataclass
class AudioClip:
    """A mono waveform with its sample rate and identity metadata."""

    samples: np.ndarray  # float, nominally within [-1, 1]
    sample_rate: int
    utt_id: str = ""
    speaker_id: str | None = None
    transcript: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.shape[0] < 1:
            raise ValidationError("AudioClip.samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise ValidationError(f"bad sample rate {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def with_samples(self, samples, sample_rate=None) -> "AudioClip":
        return replace(
            self,
            samples=np.asarray(samples, dtype=np.float64),
            sample_rate=self.sample_rate if sample_rate is None else sample_rate,
        )


@dataclass
class ManifestEntry:
    utt_id: str
    audio_path: str
    transcript: str = ""
    speaker_id: str = ""


@dataclass
class Manifest:
    """An ordered collection of utterance records with unique ids."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.utt_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValidationError("duplicate utt_id in manifest")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self, utt_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.utt_id == utt_id:
                return e
        raise KeyError(utt_id)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(json.dumps(e.__dict__, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        entries = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries.append(ManifestEntry(**rec))
        return cls(entries=entries)


@dataclass
class MelConfig:
    n_mels: int = 128
    window_ms: float = 50.0
    hop_ms: float = 12.5
    fft_size: int = 2048
    f_min: float = 20.0
    f_max: float = 12000.0

    def validate(self, sample_rate: int) -> None:
        if not (0 <= self.f_min < self.f_max <= sample_rate / 2):
            raise ValidationError(
                f"need 0 <= f_min < f_max <= nyquist, got "
                f"({self.f_min}, {self.f_max}) at {sample_rate} Hz"
            )

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))


# ---------------------------------------------------------------------------
# WAV I/O (minimal RIFF parser; PCM-16 and IEEE float-32 only)

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def load_wav(path, utt_id: str = "") -> AudioClip:
    """Read a mono PCM-16 or float-32 WAV file, normalized to [-1, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = data[pos : pos + 4], struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            if len(body) < size:
                raise FormatError(f"{path}: truncated data chunk")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate = struct.unpack_from("<HHI", fmt, 0)
    bits = struct.unpack_from("<H", fmt, 14)[0]
    if audio_format == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        audio_format = struct.unpack_from("<H", fmt, 24)[0]
    if channels != 1:
        raise FormatError(f"{path}: only mono supported, got {channels} channels")
    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits})"
        )
    if samples.size < 1:
        raise FormatError(f"{path}: empty data chunk")
    return AudioClip(samples=samples, sample_rate=int(sample_rate), utt_id=utt_id)


def save_wav(clip: AudioClip, path) -> None:
    """Write a clip as mono PCM-16; raises on non-finite samples."""
    if not np.all(np.isfinite(clip.samples)):
        raise ValidationError("non-finite samples")
    x = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# Resampling and log-mel


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling (polyphase); identity when rates match."""
    if target_rate not in PIPELINE_RATES:
        raise ValidationError(f"target_rate must be one of {PIPELINE_RATES}")
    if clip.sample_rate == target_rate:
        return clip
    ratio = Fraction(target_rate, clip.sample_rate)
    y = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    n_out = int(round(clip.samples.shape[0] * target_rate / clip.sample_rate))
    if y.shape[0] < n_out:
        y = np.pad(y, (0, n_out - y.shape[0]))
    return clip.with_samples(y[:n_out], sample_rate=target_rate)


def mel_filterbank(sample_rate: int, cfg: MelConfig) -> np.ndarray:
    """Triangular HTK-mel filters, shape [n_mels, fft_size // 2 + 1]."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / cfg.fft_size
    edges = mel_to_hz(
        np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    )
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - freqs) / max(hi - ctr, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def stft_power(x: np.ndarray, sample_rate: int, cfg: MelConfig) -> np.ndarray:
    """Center-padded power spectrogram, [frames, fft_size // 2 + 1]."""
    win = cfg.window_samples(sample_rate)
    hop = cfg.hop_samples(sample_rate)
    if x.shape[0] < win:
        raise ValidationError(f"clip shorter than one window ({x.shape[0]} < {win})")
    n_frames = 1 + x.shape[0] // hop
    pad = win // 2
    xp = np.pad(x, (pad, pad + n_frames * hop))
    window = np.hanning(win)
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = xp[idx] * window[None, :]
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return np.abs(spec) ** 2


def log_mel(clip: AudioClip, cfg: MelConfig) -> np.ndarray:
    """Log mel-power spectrogram, [frames, n_mels]; deterministic."""
    cfg.validate(clip.sample_rate)
    power = stft_power(clip.samples, clip.sample_rate, cfg)
    fb = mel_filterbank(clip.sample_rate, cfg)
    return np.log(power @ fb.T + LOG_MEL_FLOOR)
