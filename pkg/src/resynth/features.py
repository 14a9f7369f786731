"""Feature extraction: deterministic surrogates for the three frozen
upstream models, plus a file-based interface for dropping in real ones.

Surrogates (all seeded, no global RNG state):
  * speech features  — 16 kHz log-mel -> fixed random linear projection
    to D -> two stride-2 average pools down to 25 frames/s -> tanh.
    Frame count law: K = T16 // 640 (T16 samples at 16 kHz).
  * text condition   — character tokenizer, seeded embedding table plus
    sinusoidal positions.
  * speaker embedding — utterance-level mel mean/std per band, seeded
    random projection to Q, L2-normalized.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, MelConfig, log_mel, resample
from .errors import FormatError, ValidationError

SPEECH_FRAME_RATE = 25
_SOURCE_RATE = 16000
_HOP_16K = 160  # 10 ms at 16 kHz; two x2 pools give 25 frames/s
_SAMPLES_PER_FRAME_16K = 4 * _HOP_16K

_MEL_16K = MelConfig(n_mels=80, window_ms=25.0, hop_ms=10.0, fft_size=512,
                     f_min=20.0, f_max=7600.0)

_CHAR_TABLE_SIZE = 1024


@dataclass
class SpeechFeatures:
    values: np.ndarray  # [K, D]
    frame_rate: float = SPEECH_FRAME_RATE
    source_rate: int = _SOURCE_RATE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError("SpeechFeatures.values must be [K, D]")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("non-finite feature values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class TextCondition:
    values: np.ndarray  # [M, W]
    token_ids: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        if self.values.shape[0] != self.token_ids.shape[0] or self.values.shape[0] < 1:
            raise ValidationError("token_ids and values row counts must match, M >= 1")


@dataclass
class SpeakerEmbedding:
    values: np.ndarray  # [Q]
    unit_norm: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValidationError("SpeakerEmbedding.values must be a vector")
        if self.unit_norm and abs(np.linalg.norm(self.values) - 1.0) > 1e-6:
            raise ValidationError("embedding flagged unit-norm but is not")


@dataclass
class ExtractorSpec:
    """Dimensions and seed for the extractor trio.

    Full-scale reference dims are D=1024, W=512, Q=256; the desk-scale
    defaults below keep every test CPU-cheap.
    """

    kind: str = "surrogate"  # "surrogate" | "external"
    D: int = 64
    W: int = 32
    Q: int = 16
    rng_seed: int = 0
    external_dir: str | None = None


def _projection(seed: int, tag: str, shape) -> np.ndarray:
    tag_key = zlib.crc32(tag.encode("utf-8"))
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag_key]))
    return rng.standard_normal(shape) / np.sqrt(shape[-1])


def extract_speech_features(clip: AudioClip, spec: ExtractorSpec) -> SpeechFeatures:
    """Frame-level speech features at 25 frames/s (0.6 s -> 15 frames)."""
    if spec.kind == "external":
        return read_external_speech(clip, spec)
    x16 = resample(clip, _SOURCE_RATE)
    t16 = x16.samples.shape[0]
    k = t16 // _SAMPLES_PER_FRAME_16K
    if k < 1:
        raise ValidationError(f"clip too short for one feature frame ({t16} samples)")
    mel = log_mel(x16, _MEL_16K)[: t16 // _HOP_16K]
    proj = _projection(spec.rng_seed, "speech", (_MEL_16K.n_mels, spec.D))
    # fixed standardization keeps the tanh below out of saturation
    h = ((mel - 0.5) / 3.0) @ proj
    for _ in range(2):  # two stride-2 average pools: 100 -> 50 -> 25 fps
        n = (h.shape[0] // 2) * 2
        h = 0.5 * (h[0:n:2] + h[1:n:2])
    return SpeechFeatures(values=np.tanh(h[:k]))


def speech_frame_count(n_samples_16k: int) -> int:
    return n_samples_16k // _SAMPLES_PER_FRAME_16K


def tokenize(transcript: str) -> np.ndarray:
    """Character tokenizer: one token per unicode codepoint."""
    if not transcript:
        raise ValidationError("empty transcript")
    return np.array([ord(c) % _CHAR_TABLE_SIZE for c in transcript], dtype=np.int64)


def extract_text_condition(transcript: str, spec: ExtractorSpec) -> TextCondition:
    """Token-level text features: seeded embedding table + positions."""
    ids = tokenize(transcript)
    table = _projection(spec.rng_seed, "text", (_CHAR_TABLE_SIZE, spec.W))
    emb = table[ids] * np.sqrt(spec.W)
    pos = np.arange(ids.shape[0])[:, None]
    dim = np.arange(spec.W)[None, :]
    angles = pos / (10000.0 ** (2 * (dim // 2) / spec.W))
    pe = np.where(dim % 2 == 0, np.sin(angles), np.cos(angles))
    return TextCondition(values=emb + 0.1 * pe, token_ids=ids)


def extract_speaker_embedding(clip: AudioClip, spec: ExtractorSpec) -> SpeakerEmbedding:
    """Unit-norm utterance-level embedding from mel statistics."""
    if clip.duration < 0.5:
        raise ValidationError(f"clip too short for speaker embedding ({clip.duration:.2f} s)")
    x16 = resample(clip, _SOURCE_RATE)
    mel = log_mel(x16, _MEL_16K)
    stats = np.concatenate([mel.mean(axis=0), mel.std(axis=0)])
    proj = _projection(spec.rng_seed, "speaker", (stats.shape[0], spec.Q))
    v = stats @ proj
    norm = np.linalg.norm(v)
    if norm <= 0.0:
        raise ValidationError("degenerate speaker statistics")
    return SpeakerEmbedding(values=v / norm)


def cosine_similarity(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    na, nb = np.linalg.norm(a.values), np.linalg.norm(b.values)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity of a zero vector")
    return float(np.dot(a.values, b.values) / (na * nb))


# ---------------------------------------------------------------------------
# Tensor exchange files: magic, dtype tag, rank, dims, row-major payload.
# Everything little-endian; the only dtype is float32 (tag 0).

_MAGIC = b"RSTENS1\x00"
_DTYPE_F32 = 0


def write_tensor(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<BB", _DTYPE_F32, a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[: len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{path}: bad tensor magic")
    dtype, rank = struct.unpack_from("<BB", data, len(_MAGIC))
    if dtype != _DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype tag {dtype}")
    dims = struct.unpack_from(f"<{rank}I", data, len(_MAGIC) + 2)
    payload = data[len(_MAGIC) + 2 + 4 * rank :]
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload size {len(payload)} != {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)


def read_external_speech(clip: AudioClip, spec: ExtractorSpec) -> SpeechFeatures:
    """Load externally computed features for ``clip.utt_id`` from disk."""
    if not spec.external_dir:
        raise ValidationError("external extractor needs external_dir")
    path = Path(spec.external_dir) / f"{clip.utt_id}.speech.tensor"
    if not path.exists():
        raise ValidationError(f"no external features for {clip.utt_id!r} at {path}")
    values = read_tensor(path)
    if values.ndim != 2 or values.shape[1] != spec.D:
        raise ValidationError(f"external features for {clip.utt_id!r} have shape {values.shape}")
    return SpeechFeatures(values=values)
