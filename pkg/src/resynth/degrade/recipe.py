"""Sampling and (de)serialization of degradation recipes.

A recipe records every random draw needed to turn one clean clip into
one degraded clip, so a corpus can be rebuilt bit-exactly from its
recipe file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .codec import CODEC_TABLE, CodecSpec
from .rir import RoomSpec

PATTERNS = ("clean+noise", "+reverb", "+codec", "+reverb+codec")

SNR_RANGE_DB = (5.0, 30.0)
_MIN_SRC_MIC_SEPARATION = 0.5


@dataclass
class DegradationRecipe:
    utt_id: str
    noise_id: str
    snr_db: float
    room: RoomSpec | None
    codec: CodecSpec | None
    rng_seed: int
    backend: str = "surrogate"

    def validate(self) -> None:
        if not SNR_RANGE_DB[0] <= self.snr_db <= SNR_RANGE_DB[1]:
            raise ValidationError(f"snr_db {self.snr_db} outside {SNR_RANGE_DB}")
        if self.room is not None:
            self.room.validate()
        if self.codec is not None:
            self.codec.validate()

    @property
    def pattern(self) -> str:
        if self.room is None and self.codec is None:
            return "clean+noise"
        if self.room is not None and self.codec is None:
            return "+reverb"
        if self.room is None:
            return "+codec"
        return "+reverb+codec"

    def to_json(self) -> str:
        rec = asdict(self)
        return json.dumps(rec, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        rec = json.loads(text)
        room = rec.pop("room")
        codec = rec.pop("codec")
        return cls(
            room=RoomSpec(**{**room, "source_pos": tuple(room["source_pos"]),
                             "mic_pos": tuple(room["mic_pos"])}) if room else None,
            codec=CodecSpec(**codec) if codec else None,
            **rec,
        )


def sample_room(rng: np.random.Generator) -> RoomSpec:
    lx = float(rng.uniform(2.0, 10.0))
    ly = float(rng.uniform(2.0, 10.0))
    lz = float(rng.uniform(2.0, 5.0))
    rt60 = float(rng.uniform(0.2, 0.5))
    margin = RoomSpec.WALL_MARGIN
    while True:
        src = tuple(float(rng.uniform(margin, d - margin)) for d in (lx, ly, lz))
        mic = tuple(float(rng.uniform(margin, d - margin)) for d in (lx, ly, lz))
        if np.linalg.norm(np.subtract(src, mic)) >= _MIN_SRC_MIC_SEPARATION:
            return RoomSpec(lx, ly, lz, rt60, src, mic)


def sample_codec(rng: np.random.Generator) -> CodecSpec:
    names = list(CODEC_TABLE)
    probs = np.array([CODEC_TABLE[n][0] for n in names])
    name = str(rng.choice(names, p=probs / probs.sum()))
    bitrate = int(rng.choice(CODEC_TABLE[name][1]))
    return CodecSpec(codec=name, bitrate=bitrate)


def sample_recipe(
    rng_seed: int,
    pattern: str,
    utt_id: str = "",
    noise_ids: Sequence[str] | None = None,
    backend: str = "surrogate",
) -> DegradationRecipe:
    """Draw one recipe; deterministic given the seed."""
    if pattern not in PATTERNS:
        raise ValidationError(f"unknown pattern {pattern!r}, expected one of {PATTERNS}")
    rng = np.random.default_rng(rng_seed)
    noise_id = ""
    if noise_ids:
        noise_id = str(noise_ids[int(rng.integers(0, len(noise_ids)))])
    snr_db = float(rng.uniform(*SNR_RANGE_DB))
    room = sample_room(rng) if "reverb" in pattern else None
    codec = sample_codec(rng) if "codec" in pattern else None
    return DegradationRecipe(
        utt_id=utt_id,
        noise_id=noise_id,
        snr_db=snr_db,
        room=room,
        codec=codec,
        rng_seed=rng_seed,
        backend=backend,
    )


def save_recipes(recipes: Sequence[DegradationRecipe], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in recipes:
            f.write(r.to_json() + "\n")


def load_recipes(path) -> list[DegradationRecipe]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(DegradationRecipe.from_json(line))
    return out
