"""The full degradation chain and the paired-corpus builder.

Processing order is fixed as reverberate -> mix noise -> codec (sound
travels through the room before it reaches the noisy recording chain,
which is then encoded).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import AudioClip, Manifest, load_wav, resample, save_wav
from ..errors import ValidationError
from .codec import apply_codec, get_backend
from .mix import mix_at_snr
from .recipe import DegradationRecipe, sample_recipe, save_recipes
from .rir import apply_rir, generate_rir

TARGET_RATE = 24000


@dataclass
class PairedEntry:
    utt_id: str
    clean_path: str
    degraded_path: str
    transcript: str = ""
    speaker_id: str = ""


def load_noise(noise_bank: Manifest, noise_id: str, base_dir=None) -> AudioClip:
    entry = noise_bank.by_id(noise_id)
    path = Path(entry.audio_path)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return resample(load_wav(path, utt_id=noise_id), TARGET_RATE)


def degrade(
    clean: AudioClip,
    noise_bank: Manifest,
    recipe: DegradationRecipe,
    backend,
    noise_base_dir=None,
) -> AudioClip:
    """Apply one recipe to one clean clip; pure in (audio, bank, recipe)."""
    recipe.validate()
    x = resample(clean, TARGET_RATE)
    if recipe.room is not None:
        rir = generate_rir(recipe.room, TARGET_RATE, recipe.rng_seed)
        x = apply_rir(x, rir)
    if not recipe.noise_id:
        raise ValidationError("recipe has no noise_id")
    noise = load_noise(noise_bank, recipe.noise_id, noise_base_dir)
    x = mix_at_snr(x, noise, recipe.snr_db, recipe.rng_seed)
    if recipe.codec is not None:
        x = apply_codec(x, recipe.codec, backend)
    return x


def utterance_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def build_degraded_corpus(
    clean_manifest: Manifest,
    noise_manifest: Manifest,
    pattern: str,
    master_seed: int,
    out_dir,
    backend_name: str = "surrogate",
    workers: int = 1,
) -> tuple[Path, Path]:
    """Degrade every utterance; returns (paired manifest path, recipe path).

    Per-utterance seeds derive from (master seed, utterance index), so the
    output is byte-identical regardless of worker count or scheduling.
    """
    if len(clean_manifest) == 0:
        raise ValidationError("empty clean manifest")
    if len(noise_manifest) == 0:
        raise ValidationError("empty noise manifest")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "degraded"
    wav_dir.mkdir(parents=True, exist_ok=True)
    backend = get_backend(backend_name)
    noise_ids = [e.utt_id for e in noise_manifest]

    recipes = [
        sample_recipe(
            utterance_seed(master_seed, i),
            pattern,
            utt_id=entry.utt_id,
            noise_ids=noise_ids,
            backend=backend_name,
        )
        for i, entry in enumerate(clean_manifest)
    ]

    def run_one(args):
        entry, recipe = args
        clean = load_wav(entry.audio_path, utt_id=entry.utt_id)
        degraded = degrade(clean, noise_manifest, recipe, backend)
        path = wav_dir / f"{entry.utt_id}.wav"
        save_wav(degraded, path)
        return PairedEntry(
            utt_id=entry.utt_id,
            clean_path=str(entry.audio_path),
            degraded_path=str(path),
            transcript=entry.transcript,
            speaker_id=entry.speaker_id,
        )

    jobs = list(zip(clean_manifest, recipes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(run_one, jobs))
    else:
        pairs = [run_one(j) for j in jobs]

    paired_path = out_dir / "paired_manifest.jsonl"
    with open(paired_path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p.__dict__, ensure_ascii=False) + "\n")
    recipe_path = out_dir / "recipes.jsonl"
    save_recipes(recipes, recipe_path)
    return paired_path, recipe_path


def load_paired_manifest(path) -> list[PairedEntry]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(PairedEntry(**json.loads(line)))
    return out
