"""Bundled synthetic toy corpus so every test runs offline.

"Speech" is amplitude-modulated filtered noise with a per-speaker
spectral tilt and two per-speaker resonances; it carries enough
speaker- and content-like structure for the desk-scale trend tests
without shipping any real recordings.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import AudioClip, Manifest, ManifestEntry, save_wav

SAMPLE_RATE = 24000

_TRANSCRIPTS = [
    "the quick onyx goblin jumps over the lazy dwarf",
    "pack my box with five dozen liquor jugs",
    "how vexingly quick daft zebras jump",
    "sphinx of black quartz judge my vow",
    "bright vixens jump dozy fowl quack",
    "two driven jocks help fax my big quiz",
    "five quacking zephyrs jolt my wax bed",
    "the jay pig fox zebra and my wolves quack",
]


def _speaker_filter(freqs: np.ndarray, speaker_index: int) -> np.ndarray:
    # spectral tilt in dB/octave plus two resonances, all speaker-specific
    tilt_db_oct = -12.0 + 2.5 * speaker_index
    f0 = 300.0 + 150.0 * speaker_index
    f1 = 1600.0 + 450.0 * speaker_index
    ref = np.maximum(freqs, 50.0)
    tilt = 10.0 ** (tilt_db_oct * np.log2(ref / 500.0) / 20.0)
    res = 1.0 + 4.0 * np.exp(-0.5 * ((freqs - f0) / 120.0) ** 2)
    res = res + 2.5 * np.exp(-0.5 * ((freqs - f1) / 250.0) ** 2)
    band = (freqs > 80.0) & (freqs < 8000.0)
    return tilt * res * band


def make_utterance(speaker_index: int, seed: int, duration: float = 0.9) -> AudioClip:
    rng = np.random.default_rng(seed)
    n = int(duration * SAMPLE_RATE)
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    x = np.fft.irfft(spec * _speaker_filter(freqs, speaker_index), n=n)
    # syllable-like envelope, 4-6 "syllables" per second
    t = np.arange(n) / SAMPLE_RATE
    rate = 4.0 + 2.0 * rng.random()
    env = 0.35 + 0.65 * np.clip(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, 1.0)
    x = x * env
    x = 0.8 * x / np.max(np.abs(x))
    return AudioClip(samples=x, sample_rate=SAMPLE_RATE)


def make_noise_clip(kind: str, seed: int, duration: float = 2.0) -> AudioClip:
    rng = np.random.default_rng(seed)
    n = int(duration * SAMPLE_RATE)
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
        spec = spec / np.sqrt(np.maximum(freqs, 1.0))
        x = np.fft.irfft(spec, n=n)
    elif kind == "hum":
        t = np.arange(n) / SAMPLE_RATE
        x = 0.6 * np.sin(2 * np.pi * 50.0 * t) + 0.4 * rng.standard_normal(n)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = 0.5 * x / np.max(np.abs(x))
    return AudioClip(samples=x, sample_rate=SAMPLE_RATE)


def build_toy_corpus(
    out_dir, n_utterances: int = 8, n_speakers: int = 4, seed: int = 1234,
    duration: float = 0.9,
) -> tuple[Path, Path]:
    """Write clean wavs + manifest and a noise bank + manifest.

    Returns (clean_manifest_path, noise_manifest_path).
    """
    out_dir = Path(out_dir)
    clean_dir = out_dir / "clean"
    noise_dir = out_dir / "noise"
    clean_dir.mkdir(parents=True, exist_ok=True)
    noise_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for i in range(n_utterances):
        spk = i % n_speakers
        clip = make_utterance(spk, seed=seed + i, duration=duration)
        utt_id = f"utt{i:02d}"
        path = clean_dir / f"{utt_id}.wav"
        save_wav(clip, path)
        entries.append(
            ManifestEntry(
                utt_id=utt_id,
                audio_path=str(path),
                transcript=_TRANSCRIPTS[i % len(_TRANSCRIPTS)],
                speaker_id=f"spk{spk}",
            )
        )
    clean_manifest = out_dir / "clean_manifest.jsonl"
    Manifest(entries=entries).save(clean_manifest)

    noise_entries = []
    for j, kind in enumerate(("white", "pink", "hum")):
        clip = make_noise_clip(kind, seed=seed + 100 + j)
        path = noise_dir / f"{kind}.wav"
        save_wav(clip, path)
        noise_entries.append(ManifestEntry(utt_id=f"noise_{kind}", audio_path=str(path)))
    noise_manifest = out_dir / "noise_manifest.jsonl"
    Manifest(entries=noise_entries).save(noise_manifest)
    return clean_manifest, noise_manifest
