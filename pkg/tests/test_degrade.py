"""Codec surrogates, SNR mixing, recipes and the corpus builder."""

import numpy as np
import pytest

from resynth.audio import AudioClip, Manifest, load_wav
from resynth.degrade.chain import (
    TARGET_RATE,
    build_degraded_corpus,
    degrade,
    load_paired_manifest,
    utterance_seed,
)
from resynth.degrade.codec import (
    CODEC_TABLE,
    CodecSpec,
    SurrogateCodecBackend,
    a_law_compand,
    a_law_expand,
    apply_codec,
    get_backend,
    realign,
)
from resynth.degrade.mix import (
    active_rms,
    fit_noise_to_length,
    measure_snr_db,
    mix_at_snr,
)
from resynth.degrade.recipe import (
    PATTERNS,
    SNR_RANGE_DB,
    DegradationRecipe,
    load_recipes,
    sample_codec,
    sample_recipe,
    sample_room,
    save_recipes,
)
from resynth.errors import ValidationError


def _noise_clip(seed=0, dur=0.5, sr=TARGET_RATE, amp=0.3):
    rng = np.random.default_rng(seed)
    return AudioClip(samples=amp * rng.standard_normal(int(dur * sr)), sample_rate=sr)


class TestCodec:
    def test_table_probabilities_sum_to_one(self):
        assert sum(p for p, _ in CODEC_TABLE.values()) == pytest.approx(1.0)

    def test_spec_validation(self):
        CodecSpec("mp3", 32000).validate()
        with pytest.raises(ValidationError):
            CodecSpec("mp3", 48000).validate()
        with pytest.raises(ValidationError):
            CodecSpec("flac", 64000).validate()

    def test_a_law_companding_inverts(self):
        x = np.linspace(-1.0, 1.0, 2001)
        np.testing.assert_allclose(a_law_expand(a_law_compand(x)), x, atol=1e-12)

    def test_a_law_boosts_small_signals(self):
        assert a_law_compand(np.array([0.01]))[0] > 0.01

    def test_surrogate_lowpass_removes_high_band(self):
        # 16 kb/s mp3 cuts at 4 kHz: a 6 kHz tone should vanish
        sr = TARGET_RATE
        t = np.arange(sr // 2) / sr
        clip = AudioClip(samples=0.5 * np.sin(2 * np.pi * 6000 * t), sample_rate=sr)
        out = apply_codec(clip, CodecSpec("mp3", 16000), SurrogateCodecBackend())
        assert np.sqrt(np.mean(out.samples**2)) < 0.05 * np.sqrt(np.mean(clip.samples**2))

    def test_surrogate_keeps_low_band(self):
        sr = TARGET_RATE
        t = np.arange(sr // 2) / sr
        clip = AudioClip(samples=0.5 * np.sin(2 * np.pi * 1000 * t), sample_rate=sr)
        out = apply_codec(clip, CodecSpec("mp3", 16000), SurrogateCodecBackend())
        assert np.sqrt(np.mean((out.samples - clip.samples) ** 2)) < 0.02

    def test_surrogate_alaw_quantizes_to_grid(self):
        clip = _noise_clip()
        out = apply_codec(clip, CodecSpec("alaw", 64000), SurrogateCodecBackend())
        codes = a_law_compand(out.samples) * 128
        np.testing.assert_allclose(codes, np.round(codes), atol=1e-9)

    def test_surrogate_is_deterministic(self):
        clip = _noise_clip()
        spec = CodecSpec("opus", 32000)
        b = SurrogateCodecBackend()
        np.testing.assert_array_equal(b.apply(clip, spec).samples, b.apply(clip, spec).samples)

    def test_realign_recovers_priming_delay(self):
        rng = np.random.default_rng(1)
        ref = rng.standard_normal(4000)
        shifted = np.concatenate([np.zeros(37), ref])[:4000]
        out = realign(ref, shifted)
        assert out.shape[0] == ref.shape[0]
        assert np.corrcoef(out[:3900], ref[:3900])[0, 1] > 0.99

    def test_get_backend(self):
        assert get_backend("surrogate").name == "surrogate"
        assert get_backend("external").name == "external"
        with pytest.raises(ValidationError):
            get_backend("imaginary")


class TestMix:
    def test_active_rms_ignores_silence_padding(self):
        sr = TARGET_RATE
        rng = np.random.default_rng(0)
        speech = 0.3 * rng.standard_normal(sr // 2)
        padded = np.concatenate([speech, np.zeros(sr)])
        assert active_rms(padded, sr) == pytest.approx(active_rms(speech, sr), rel=1e-6)

    def test_active_rms_scale_invariant_selection(self):
        sr = TARGET_RATE
        rng = np.random.default_rng(0)
        x = 0.3 * rng.standard_normal(sr)
        assert active_rms(0.01 * x, sr) == pytest.approx(0.01 * active_rms(x, sr), rel=1e-9)

    def test_mix_hits_requested_snr(self):
        speech = _noise_clip(seed=1, amp=0.2)
        noise = _noise_clip(seed=2, amp=0.3)
        for snr in (5.0, 17.5, 30.0):
            mixed = mix_at_snr(speech, noise, snr, rng_seed=9)
            added = mixed.samples - speech.samples
            assert measure_snr_db(speech.samples, added, TARGET_RATE) == pytest.approx(
                snr, abs=1e-6
            )

    def test_mix_is_deterministic(self):
        speech = _noise_clip(seed=1)
        noise = _noise_clip(seed=2)
        m1 = mix_at_snr(speech, noise, 10.0, rng_seed=5)
        m2 = mix_at_snr(speech, noise, 10.0, rng_seed=5)
        np.testing.assert_array_equal(m1.samples, m2.samples)

    def test_fit_noise_crops_and_loops(self):
        rng = np.random.default_rng(0)
        noise = np.arange(100, dtype=np.float64)
        short = fit_noise_to_length(noise, 40, rng)
        assert short.shape == (40,)
        assert np.all(np.diff(short) == 1.0)
        long = fit_noise_to_length(noise, 250, np.random.default_rng(1))
        assert long.shape == (250,)

    def test_silent_inputs_rejected(self):
        speech = _noise_clip(seed=1)
        silent = AudioClip(samples=np.zeros(1000) + 0.0, sample_rate=TARGET_RATE)
        with pytest.raises(ValidationError):
            mix_at_snr(speech, silent, 10.0, rng_seed=0)
        with pytest.raises(ValidationError):
            mix_at_snr(silent, speech, 10.0, rng_seed=0)

    def test_rate_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            mix_at_snr(_noise_clip(sr=24000), _noise_clip(sr=16000), 10.0, rng_seed=0)


class TestRecipe:
    def test_patterns_control_components(self):
        for pattern in PATTERNS:
            r = sample_recipe(3, pattern, utt_id="u", noise_ids=["n1"])
            assert r.pattern == pattern
            assert ("reverb" in pattern) == (r.room is not None)
            assert ("codec" in pattern) == (r.codec is not None)
            assert SNR_RANGE_DB[0] <= r.snr_db <= SNR_RANGE_DB[1]
            r.validate()

    def test_unknown_pattern_rejected(self):
        with pytest.raises(ValidationError):
            sample_recipe(0, "clean+fog")

    def test_deterministic_given_seed(self):
        a = sample_recipe(42, "+reverb+codec", noise_ids=["n1", "n2"])
        b = sample_recipe(42, "+reverb+codec", noise_ids=["n1", "n2"])
        assert a.to_json() == b.to_json()

    def test_json_round_trip(self, tmp_path):
        recipes = [
            sample_recipe(i, PATTERNS[i % len(PATTERNS)], utt_id=f"u{i}", noise_ids=["n"])
            for i in range(8)
        ]
        path = tmp_path / "r.jsonl"
        save_recipes(recipes, path)
        back = load_recipes(path)
        assert [r.to_json() for r in back] == [r.to_json() for r in recipes]

    def test_sampled_rooms_are_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            room = sample_room(rng)
            room.validate()
            sep = np.linalg.norm(np.subtract(room.source_pos, room.mic_pos))
            assert sep >= 0.5

    def test_sampled_codecs_are_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            sample_codec(rng).validate()

    def test_snr_out_of_range_rejected(self):
        r = DegradationRecipe("u", "n", snr_db=40.0, room=None, codec=None, rng_seed=0)
        with pytest.raises(ValidationError):
            r.validate()


class TestCorpusBuilder:
    def test_outputs_and_manifest(self, toy_corpus, degraded_corpus):
        pairs = degraded_corpus.pairs
        clean = Manifest.load(toy_corpus.clean_manifest)
        assert len(pairs) == len(clean)
        for p in pairs:
            clip = load_wav(p.degraded_path)
            assert clip.sample_rate == TARGET_RATE
            assert p.transcript
        recipes = load_recipes(degraded_corpus.recipes)
        assert [r.utt_id for r in recipes] == [p.utt_id for p in pairs]

    def test_rebuild_is_byte_identical_and_worker_invariant(
        self, toy_corpus, degraded_corpus, tmp_path
    ):
        clean = Manifest.load(toy_corpus.clean_manifest)
        noise = Manifest.load(toy_corpus.noise_manifest)
        paired2, _ = build_degraded_corpus(
            clean, noise, "+reverb+codec", 7, tmp_path / "again", workers=3
        )
        pairs1 = degraded_corpus.pairs
        pairs2 = load_paired_manifest(paired2)
        for a, b in zip(pairs1, pairs2):
            assert a.utt_id == b.utt_id
            assert open(a.degraded_path, "rb").read() == open(b.degraded_path, "rb").read()

    def test_per_utterance_seeds_are_distinct(self):
        seeds = [utterance_seed(7, i) for i in range(100)]
        assert len(set(seeds)) == 100

    def test_degrade_rejects_missing_noise(self, toy_corpus):
        clean = Manifest.load(toy_corpus.clean_manifest)
        noise = Manifest.load(toy_corpus.noise_manifest)
        clip = load_wav(clean.entries[0].audio_path, utt_id="u")
        recipe = sample_recipe(0, "clean+noise", utt_id="u", noise_ids=[])
        with pytest.raises(ValidationError):
            degrade(clip, noise, recipe, get_backend("surrogate"))

    def test_empty_manifests_rejected(self, toy_corpus, tmp_path):
        noise = Manifest.load(toy_corpus.noise_manifest)
        with pytest.raises(ValidationError):
            build_degraded_corpus(Manifest(), noise, "clean+noise", 0, tmp_path / "x")
