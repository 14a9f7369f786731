"""Training loops, loss logging, and the evaluation harness."""

import json

import numpy as np
import pytest
import torch

from resynth.audio import AudioClip, Manifest, ManifestEntry, load_wav, save_wav
from resynth.checkpoint import load_cleaner, load_vocoder, save_cleaner, save_vocoder
from resynth.cleaner import CleanerConfig, FeatureCleaner
from resynth.errors import ValidationError
from resynth.evaluate import (
    EvalReport,
    evaluate,
    logmel_distance,
    restore,
    snr_proxy_db,
    word_error_rate,
)
from resynth.features import ExtractorSpec
from resynth.training import LossLog, TrainConfig, train_cleaner, train_vocoder
from resynth.vocoder import Vocoder, VocoderConfig

QUICK_VOCODER = VocoderConfig(channels=8)


@pytest.fixture(scope="module")
def quick_cleaner(degraded_corpus, extractor, tmp_path_factory):
    out = tmp_path_factory.mktemp("quick_cleaner")
    model = train_cleaner(
        TrainConfig(steps=12, batch_size=4, lr=1e-3, warmup_steps=4, seed=0),
        degraded_corpus.pairs,
        extractor,
        out_dir=out,
    )
    return model, out


class TestLossLog:
    def test_writes_jsonl(self, tmp_path):
        log = LossLog(tmp_path / "loss.jsonl")
        log.write({"step": 0, "loss": 1.5})
        log.write({"step": 1, "loss": 1.2})
        log.close()
        lines = (tmp_path / "loss.jsonl").read_text().strip().splitlines()
        assert [json.loads(l)["loss"] for l in lines] == [1.5, 1.2]

    def test_non_finite_loss_aborts(self, tmp_path):
        log = LossLog(tmp_path / "loss.jsonl")
        with pytest.raises(ValidationError):
            log.write({"step": 0, "loss": float("nan")})


class TestTrainCleaner:
    def test_loss_decreases_and_checkpoint_saved(self, quick_cleaner):
        model, out = quick_cleaner
        records = [json.loads(l) for l in (out / "cleaner_loss.jsonl").read_text().splitlines()]
        assert len(records) == 12
        assert records[-1]["loss"] < records[0]["loss"]
        assert all(np.isfinite(r["loss"]) for r in records)
        loaded, spec = load_cleaner(out / "cleaner.ckpt")
        for p1, p2 in zip(model.parameters(), loaded.parameters()):
            assert torch.equal(p1, p2)
        assert spec.D == 64

    def test_rejects_empty_manifest(self, extractor):
        with pytest.raises(ValidationError):
            train_cleaner(TrainConfig(steps=1), [], extractor)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(steps=0).validate()


class TestTrainVocoder:
    def test_pretrain_logs_input_source(self, degraded_corpus, extractor, tmp_path):
        train_vocoder(
            TrainConfig(steps=4, batch_size=1, lr=1e-4, warmup_steps=2, seed=0),
            "pretrain_clean",
            degraded_corpus.pairs,
            extractor,
            vocoder_config=QUICK_VOCODER,
            out_dir=tmp_path,
        )
        records = [
            json.loads(l)
            for l in (tmp_path / "vocoder_pretrain_clean_loss.jsonl").read_text().splitlines()
        ]
        assert all(r["input_source"] == "clean_features" for r in records)
        assert (tmp_path / "vocoder.ckpt").exists()

    def test_finetune_uses_cleaner_outputs(self, degraded_corpus, extractor,
                                           quick_cleaner, tmp_path):
        _, cleaner_out = quick_cleaner
        train_vocoder(
            TrainConfig(steps=3, batch_size=1, lr=1e-4, warmup_steps=1, seed=0),
            "finetune_predicted",
            degraded_corpus.pairs,
            extractor,
            vocoder_config=QUICK_VOCODER,
            cleaner_ckpt=cleaner_out / "cleaner.ckpt",
            out_dir=tmp_path,
        )
        records = [
            json.loads(l)
            for l in (tmp_path / "vocoder_finetune_predicted_loss.jsonl").read_text().splitlines()
        ]
        assert all(r["input_source"] == "cleaner_predicted" for r in records)

    def test_unknown_stage_rejected(self, degraded_corpus, extractor):
        with pytest.raises(ValidationError):
            train_vocoder(TrainConfig(steps=1), "overtrain",
                          degraded_corpus.pairs, extractor)

    def test_finetune_requires_cleaner(self, degraded_corpus, extractor):
        with pytest.raises(ValidationError):
            train_vocoder(TrainConfig(steps=1), "finetune_predicted",
                          degraded_corpus.pairs, extractor)

    def test_adversarial_terms_logged_when_enabled(self, degraded_corpus, extractor, tmp_path):
        train_vocoder(
            TrainConfig(steps=3, batch_size=1, lr=1e-4, warmup_steps=1, seed=0,
                        adv_start_step=1, adv_weight=0.1),
            "pretrain_clean",
            degraded_corpus.pairs,
            extractor,
            vocoder_config=QUICK_VOCODER,
            out_dir=tmp_path,
        )
        records = [
            json.loads(l)
            for l in (tmp_path / "vocoder_pretrain_clean_loss.jsonl").read_text().splitlines()
        ]
        assert "adv" not in records[0]
        assert {"adv", "fm", "d_loss"} <= set(records[-1])


class TestCheckpoints:
    def test_vocoder_round_trip(self, tmp_path, extractor):
        torch.manual_seed(0)
        model = Vocoder(QUICK_VOCODER)
        save_vocoder(model, extractor, tmp_path / "v.ckpt")
        loaded, spec = load_vocoder(tmp_path / "v.ckpt")
        assert loaded.config == model.config
        for p1, p2 in zip(model.parameters(), loaded.parameters()):
            assert torch.equal(p1, p2)

    def test_cleaner_round_trip(self, tmp_path, extractor):
        torch.manual_seed(0)
        model = FeatureCleaner(CleanerConfig())
        save_cleaner(model, extractor, tmp_path / "c.ckpt")
        loaded, _ = load_cleaner(tmp_path / "c.ckpt")
        assert loaded.config == model.config


class TestMetrics:
    def test_word_error_rate(self):
        assert word_error_rate("a b c", "a b c") == 0.0
        assert word_error_rate("a b c", "a x c") == pytest.approx(1 / 3)
        assert word_error_rate("a b", "a b c") == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            word_error_rate("", "a")

    def test_logmel_distance_zero_at_identity(self):
        rng = np.random.default_rng(0)
        clip = AudioClip(samples=0.3 * rng.standard_normal(24000), sample_rate=24000)
        assert logmel_distance(clip, clip) == 0.0

    def test_snr_proxy(self):
        rng = np.random.default_rng(0)
        a = AudioClip(samples=0.3 * rng.standard_normal(24000), sample_rate=24000)
        assert snr_proxy_db(a, a) == float("inf")
        noisy = a.with_samples(a.samples + 0.03 * rng.standard_normal(24000))
        assert 15.0 < snr_proxy_db(a, noisy) < 25.0


class TestEvaluate:
    def _manifests(self, toy_corpus, degraded_corpus):
        clean = Manifest.load(toy_corpus.clean_manifest)
        degraded = Manifest(entries=[
            ManifestEntry(p.utt_id, p.degraded_path) for p in degraded_corpus.pairs
        ])
        return clean, degraded

    def test_identity_restoration_scores_perfectly(self, toy_corpus, degraded_corpus):
        clean, degraded = self._manifests(toy_corpus, degraded_corpus)
        report = evaluate(clean, clean, degraded)
        assert report.aggregates["spk_similarity"]["mean"] == pytest.approx(1.0, abs=1e-9)
        assert report.aggregates["logmel_l2"]["mean"] == pytest.approx(0.0, abs=1e-9)

    def test_degraded_as_restored_matches_baseline(self, toy_corpus, degraded_corpus):
        clean, degraded = self._manifests(toy_corpus, degraded_corpus)
        report = evaluate(degraded, clean, degraded)
        for row in report.per_utt:
            assert row["spk_similarity"] == pytest.approx(row["spk_similarity_degraded"])
            assert row["logmel_l2"] == pytest.approx(row["logmel_l2_degraded"])

    def test_order_invariance(self, toy_corpus, degraded_corpus):
        clean, degraded = self._manifests(toy_corpus, degraded_corpus)
        r1 = evaluate(degraded, clean, degraded)
        shuffled = Manifest(entries=list(reversed(degraded.entries)))
        r2 = evaluate(shuffled, clean, degraded)
        for key, agg in r1.aggregates.items():
            assert abs(agg["mean"] - r2.aggregates[key]["mean"]) < 1e-12

    def test_misaligned_manifests_rejected(self, toy_corpus, degraded_corpus):
        clean, degraded = self._manifests(toy_corpus, degraded_corpus)
        short = Manifest(entries=degraded.entries[:-1])
        with pytest.raises(ValidationError):
            evaluate(short, clean, degraded)

    def test_asr_hook_drives_wer(self, toy_corpus, degraded_corpus):
        clean, degraded = self._manifests(toy_corpus, degraded_corpus)
        report = evaluate(clean, clean, degraded,
                          asr_hook=lambda path, ref: ref)
        assert report.wer == 0.0

    def test_report_serialization(self):
        report = EvalReport(per_utt=[{"utt_id": "u", "m": 1.0}],
                            aggregates={"m": {"mean": 1.0, "ci95": 0.0, "n": 1}})
        parsed = json.loads(report.to_json())
        assert parsed["aggregates"]["m"]["mean"] == 1.0
        assert "m" in report.table()


class TestRestore:
    def test_dim_mismatch_between_checkpoints(self, tmp_path, degraded_corpus):
        spec = ExtractorSpec()
        torch.manual_seed(0)
        save_cleaner(FeatureCleaner(CleanerConfig()), spec, tmp_path / "c.ckpt")
        save_vocoder(Vocoder(VocoderConfig(D=32, channels=8)), spec, tmp_path / "v.ckpt")
        clip = load_wav(degraded_corpus.pairs[0].degraded_path, utt_id="u")
        with pytest.raises(ValidationError):
            restore(clip, "hello", tmp_path / "c.ckpt", tmp_path / "v.ckpt")

    def test_untrained_round_trip_contracts(self, tmp_path, degraded_corpus):
        spec = ExtractorSpec()
        torch.manual_seed(0)
        save_cleaner(FeatureCleaner(CleanerConfig()), spec, tmp_path / "c.ckpt")
        save_vocoder(Vocoder(QUICK_VOCODER), spec, tmp_path / "v.ckpt")
        p = degraded_corpus.pairs[0]
        clip = load_wav(p.degraded_path, utt_id=p.utt_id)
        y1 = restore(clip, p.transcript, tmp_path / "c.ckpt", tmp_path / "v.ckpt", rng_seed=5)
        y2 = restore(clip, p.transcript, tmp_path / "c.ckpt", tmp_path / "v.ckpt", rng_seed=5)
        assert y1.sample_rate == 24000
        assert y1.samples.shape[0] % (4 * QUICK_VOCODER.samples_per_frame) == 0
        np.testing.assert_array_equal(y1.samples, y2.samples)
