"""Training loops for the feature cleaner and the vocoder.

Both loops are single-threaded over parameters, fully seeded, and log
one JSON record per step.  Vocoder targets are gain-normalized with the
same G(y) rule the decoder applies, so the spectral losses compare
waveforms at a common level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import Manifest, load_wav, resample
from .checkpoint import load_cleaner, save_cleaner, save_vocoder
from .cleaner import (
    CleanerConfig,
    FeatureCleaner,
    cleaner_training_loss,
    crop_training_frames,
    loss_terms,
)
from .degrade.chain import PairedEntry
from .errors import ValidationError
from .features import (
    ExtractorSpec,
    SpeechFeatures,
    extract_speech_features,
    extract_speaker_embedding,
    extract_text_condition,
)
from .vocoder import (
    MultiPeriodDiscriminator,
    Vocoder,
    VocoderConfig,
    _gain_normalize_t,
    discriminator_loss,
    generator_adversarial_losses,
    multi_resolution_stft_loss,
)


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 4
    lr: float = 1e-3
    warmup_steps: int = 50
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final only
    crop_frames: int = 15
    adv_start_step: int = 10**9  # vocoder only; default: spectral losses only
    adv_weight: float = 1.0

    def validate(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ValidationError("steps and batch_size must be >= 1")


@dataclass
class _Utterance:
    utt_id: str
    clean: SpeechFeatures
    degraded: SpeechFeatures
    text: object
    spk: object
    clean_wave_24k: np.ndarray


def _load_pairs(entries: list[PairedEntry], spec: ExtractorSpec,
                min_frames: int) -> list[_Utterance]:
    if not entries:
        raise ValidationError("empty paired manifest")
    out = []
    for e in entries:
        clean = load_wav(e.clean_path, utt_id=e.utt_id)
        degraded = load_wav(e.degraded_path, utt_id=e.utt_id)
        s = extract_speech_features(clean, spec)
        x = extract_speech_features(degraded, spec)
        if min(s.n_frames, x.n_frames) < min_frames:
            continue
        out.append(
            _Utterance(
                utt_id=e.utt_id,
                clean=s,
                degraded=x,
                text=extract_text_condition(e.transcript or e.utt_id, spec),
                spk=extract_speaker_embedding(degraded, spec),
                clean_wave_24k=resample(clean, 24000).samples,
            )
        )
    if not out:
        raise ValidationError(f"no utterance has >= {min_frames} feature frames")
    return out


def _warmup_lr(base_lr: float, step: int, warmup: int) -> float:
    if warmup <= 0:
        return base_lr
    return base_lr * min(1.0, (step + 1) / warmup)


class LossLog:
    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._f = open(self.path, "w", encoding="utf-8")
        self.records = []

    def write(self, record: dict) -> None:
        for v in record.values():
            if isinstance(v, float) and not np.isfinite(v):
                raise ValidationError(f"non-finite loss at step {record.get('step')}: {record}")
        self.records.append(record)
        if self.path:
            self._f.write(json.dumps(record) + "\n")
            self._f.flush()

    def close(self):
        if self.path:
            self._f.close()


def train_cleaner(
    config: TrainConfig,
    entries: list[PairedEntry],
    extractor: ExtractorSpec,
    cleaner_config: CleanerConfig | None = None,
    out_dir=None,
) -> FeatureCleaner:
    """Fit the feature cleaner on (clean, degraded) feature pairs."""
    config.validate()
    torch.manual_seed(config.seed)
    data = _load_pairs(entries, extractor, config.crop_frames)
    cfg = cleaner_config or CleanerConfig(D=extractor.D, W=extractor.W, Q=extractor.Q)
    model = FeatureCleaner(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    out_dir = Path(out_dir) if out_dir else None
    log = LossLog(out_dir / "cleaner_loss.jsonl" if out_dir else None)

    for step in range(config.steps):
        for g in opt.param_groups:
            g["lr"] = _warmup_lr(config.lr, step, config.warmup_steps)
        idx = rng.integers(0, len(data), size=config.batch_size)
        s_list, x_list, e_list, d_list, masks = [], [], [], [], []
        max_m = 0
        for j, i in enumerate(idx):
            u = data[i]
            s_c, x_c, _ = crop_training_frames(
                u.clean, u.degraded, int(rng.integers(0, 2**63)), config.crop_frames
            )
            s_list.append(torch.as_tensor(s_c.values, dtype=torch.float32))
            x_list.append(torch.as_tensor(x_c.values, dtype=torch.float32))
            e_list.append(torch.as_tensor(u.text.values, dtype=torch.float32))
            d_list.append(torch.as_tensor(u.spk.values, dtype=torch.float32))
            max_m = max(max_m, e_list[-1].shape[0])
        e_pad = torch.zeros(len(idx), max_m, cfg.W)
        mask = torch.zeros(len(idx), max_m, dtype=torch.bool)
        for j, e in enumerate(e_list):
            e_pad[j, : e.shape[0]] = e
            mask[j, : e.shape[0]] = True
        s_b = torch.stack(s_list)
        x_b = torch.stack(x_list)
        d_b = torch.stack(d_list)

        outputs = model(x_b, e_pad, d_b, text_mask=mask)
        raw = cleaner_training_loss(s_b, outputs)
        loss = raw / s_b.numel()
        opt.zero_grad()
        loss.backward()
        opt.step()

        with torch.no_grad():
            l1, l2sq, sc = loss_terms(s_b, outputs[-1][1])
        log.write(
            {
                "step": step,
                "loss": float(loss.detach()),
                "l1": float(l1),
                "l2sq": float(l2sq),
                "sc": float(sc),
                "lr": opt.param_groups[0]["lr"],
            }
        )
        if out_dir and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save_cleaner(model, extractor, out_dir / f"cleaner_step{step + 1}.ckpt")

    model.eval()
    if out_dir:
        save_cleaner(model, extractor, out_dir / "cleaner.ckpt")
    log.close()
    return model


VOCODER_STAGES = ("pretrain_clean", "finetune_predicted")


def train_vocoder(
    config: TrainConfig,
    stage: str,
    entries: list[PairedEntry],
    extractor: ExtractorSpec,
    vocoder_config: VocoderConfig | None = None,
    cleaner_ckpt=None,
    init_model: Vocoder | None = None,
    out_dir=None,
) -> Vocoder:
    """Fit the vocoder: pretrain on clean features, or fine-tune on
    cleaner-predicted features (requires a cleaner checkpoint)."""
    config.validate()
    if stage not in VOCODER_STAGES:
        raise ValidationError(f"unknown stage {stage!r}, expected one of {VOCODER_STAGES}")
    if stage == "finetune_predicted" and cleaner_ckpt is None:
        raise ValidationError("finetune_predicted requires a cleaner checkpoint")
    torch.manual_seed(config.seed)
    data = _load_pairs(entries, extractor, config.crop_frames)
    cfg = vocoder_config or VocoderConfig(D=extractor.D, Q=extractor.Q)
    model = init_model if init_model is not None else Vocoder(cfg)
    cfg = model.config
    mpd = MultiPeriodDiscriminator(cfg)
    opt_g = torch.optim.Adam(model.parameters(), lr=config.lr)
    opt_d = torch.optim.Adam(mpd.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    out_dir = Path(out_dir) if out_dir else None
    log = LossLog(out_dir / f"vocoder_{stage}_loss.jsonl" if out_dir else None)

    if stage == "finetune_predicted":
        cleaner, _ = load_cleaner(cleaner_ckpt)
        if cleaner.config.D != cfg.D:
            raise ValidationError("cleaner and vocoder feature dims differ")
        from .cleaner import clean_features

        inputs = [
            clean_features(cleaner, u.degraded, u.text, u.spk) for u in data
        ]
        input_source = "cleaner_predicted"
    else:
        inputs = [u.clean for u in data]
        input_source = "clean_features"

    spf = 4 * cfg.samples_per_frame  # 24 kHz samples per 25 fps frame

    for step in range(config.steps):
        for opt in (opt_g, opt_d):
            for g in opt.param_groups:
                g["lr"] = _warmup_lr(config.lr, step, config.warmup_steps)
        i = int(rng.integers(0, len(data)))
        u, feats = data[i], inputs[i]
        k_avail = min(feats.n_frames, u.clean_wave_24k.shape[0] // spf)
        if k_avail < config.crop_frames:
            continue
        off = int(rng.integers(0, k_avail - config.crop_frames + 1))
        f = torch.as_tensor(
            feats.values[off : off + config.crop_frames], dtype=torch.float32
        ).unsqueeze(0)
        target = u.clean_wave_24k[off * spf : (off + config.crop_frames) * spf]
        target_t = torch.as_tensor(target, dtype=torch.float32).view(1, 1, -1)
        if float(target_t.abs().max()) == 0.0:
            continue
        target_t = _gain_normalize_t(target_t, cfg.lambda_gain)
        d_t = torch.as_tensor(u.spk.values, dtype=torch.float32).unsqueeze(0)
        gen = torch.Generator().manual_seed(int(rng.integers(0, 2**63)))
        noise = torch.randn(target_t.shape, generator=gen)

        y = model(f, d_t, noise)
        stft = multi_resolution_stft_loss(
            y.squeeze(1), target_t.squeeze(1), cfg.stft_loss_resolutions
        )
        record = {"step": step, "stage": stage, "input_source": input_source,
                  "stft": float(stft.detach())}
        loss = stft
        if step >= config.adv_start_step:
            adv, fm = generator_adversarial_losses(mpd, y, target_t)
            loss = loss + config.adv_weight * (adv + fm)
            record.update({"adv": float(adv.detach()), "fm": float(fm.detach())})
        opt_g.zero_grad()
        loss.backward()
        opt_g.step()

        if step >= config.adv_start_step:
            d_loss = discriminator_loss(mpd, y.detach(), target_t)
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()
            record["d_loss"] = float(d_loss.detach())
        record["loss"] = float(loss.detach())
        log.write(record)
        if out_dir and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save_vocoder(model, extractor, out_dir / f"vocoder_step{step + 1}.ckpt", mpd=mpd)

    model.eval()
    if out_dir:
        save_vocoder(model, extractor, out_dir / "vocoder.ckpt", mpd=mpd)
    log.close()
    return model
