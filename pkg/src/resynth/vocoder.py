"""Waveform synthesis from cleaned speech features.

The decoder is a lightweight iterative-refinement stack: starting from
seeded white noise, each pass subtracts a learned residual estimate and
renormalizes the gain to ``lambda_gain``.  The upsampling contract
(25 -> 100 frames/s via two shared single-channel transposed convs),
speaker FiLM, white-noise init, the G(y) gain rule, the extended
multi-period discriminator and the three-resolution STFT loss are the
load-bearing parts; the refinement network itself is kept small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .audio import AudioClip
from .cleaner import Film
from .errors import ValidationError
from .features import SpeakerEmbedding, SpeechFeatures

# fft size, hop, window length per resolution (Parallel WaveGAN setting)
DEFAULT_STFT_RESOLUTIONS = ((1024, 120, 600), (2048, 240, 1200), (512, 50, 240))

DEFAULT_MPD_PERIODS = (2, 3, 5, 7, 11, 13, 17, 19)


@dataclass
class VocoderConfig:
    D: int = 64
    Q: int = 16
    feature_rate_in: int = 25
    upsampled_rate: int = 100
    sample_rate: int = 24000
    ublock_factors: tuple = (5, 4, 3, 2, 2)
    n_refine_iterations: int = 5
    lambda_gain: float = 0.9
    mpd_periods: tuple = DEFAULT_MPD_PERIODS
    stft_loss_resolutions: tuple = DEFAULT_STFT_RESOLUTIONS
    channels: int = 48
    mpd_channels: int = 12

    def validate(self) -> None:
        product = int(np.prod(self.ublock_factors))
        if product * self.upsampled_rate != self.sample_rate:
            raise ValidationError(
                f"ublock factors {self.ublock_factors} give {product} samples/frame, "
                f"inconsistent with {self.sample_rate} Hz at {self.upsampled_rate} frames/s"
            )
        if self.upsampled_rate != 4 * self.feature_rate_in:
            raise ValidationError("upsampler contract is a 4x frame-rate increase")
        if not 0.0 < self.lambda_gain <= 1.0:
            raise ValidationError(f"lambda_gain out of (0, 1]: {self.lambda_gain}")
        if len(self.stft_loss_resolutions) != 3:
            raise ValidationError("expected three STFT loss resolutions")

    @property
    def samples_per_frame(self) -> int:
        return int(np.prod(self.ublock_factors))


def gain_normalize(y: np.ndarray, lambda_gain: float) -> np.ndarray:
    """G(y) = lambda * y / max|y|; scale-invariant and idempotent."""
    y = np.asarray(y, dtype=np.float64)
    peak = np.max(np.abs(y))
    if peak == 0.0:
        raise ValidationError("gain normalization of an all-zero waveform")
    return lambda_gain * y / peak


def _gain_normalize_t(y: torch.Tensor, lambda_gain: float) -> torch.Tensor:
    peak = y.abs().amax(dim=-1, keepdim=True)
    if torch.any(peak == 0):
        raise ValidationError("gain normalization of an all-zero waveform")
    return lambda_gain * y / peak


class FeatureUpsampler(nn.Module):
    """Two transposed convs (kernel 4, stride 2, ReLU) with a shared
    single-channel kernel applied to every feature channel: K -> 4K."""

    def __init__(self):
        super().__init__()
        self.stage1 = nn.ConvTranspose1d(1, 1, kernel_size=4, stride=2, padding=1)
        self.stage2 = nn.ConvTranspose1d(1, 1, kernel_size=4, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [B, K, D] -> [B, 4K, D]
        b, k, d = x.shape
        h = x.transpose(1, 2).reshape(b * d, 1, k)
        h = torch.relu(self.stage1(h))[..., : 2 * k]
        h = torch.relu(self.stage2(h))[..., : 4 * k]
        return h.reshape(b, d, 4 * k).transpose(1, 2)


class ConditionNet(nn.Module):
    """Upsamples conditioning features to sample rate through the
    configured stride factors."""

    def __init__(self, config: VocoderConfig):
        super().__init__()
        ch = config.channels
        self.pre = nn.Conv1d(config.D, ch, kernel_size=3, padding=1)
        self.stages = nn.ModuleList(
            [nn.ConvTranspose1d(ch, ch, kernel_size=2 * f, stride=f, padding=f // 2)
             for f in config.ublock_factors]
        )
        self.factors = config.ublock_factors

    def forward(self, s_up: torch.Tensor) -> torch.Tensor:
        # s_up: [B, 4K, D] -> [B, channels, T]
        h = self.pre(s_up.transpose(1, 2))
        for f, stage in zip(self.factors, self.stages):
            target = h.shape[-1] * f
            h = torch.relu(stage(h))[..., :target]
        return h


class RefineNet(nn.Module):
    """Estimates the residual to subtract from the current waveform."""

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(channels + 1, channels, kernel_size=5, padding=2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, kernel_size=5, dilation=4, padding=8),
            nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, kernel_size=5, dilation=16, padding=32),
            nn.LeakyReLU(0.2),
            nn.Conv1d(channels, 1, kernel_size=5, padding=2),
        )

    def forward(self, y: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([y, cond], dim=1))


class Vocoder(nn.Module):
    def __init__(self, config: VocoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.upsampler = FeatureUpsampler()
        self.film_spk = Film(config.D, config.Q)
        self.cond_net = ConditionNet(config)
        self.refine = RefineNet(config.channels)

    def upsample_features(self, s_hat: torch.Tensor) -> torch.Tensor:
        if s_hat.shape[1] < 1:
            raise ValidationError("no frames to upsample")
        return self.upsampler(s_hat)

    def condition_speaker(self, s_up: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        return self.film_spk(s_up, d)

    def forward(self, s_hat: torch.Tensor, d: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        """s_hat: [B, K, D], d: [B, Q], noise: [B, 1, T] -> waveform [B, 1, T]."""
        cfg = self.config
        s_up = self.condition_speaker(self.upsample_features(s_hat), d)
        cond = self.cond_net(s_up)
        t = s_hat.shape[1] * 4 * cfg.samples_per_frame
        if noise.shape[-1] != t or cond.shape[-1] != t:
            raise ValidationError(
                f"length mismatch: noise {noise.shape[-1]}, cond {cond.shape[-1]}, expected {t}"
            )
        y = noise
        for _ in range(cfg.n_refine_iterations):
            y = _gain_normalize_t(y - self.refine(y, cond), cfg.lambda_gain)
        return y


def upsample_features(s_hat: SpeechFeatures, model: Vocoder) -> SpeechFeatures:
    """Feature-rate 25 -> 100; learned, frame count exactly 4K."""
    if abs(s_hat.frame_rate - model.config.feature_rate_in) > 1e-9:
        raise ValidationError(
            f"expected {model.config.feature_rate_in} frames/s input, got {s_hat.frame_rate}"
        )
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        out = model.upsample_features(
            torch.as_tensor(s_hat.values, dtype=dtype).unsqueeze(0)
        )
    return SpeechFeatures(
        values=out.squeeze(0).double().numpy(),
        frame_rate=model.config.upsampled_rate,
        source_rate=s_hat.source_rate,
    )


def synthesize(
    model: Vocoder,
    s_hat: SpeechFeatures,
    d: SpeakerEmbedding,
    rng_seed: int,
) -> AudioClip:
    """Waveform from features; deterministic given (params, inputs, seed)."""
    cfg = model.config
    k = s_hat.n_frames
    t = k * 4 * cfg.samples_per_frame
    gen = torch.Generator().manual_seed(rng_seed & 0x7FFFFFFFFFFFFFFF)
    dtype = next(model.parameters()).dtype
    noise = torch.randn(1, 1, t, generator=gen, dtype=torch.float64).to(dtype)
    with torch.no_grad():
        y = model(
            torch.as_tensor(s_hat.values, dtype=dtype).unsqueeze(0),
            torch.as_tensor(d.values, dtype=dtype).unsqueeze(0),
            noise,
        )
    return AudioClip(
        samples=y.squeeze(0).squeeze(0).double().numpy(),
        sample_rate=cfg.sample_rate,
    )


# ---------------------------------------------------------------------------
# Discriminators and losses


class PeriodDiscriminator(nn.Module):
    def __init__(self, period: int, channels: int):
        super().__init__()
        self.period = period
        ch = channels
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(1, ch, (5, 1), (3, 1), padding=(2, 0)),
                nn.Conv2d(ch, 2 * ch, (5, 1), (3, 1), padding=(2, 0)),
                nn.Conv2d(2 * ch, 2 * ch, (5, 1), (3, 1), padding=(2, 0)),
            ]
        )
        self.post = nn.Conv2d(2 * ch, 1, (3, 1), padding=(1, 0))

    def forward(self, y: torch.Tensor):
        b, _, t = y.shape
        pad = (-t) % self.period
        if pad:
            y = torch.nn.functional.pad(y, (0, pad), mode="reflect")
        h = y.view(b, 1, -1, self.period)
        feats = []
        for conv in self.convs:
            h = torch.nn.functional.leaky_relu(conv(h), 0.1)
            feats.append(h)
        score = self.post(h)
        feats.append(score)
        return score, feats


class MultiPeriodDiscriminator(nn.Module):
    def __init__(self, config: VocoderConfig):
        super().__init__()
        self.branches = nn.ModuleList(
            [PeriodDiscriminator(p, config.mpd_channels) for p in config.mpd_periods]
        )

    def forward(self, y: torch.Tensor):
        return [branch(y) for branch in self.branches]


def stft_magnitude(y: torch.Tensor, fft_size: int, hop: int, win: int) -> torch.Tensor:
    window = torch.hann_window(win, dtype=y.dtype, device=y.device)
    spec = torch.stft(y, fft_size, hop_length=hop, win_length=win, window=window,
                      return_complex=True, center=True, pad_mode="constant")
    return spec.abs().clamp(min=1e-10)


def multi_resolution_stft_loss(
    y: torch.Tensor, s: torch.Tensor, resolutions=DEFAULT_STFT_RESOLUTIONS
) -> torch.Tensor:
    """Mean over resolutions of spectral convergence + log-magnitude L1."""
    if y.shape != s.shape:
        raise ValidationError(f"length mismatch: {tuple(y.shape)} vs {tuple(s.shape)}")
    total = 0.0
    for fft_size, hop, win in resolutions:
        my = stft_magnitude(y, fft_size, hop, win)
        ms = stft_magnitude(s, fft_size, hop, win)
        sc = torch.linalg.norm(ms - my) / torch.linalg.norm(ms).clamp(min=1e-10)
        mag = (ms.log() - my.log()).abs().mean()
        total = total + sc + mag
    return total / len(resolutions)


@dataclass
class VocoderLossReport:
    stft: float
    adversarial: float
    feature_matching: float
    total: float
    n_mpd_branches: int


def generator_adversarial_losses(mpd: MultiPeriodDiscriminator,
                                 y: torch.Tensor, s: torch.Tensor):
    """LSGAN generator loss + L1 feature matching against the MPD."""
    fake = mpd(y)
    with torch.no_grad():
        real = mpd(s)
    adv = 0.0
    fm = 0.0
    for (score_f, feats_f), (_, feats_r) in zip(fake, real):
        adv = adv + ((score_f - 1.0) ** 2).mean()
        for ff, fr in zip(feats_f, feats_r):
            fm = fm + (ff - fr).abs().mean()
    n = len(fake)
    return adv / n, fm / n


def discriminator_loss(mpd: MultiPeriodDiscriminator,
                       y_detached: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """LSGAN discriminator loss over all period branches."""
    loss = 0.0
    for score_f, _ in mpd(y_detached):
        loss = loss + (score_f**2).mean()
    for score_r, _ in mpd(s):
        loss = loss + ((score_r - 1.0) ** 2).mean()
    return loss / len(mpd.branches)


def vocoder_losses(y: AudioClip, s: AudioClip, model: Vocoder,
                   mpd: MultiPeriodDiscriminator | None = None) -> VocoderLossReport:
    """Objective report for a synthesized/reference waveform pair."""
    if y.samples.shape != s.samples.shape:
        raise ValidationError("waveform length mismatch")
    dtype = next(model.parameters()).dtype
    yt = torch.as_tensor(y.samples, dtype=dtype).unsqueeze(0)
    st = torch.as_tensor(s.samples, dtype=dtype).unsqueeze(0)
    stft = multi_resolution_stft_loss(yt, st, model.config.stft_loss_resolutions)
    if mpd is None:
        mpd = MultiPeriodDiscriminator(model.config)
    adv, fm = generator_adversarial_losses(mpd, yt.unsqueeze(1), st.unsqueeze(1))
    stft, adv, fm = (float(t.detach()) for t in (stft, adv, fm))
    return VocoderLossReport(
        stft=stft, adversarial=adv, feature_matching=fm,
        total=stft + adv + fm, n_mpd_branches=len(mpd.branches),
    )
