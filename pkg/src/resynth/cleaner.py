"""Feature cleaner: FiLM conditioning, cross-attention + dilated
Conformer-style blocks, a convolutional Post-Net, and shared-parameter
iterative refinement with a three-term loss.

Shapes follow the feature modules: speech features [K, D], text
condition [M, W], speaker embedding [Q].  The network runs batch-first
internally; `clean_features` is the single-utterance entry point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ValidationError
from .features import SpeakerEmbedding, SpeechFeatures, TextCondition


@dataclass
class CleanerConfig:
    """Hyperparameters; full-scale reference is N=4, D_b=128, attn 512."""

    D: int = 64
    W: int = 32
    Q: int = 16
    N: int = 2
    D_b: int = 32
    attn_hidden: int = 64
    n_heads: int = 2
    n_iterations: int = 2
    postnet_layers: int = 5
    postnet_kernel: int = 5
    conv_kernel: int = 7
    iter_embed_dim: int = 128
    ff_mult: int = 2

    def validate(self) -> None:
        if self.N < 1 or self.n_iterations < 1:
            raise ValidationError("N and n_iterations must be >= 1")
        if min(self.D, self.W, self.Q, self.D_b, self.attn_hidden) < 1:
            raise ValidationError("dimensions must be positive")
        if self.attn_hidden % self.n_heads != 0:
            raise ValidationError("attn_hidden must divide by n_heads")


def sinusoidal_embedding(index: int, dim: int) -> torch.Tensor:
    """Positional embedding of an integer step index (WaveGrad-style)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    angles = index * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)])
    if emb.shape[0] < dim:
        emb = torch.cat([emb, torch.zeros(dim - emb.shape[0], dtype=emb.dtype)])
    return emb


class Film(nn.Module):
    """film(A, b) = conv2(lrelu(conv1(A)) + b), 1-D convs, kernel 3, stride 1."""

    def __init__(self, feat_dim: int, cond_dim: int, lrelu_slope: float = 0.1):
        super().__init__()
        self.conv1 = nn.Conv1d(feat_dim, cond_dim, kernel_size=3, stride=1, padding=1)
        self.conv2 = nn.Conv1d(cond_dim, feat_dim, kernel_size=3, stride=1, padding=1)
        self.act = nn.LeakyReLU(lrelu_slope)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        # a: [B, T, feat_dim], b: [B, cond_dim]
        if a.shape[-1] != self.conv1.in_channels or b.shape[-1] != self.conv1.out_channels:
            raise ValidationError(
                f"FiLM shape mismatch: a {tuple(a.shape)}, b {tuple(b.shape)}"
            )
        h = self.act(self.conv1(a.transpose(1, 2))) + b.unsqueeze(-1)
        return self.conv2(h).transpose(1, 2)


class Attention(nn.Module):
    """Multi-head attention with separate query/key-value sources."""

    def __init__(self, q_dim: int, kv_dim: int, hidden: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = hidden // n_heads
        self.q_proj = nn.Linear(q_dim, hidden)
        self.k_proj = nn.Linear(kv_dim, hidden)
        self.v_proj = nn.Linear(kv_dim, hidden)
        self.out_proj = nn.Linear(hidden, q_dim)

    def forward(self, query, keyvalue, kv_mask=None):
        b, tq, _ = query.shape
        tk = keyvalue.shape[1]

        def split(x):
            return x.view(b, -1, self.n_heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query))
        k = split(self.k_proj(keyvalue))
        v = split(self.v_proj(keyvalue))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if kv_mask is not None:  # kv_mask: [B, Tk], True = valid
            scores = scores.masked_fill(~kv_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, tq, -1)
        return self.out_proj(out)


class ConformerBlock(nn.Module):
    """Half-step FF / self-attention / dilated depthwise conv / half-step
    FF sandwich with a closing layer norm."""

    def __init__(self, dim: int, attn_hidden: int, n_heads: int,
                 conv_kernel: int, dilation: int, ff_mult: int):
        super().__init__()
        self.dilation = dilation
        self.ff1 = self._ff(dim, ff_mult)
        self.ff2 = self._ff(dim, ff_mult)
        self.norm_ff1 = nn.LayerNorm(dim)
        self.norm_ff2 = nn.LayerNorm(dim)
        self.norm_attn = nn.LayerNorm(dim)
        self.norm_conv = nn.LayerNorm(dim)
        self.norm_out = nn.LayerNorm(dim)
        self.attn = Attention(dim, dim, attn_hidden, n_heads)
        pad = dilation * (conv_kernel - 1) // 2
        self.conv = nn.Sequential(
            nn.Conv1d(dim, 2 * dim, 1),
            nn.GLU(dim=1),
            nn.Conv1d(dim, dim, conv_kernel, padding=pad, dilation=dilation, groups=dim),
            nn.SiLU(),
            nn.Conv1d(dim, dim, 1),
        )

    @staticmethod
    def _ff(dim, mult):
        return nn.Sequential(nn.Linear(dim, mult * dim), nn.SiLU(), nn.Linear(mult * dim, dim))

    def forward(self, x):
        x = x + 0.5 * self.ff1(self.norm_ff1(x))
        h = self.norm_attn(x)
        x = x + self.attn(h, h)
        x = x + self.conv(self.norm_conv(x).transpose(1, 2)).transpose(1, 2)
        x = x + 0.5 * self.ff2(self.norm_ff2(x))
        return self.norm_out(x)


class PostNet(nn.Module):
    """Tacotron-2-style residual refiner: 5 convs, tanh on all but last."""

    def __init__(self, dim: int, layers: int, kernel: int):
        super().__init__()
        pad = (kernel - 1) // 2
        convs = []
        for i in range(layers):
            convs.append(nn.Conv1d(dim, dim, kernel, padding=pad))
        self.convs = nn.ModuleList(convs)

    def forward(self, x):
        h = x.transpose(1, 2)
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if i < len(self.convs) - 1:
                h = torch.tanh(h)
        return h.transpose(1, 2)


class FeatureCleaner(nn.Module):
    """Predicts clean speech features from degraded ones.

    Parameters are shared across refinement iterations; only the
    iteration embedding distinguishes the passes.
    """

    def __init__(self, config: CleanerConfig):
        super().__init__()
        config.validate()
        self.config = config
        c = config
        self.input_proj = nn.Linear(c.D, c.D_b)
        self.text_proj = nn.Linear(c.W, c.D_b)
        self.spk_proj = nn.Linear(c.Q, c.D_b)
        self.film_spk_into_text = Film(c.D_b, c.D_b)
        self.film_iter = Film(c.D_b, c.iter_embed_dim)
        self.cross_attn = nn.ModuleList(
            [Attention(c.D_b, c.D_b, c.attn_hidden, c.n_heads) for _ in range(c.N)]
        )
        self.cross_norm = nn.ModuleList([nn.LayerNorm(c.D_b) for _ in range(c.N)])
        self.blocks = nn.ModuleList(
            [
                ConformerBlock(c.D_b, c.attn_hidden, c.n_heads, c.conv_kernel,
                               dilation=2 ** (n % 2), ff_mult=c.ff_mult)
                for n in range(c.N)
            ]
        )
        self.out_proj = nn.Linear(c.D_b, c.D)
        self.postnet = PostNet(c.D, c.postnet_layers, c.postnet_kernel)

    def forward(self, x, e, d, text_mask=None):
        """x: [B, K, D], e: [B, M, W], d: [B, Q].

        Returns a list of (pre_postnet, post_postnet) pairs, one per
        refinement iteration; the restored features are the last post.
        """
        if x.shape[1] < 1:
            raise ValidationError("empty feature sequence")
        c = self.config
        outputs = []
        cur = x
        for it in range(c.n_iterations):
            cond = self.film_spk_into_text(self.text_proj(e), self.spk_proj(d))
            iter_emb = sinusoidal_embedding(it, c.iter_embed_dim).to(x.dtype)
            cond = self.film_iter(cond, iter_emb.expand(x.shape[0], -1))
            h = self.input_proj(cur)
            for attn, norm, block in zip(self.cross_attn, self.cross_norm, self.blocks):
                h = norm(h + attn(h, cond, kv_mask=text_mask))
                h = block(h)
            pre = self.out_proj(h)
            post = pre + self.postnet(pre)
            outputs.append((pre, post))
            cur = post
        return outputs


@dataclass
class CleanerLossReport:
    """Loss components; l1/l2sq/sc refer to the final post-Post-Net
    output, total aggregates all iterations before and after Post-Net."""

    l1: float
    l2sq: float
    sc: float
    per_iteration: list = field(default_factory=list)
    total: float = 0.0


def loss_terms(s: torch.Tensor, s_hat: torch.Tensor) -> tuple:
    """Entrywise-norm loss terms: (sum-abs, sum-square, normalized sum-square)."""
    diff = s - s_hat
    l1 = diff.abs().sum()
    l2sq = (diff**2).sum()
    denom = (s**2).sum()
    if float(denom) == 0.0:
        raise ValidationError("reference features are all zero; normalized term undefined")
    return l1, l2sq, l2sq / denom


def cleaner_training_loss(s: torch.Tensor, outputs) -> torch.Tensor:
    """Sum of the three-term loss over {pre, post} x iterations."""
    total = None
    for pre, post in outputs:
        for s_hat in (pre, post):
            l1, l2sq, sc = loss_terms(s, s_hat)
            term = l1 + l2sq + sc
            total = term if total is None else total + term
    return total


def cleaner_loss(s: SpeechFeatures, outputs) -> CleanerLossReport:
    """Report-producing wrapper; ``outputs`` as returned by the model."""
    st = torch.as_tensor(s.values, dtype=torch.float64)
    if st.dim() == 2:
        st = st.unsqueeze(0)
    per_iter = []
    total = 0.0
    final = None
    for pre, post in outputs:
        entry = {}
        for name, s_hat in (("pre_postnet_total", pre), ("post_postnet_total", post)):
            l1, l2sq, sc = loss_terms(st, s_hat.to(torch.float64))
            entry[name] = float(l1 + l2sq + sc)
            total += entry[name]
        per_iter.append(entry)
        final = post
    l1, l2sq, sc = loss_terms(st, final.to(torch.float64))
    return CleanerLossReport(
        l1=float(l1), l2sq=float(l2sq), sc=float(sc),
        per_iteration=per_iter, total=total,
    )


def clean_features(
    model: FeatureCleaner,
    x: SpeechFeatures,
    e: TextCondition,
    d: SpeakerEmbedding,
) -> SpeechFeatures:
    """Single-utterance inference; returns restored features [K, D]."""
    if x.n_frames < 1:
        raise ValidationError("no frames to clean")
    c = model.config
    if x.values.shape[1] != c.D or e.values.shape[1] != c.W or d.values.shape[0] != c.Q:
        raise ValidationError("feature dims do not match cleaner config")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        outputs = model(
            torch.as_tensor(x.values, dtype=dtype).unsqueeze(0),
            torch.as_tensor(e.values, dtype=dtype).unsqueeze(0),
            torch.as_tensor(d.values, dtype=dtype).unsqueeze(0),
        )
    return SpeechFeatures(
        values=outputs[-1][1].squeeze(0).double().numpy(),
        frame_rate=x.frame_rate,
        source_rate=x.source_rate,
    )


def crop_training_frames(
    s: SpeechFeatures, x: SpeechFeatures, rng_seed: int, n_frames: int = 15
):
    """Pick the same random ``n_frames`` window from both feature sets."""
    k = min(s.n_frames, x.n_frames)
    if k < n_frames:
        raise ValidationError(f"utterance too short to crop ({k} < {n_frames} frames)")
    rng = np.random.default_rng(rng_seed)
    off = int(rng.integers(0, k - n_frames + 1))
    crop = lambda f: SpeechFeatures(
        values=f.values[off : off + n_frames],
        frame_rate=f.frame_rate,
        source_rate=f.source_rate,
    )
    return crop(s), crop(x), off
