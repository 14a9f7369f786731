"""Shared fixtures: the synthetic toy corpus, a degraded counterpart,
and (for the expensive trend/determinism tests) a fully trained
desk-scale pipeline.  Everything is session-scoped and seeded."""

from types import SimpleNamespace

import pytest
import torch

from resynth.audio import Manifest
from resynth.degrade import build_degraded_corpus, load_paired_manifest
from resynth.features import ExtractorSpec
from resynth.fixtures import build_toy_corpus
from resynth.training import TrainConfig, train_cleaner, train_vocoder
from resynth.vocoder import VocoderConfig

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    clean_manifest, noise_manifest = build_toy_corpus(root)
    return SimpleNamespace(
        root=root,
        clean_manifest=clean_manifest,
        noise_manifest=noise_manifest,
    )


@pytest.fixture(scope="session")
def degraded_corpus(toy_corpus):
    paired, recipes = build_degraded_corpus(
        Manifest.load(toy_corpus.clean_manifest),
        Manifest.load(toy_corpus.noise_manifest),
        "+reverb+codec",
        master_seed=7,
        out_dir=toy_corpus.root / "deg",
    )
    return SimpleNamespace(
        paired_manifest=paired,
        recipes=recipes,
        pairs=load_paired_manifest(paired),
    )


@pytest.fixture(scope="session")
def extractor():
    return ExtractorSpec()


@pytest.fixture(scope="session")
def trained_pipeline(toy_corpus, degraded_corpus, extractor):
    """Desk-scale training run shared by the trend and determinism tests.

    Takes a few minutes on one CPU core; everything downstream only
    loads the resulting checkpoints.
    """
    out = toy_corpus.root / "train"
    out.mkdir(exist_ok=True)
    pairs = degraded_corpus.pairs
    train_cleaner(
        TrainConfig(steps=500, batch_size=8, lr=3e-3, warmup_steps=50, seed=0),
        pairs,
        extractor,
        out_dir=out,
    )
    vcfg = VocoderConfig(channels=16)
    voc = train_vocoder(
        TrainConfig(steps=1200, batch_size=1, lr=2e-3, warmup_steps=50, seed=1),
        "pretrain_clean",
        pairs,
        extractor,
        vocoder_config=vcfg,
        out_dir=out,
    )
    train_vocoder(
        TrainConfig(steps=400, batch_size=1, lr=5e-4, warmup_steps=20, seed=2),
        "finetune_predicted",
        pairs,
        extractor,
        vocoder_config=vcfg,
        cleaner_ckpt=out / "cleaner.ckpt",
        init_model=voc,
        out_dir=out,
    )
    return SimpleNamespace(
        out=out,
        cleaner_ckpt=out / "cleaner.ckpt",
        vocoder_ckpt=out / "vocoder.ckpt",
    )
