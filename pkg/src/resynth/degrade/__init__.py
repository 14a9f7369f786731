from .chain import PairedEntry, build_degraded_corpus, degrade, load_paired_manifest
from .codec import (
    CODEC_TABLE,
    CodecSpec,
    ExternalCodecBackend,
    SurrogateCodecBackend,
    apply_codec,
    get_backend,
)
from .mix import active_rms, fit_noise_to_length, measure_snr_db, mix_at_snr
from .recipe import (
    PATTERNS,
    DegradationRecipe,
    load_recipes,
    sample_recipe,
    save_recipes,
)
from .rir import Rir, RoomSpec, apply_rir, generate_rir, schroeder_rt60

__all__ = [
    "CODEC_TABLE",
    "PATTERNS",
    "CodecSpec",
    "DegradationRecipe",
    "ExternalCodecBackend",
    "PairedEntry",
    "Rir",
    "RoomSpec",
    "SurrogateCodecBackend",
    "active_rms",
    "apply_codec",
    "apply_rir",
    "build_degraded_corpus",
    "degrade",
    "fit_noise_to_length",
    "generate_rir",
    "get_backend",
    "load_paired_manifest",
    "load_recipes",
    "measure_snr_db",
    "mix_at_snr",
    "sample_recipe",
    "save_recipes",
    "schroeder_rt60",
]
