"""Shoebox room impulse responses via the image-source method.

Uniform wall absorption is derived from the requested RT60 with the
inverse Eyring formula; amplitudes follow the 1/d free-field law with
unit gain at 1 m, so the direct-path energy of a fully absorbing room
is energy(input) / d**2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..audio import AudioClip
from ..errors import ValidationError

SPEED_OF_SOUND = 343.0

# image positions are jittered by up to this much (except the direct path)
# to decorrelate the sweeping-echo artifacts of a perfectly regular lattice
_JITTER_M = 0.004

_TRUNC_DB = -60.0


@dataclass
class RoomSpec:
    """A shoebox room with one source and one microphone."""

    width_x: float
    width_y: float
    height_z: float
    rt60: float
    source_pos: tuple[float, float, float]
    mic_pos: tuple[float, float, float]

    WALL_MARGIN = 0.3

    def validate(self) -> None:
        if not (2.0 <= self.width_x <= 10.0 and 2.0 <= self.width_y <= 10.0):
            raise ValidationError(f"room footprint out of range: {self.width_x}x{self.width_y}")
        if not 2.0 <= self.height_z <= 5.0:
            raise ValidationError(f"room height out of range: {self.height_z}")
        if not 0.2 <= self.rt60 <= 0.5:
            raise ValidationError(f"rt60 out of range: {self.rt60}")
        dims = (self.width_x, self.width_y, self.height_z)
        for name, pos in (("source", self.source_pos), ("mic", self.mic_pos)):
            for p, L in zip(pos, dims):
                if p < self.WALL_MARGIN or p > L - self.WALL_MARGIN:
                    raise ValidationError(f"{name} position {pos} violates wall margin")

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.width_x, self.width_y, self.height_z])

    @property
    def volume(self) -> float:
        return float(self.width_x * self.width_y * self.height_z)

    @property
    def surface(self) -> float:
        lx, ly, lz = self.width_x, self.width_y, self.height_z
        return 2.0 * (lx * ly + lx * lz + ly * lz)


@dataclass
class Rir:
    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if not np.any(self.taps != 0.0):
            raise ValidationError("RIR has no nonzero tap")
        if not np.all(np.isfinite(self.taps)):
            raise ValidationError("RIR has non-finite taps")


def absorption_for_rt60(room: RoomSpec) -> float:
    """Uniform wall absorption matching the target RT60 (inverse Eyring)."""
    sabine = 24.0 * np.log(10.0) / SPEED_OF_SOUND  # 0.1611 s/m
    return float(1.0 - np.exp(-sabine * room.volume / (room.surface * room.rt60)))


def generate_rir(
    room: RoomSpec,
    sample_rate: int,
    rng_seed: int,
    absorption: float | None = None,
) -> Rir:
    """Image-source impulse response, truncated at -60 dB residual energy.

    ``absorption`` overrides the RT60-derived wall absorption; 1.0 gives
    the free-field limit (direct path only).  Without an override the wall
    absorption is calibrated so the Schroeder RT60 of the result matches
    ``room.rt60`` (a fixed Eyring-style formula cannot, because the image
    lattice decays non-exponentially).
    """
    room.validate()
    if absorption is not None:
        return _image_source_rir(room, sample_rate, rng_seed, float(absorption))
    alpha = absorption_for_rt60(room)
    rir = _image_source_rir(room, sample_rate, rng_seed, alpha)
    for _ in range(4):
        measured = schroeder_rt60(rir)
        if abs(measured - room.rt60) <= 0.02 * room.rt60:
            break
        # decay rate scales roughly with -log(1 - alpha)
        alpha = float(np.clip(1.0 - (1.0 - alpha) ** (measured / room.rt60), 0.01, 0.999))
        rir = _image_source_rir(room, sample_rate, rng_seed, alpha)
    return rir


def _image_source_rir(
    room: RoomSpec, sample_rate: int, rng_seed: int, alpha: float
) -> Rir:
    src = np.asarray(room.source_pos, dtype=np.float64)
    mic = np.asarray(room.mic_pos, dtype=np.float64)
    dist_direct = float(np.linalg.norm(src - mic))
    if dist_direct < 0.1:
        raise ValidationError("source and microphone are collocated")
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"absorption out of (0, 1]: {alpha}")
    beta = np.sqrt(1.0 - alpha)

    d_max = SPEED_OF_SOUND * room.rt60 * 1.4 + dist_direct
    dims = room.dims
    rng = np.random.default_rng(rng_seed)

    # per-axis image coordinates and reflection counts for walls at 0 and L
    axes_pos, axes_refl = [], []
    for i in range(3):
        n_max = int(np.ceil(d_max / (2.0 * dims[i])))
        n = np.arange(-n_max, n_max + 1)
        pos, refl = [], []
        for q in (0, 1):
            pos.append((1 - 2 * q) * src[i] + 2.0 * n * dims[i])
            refl.append(np.abs(n - q) + np.abs(n))
        axes_pos.append(np.concatenate(pos))
        axes_refl.append(np.concatenate(refl))

    dx = (axes_pos[0] - mic[0]).astype(np.float32)
    dy = (axes_pos[1] - mic[1]).astype(np.float32)
    dz = (axes_pos[2] - mic[2]).astype(np.float32)
    refl = (
        axes_refl[0][:, None, None]
        + axes_refl[1][None, :, None]
        + axes_refl[2][None, None, :]
    ).astype(np.float32)
    jitter = rng.uniform(-_JITTER_M, _JITTER_M, size=refl.shape).astype(np.float32)
    jitter[refl == 0] = 0.0  # direct path stays exact
    dist = np.sqrt(
        dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
    )
    dist = np.maximum(dist + jitter, 1e-3)

    keep = dist.ravel() <= d_max
    dist = dist.ravel()[keep].astype(np.float64)
    refl = refl.ravel()[keep].astype(np.float64)
    if beta == 0.0:
        sel = refl == 0
        dist, refl = dist[sel], refl[sel]
    amps = np.where(refl == 0, 1.0, beta**refl) / dist
    delays = np.round(sample_rate * dist / SPEED_OF_SOUND).astype(np.int64)

    taps = np.zeros(int(delays.max()) + 1)
    np.add.at(taps, delays, amps)

    # drop the tail once the residual energy is below -60 dB of the total
    energy = taps**2
    residual = np.cumsum(energy[::-1])[::-1]
    cutoff = 10.0 ** (_TRUNC_DB / 10.0) * energy.sum()
    above = np.nonzero(residual >= cutoff)[0]
    taps = taps[: above[-1] + 1]
    return Rir(taps=taps, sample_rate=sample_rate)


def apply_rir(clip: AudioClip, rir: Rir) -> AudioClip:
    """Convolve, truncate to the input length, renormalize peak to <= 1."""
    if clip.sample_rate != rir.sample_rate:
        raise ValidationError(
            f"sample-rate mismatch: clip {clip.sample_rate}, rir {rir.sample_rate}"
        )
    y = fftconvolve(clip.samples, rir.taps)[: clip.samples.shape[0]]
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return clip.with_samples(y)


def schroeder_rt60(rir: Rir, fit_range_db=(-5.0, -25.0)) -> float:
    """RT60 estimate by backward integration and a linear decay fit."""
    energy = rir.taps**2
    edc = np.cumsum(energy[::-1])[::-1]
    edc = edc / edc[0]
    db = 10.0 * np.log10(np.maximum(edc, 1e-30))
    hi, lo = fit_range_db
    mask = (db <= hi) & (db >= lo)
    if mask.sum() < 2:
        raise ValidationError("decay range too short for a Schroeder fit")
    t = np.nonzero(mask)[0] / rir.sample_rate
    slope, _ = np.polyfit(t, db[mask], 1)
    if slope >= 0:
        raise ValidationError("non-decaying impulse response")
    return float(-60.0 / slope)
