"""Seeded synthetic vibration generator.

Each terrain recipe mixes three ingredients into the three sensor channels:
band-shaped Gaussian noise (white noise band-passed per analysis band and
scaled to a target rms), sinusoidal tonals with per-channel gains, and
Poisson-timed exponentially decaying impulses.  A white per-channel noise
floor sits underneath.  Band noise is mixed through the profile's 3x3
channel-band gain matrix; impulses decay over 10 ms, so their energy sits
almost entirely in the low band and they are mixed through the matrix's
low-band column.  All randomness comes from the package's own counter-based
generator, so records are a pure function of (profile, duration, rate,
seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .features import DEFAULT_BANDS
from .rng import Prng, derive_seed
from .signals import TimeSeries, bandpass, window_geometry

IMPULSE_DECAY_S = 0.010
_IMPULSE_TAIL_DECAYS = 8.0

KNOWN_TERRAIN_NAMES = ("flat", "fine_sand", "small_stone", "small_pebble", "large_stone")
UNKNOWN_TERRAIN_NAME = "mixture"


@dataclass(frozen=True)
class Tonal:
    freq_hz: float
    amplitude: float
    channel_gains: tuple[float, float, float]

    def __post_init__(self):
        if not np.isfinite(self.freq_hz) or self.freq_hz <= 0:
            raise ValidationError(f"tonal frequency must be positive, got {self.freq_hz}")
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValidationError(f"tonal amplitude must be >= 0, got {self.amplitude}")
        if len(self.channel_gains) != 3 or any(g < 0 for g in self.channel_gains):
            raise ValidationError("tonal needs 3 non-negative channel gains")


@dataclass(frozen=True)
class TerrainProfile:
    """Recipe for one terrain's vibration signature."""

    name: str
    band_rms: tuple[float, float, float]  # target rms per {low, mid, high} band
    tonal_components: tuple[Tonal, ...]
    impulse_rate_hz: float
    impulse_amplitude: float
    noise_floor_rms: float
    channel_band_gains: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.name:
            raise ValidationError("profile needs a name")
        if len(self.band_rms) != 3 or any(
            not np.isfinite(v) or v < 0 for v in self.band_rms
        ):
            raise ValidationError("band_rms must be 3 non-negative reals")
        if not np.isfinite(self.impulse_rate_hz) or self.impulse_rate_hz < 0:
            raise ValidationError(f"impulse rate must be >= 0, got {self.impulse_rate_hz}")
        if not np.isfinite(self.impulse_amplitude) or self.impulse_amplitude < 0:
            raise ValidationError(
                f"impulse amplitude must be >= 0, got {self.impulse_amplitude}"
            )
        if not np.isfinite(self.noise_floor_rms) or self.noise_floor_rms < 0:
            raise ValidationError(f"noise floor must be >= 0, got {self.noise_floor_rms}")
        gains = self.channel_band_gains
        if len(gains) != 3 or any(len(row) != 3 for row in gains):
            raise ValidationError("channel_band_gains must be a 3x3 matrix")
        if any(not np.isfinite(g) or g < 0 for row in gains for g in row):
            raise ValidationError("channel_band_gains entries must be non-negative reals")

    def max_tonal_hz(self) -> float:
        return max((t.freq_hz for t in self.tonal_components), default=0.0)


@dataclass(frozen=True)
class GenSpec:
    profile: TerrainProfile
    duration_s: float
    sample_rate_hz: float
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.duration_s) or self.duration_s <= 0:
            raise ValidationError(f"duration must be positive, got {self.duration_s}")
        if not np.isfinite(self.sample_rate_hz) or self.sample_rate_hz <= 0:
            raise ValidationError(
                f"sample rate must be positive, got {self.sample_rate_hz}"
            )
        if self.sample_rate_hz <= 2.0 * self.profile.max_tonal_hz():
            raise ValidationError(
                f"sample rate {self.sample_rate_hz} Hz cannot represent a "
                f"{self.profile.max_tonal_hz()} Hz tonal"
            )


# Row c gives channel c's sensitivity to the {low, mid, high} bands:
# channel 1 is weighted to low frequencies, channel 2 to mid, channel 3 to
# high.  Channel 3's low-band leakage must stay small enough that its
# high-band spectral density dominates even for low-band-heavy terrains.
_GAIN_TEMPLATE = (
    (1.0, 0.35, 0.15),
    (0.35, 1.0, 0.35),
    (0.05, 0.35, 1.0),
)


def builtin_profiles() -> list[TerrainProfile]:
    """The five known terrains plus the mixture used as the unknown."""
    flat = TerrainProfile(
        name="flat",
        band_rms=(0.003, 0.003, 0.003),
        tonal_components=(),
        impulse_rate_hz=0.0,
        impulse_amplitude=0.0,
        noise_floor_rms=0.006,
        channel_band_gains=_GAIN_TEMPLATE,
    )
    fine_sand = TerrainProfile(
        name="fine_sand",
        band_rms=(0.02, 0.03, 0.07),
        tonal_components=(),
        impulse_rate_hz=0.0,
        impulse_amplitude=0.0,
        noise_floor_rms=0.005,
        channel_band_gains=_GAIN_TEMPLATE,
    )
    small_stone = TerrainProfile(
        name="small_stone",
        band_rms=(0.12, 0.18, 0.05),
        tonal_components=(
            Tonal(freq_hz=200.0, amplitude=0.15, channel_gains=(0.3, 1.0, 0.3)),
        ),
        impulse_rate_hz=8.0,
        impulse_amplitude=0.35,
        noise_floor_rms=0.005,
        channel_band_gains=_GAIN_TEMPLATE,
    )
    # Deliberately low-band dominated (frequent shallow thumps) so its
    # energy signature points in a different direction than the fine_sand /
    # small_stone axis.
    small_pebble = TerrainProfile(
        name="small_pebble",
        band_rms=(0.16, 0.04, 0.03),
        tonal_components=(
            Tonal(freq_hz=90.0, amplitude=0.08, channel_gains=(0.6, 1.0, 0.4)),
        ),
        impulse_rate_hz=12.0,
        impulse_amplitude=0.15,
        noise_floor_rms=0.005,
        channel_band_gains=_GAIN_TEMPLATE,
    )
    large_stone = TerrainProfile(
        name="large_stone",
        band_rms=(0.20, 0.25, 0.08),
        tonal_components=(
            Tonal(freq_hz=90.0, amplitude=0.18, channel_gains=(0.6, 1.0, 0.4)),
            Tonal(freq_hz=500.0, amplitude=0.10, channel_gains=(0.2, 0.4, 1.0)),
        ),
        impulse_rate_hz=6.0,
        impulse_amplitude=0.8,
        noise_floor_rms=0.005,
        channel_band_gains=_GAIN_TEMPLATE,
    )
    mixture = mix_profiles(fine_sand, small_stone, UNKNOWN_TERRAIN_NAME)
    return [flat, fine_sand, small_stone, small_pebble, large_stone, mixture]


def builtin_profile(name: str) -> TerrainProfile:
    for profile in builtin_profiles():
        if profile.name == name:
            return profile
    known = ", ".join(p.name for p in builtin_profiles())
    raise ValidationError(f"unknown profile {name!r}; built-ins are: {known}")


def mix_profiles(a: TerrainProfile, b: TerrainProfile, name: str) -> TerrainProfile:
    """Field-wise average of two recipes; tonals are pooled at half amplitude."""
    tonals = tuple(
        Tonal(t.freq_hz, t.amplitude * 0.5, t.channel_gains)
        for t in (*a.tonal_components, *b.tonal_components)
    )
    gains = tuple(
        tuple((ga + gb) / 2.0 for ga, gb in zip(row_a, row_b))
        for row_a, row_b in zip(a.channel_band_gains, b.channel_band_gains)
    )
    return TerrainProfile(
        name=name,
        band_rms=tuple((va + vb) / 2.0 for va, vb in zip(a.band_rms, b.band_rms)),
        tonal_components=tonals,
        impulse_rate_hz=(a.impulse_rate_hz + b.impulse_rate_hz) / 2.0,
        impulse_amplitude=(a.impulse_amplitude + b.impulse_amplitude) / 2.0,
        noise_floor_rms=(a.noise_floor_rms + b.noise_floor_rms) / 2.0,
        channel_band_gains=gains,
    )


def _impulse_track(rng: Prng, n: int, rate_hz: float, sample_rate_hz: float, amplitude: float) -> np.ndarray:
    """Poisson-timed spikes with exponential decay and amplitude jitter.

    Inter-arrival gaps are exponential draws; each strike has a random sign
    and a uniform scale in (0.5, 1.5].
    """
    track = np.zeros(n)
    if rate_hz <= 0.0 or amplitude <= 0.0:
        return track
    tail = int(math.ceil(_IMPULSE_TAIL_DECAYS * IMPULSE_DECAY_S * sample_rate_hz))
    decay = np.exp(-np.arange(tail) / (IMPULSE_DECAY_S * sample_rate_hz))
    t = 0.0
    duration = n / sample_rate_hz
    while True:
        t += -math.log(rng.uniform()) / rate_hz
        if t >= duration:
            break
        start = int(t * sample_rate_hz)
        if start >= n:
            break
        sign = 1.0 if rng.uniform() > 0.5 else -1.0
        scale = 0.5 + rng.uniform()
        stop = min(n, start + tail)
        track[start:stop] += sign * scale * amplitude * decay[: stop - start]
    return track


def generate(spec: GenSpec) -> TimeSeries:
    """Synthesize one labeled record; bit-identical for equal specs."""
    profile = spec.profile
    rate = spec.sample_rate_hz
    n = int(round(spec.duration_s * rate))
    if n < 2:
        raise ValidationError(
            f"duration {spec.duration_s} s at {rate} Hz spans {n} samples; need at least 2"
        )
    for band in DEFAULT_BANDS:
        band.check_nyquist(rate)
    band_noise = np.zeros((3, n))
    for b, band in enumerate(DEFAULT_BANDS):
        target = profile.band_rms[b]
        if target <= 0.0:
            continue
        rng = Prng(derive_seed(spec.seed, "band", b))
        shaped = bandpass(rng.gaussian_block(n), rate, band)
        level = math.sqrt(float(np.mean(shaped * shaped)))
        if level > 0.0:
            band_noise[b] = shaped * (target / level)
    impulse_rng = Prng(derive_seed(spec.seed, "impulse"))
    impulses = _impulse_track(
        impulse_rng, n, profile.impulse_rate_hz, rate, profile.impulse_amplitude
    )
    t = np.arange(n) / rate
    tonal_waves = []
    for idx, tone in enumerate(profile.tonal_components):
        phase_rng = Prng(derive_seed(spec.seed, "tonal", idx))
        phase = 2.0 * math.pi * phase_rng.uniform()
        tonal_waves.append(
            (tone, tone.amplitude * np.sin(2.0 * math.pi * tone.freq_hz * t + phase))
        )
    channels = np.empty((3, n))
    gains = profile.channel_band_gains
    for c in range(3):
        floor_rng = Prng(derive_seed(spec.seed, "floor", c))
        acc = floor_rng.gaussian_block(n) * profile.noise_floor_rms
        for b in range(3):
            acc = acc + gains[c][b] * band_noise[b]
        # Strikes decay in ~10 ms, so their spectrum concentrates in the low
        # band; they enter each channel through its low-band sensitivity.
        acc = acc + gains[c][0] * impulses
        for tone, wave in tonal_waves:
            acc = acc + tone.channel_gains[c] * wave
        channels[c] = acc
    return TimeSeries(sample_rate_hz=rate, channels=channels, label=profile.name)


def generate_dataset(
    profiles,
    windows_per_class: int,
    *,
    sample_rate_hz: float = 1440.0,
    window_seconds: float = 1.5,
    overlap_fraction: float = 0.5,
    seed: int = 0,
) -> list[TimeSeries]:
    """One record per profile, sized for exactly windows_per_class windows.

    Class index i uses sub-seed ``seed XOR i``.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValidationError("need at least one profile")
    if windows_per_class < 2:
        raise ValidationError(f"windows_per_class must be >= 2, got {windows_per_class}")
    length, stride = window_geometry(sample_rate_hz, window_seconds, overlap_fraction)
    n = length + (windows_per_class - 1) * stride
    out = []
    for index, profile in enumerate(profiles):
        sub_seed = (int(seed) ^ index) & 0xFFFFFFFFFFFFFFFF
        spec = GenSpec(
            profile=profile,
            duration_s=n / sample_rate_hz,
            sample_rate_hz=sample_rate_hz,
            seed=sub_seed,
        )
        out.append(generate(spec))
    return out
