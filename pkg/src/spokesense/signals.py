"""Sampled vibration records, windowing, Fourier analysis, and band filtering.

Records carry three synchronized sensor channels at a single sample rate.
Spectral operations zero-pad to the next power of two and use an iterative
radix-2 transform; reported bin resolutions always reflect the padded
length.  Band-pass filtering is zero-phase: a frequency-domain mask is
applied symmetrically and the result truncated back to the input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ValidationError

N_CHANNELS = 3
DEFAULT_WINDOW_SECONDS = 1.5
DEFAULT_OVERLAP = 0.5


def _as_samples(x, min_len: int, name: str = "samples") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError(f"{name} is empty")
    if arr.shape[0] < min_len:
        raise ValidationError(f"{name} needs at least {min_len} samples, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(eq=False)
class TimeSeries:
    """A labeled multi-channel vibration record sampled at a fixed rate."""

    sample_rate_hz: float
    channels: np.ndarray  # shape (3, n)
    label: str | None = None

    def __post_init__(self):
        rate = float(self.sample_rate_hz)
        if not np.isfinite(rate) or rate <= 0:
            raise ValidationError(f"sample rate must be positive and finite, got {rate}")
        arr = np.asarray(self.channels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != N_CHANNELS:
            raise ValidationError(
                f"channels must have shape ({N_CHANNELS}, n), got {arr.shape}"
            )
        if arr.shape[1] == 0:
            raise EmptyInputError("record has no samples")
        if not np.isfinite(arr).all():
            raise ValidationError("record contains non-finite samples")
        self.sample_rate_hz = rate
        self.channels = arr

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class Window:
    """Half-open sample range [start_index, start_index + length)."""

    start_index: int
    length: int

    def __post_init__(self):
        if self.start_index < 0:
            raise ValidationError(f"window start must be >= 0, got {self.start_index}")
        if self.length < 2:
            raise ValidationError(f"window length must be >= 2, got {self.length}")

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length


def check_window(series: TimeSeries, window: Window) -> None:
    if window.stop_index > series.n_samples:
        raise ValidationError(
            f"window [{window.start_index}, {window.stop_index}) exceeds record "
            f"length {series.n_samples}"
        )


@dataclass(frozen=True)
class BandSpec:
    """Frequency band [low_hz, high_hz], inclusive at both edges."""

    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (np.isfinite(self.low_hz) and np.isfinite(self.high_hz)):
            raise ValidationError("band edges must be finite")
        if self.low_hz < 0:
            raise ValidationError(f"band low edge must be >= 0, got {self.low_hz}")
        if not self.low_hz < self.high_hz:
            raise ValidationError(
                f"band low edge must be below high edge, got [{self.low_hz}, {self.high_hz}]"
            )

    def check_nyquist(self, sample_rate_hz: float) -> None:
        if self.high_hz > sample_rate_hz / 2.0:
            raise ValidationError(
                f"band high edge {self.high_hz} Hz exceeds Nyquist "
                f"{sample_rate_hz / 2.0} Hz at {sample_rate_hz} Hz sampling"
            )


@dataclass(eq=False)
class Spectrum:
    """One-sided magnitude spectrum; bin k sits at k * bin_resolution_hz."""

    bin_resolution_hz: float
    magnitudes: np.ndarray

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.arange(self.magnitudes.shape[0]) * self.bin_resolution_hz


def next_pow2(n: int) -> int:
    """Smallest power of two >= n (n >= 1)."""
    if n < 1:
        raise ValidationError(f"next_pow2 requires n >= 1, got {n}")
    return 1 << (n - 1).bit_length()


_REV_CACHE: dict[int, np.ndarray] = {}
_TWIDDLE_CACHE: dict[int, list[np.ndarray]] = {}


def _bit_reversal(n: int) -> np.ndarray:
    perm = _REV_CACHE.get(n)
    if perm is None:
        levels = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.int64)
        for b in range(levels):
            perm |= ((idx >> b) & 1) << (levels - 1 - b)
        _REV_CACHE[n] = perm
    return perm


def _twiddles(n: int) -> list[np.ndarray]:
    stages = _TWIDDLE_CACHE.get(n)
    if stages is None:
        stages = []
        half = 1
        while half < n:
            stages.append(np.exp(-2j * np.pi * np.arange(half) / (2 * half)))
            half *= 2
        _TWIDDLE_CACHE[n] = stages
    return stages


def fft_radix2(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time transform.

    Input length must be a power of two.  Returns the full complex spectrum.
    """
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValidationError(f"transform input must be one-dimensional, got shape {arr.shape}")
    n = arr.shape[0]
    if n == 0:
        raise EmptyInputError("transform input is empty")
    if n & (n - 1):
        raise ValidationError(f"transform length must be a power of two, got {n}")
    if n == 1:
        return arr.copy()
    out = arr[_bit_reversal(n)]
    for tw in _twiddles(n):
        half = tw.shape[0]
        pairs = out.reshape(-1, 2 * half)
        even = pairs[:, :half].copy()
        odd = pairs[:, half:] * tw
        pairs[:, :half] = even + odd
        pairs[:, half:] = even - odd
    return out


def ifft_radix2(x) -> np.ndarray:
    """Inverse of fft_radix2 via conjugation."""
    arr = np.asarray(x, dtype=np.complex128)
    return np.conj(fft_radix2(np.conj(arr))) / arr.shape[0]


def dft_magnitude(samples, sample_rate_hz: float) -> Spectrum:
    """One-sided magnitude spectrum of a zero-padded window.

    The input is zero-padded to the next power of two N; bins 0..N/2 are
    returned with resolution sample_rate_hz / N.
    """
    arr = _as_samples(samples, min_len=2)
    if not np.isfinite(sample_rate_hz) or sample_rate_hz <= 0:
        raise ValidationError(f"sample rate must be positive, got {sample_rate_hz}")
    n = arr.shape[0]
    padded_n = next_pow2(n)
    padded = np.zeros(padded_n, dtype=np.float64)
    padded[:n] = arr
    spectrum = fft_radix2(padded)
    magnitudes = np.abs(spectrum[: padded_n // 2 + 1])
    return Spectrum(bin_resolution_hz=sample_rate_hz / padded_n, magnitudes=magnitudes)


def bandpass(samples, sample_rate_hz: float, band: BandSpec) -> np.ndarray:
    """Zero-phase band-pass via a frequency-domain mask.

    Keeps bins whose frequency f satisfies band.low_hz <= f <= band.high_hz
    (DC is removed unless low_hz == 0) and zeroes the rest, symmetrically so
    the output stays real.  The input is zero-padded to a power of two and
    the result truncated back to the input length.
    """
    arr = _as_samples(samples, min_len=2)
    if not np.isfinite(sample_rate_hz) or sample_rate_hz <= 0:
        raise ValidationError(f"sample rate must be positive, got {sample_rate_hz}")
    band.check_nyquist(sample_rate_hz)
    n = arr.shape[0]
    padded_n = next_pow2(n)
    padded = np.zeros(padded_n, dtype=np.float64)
    padded[:n] = arr
    spectrum = fft_radix2(padded)
    k = np.arange(padded_n)
    freqs = np.minimum(k, padded_n - k) * (sample_rate_hz / padded_n)
    mask = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    filtered = ifft_radix2(spectrum * mask).real
    return filtered[:n].copy()


def remove_mean(samples) -> np.ndarray:
    arr = _as_samples(samples, min_len=1)
    return arr - arr.mean()


def window_geometry(sample_rate_hz: float, window_seconds: float, overlap_fraction: float) -> tuple[int, int]:
    """Window length and stride, in samples, for the given segmentation."""
    if not np.isfinite(window_seconds) or window_seconds <= 0:
        raise ValidationError(f"window_seconds must be positive, got {window_seconds}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValidationError(f"overlap fraction must lie in [0, 1), got {overlap_fraction}")
    length = int(round(window_seconds * sample_rate_hz))
    if length < 2:
        raise ValidationError(
            f"window of {window_seconds} s at {sample_rate_hz} Hz spans {length} "
            "samples; need at least 2"
        )
    # Floor with a tiny nudge so exact products (e.g. 1080 * 0.1) are not
    # pushed below the integer they represent by float rounding.
    stride = int(np.floor(length * (1.0 - overlap_fraction) + 1e-9))
    return length, max(1, stride)


def segment_windows(series: TimeSeries, window_seconds: float, overlap_fraction: float) -> list[Window]:
    """Maximal run of equally strided windows covering the record from sample 0.

    Stride is floor(length * (1 - overlap)) clamped to at least 1; a final
    partial window is never emitted.
    """
    length, stride = window_geometry(series.sample_rate_hz, window_seconds, overlap_fraction)
    if length > series.n_samples:
        raise EmptyInputError(
            f"record of {series.n_samples} samples is shorter than one "
            f"{length}-sample window"
        )
    starts = range(0, series.n_samples - length + 1, stride)
    return [Window(start_index=s, length=length) for s in starts]
