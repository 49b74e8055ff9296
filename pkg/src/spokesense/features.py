"""Per-window vibration features.

Each sensor channel is tied to one analysis band (channel 1 -> low,
channel 2 -> mid, channel 3 -> high).  For every channel the windowed
samples are band-passed with that channel's band, mean-removed, and six
statistics are computed: rms, std, kurtosis, skewness, energy, entropy.
The resulting 18-dimensional vector can be extended with four extra
descriptors aimed at periodicity and impulsiveness.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyInputError,
    LayoutMismatchError,
    ValidationError,
)
from .signals import BandSpec, TimeSeries, Window, bandpass, check_window, remove_mean

STAT_NAMES = ("rms", "std", "kurtosis", "skewness", "energy", "entropy")
BAND_NAMES = ("low", "mid", "high")
EXTRA_NAMES = ("autocorr_peak", "amplitude_smoothness", "highfreq_std", "spike_kurtosis")

DEFAULT_BANDS = (BandSpec(1.0, 50.0), BandSpec(100.0, 400.0), BandSpec(400.0, 700.0))
DEFAULT_ENTROPY_BINS = 16

_LAYOUT_PREFIX = "ffv1"


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction settings; fully encoded by its layout id."""

    bands: tuple[BandSpec, BandSpec, BandSpec] = DEFAULT_BANDS
    entropy_bins: int = DEFAULT_ENTROPY_BINS
    include_position_extras: bool = False

    def __post_init__(self):
        if len(self.bands) != 3:
            raise ValidationError(f"exactly 3 bands required, got {len(self.bands)}")
        if self.entropy_bins < 2:
            raise ValidationError(f"entropy_bins must be >= 2, got {self.entropy_bins}")

    @property
    def n_features(self) -> int:
        return 18 + (4 if self.include_position_extras else 0)

    def layout_id(self) -> str:
        bands = ",".join(f"{b.low_hz!r}:{b.high_hz!r}" for b in self.bands)
        extras = 1 if self.include_position_extras else 0
        return f"{_LAYOUT_PREFIX};bands={bands};entropy_bins={self.entropy_bins};extras={extras}"

    def feature_names(self) -> tuple[str, ...]:
        names = [
            f"ch{c + 1}_{BAND_NAMES[c]}_{stat}"
            for c in range(3)
            for stat in STAT_NAMES
        ]
        if self.include_position_extras:
            names.extend(EXTRA_NAMES)
        return tuple(names)

    @staticmethod
    def from_layout_id(layout_id: str) -> "FeatureConfig":
        pattern = (
            rf"^{_LAYOUT_PREFIX};bands=([^;]+);entropy_bins=(\d+);extras=([01])$"
        )
        m = re.match(pattern, layout_id)
        if m is None:
            raise LayoutMismatchError(f"unrecognized feature layout id: {layout_id!r}")
        edges = []
        for part in m.group(1).split(","):
            lo, _, hi = part.partition(":")
            try:
                edges.append(BandSpec(float(lo), float(hi)))
            except ValueError as exc:
                raise LayoutMismatchError(f"bad band edge in layout id: {part!r}") from exc
        if len(edges) != 3:
            raise LayoutMismatchError(f"layout id must list 3 bands, got {len(edges)}")
        return FeatureConfig(
            bands=tuple(edges),
            entropy_bins=int(m.group(2)),
            include_position_extras=m.group(3) == "1",
        )


def _as_1d(x, min_len: int, name: str = "samples") -> np.ndarray:
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


def rms(x) -> float:
    arr = _as_1d(x, min_len=1)
    return float(np.sqrt(np.mean(arr * arr)))


def std_dev(x) -> float:
    """Population standard deviation (1/n normalization)."""
    arr = _as_1d(x, min_len=2)
    return float(np.std(arr))


def _central_moments(arr: np.ndarray) -> tuple[float, float, float]:
    centered = arr - arr.mean()
    m2 = float(np.mean(centered * centered))
    m3 = float(np.mean(centered ** 3))
    m4 = float(np.mean(centered ** 4))
    return m2, m3, m4


def kurtosis(x) -> float:
    """Excess kurtosis m4 / m2**2 - 3; zero for a Gaussian in expectation."""
    arr = _as_1d(x, min_len=4)
    m2, _, m4 = _central_moments(arr)
    if m2 == 0.0:
        raise DegenerateInputError("kurtosis undefined for zero-variance input")
    return m4 / (m2 * m2) - 3.0


def skewness(x) -> float:
    """Third standardized moment m3 / m2**1.5."""
    arr = _as_1d(x, min_len=3)
    m2, m3, _ = _central_moments(arr)
    if m2 == 0.0:
        raise DegenerateInputError("skewness undefined for zero-variance input")
    return m3 / m2 ** 1.5


def signal_energy(x) -> float:
    arr = _as_1d(x, min_len=1)
    return float(np.sum(arr * arr))


def shannon_entropy(x, bins: int = DEFAULT_ENTROPY_BINS) -> float:
    """Entropy in bits of the amplitude histogram.

    Uses ``bins`` equal-width bins spanning [min(x), max(x)]; empty bins
    contribute zero.  A constant signal has a single occupied bin and
    entropy 0.
    """
    arr = _as_1d(x, min_len=1)
    if bins < 2:
        raise ValidationError(f"entropy needs at least 2 bins, got {bins}")
    lo = float(arr.min())
    hi = float(arr.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(arr, bins=bins, range=(lo, hi))
    probs = counts[counts > 0] / arr.shape[0]
    return float(-np.sum(probs * np.log2(probs)))


class AutocorrPeak(NamedTuple):
    lag: int
    value: float
    found: bool


def autocorrelation_peak(x, min_lag: int = 1) -> AutocorrPeak:
    """First local maximum of the biased normalized autocorrelation.

    The input is mean-removed; r(0) = 1 by construction.  Scans lags
    >= min_lag for the first r(t) with r(t) > r(t-1) and r(t) >= r(t+1).
    Returns (0, 1.0, False) when no local maximum exists.
    """
    arr = _as_1d(x, min_len=8)
    if min_lag < 1:
        raise ValidationError(f"min_lag must be >= 1, got {min_lag}")
    centered = arr - arr.mean()
    denom = float(np.sum(centered * centered))
    if denom == 0.0:
        raise DegenerateInputError("autocorrelation undefined for zero-variance input")
    n = centered.shape[0]
    from .signals import fft_radix2, ifft_radix2, next_pow2

    padded_n = next_pow2(2 * n)
    padded = np.zeros(padded_n, dtype=np.float64)
    padded[:n] = centered
    power = np.abs(fft_radix2(padded)) ** 2
    corr = ifft_radix2(power).real[:n] / denom
    for lag in range(min_lag, n - 1):
        if corr[lag] > corr[lag - 1] and corr[lag] >= corr[lag + 1]:
            return AutocorrPeak(lag=lag, value=float(corr[lag]), found=True)
    return AutocorrPeak(lag=0, value=1.0, found=False)


def amplitude_smoothness(x, subwindow: int = 32) -> float:
    """Envelope steadiness in (0, 1]; 1 means a perfectly steady envelope.

    The envelope is a moving rms with sub-window min(subwindow, n) and
    stride 1; the score is 1 / (1 + mean|diff(envelope)| / (mean(envelope)
    + 1e-12)).
    """
    arr = _as_1d(x, min_len=2)
    if subwindow < 1:
        raise ValidationError(f"subwindow must be >= 1, got {subwindow}")
    w = min(subwindow, arr.shape[0])
    squares = arr * arr
    csum = np.concatenate(([0.0], np.cumsum(squares)))
    window_means = (csum[w:] - csum[:-w]) / w
    envelope = np.sqrt(np.maximum(window_means, 0.0))
    mean_env = float(envelope.mean())
    if envelope.shape[0] < 2:
        return 1.0
    mean_step = float(np.abs(np.diff(envelope)).mean())
    return 1.0 / (1.0 + mean_step / (mean_env + 1e-12))


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    degenerate: bool = False


def _guarded(stat, filtered: np.ndarray) -> tuple[float, bool]:
    try:
        return stat(filtered), False
    except DegenerateInputError:
        return 0.0, True


def extract_features(series: TimeSeries, window: Window, config: FeatureConfig) -> FeatureVector:
    """Feature vector for one window of a record.

    Channel c is band-passed with config.bands[c], mean-removed, then the
    six per-band statistics are computed.  Zero-variance channels yield 0
    for kurtosis and skewness and set the degenerate flag instead of
    raising.
    """
    check_window(series, window)
    rate = series.sample_rate_hz
    for band in config.bands:
        band.check_nyquist(rate)
    values: list[float] = []
    degenerate = False
    filtered_by_channel: list[np.ndarray] = []
    for c in range(3):
        segment = series.channels[c, window.start_index:window.stop_index]
        filtered = remove_mean(bandpass(segment, rate, config.bands[c]))
        filtered_by_channel.append(filtered)
        kurt, k_bad = _guarded(kurtosis, filtered)
        skew, s_bad = _guarded(skewness, filtered)
        degenerate = degenerate or k_bad or s_bad
        values.extend(
            [
                rms(filtered),
                std_dev(filtered),
                kurt,
                skew,
                signal_energy(filtered),
                shannon_entropy(filtered, config.entropy_bins),
            ]
        )
    if config.include_position_extras:
        mid = filtered_by_channel[1]
        high = filtered_by_channel[2]
        try:
            peak = autocorrelation_peak(mid)
            autocorr_value = peak.value
        except DegenerateInputError:
            autocorr_value = 1.0
            degenerate = True
        raw_spoke = remove_mean(series.channels[2, window.start_index:window.stop_index])
        spike_kurt, sk_bad = _guarded(kurtosis, raw_spoke)
        degenerate = degenerate or sk_bad
        values.extend(
            [
                autocorr_value,
                amplitude_smoothness(mid),
                std_dev(high),
                spike_kurt,
            ]
        )
    return FeatureVector(
        values=np.asarray(values, dtype=np.float64),
        names=config.feature_names(),
        degenerate=degenerate,
    )


def extract_feature_matrix(
    series_list,
    config: FeatureConfig,
    window_seconds: float = 1.5,
    overlap_fraction: float = 0.5,
) -> tuple[np.ndarray, list[str | None], tuple[str, ...]]:
    """Stack per-window feature vectors for a list of records.

    Returns (matrix, row labels, column names); a row's label is the
    label of the record it came from.
    """
    from .signals import segment_windows

    rows: list[np.ndarray] = []
    labels: list[str | None] = []
    names = config.feature_names()
    for series in series_list:
        for window in segment_windows(series, window_seconds, overlap_fraction):
            rows.append(extract_features(series, window, config).values)
            labels.append(series.label)
    if not rows:
        raise EmptyInputError("no windows produced from the given records")
    return np.vstack(rows), labels, names
