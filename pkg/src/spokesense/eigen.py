"""Cross-channel covariance eigen-signatures.

For one window, each channel is mean-removed (and optionally band-passed
with a per-channel band first), the 3x3 population covariance across
channels is formed, and its eigenvalues are extracted in descending order
with a cyclic Jacobi solver for symmetric 3x3 matrices.  The leading
eigenvalue tracks overall excitation strength, so it orders terrain
roughness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .signals import BandSpec, TimeSeries, Window, bandpass, check_window, remove_mean


_OFF_DIAGONAL_PAIRS = ((0, 1), (0, 2), (1, 2))


def _sym3_eigenvalues(a: np.ndarray) -> tuple[float, float, float]:
    """Eigenvalues of a symmetric 3x3 matrix, descending.

    Cyclic Jacobi rotations: each pass zeroes the three off-diagonal
    entries in turn and converges quadratically.  Unlike the closed-form
    trigonometric solution, accuracy stays near machine epsilon even for
    repeated or near-repeated eigenvalues, which covariances of strongly
    correlated channels produce routinely.  Exact-diagonal inputs
    short-circuit to the sorted diagonal entries.
    """
    off = max(abs(a[0, 1]), abs(a[0, 2]), abs(a[1, 2]))
    if off == 0.0:
        return tuple(sorted((float(a[0, 0]), float(a[1, 1]), float(a[2, 2])), reverse=True))
    m = np.array(a, dtype=np.float64)
    scale = float(np.abs(m).max())
    floor = 4.0 * np.finfo(np.float64).eps * scale
    for _ in range(20):
        if max(abs(m[0, 1]), abs(m[0, 2]), abs(m[1, 2])) <= floor:
            break
        for p, q in _OFF_DIAGONAL_PAIRS:
            apq = m[p, q]
            if apq == 0.0:
                continue
            diff = m[q, q] - m[p, p]
            if abs(apq) < 1e-300 * abs(diff):
                # tan(2*angle) underflows; the rotation would be a no-op
                m[p, q] = m[q, p] = 0.0
                continue
            theta = 0.5 * diff / apq
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            m = rot.T @ m @ rot
            # The rotation annihilates this entry analytically; force the
            # exact zero so rounding residue cannot stall convergence.
            m[p, q] = m[q, p] = 0.0
    return tuple(sorted((float(m[0, 0]), float(m[1, 1]), float(m[2, 2])), reverse=True))


@dataclass(eq=False)
class Covariance3:
    """Symmetric positive semi-definite 3x3 covariance across channels."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.shape != (3, 3):
            raise ValidationError(f"covariance must be 3x3, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("covariance contains non-finite entries")
        scale = max(1.0, float(np.abs(arr).max()))
        if float(np.abs(arr - arr.T).max()) > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric")
        arr = (arr + arr.T) / 2.0
        trace = float(np.trace(arr))
        smallest = min(_sym3_eigenvalues(arr))
        if smallest < -1e-9 * max(trace, 1e-30):
            raise ValidationError(
                f"covariance is not positive semi-definite (eigenvalue {smallest})"
            )
        self.entries = arr

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))


@dataclass(frozen=True)
class EigenSignature:
    """Eigenvalues in descending order."""

    lambda1: float
    lambda2: float
    lambda3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)


def covariance3(
    series: TimeSeries,
    window: Window,
    bands: tuple[BandSpec, BandSpec, BandSpec] | None = None,
) -> Covariance3:
    """Population covariance of the mean-removed channels.

    By default the raw channels are used; passing three band specs
    restricts channel c to bands[c] before the covariance is taken.
    """
    check_window(series, window)
    rate = series.sample_rate_hz
    rows = []
    for c in range(3):
        segment = series.channels[c, window.start_index:window.stop_index]
        if bands is not None:
            if len(bands) != 3:
                raise ValidationError(f"exactly 3 bands required, got {len(bands)}")
            segment = bandpass(segment, rate, bands[c])
        rows.append(remove_mean(segment))
    stacked = np.vstack(rows)
    cov = (stacked @ stacked.T) / window.length
    return Covariance3(entries=cov)


def eigenvalues_sym3(cov: Covariance3 | np.ndarray) -> EigenSignature:
    """Descending eigenvalues of a symmetric 3x3 matrix."""
    if isinstance(cov, Covariance3):
        arr = cov.entries
    else:
        arr = np.asarray(cov, dtype=np.float64)
        if arr.shape != (3, 3):
            raise ValidationError(f"matrix must be 3x3, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("matrix contains non-finite entries")
        scale = max(1.0, float(np.abs(arr).max()))
        if float(np.abs(arr - arr.T).max()) > 1e-9 * scale:
            raise ValidationError("matrix is not symmetric")
        arr = (arr + arr.T) / 2.0
    eig1, eig2, eig3 = _sym3_eigenvalues(arr)
    return EigenSignature(lambda1=eig1, lambda2=eig2, lambda3=eig3)


def eigen_report_rows(
    series: TimeSeries,
    windows,
    bands: tuple[BandSpec, BandSpec, BandSpec] | None = None,
) -> list[tuple[int, EigenSignature, str | None]]:
    """(window index, signature, record label) for each window."""
    out = []
    for idx, window in enumerate(windows):
        sig = eigenvalues_sym3(covariance3(series, window, bands))
        out.append((idx, sig, series.label))
    return out
