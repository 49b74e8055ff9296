"""Distance-based ranking of an unknown terrain against known classes.

A terrain library holds per-class mean feature vectors and a pooled
within-class covariance, all in standardized feature space.  An unknown
recording's mean feature vector is ranked against every class under both
the Euclidean and Mahalanobis metrics; disagreement between the two
nearest classes is flagged rather than hidden.  The covariance is
regularized with a trace-scaled ridge and factorized by Cholesky; no
explicit inverse is ever formed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (
    EmptyInputError,
    LayoutMismatchError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .svm import Standardizer, apply_standardizer, fit_standardizer

DEFAULT_EPSILON_SCALE = 1e-6
_EPSILON_FLOOR = 1e-12


def euclidean_distance(x, y) -> float:
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1:
        raise ValidationError("distance operands must be vectors")
    if xv.shape[0] != yv.shape[0]:
        raise LayoutMismatchError(
            f"distance operands disagree on dimension: {xv.shape[0]} vs {yv.shape[0]}"
        )
    if not (np.isfinite(xv).all() and np.isfinite(yv).all()):
        raise ValidationError("distance operands contain non-finite values")
    diff = xv - yv
    return float(math.sqrt(np.dot(diff, diff)))


def cholesky_spd(a) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == a.

    Raises NotPositiveDefiniteError naming the 1-based leading principal
    minor at which positivity first fails.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("matrix contains non-finite entries")
    d = arr.shape[0]
    lower = np.zeros((d, d))
    for j in range(d):
        pivot = arr[j, j] - np.dot(lower[j, :j], lower[j, :j])
        if pivot <= 0.0 or not np.isfinite(pivot):
            raise NotPositiveDefiniteError(j + 1)
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < d:
            lower[j + 1 :, j] = (
                arr[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]
            ) / lower[j, j]
    return lower


def _solve_lower(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Forward substitution for L w = rhs."""
    d = rhs.shape[0]
    w = np.empty(d)
    for i in range(d):
        w[i] = (rhs[i] - np.dot(lower[i, :i], w[:i])) / lower[i, i]
    return w


def _check_symmetric(arr: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(arr).max()))
    if float(np.abs(arr - arr.T).max()) > 1e-9 * scale:
        raise ValidationError(f"{name} is not symmetric")
    return (arr + arr.T) / 2.0


def mahalanobis_distance(x, y, covariance) -> float:
    """sqrt((x - y)^T S^{-1} (x - y)) via Cholesky and forward substitution."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    cov = np.asarray(covariance, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1:
        raise ValidationError("distance operands must be vectors")
    d = xv.shape[0]
    if yv.shape[0] != d or cov.shape != (d, d):
        raise LayoutMismatchError(
            f"dimension mismatch: x has {d}, y has {yv.shape[0]}, covariance {cov.shape}"
        )
    if not (np.isfinite(xv).all() and np.isfinite(yv).all()):
        raise ValidationError("distance operands contain non-finite values")
    if not np.isfinite(cov).all():
        raise ValidationError("covariance contains non-finite entries")
    cov = _check_symmetric(cov, "covariance")
    lower = cholesky_spd(cov)
    w = _solve_lower(lower, xv - yv)
    return float(math.sqrt(np.dot(w, w)))


@dataclass(eq=False)
class TerrainLibrary:
    """Known-class geometry in standardized feature space."""

    class_names: tuple[str, ...]
    class_means: np.ndarray  # (k, d), standardized
    pooled_covariance: np.ndarray  # (d, d), before regularization
    regularized_covariance: np.ndarray  # (d, d)
    epsilon: float
    standardizer: Standardizer
    cholesky_factor: np.ndarray  # cached factor of the regularized covariance

    @property
    def n_features(self) -> int:
        return self.class_means.shape[1]


def build_library(
    features_by_class: Mapping[str, np.ndarray],
    epsilon_scale: float = DEFAULT_EPSILON_SCALE,
    standardize: bool = True,
) -> TerrainLibrary:
    """Pool per-class window features into a terrain library.

    The pooled covariance is the population average of squared deviations
    from each row's own class mean; the ridge is epsilon_scale * trace / d
    with a 1e-12 floor (a warning marks the degenerate zero-trace case).
    Class order follows the mapping's iteration order.
    """
    if not features_by_class:
        raise EmptyInputError("no classes given")
    if not np.isfinite(epsilon_scale) or epsilon_scale < 0:
        raise ValidationError(f"epsilon_scale must be >= 0, got {epsilon_scale}")
    names = tuple(str(k) for k in features_by_class.keys())
    matrices = []
    width = None
    for name in names:
        mat = np.asarray(features_by_class[name], dtype=np.float64)
        if mat.ndim != 2:
            raise ValidationError(f"class {name!r} features must be a 2-d matrix")
        if mat.shape[0] < 2:
            raise ValidationError(
                f"class {name!r} has {mat.shape[0]} windows; need at least 2"
            )
        if not np.isfinite(mat).all():
            raise ValidationError(f"class {name!r} features contain non-finite values")
        if width is None:
            width = mat.shape[1]
        elif mat.shape[1] != width:
            raise LayoutMismatchError(
                f"class {name!r} has {mat.shape[1]} feature columns, expected {width}"
            )
        matrices.append(mat)
    pooled_raw = np.vstack(matrices)
    if standardize:
        standardizer = fit_standardizer(pooled_raw)
    else:
        standardizer = Standardizer(means=np.zeros(width), stds=np.ones(width))
    total = pooled_raw.shape[0]
    means = np.empty((len(names), width))
    scatter = np.zeros((width, width))
    for row, mat in enumerate(matrices):
        std_mat = apply_standardizer(standardizer, mat)
        mu = std_mat.mean(axis=0)
        means[row] = mu
        centered = std_mat - mu
        scatter += centered.T @ centered
    pooled = scatter / total
    pooled = (pooled + pooled.T) / 2.0
    epsilon = epsilon_scale * float(np.trace(pooled)) / width
    if epsilon <= 0.0:
        warnings.warn(
            "pooled covariance has zero trace; applying minimum ridge",
            RuntimeWarning,
            stacklevel=2,
        )
        epsilon = _EPSILON_FLOOR
    regularized = pooled + epsilon * np.eye(width)
    factor = cholesky_spd(regularized)
    return TerrainLibrary(
        class_names=names,
        class_means=means,
        pooled_covariance=pooled,
        regularized_covariance=regularized,
        epsilon=epsilon,
        standardizer=standardizer,
        cholesky_factor=factor,
    )


@dataclass(eq=False)
class DistanceReport:
    """Per-class distances of one unknown recording, both metrics."""

    class_names: tuple[str, ...]
    euclidean: np.ndarray
    mahalanobis: np.ndarray
    nearest_euclidean: str
    nearest_mahalanobis: str
    metric_divergence: bool

    def ranked(self, metric: str) -> list[str]:
        if metric == "euclidean":
            order = np.argsort(self.euclidean, kind="stable")
        elif metric == "mahalanobis":
            order = np.argsort(self.mahalanobis, kind="stable")
        else:
            raise ValidationError(f"unknown metric {metric!r}")
        return [self.class_names[i] for i in order]


def rank_unknown(unknown_windows, library: TerrainLibrary) -> DistanceReport:
    """Rank an unknown recording's mean feature vector against every class."""
    mat = np.asarray(unknown_windows, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise EmptyInputError("unknown recording has no feature windows")
    if mat.shape[1] != library.n_features:
        raise LayoutMismatchError(
            f"unknown features have {mat.shape[1]} columns, library expects "
            f"{library.n_features}"
        )
    if not np.isfinite(mat).all():
        raise ValidationError("unknown features contain non-finite values")
    query = apply_standardizer(library.standardizer, mat.mean(axis=0))
    k = len(library.class_names)
    euclid = np.empty(k)
    mahal = np.empty(k)
    for i in range(k):
        diff = query - library.class_means[i]
        euclid[i] = math.sqrt(np.dot(diff, diff))
        w = _solve_lower(library.cholesky_factor, diff)
        mahal[i] = math.sqrt(np.dot(w, w))
    nearest_e = int(np.argmin(euclid))
    nearest_m = int(np.argmin(mahal))
    return DistanceReport(
        class_names=library.class_names,
        euclidean=euclid,
        mahalanobis=mahal,
        nearest_euclidean=library.class_names[nearest_e],
        nearest_mahalanobis=library.class_names[nearest_m],
        metric_divergence=nearest_e != nearest_m,
    )
