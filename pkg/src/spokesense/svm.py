"""Support vector classification trained by sequential minimal optimization.

Binary machines solve the soft-margin dual with the simplified pair-selection
rule: sweep the current margin violators, pairing each with a uniformly
random second index.  Multiclass problems train one machine per unordered
class pair and vote; ties break by accumulated decision strength, then by
class order.  Feature columns are standardized once per multiclass fit and
queries are mapped through the stored standardizer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyInputError,
    LayoutMismatchError,
    ValidationError,
)
from .rng import Prng, derive_seed

KERNEL_NAMES = ("linear", "rbf")
DEFAULT_C = 10.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 50
DEFAULT_MAX_SWEEPS = 10000

# Grace added on top of the training tolerance when re-verifying optimality
# conditions from recomputed margins; absorbs kernel recomputation rounding.
_KKT_GRACE = 1e-9


def _as_matrix(x, name: str = "features") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyInputError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(eq=False)
class Standardizer:
    """Per-column affine map to zero mean and unit spread.

    ``guarded`` flags columns whose spread fell below 1e-12; they keep
    std 1 so constant features pass through centered instead of dividing
    by zero.
    """

    means: np.ndarray
    stds: np.ndarray
    guarded: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.means.shape[0]


def fit_standardizer(x) -> Standardizer:
    arr = _as_matrix(x)
    means = arr.mean(axis=0)
    stds = arr.std(axis=0)
    guarded = stds < 1e-12
    stds = np.where(guarded, 1.0, stds)
    return Standardizer(means=means, stds=stds, guarded=guarded)


def apply_standardizer(standardizer: Standardizer, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    width = arr.shape[-1] if arr.ndim in (1, 2) else -1
    if width != standardizer.n_features:
        raise LayoutMismatchError(
            f"expected {standardizer.n_features} feature columns, got "
            f"{width if width >= 0 else arr.shape}"
        )
    return (arr - standardizer.means) / standardizer.stds


@dataclass(frozen=True)
class Kernel:
    name: str
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ValidationError(f"kernel must be one of {KERNEL_NAMES}, got {self.name!r}")
        if self.name == "rbf":
            if self.gamma is None or not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ValidationError(f"rbf kernel needs gamma > 0, got {self.gamma}")
        elif self.gamma is not None:
            raise ValidationError("linear kernel takes no gamma")


def kernel_matrix(kernel: Kernel, a, b) -> np.ndarray:
    """Gram matrix K[i, j] = k(a_i, b_j)."""
    av = np.atleast_2d(np.asarray(a, dtype=np.float64))
    bv = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if av.shape[1] != bv.shape[1]:
        raise LayoutMismatchError(
            f"kernel operands disagree on dimension: {av.shape[1]} vs {bv.shape[1]}"
        )
    cross = av @ bv.T
    if kernel.name == "linear":
        return cross
    sq = np.sum(av * av, axis=1)[:, None] + np.sum(bv * bv, axis=1)[None, :] - 2.0 * cross
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-kernel.gamma * sq)


def median_heuristic_gamma(x) -> float:
    """1 / (d * median pairwise squared distance) on an evenly strided subset.

    At most 256 rows enter the median.  Falls back to the mean squared
    distance when the median is zero; raises when every sampled pair
    coincides.
    """
    arr = _as_matrix(x)
    m, d = arr.shape
    if m < 2:
        raise ValidationError("gamma heuristic needs at least 2 rows")
    step = -(-m // 256)  # ceil
    sub = arr[::step]
    cross = sub @ sub.T
    norms = np.sum(sub * sub, axis=1)
    sq = norms[:, None] + norms[None, :] - 2.0 * cross
    pairs = sq[np.triu_indices(sub.shape[0], k=1)]
    pairs = np.maximum(pairs, 0.0)
    scale = float(np.median(pairs))
    if scale == 0.0:
        scale = float(np.mean(pairs))
    if scale == 0.0:
        raise DegenerateInputError("all sampled training rows coincide; gamma undefined")
    return 1.0 / (d * scale)


@dataclass(eq=False)
class BinarySvm:
    """Trained binary machine; coefficients are alpha_i * y_i per support vector."""

    kernel: Kernel
    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    c: float
    converged: bool = True
    # Training-row indices of the support vectors; not persisted.
    sv_indices: np.ndarray | None = None


def decision_function(svm: BinarySvm, x) -> float | np.ndarray:
    """Signed decision value(s); positive means the +1 class."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    k = kernel_matrix(svm.kernel, np.atleast_2d(arr), svm.support_vectors)
    values = k @ svm.coefficients + svm.bias
    return float(values[0]) if single else values


def _pair_step(
    kernel_mat: np.ndarray,
    y: np.ndarray,
    alphas: np.ndarray,
    u: np.ndarray,
    bias: float,
    c: float,
    snap: float,
    i: int,
    j: int,
) -> float | None:
    """Jointly optimize multipliers i and j; the constrained 1-d maximum.

    On progress, mutates ``alphas`` and ``u`` in place and returns the new
    bias; returns None when the pair admits no step (clipped range empty,
    non-positive curvature, or a sub-1e-12 move).
    """
    a_i_old = alphas[i]
    a_j_old = alphas[j]
    y_i = y[i]
    y_j = y[j]
    if y_i != y_j:
        low = max(0.0, a_j_old - a_i_old)
        high = min(c, c + a_j_old - a_i_old)
    else:
        low = max(0.0, a_i_old + a_j_old - c)
        high = min(c, a_i_old + a_j_old)
    if low == high:
        return None
    eta = kernel_mat[i, i] + kernel_mat[j, j] - 2.0 * kernel_mat[i, j]
    if eta <= 0.0:
        return None
    e_i = u[i] + bias - y_i
    e_j = u[j] + bias - y_j
    a_j = a_j_old + y_j * (e_i - e_j) / eta
    a_j = min(high, max(low, a_j))
    # Exact-bound results otherwise leave ~1e-16 dust the violator rule
    # would chase forever.
    if a_j < snap:
        a_j = 0.0
    elif a_j > c - snap:
        a_j = c
    if abs(a_j - a_j_old) < 1e-12:
        return None
    a_i = a_i_old + y_i * y_j * (a_j_old - a_j)
    if a_i < snap:
        a_i = 0.0
    elif a_i > c - snap:
        a_i = c
    d_i = y_i * (a_i - a_i_old)
    d_j = y_j * (a_j - a_j_old)
    b1 = bias - e_i - d_i * kernel_mat[i, i] - d_j * kernel_mat[i, j]
    b2 = bias - e_j - d_i * kernel_mat[i, j] - d_j * kernel_mat[j, j]
    if 0.0 < a_i < c:
        new_bias = b1
    elif 0.0 < a_j < c:
        new_bias = b2
    else:
        new_bias = (b1 + b2) / 2.0
    alphas[i] = a_i
    alphas[j] = a_j
    u += d_i * kernel_mat[i] + d_j * kernel_mat[j]
    return new_bias


def _best_partner(
    kernel_mat: np.ndarray,
    k_diag: np.ndarray,
    y: np.ndarray,
    alphas: np.ndarray,
    u: np.ndarray,
    bias: float,
    c: float,
    i: int,
) -> int | None:
    """Largest-error-gap partner for i among those admitting a real step."""
    e = u + bias - y
    same = y == y[i]
    low = np.where(
        same,
        np.maximum(0.0, alphas + alphas[i] - c),
        np.maximum(0.0, alphas - alphas[i]),
    )
    high = np.where(
        same, np.minimum(c, alphas + alphas[i]), np.minimum(c, c + alphas - alphas[i])
    )
    eta = k_diag[i] + k_diag - 2.0 * kernel_mat[i]
    movable = (high > low) & (eta > 0.0)
    movable[i] = False
    if not movable.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        proposed = alphas + y * (e[i] - e) / eta
    proposed = np.clip(proposed, low, high)
    movable &= np.abs(proposed - alphas) >= 1e-12
    if not movable.any():
        return None
    gaps = np.where(movable, np.abs(e - e[i]), -1.0)
    return int(np.argmax(gaps))


def _smo(
    kernel_mat: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_passes: int,
    seed: int,
    max_sweeps: int,
) -> tuple[np.ndarray, float, bool]:
    """Core dual ascent; returns (alphas, bias, converged).

    Maintains u_i = sum_j alpha_j y_j K_ij incrementally, refreshing it
    periodically and before any convergence claim so accumulated rounding
    cannot fake or hide a violator.
    """
    m = y.shape[0]
    k_diag = np.ascontiguousarray(np.diag(kernel_mat))
    alphas = np.zeros(m)
    bias = 0.0
    u = np.zeros(m)
    rng = Prng(seed)
    quiet = 0
    sweeps = 0
    converged = False
    # Pair updates whose exact result lands on a box bound leave float dust
    # (~1e-16) that the violator rule would chase forever; snap to the bound.
    snap = 1e-10 * c
    while sweeps < max_sweeps:
        margin_err = y * (u + bias - y)
        violators = np.nonzero(
            ((margin_err < -tol) & (alphas < c)) | ((margin_err > tol) & (alphas > 0.0))
        )[0]
        if violators.size == 0:
            u = kernel_mat @ (alphas * y)
            margin_err = y * (u + bias - y)
            violators = np.nonzero(
                ((margin_err < -tol) & (alphas < c)) | ((margin_err > tol) & (alphas > 0.0))
            )[0]
            if violators.size == 0:
                converged = True
                break
        sweeps += 1
        changed = 0
        for i in violators:
            r_i = y[i] * (u[i] + bias - y[i])
            a_i_old = alphas[i]
            if not ((r_i < -tol and a_i_old < c) or (r_i > tol and a_i_old > 0.0)):
                continue  # already repaired by an earlier pair this sweep
            j = rng.below(m - 1)
            if j >= i:
                j += 1
            new_bias = _pair_step(kernel_mat, y, alphas, u, bias, c, snap, i, j)
            if new_bias is None:
                # The random partner admits no progress (box-blocked, zero
                # curvature, or matching error); near an ill-conditioned
                # optimum that holds for most partners.  Fall back to the
                # largest-error-gap partner that can actually move.
                j = _best_partner(kernel_mat, k_diag, y, alphas, u, bias, c, i)
                if j is None:
                    continue
                new_bias = _pair_step(kernel_mat, y, alphas, u, bias, c, snap, i, j)
                if new_bias is None:
                    continue
            bias = new_bias
            changed += 1
        if changed == 0:
            quiet += 1
            if quiet >= max_passes:
                break
        else:
            quiet = 0
        if sweeps % 64 == 0:
            u = kernel_mat @ (alphas * y)
    if not converged:
        u = kernel_mat @ (alphas * y)
        margin_err = y * (u + bias - y)
        remaining = np.count_nonzero(
            ((margin_err < -tol) & (alphas < c)) | ((margin_err > tol) & (alphas > 0.0))
        )
        if remaining == 0:
            converged = True
        else:
            warnings.warn(
                f"binary svm left {remaining} margin violators after {sweeps} sweeps",
                RuntimeWarning,
                stacklevel=3,
            )
    return alphas, bias, converged


def train_binary_svm(
    x,
    y,
    c: float = DEFAULT_C,
    kernel: Kernel = Kernel("linear"),
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed: int = 0,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> BinarySvm:
    """Train one soft-margin machine on labels in {-1, +1}."""
    arr = _as_matrix(x)
    yv = np.asarray(y, dtype=np.float64)
    if yv.ndim != 1 or yv.shape[0] != arr.shape[0]:
        raise ValidationError(
            f"labels must be one per row: {yv.shape} labels for {arr.shape[0]} rows"
        )
    if not np.all(np.isin(yv, (-1.0, 1.0))):
        raise ValidationError("binary labels must be -1 or +1")
    if not (np.any(yv == 1.0) and np.any(yv == -1.0)):
        raise ValidationError("both classes must be present")
    if not np.isfinite(c) or c <= 0:
        raise ValidationError(f"c must be positive, got {c}")
    if not np.isfinite(tol) or tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    kmat = kernel_matrix(kernel, arr, arr)
    alphas, bias, converged = _smo(kmat, yv, c, tol, max_passes, seed, max_sweeps)
    sv = alphas > 0.0
    return BinarySvm(
        kernel=kernel,
        support_vectors=arr[sv].copy(),
        coefficients=(alphas * yv)[sv],
        bias=bias,
        c=c,
        converged=converged,
        sv_indices=np.nonzero(sv)[0],
    )


@dataclass(frozen=True)
class KktReport:
    """Worst-case optimality residuals over a training set."""

    max_zero_set_violation: float
    max_interior_violation: float
    max_bound_set_violation: float
    dual_balance_residual: float
    satisfied: bool


def kkt_report(svm: BinarySvm, x, y, tol: float = DEFAULT_TOL) -> KktReport:
    """Check the trained machine's optimality conditions on its training data.

    Requires the machine's in-memory support-vector indices.  Conditions:
    alpha = 0 rows need margin >= 1 - tol, interior rows |margin - 1| <= tol,
    alpha = C rows margin <= 1 + tol, and sum(alpha * y) must vanish.
    """
    if svm.sv_indices is None:
        raise ValidationError("kkt_report needs a machine trained in this process")
    arr = _as_matrix(x)
    yv = np.asarray(y, dtype=np.float64)
    alphas = np.zeros(arr.shape[0])
    alphas[svm.sv_indices] = svm.coefficients * yv[svm.sv_indices]
    if np.any(alphas < 0.0) or np.any(alphas > svm.c):
        raise ValidationError("reconstructed multipliers fall outside [0, C]")
    margins = yv * decision_function(svm, arr)
    zero_set = alphas == 0.0
    bound_set = alphas == svm.c
    interior = ~zero_set & ~bound_set
    max_zero = float(np.max((1.0 - tol) - margins[zero_set], initial=0.0))
    max_interior = float(np.max(np.abs(margins[interior] - 1.0) - tol, initial=0.0))
    max_bound = float(np.max(margins[bound_set] - (1.0 + tol), initial=0.0))
    dual = float(abs(np.sum(svm.coefficients)))
    satisfied = (
        max_zero <= _KKT_GRACE
        and max_interior <= _KKT_GRACE
        and max_bound <= _KKT_GRACE
        and dual <= 1e-6
    )
    return KktReport(
        max_zero_set_violation=max_zero,
        max_interior_violation=max_interior,
        max_bound_set_violation=max_bound,
        dual_balance_residual=dual,
        satisfied=satisfied,
    )


@dataclass(eq=False)
class PairwiseEntry:
    class_a: str
    class_b: str
    svm: BinarySvm


@dataclass(eq=False)
class SvmModel:
    """One-vs-one multiclass model over standardized features."""

    standardizer: Standardizer
    class_names: tuple[str, ...]
    pairwise: list[PairwiseEntry]
    feature_layout_id: str = ""


def fit_svm_model(
    x,
    labels,
    *,
    kernel_name: str = "rbf",
    c: float = DEFAULT_C,
    gamma: float | None = None,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed: int = 0,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    feature_layout_id: str = "",
) -> SvmModel:
    """Train one machine per class pair on standardized features.

    Class names are the sorted unique labels; pair (a, b) with a earlier
    in that order takes y = +1 for a.  With kernel_name == "rbf" and no
    explicit gamma, the median heuristic is evaluated once on the full
    standardized training matrix.
    """
    arr = _as_matrix(x)
    label_list = [str(v) for v in labels]
    if len(label_list) != arr.shape[0]:
        raise ValidationError(
            f"labels must be one per row: {len(label_list)} labels for {arr.shape[0]} rows"
        )
    class_names = tuple(sorted(set(label_list)))
    if len(class_names) < 2:
        raise ValidationError("need at least 2 classes to train a classifier")
    standardizer = fit_standardizer(arr)
    xs = apply_standardizer(standardizer, arr)
    if kernel_name == "rbf" and gamma is None:
        gamma = median_heuristic_gamma(xs)
    kernel = Kernel(kernel_name, gamma if kernel_name == "rbf" else None)
    full_k = kernel_matrix(kernel, xs, xs)
    rows_by_class = {
        name: np.asarray([i for i, v in enumerate(label_list) if v == name])
        for name in class_names
    }
    pairwise: list[PairwiseEntry] = []
    for ai in range(len(class_names)):
        for bi in range(ai + 1, len(class_names)):
            rows_a = rows_by_class[class_names[ai]]
            rows_b = rows_by_class[class_names[bi]]
            rows = np.concatenate([rows_a, rows_b])
            yv = np.concatenate([np.ones(rows_a.size), -np.ones(rows_b.size)])
            k_pair = np.ascontiguousarray(full_k[np.ix_(rows, rows)])
            alphas, bias, converged = _smo(
                k_pair, yv, c, tol, max_passes, derive_seed(seed, "pair", ai, bi), max_sweeps
            )
            sv = alphas > 0.0
            pairwise.append(
                PairwiseEntry(
                    class_a=class_names[ai],
                    class_b=class_names[bi],
                    svm=BinarySvm(
                        kernel=kernel,
                        support_vectors=xs[rows[sv]].copy(),
                        coefficients=(alphas * yv)[sv],
                        bias=bias,
                        c=c,
                        converged=converged,
                        sv_indices=np.nonzero(sv)[0],
                    ),
                )
            )
    return SvmModel(
        standardizer=standardizer,
        class_names=class_names,
        pairwise=pairwise,
        feature_layout_id=feature_layout_id,
    )


def predict_batch(model: SvmModel, x) -> list[str]:
    """Majority vote over the pairwise machines for each row.

    Vote ties break by the larger sum of |decision value| over the pairs
    each tied class won, then by class order.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-d query matrix, got shape {arr.shape}")
    xs = apply_standardizer(model.standardizer, arr)
    n = xs.shape[0]
    k = len(model.class_names)
    index_of = {name: i for i, name in enumerate(model.class_names)}
    votes = np.zeros((n, k), dtype=np.int64)
    strength = np.zeros((n, k))
    for entry in model.pairwise:
        f = np.asarray(decision_function(entry.svm, xs))
        ai = index_of[entry.class_a]
        bi = index_of[entry.class_b]
        wins_a = f > 0.0
        votes[wins_a, ai] += 1
        votes[~wins_a, bi] += 1
        strength[wins_a, ai] += f[wins_a]
        strength[~wins_a, bi] -= f[~wins_a]
    top = votes.max(axis=1, keepdims=True)
    tied_strength = np.where(votes == top, strength, -1.0)
    winners = np.argmax(tied_strength, axis=1)  # first index wins exact ties
    return [model.class_names[w] for w in winners]


def predict(model: SvmModel, x) -> str:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"expected a single feature vector, got shape {arr.shape}")
    return predict_batch(model, arr[None, :])[0]


@dataclass(eq=False)
class ConfusionMatrix:
    """Row = true class, column = predicted class."""

    class_names: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts)) / total if total else 0.0


def evaluate_trials(
    x,
    labels,
    *,
    n_trials: int = 120,
    test_fraction: float = 0.2,
    seed: int = 0,
    kernel_name: str = "rbf",
    c: float = DEFAULT_C,
    gamma: float | None = None,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
) -> tuple[float, ConfusionMatrix]:
    """Repeated stratified random split evaluation.

    Trial i uses seed ``master XOR i``; each class contributes
    clamp(round(test_fraction * n_class), 1, n_class - 1) test rows.
    Returns the mean of per-trial accuracies and the confusion matrix
    pooled over all trials.
    """
    arr = _as_matrix(x)
    label_list = [str(v) for v in labels]
    if len(label_list) != arr.shape[0]:
        raise ValidationError(
            f"labels must be one per row: {len(label_list)} labels for {arr.shape[0]} rows"
        )
    if n_trials < 1:
        raise ValidationError(f"n_trials must be >= 1, got {n_trials}")
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    class_names = tuple(sorted(set(label_list)))
    if len(class_names) < 2:
        raise ValidationError("need at least 2 classes to evaluate")
    rows_by_class = {
        name: np.asarray([i for i, v in enumerate(label_list) if v == name])
        for name in class_names
    }
    for name, rows in rows_by_class.items():
        if rows.size < 2:
            raise ValidationError(f"class {name!r} has {rows.size} rows; need at least 2")
    index_of = {name: i for i, name in enumerate(class_names)}
    labels_arr = np.asarray(label_list)
    counts = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
    accuracies = np.empty(n_trials)
    for trial in range(n_trials):
        trial_seed = (int(seed) ^ trial) & 0xFFFFFFFFFFFFFFFF
        split_rng = Prng(derive_seed(trial_seed, "split"))
        test_parts = []
        train_parts = []
        for name in class_names:
            idx = rows_by_class[name].copy()
            split_rng.shuffle(idx)
            n_class = idx.size
            n_test = min(max(int(round(test_fraction * n_class)), 1), n_class - 1)
            test_parts.append(idx[:n_test])
            train_parts.append(idx[n_test:])
        test_rows = np.concatenate(test_parts)
        train_rows = np.concatenate(train_parts)
        model = fit_svm_model(
            arr[train_rows],
            labels_arr[train_rows],
            kernel_name=kernel_name,
            c=c,
            gamma=gamma,
            tol=tol,
            max_passes=max_passes,
            seed=derive_seed(trial_seed, "model"),
        )
        predictions = predict_batch(model, arr[test_rows])
        correct = 0
        for row, pred in zip(test_rows, predictions):
            true_i = index_of[labels_arr[row]]
            counts[true_i, index_of[pred]] += 1
            correct += pred == labels_arr[row]
        accuracies[trial] = correct / test_rows.size
    return float(accuracies.mean()), ConfusionMatrix(class_names=class_names, counts=counts)
