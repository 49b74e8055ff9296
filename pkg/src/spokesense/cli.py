"""Command-line pipeline: simulate, extract, train, evaluate, classify, identify, spectrum.

Every command is deterministic given its inputs and ``--seed`` (falling back
to the SPOKESENSE_SEED environment variable, then 0) and writes fixed-named
files into ``--out``.  Exit code 0 means every output was written; on
failure, partially written outputs are removed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import features as features_mod
from . import formats, signals, similarity, svm, synth
from .errors import LayoutMismatchError, SpokesenseError, ValidationError

_SEED_ENV = "SPOKESENSE_SEED"
_U64_MAX = (1 << 64) - 1


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= value <= _U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text!r}")
    return value


def _test_fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text!r}")
    return value


def _bands(text: str) -> tuple[signals.BandSpec, signals.BandSpec, signals.BandSpec]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected 3 bands as lo1:hi1,lo2:hi2,lo3:hi3")
    out = []
    for part in parts:
        lo, sep, hi = part.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"band {part!r} is not lo:hi")
        try:
            out.append(signals.BandSpec(float(lo), float(hi)))
        except (ValueError, ValidationError) as exc:
            raise argparse.ArgumentTypeError(f"bad band {part!r}: {exc}") from exc
    return tuple(out)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(_SEED_ENV)
    if env is not None:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise ValidationError(f"bad {_SEED_ENV}: {exc}") from exc
    return 0


def _feature_config(args) -> features_mod.FeatureConfig:
    return features_mod.FeatureConfig(
        bands=args.bands,
        entropy_bins=args.entropy_bins,
        include_position_extras=args.extras,
    )


def _out_path(args, name: str, created: list[Path]) -> Path:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    created.append(path)
    return path


def _load_profile(args) -> synth.TerrainProfile:
    if args.profile_file is not None:
        return formats.read_profile(args.profile_file)
    return synth.builtin_profile(args.profile)


def _cmd_simulate(args, created: list[Path]) -> list[Path]:
    profile = _load_profile(args)
    if any(ch in profile.name for ch in "/\\") or profile.name.startswith("."):
        raise ValidationError(
            f"profile name {profile.name!r} cannot be used as an output file name"
        )
    spec = synth.GenSpec(
        profile=profile,
        duration_s=args.duration,
        sample_rate_hz=args.rate,
        seed=_resolve_seed(args),
    )
    series = synth.generate(spec)
    path = _out_path(args, f"{profile.name}.csv", created)
    formats.write_dataset(path, series)
    return [path]


def _cmd_extract(args, created: list[Path]) -> list[Path]:
    config = _feature_config(args)
    series_list = [formats.read_dataset(p) for p in args.inputs]
    values, labels, names = features_mod.extract_feature_matrix(
        series_list, config, args.window_seconds, args.overlap
    )
    labeled = [v for v in labels if v is not None]
    if labeled and len(labeled) != len(labels):
        raise ValidationError(
            "inputs mix labeled and unlabeled records; label all or none"
        )
    path = _out_path(args, "features.csv", created)
    formats.write_features(
        path,
        values,
        names,
        labels=labels if labeled else None,
        layout_id=config.layout_id(),
    )
    return [path]


def _require_labels(table: formats.FeatureTable, path: str) -> list[str]:
    if table.labels is None:
        raise ValidationError(f"{path} has no label column")
    return table.labels


def _require_layout(table: formats.FeatureTable, path: str) -> str:
    if table.layout_id is None:
        raise ValidationError(f"{path} has no '# layout=' metadata; re-extract features")
    return table.layout_id


def _cmd_train(args, created: list[Path]) -> list[Path]:
    table = formats.read_features(args.features)
    labels = _require_labels(table, args.features)
    layout_id = _require_layout(table, args.features)
    model = svm.fit_svm_model(
        table.values,
        labels,
        kernel_name=args.kernel,
        c=args.c,
        gamma=args.gamma,
        seed=_resolve_seed(args),
        feature_layout_id=layout_id,
    )
    path = _out_path(args, "model.json", created)
    formats.write_model(path, model)
    return [path]


def _cmd_evaluate(args, created: list[Path]) -> list[Path]:
    table = formats.read_features(args.features)
    labels = _require_labels(table, args.features)
    mean_accuracy, confusion = svm.evaluate_trials(
        table.values,
        labels,
        n_trials=args.trials,
        test_fraction=args.test_fraction,
        seed=_resolve_seed(args),
        kernel_name=args.kernel,
        c=args.c,
        gamma=args.gamma,
    )
    path = _out_path(args, "confusion.csv", created)
    formats.write_confusion(path, confusion, mean_accuracy)
    return [path]


def _cmd_classify(args, created: list[Path]) -> list[Path]:
    model = formats.read_model(args.model)
    config = features_mod.FeatureConfig.from_layout_id(model.feature_layout_id)
    if config.n_features != model.standardizer.n_features:
        raise LayoutMismatchError(
            f"model declares layout with {config.n_features} features but stores "
            f"{model.standardizer.n_features}"
        )
    series = formats.read_dataset(args.input)
    windows = signals.segment_windows(series, args.window_seconds, args.overlap)
    rows = []
    vectors = np.vstack(
        [features_mod.extract_features(series, w, config).values for w in windows]
    )
    predictions = svm.predict_batch(model, vectors)
    for index, (window, label) in enumerate(zip(windows, predictions)):
        rows.append((index, window.start_index, window.length, label))
    path = _out_path(args, "predictions.csv", created)
    formats.write_predictions(path, rows)
    return [path]


def _cmd_identify(args, created: list[Path]) -> list[Path]:
    known = formats.read_features(args.known)
    unknown = formats.read_features(args.unknown)
    labels = _require_labels(known, args.known)
    if known.names != unknown.names:
        raise LayoutMismatchError(
            f"{args.known} and {args.unknown} disagree on feature columns"
        )
    if (
        known.layout_id is not None
        and unknown.layout_id is not None
        and known.layout_id != unknown.layout_id
    ):
        raise LayoutMismatchError(
            f"{args.known} and {args.unknown} were extracted with different layouts"
        )
    by_class: dict[str, list[int]] = {}
    for row, label in enumerate(labels):
        by_class.setdefault(label, []).append(row)
    grouped = {name: known.values[rows] for name, rows in by_class.items()}
    library = similarity.build_library(grouped, epsilon_scale=args.epsilon_scale)
    report = similarity.rank_unknown(unknown.values, library)
    path = _out_path(args, "distances.csv", created)
    formats.write_distance_report(path, report)
    return [path]


def _cmd_spectrum(args, created: list[Path]) -> list[Path]:
    series = formats.read_dataset(args.input)
    spectrum = signals.dft_magnitude(
        series.channels[args.channel - 1], series.sample_rate_hz
    )
    path = _out_path(args, "spectrum.csv", created)
    formats.write_spectrum(path, spectrum)
    return [path]


def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed",
        type=_u64,
        default=None,
        help=f"64-bit seed (default: ${_SEED_ENV} if set, else 0)",
    )


def _add_out(parser) -> None:
    parser.add_argument(
        "--out", default=".", help="output directory (default: current directory)"
    )


def _add_feature_flags(parser) -> None:
    parser.add_argument(
        "--window-seconds",
        type=_positive,
        default=signals.DEFAULT_WINDOW_SECONDS,
        help="analysis window length in seconds (default: %(default)s)",
    )
    parser.add_argument(
        "--overlap",
        type=_fraction,
        default=signals.DEFAULT_OVERLAP,
        help="window overlap fraction in [0, 1) (default: %(default)s)",
    )


def _add_svm_flags(parser) -> None:
    parser.add_argument(
        "--kernel",
        choices=svm.KERNEL_NAMES,
        default="rbf",
        help="kernel type (default: %(default)s)",
    )
    parser.add_argument(
        "--c",
        type=_positive,
        default=svm.DEFAULT_C,
        help="soft-margin box constraint (default: %(default)s)",
    )
    parser.add_argument(
        "--gamma",
        type=_positive,
        default=None,
        help="rbf width (default: median pairwise-distance heuristic)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spokesense",
        description=(
            "Terrain identification from wheel-spoke vibration: synthesize "
            "records, extract band features, train and evaluate classifiers, "
            "and rank unknown terrains by distance."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a labeled vibration record")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--profile",
        help="builtin profile name: " + ", ".join(x.name for x in synth.builtin_profiles()),
    )
    group.add_argument("--profile-file", help="path to a profile JSON document")
    p.add_argument(
        "--duration", type=_positive, default=10.0, help="seconds (default: %(default)s)"
    )
    p.add_argument(
        "--rate", type=_positive, default=1440.0, help="sample rate in Hz (default: %(default)s)"
    )
    _add_seed(p)
    _add_out(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("extract", help="extract per-window features from dataset CSVs")
    p.add_argument("inputs", nargs="+", help="dataset CSV paths")
    _add_feature_flags(p)
    p.add_argument(
        "--bands",
        type=_bands,
        default=features_mod.DEFAULT_BANDS,
        help="three bands as lo1:hi1,lo2:hi2,lo3:hi3 (default: 1:50,100:400,400:700)",
    )
    p.add_argument(
        "--entropy-bins",
        type=int,
        default=features_mod.DEFAULT_ENTROPY_BINS,
        help="histogram bins for entropy (default: %(default)s)",
    )
    p.add_argument(
        "--extras",
        action="store_true",
        help="append the 4 periodicity/impulsiveness descriptors (22 columns total)",
    )
    _add_out(p)
    p.set_defaults(handler=_cmd_extract)

    p = sub.add_parser("train", help="train a one-vs-one classifier from labeled features")
    p.add_argument("features", help="labeled feature CSV")
    _add_svm_flags(p)
    _add_seed(p)
    _add_out(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("evaluate", help="repeated stratified-split evaluation")
    p.add_argument("features", help="labeled feature CSV")
    p.add_argument(
        "--trials", type=int, default=120, help="number of random splits (default: %(default)s)"
    )
    p.add_argument(
        "--test-fraction",
        type=_test_fraction,
        default=0.2,
        help="held-out fraction per class (default: %(default)s)",
    )
    _add_svm_flags(p)
    _add_seed(p)
    _add_out(p)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("classify", help="predict a terrain per window of a dataset CSV")
    p.add_argument("input", help="dataset CSV")
    p.add_argument("--model", required=True, help="model JSON from 'train'")
    _add_feature_flags(p)
    _add_out(p)
    p.set_defaults(handler=_cmd_classify)

    p = sub.add_parser(
        "identify", help="rank an unknown recording against known classes by distance"
    )
    p.add_argument("--known", required=True, help="labeled feature CSV of known classes")
    p.add_argument("--unknown", required=True, help="feature CSV of the unknown recording")
    p.add_argument(
        "--epsilon-scale",
        type=_positive,
        default=similarity.DEFAULT_EPSILON_SCALE,
        help="covariance ridge scale (default: %(default)s)",
    )
    _add_out(p)
    p.set_defaults(handler=_cmd_identify)

    p = sub.add_parser("spectrum", help="one-sided magnitude spectrum of one channel")
    p.add_argument("input", help="dataset CSV")
    p.add_argument(
        "--channel", type=int, choices=(1, 2, 3), required=True, help="sensor channel"
    )
    _add_out(p)
    p.set_defaults(handler=_cmd_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    created: list[Path] = []
    try:
        written = args.handler(args, created)
    except SpokesenseError as exc:
        for path in created:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
