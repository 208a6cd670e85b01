"""``hemisym`` command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure, 4 I/O error.
Seeded commands write bit-identical files for identical inputs; wall-clock
timings therefore go to standard error, never into seeded outputs.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify.data import Dataset
from .classify.ensemble import TrainedEnsemble, predict, train_on_dataset
from .errors import EmptySideError, InputError, NumericalError
from .evaluate import (CONDITIONS, corrupt, make_folds, run_cv, run_robustness_experiment,
                       thorax_ellipse_from_ribs)
from .features import (FeatureVector, extract_features, read_features_csv, shape_stats,
                       write_features_csv)
from .hemithorax import MODES, segment_hemithoraces
from .phantom import DEFAULT_ASYM_FRACTION, generate_corpus
from .pipeline import (PipelineConfig, dataset_from_results, features_for_manifest,
                       load_manifest)
from .raster import load_gray, load_mask, save_gray, save_mask
from .snake import SnakeTrace

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
CORRUPT_MODES = ("under", "over", "obscured")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _config(args) -> PipelineConfig:
    path = getattr(args, "params", None)
    config = PipelineConfig.load(path) if path else PipelineConfig()
    workers = getattr(args, "workers", None)
    mode = getattr(args, "mode", None)
    if workers is not None or mode in MODES:
        doc = config.to_dict()
        if workers is not None:
            doc["io"]["workers"] = workers
        if mode in MODES:
            doc["segmentation"]["mode"] = mode
        config = PipelineConfig.from_dict(doc)
    return config


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _jsonable(obj):
    """Replace NaN with ``None`` so reports are strict JSON."""
    if isinstance(obj, float):
        return None if obj != obj else obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _segment(args, config):
    traces: list[SnakeTrace] = []
    t0 = time.perf_counter()
    pair = segment_hemithoraces(load_mask(args.ribs), load_mask(args.spine), config.snake,
                                config.segmentation.mode, config.segmentation.margin, traces)
    return pair, traces, time.perf_counter() - t0


def cmd_segment(args) -> int:
    config = _config(args)
    pair, traces, seconds = _segment(args, config)
    out = Path(args.out)
    save_mask(f"{out}_left.png", pair.left)
    save_mask(f"{out}_right.png", pair.right)
    side = {}
    for name, mask in (("left", pair.left), ("right", pair.right)):
        side[name] = shape_stats(mask, pair.spine, name).to_dict() if mask.any() else None
    _write_json(f"{out}.json", _jsonable({
        "mode": config.segmentation.mode, "spine": pair.spine.to_dict(),
        "shape_stats": side, "snake": config.snake.to_dict(),
        "traces": [{"iterations": t.iterations, "converged": t.converged,
                    "final_energy": float(t.energies[-1]) if len(t.energies) else None}
                   for t in traces],
        "timing": {"segment_seconds": seconds}}))
    return EXIT_OK


def cmd_features(args) -> int:
    config = _config(args)
    if args.manifest:
        rows = load_manifest(args.manifest)
        results = features_for_manifest(rows, config)
        write_features_csv(args.out, [(r.id, r.features, r.label) for r in results])
        _log(f"features: {len(results)} rows, "
             f"{sum(r.seconds for r in results):.2f} s segmentation+features")
        return EXIT_OK
    if not (args.ribs and args.spine):
        raise InputError("features needs --manifest or both --ribs and --spine")
    pair, _, _ = _segment(args, config)
    write_features_csv(args.out, [(Path(args.ribs).stem, extract_features(pair), None)])
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    data = Dataset.from_rows(read_features_csv(args.features))
    if min(data.class_counts()) == 0:
        raise InputError("training features must contain both classes")
    t0 = time.perf_counter()
    model = train_on_dataset(data, config.classifier, args.seed)
    model.save(args.model)
    _log(f"train: {len(data)} rows, {time.perf_counter() - t0:.2f} s")
    return EXIT_OK


def cmd_classify(args) -> int:
    model = TrainedEnsemble.load(args.model)
    if args.features:
        rows = read_features_csv(args.features)
        if not rows:
            raise InputError("feature table is empty")
        if len(rows) == 1:
            pred = predict(model, rows[0][1])
            print(f"{pred.name} {pred.score:.6f}")
        else:
            for pid, fv, _ in rows:
                pred = predict(model, fv)
                print(f"{pid} {pred.name} {pred.score:.6f}")
        return EXIT_OK
    if not (args.ribs and args.spine):
        raise InputError("classify needs --features or both --ribs and --spine")
    pair, _, _ = _segment(args, _config(args))
    fv: FeatureVector = extract_features(pair)
    pred = predict(model, fv)
    print(f"{pred.name} {pred.score:.6f}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    if args.mode not in CORRUPT_MODES:
        raise InputError(f"--mode must be one of {CORRUPT_MODES}")
    image = load_gray(args.image)
    rng = np.random.default_rng(args.seed)
    ellipse = None
    if args.mode == "obscured":
        if not args.ribs:
            raise InputError("--mode obscured needs --ribs to locate the thorax")
        ellipse = thorax_ellipse_from_ribs(load_mask(args.ribs), _config(args))
    save_gray(args.out, corrupt(image, args.mode, rng, ellipse))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _config(args)
    t0 = time.perf_counter()
    if args.condition:
        if not args.manifest:
            raise InputError("--condition needs --manifest")
        rows = load_manifest(args.manifest, require_files=(
            "image", "ribs_mask", "spine_mask", "truth_left", "truth_right"))
        report = run_robustness_experiment(rows, args.condition, config, args.seed)
        _write_json(args.out, _jsonable(report.to_dict(include_timing=False)))
        _log(f"evaluate: condition={args.condition} mean IoU "
             f"{report.summary['mean_iou']:.4f}, {time.perf_counter() - t0:.2f} s")
        return EXIT_OK
    if args.features:
        data = Dataset.from_rows(read_features_csv(args.features))
    elif args.manifest:
        rows = load_manifest(args.manifest, require_labels=True)
        results = features_for_manifest(rows, config)
        data = dataset_from_results(results)
    else:
        raise InputError("evaluate needs --manifest or --features")
    t1 = time.perf_counter()
    folds = make_folds(data, args.folds, args.seed)
    report = run_cv(data, folds, config.classifier, args.seed)
    doc = report.to_dict(include_timing=False)
    doc["seed"] = args.seed
    doc["config"] = config.to_dict()
    _write_json(args.out, _jsonable(doc))
    ens = report.overall_pooled["ensemble"]
    _log(f"evaluate: ensemble F1 {ens['f1']:.4f} AUC {ens['auc']:.4f}; "
         f"features {t1 - t0:.2f} s, cv {time.perf_counter() - t1:.2f} s")
    return EXIT_OK


def cmd_phantom(args) -> int:
    t0 = time.perf_counter()
    manifest = generate_corpus(args.n, args.out_dir, args.asym_fraction, args.seed)
    _log(f"phantom: wrote {manifest} in {time.perf_counter() - t0:.2f} s")
    return EXIT_OK


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hemisym",
                                     description="Thorax symmetry from rib and spine masks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def params(p):
        p.add_argument("--params", help="pipeline config JSON (unknown keys are rejected)")

    p = add("segment", cmd_segment, "Split a rib mask into left and right hemithoraces.")
    p.add_argument("--ribs", required=True)
    p.add_argument("--spine", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--out", required=True, help="output prefix for _left.png, _right.png, .json")
    params(p)

    p = add("features", cmd_features, "Write the seven-feature CSV.")
    p.add_argument("--manifest")
    p.add_argument("--ribs")
    p.add_argument("--spine")
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_int)
    params(p)

    p = add("train", cmd_train, "Train the ensemble on a labeled feature CSV.")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="output model JSON")
    p.add_argument("--seed", type=int, default=0)
    params(p)

    p = add("classify", cmd_classify, "Classify a feature CSV or a rib/spine mask pair.")
    p.add_argument("--model", required=True)
    p.add_argument("--features")
    p.add_argument("--ribs")
    p.add_argument("--spine")
    p.add_argument("--mode", choices=MODES, default=None)
    params(p)

    p = add("corrupt", cmd_corrupt, "Under/over-expose or obscure a radiograph.")
    p.add_argument("--image", required=True)
    p.add_argument("--mode", required=True, choices=CORRUPT_MODES)
    p.add_argument("--ribs", help="rib mask, required for --mode obscured")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    params(p)

    p = add("evaluate", cmd_evaluate,
            "Cross-validate the classifier, or run a robustness condition with --condition.")
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition", choices=CONDITIONS)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--workers", type=_positive_int)
    p.add_argument("--out", required=True)
    params(p)

    p = add("phantom", cmd_phantom, "Generate a labeled phantom corpus.")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--asym-fraction", type=float, default=DEFAULT_ASYM_FRACTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EmptySideError as exc:
        _log(f"hemisym {args.command}: {exc}")
        return EXIT_NUMERICAL
    except NumericalError as exc:
        _log(f"hemisym {args.command}: numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (InputError, ValueError) as exc:
        _log(f"hemisym {args.command}: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _log(f"hemisym {args.command}: I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
