"""Manifest handling, pipeline configuration and per-row processing.

A dataset manifest is a JSON array of rows
``{id, image, ribs_mask, spine_mask, label}`` with paths relative to the
manifest; phantom corpora add ``truth_left``/``truth_right`` masks and an
``asymmetry`` record.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_multiotsu

from .classify.data import Dataset
from .classify.ensemble import EnsembleConfig
from .errors import InputError
from .features import FeatureVector, extract_features
from .hemithorax import MODES, HemithoraxPair, segment_hemithoraces
from .raster import load_mask
from .snake import SnakeParams, SnakeTrace

REQUIRED_KEYS = ("id", "image", "ribs_mask", "spine_mask", "label")
OPTIONAL_PATHS = ("truth_left", "truth_right")


@dataclass(frozen=True)
class SegmentationOptions:
    mode: str = "one-snake"
    margin: float = 10.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.margin >= 0:
            raise InputError("margin must be non-negative")


@dataclass(frozen=True)
class IOOptions:
    workers: int = 1

    def __post_init__(self):
        if int(self.workers) != self.workers or self.workers < 1:
            raise InputError("workers must be a positive integer")


def _section(cls, d, name):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise InputError(f"{name}: expected a mapping")
    unknown = sorted(set(d) - {f.name for f in fields(cls)})
    if unknown:
        raise InputError(f"{name}: unknown keys {unknown}")
    return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline; parsing rejects unknown keys."""
    snake: SnakeParams = field(default_factory=SnakeParams)
    segmentation: SegmentationOptions = field(default_factory=SegmentationOptions)
    classifier: EnsembleConfig = field(default_factory=EnsembleConfig)
    io: IOOptions = field(default_factory=IOOptions)

    SECTIONS = ("snake", "segmentation", "classifier", "io")

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise InputError("pipeline config must be a JSON object")
        unknown = sorted(set(d) - set(cls.SECTIONS))
        if unknown:
            raise InputError(f"pipeline config: unknown keys {unknown}")
        return cls(SnakeParams.from_dict(d.get("snake") or {}),
                   _section(SegmentationOptions, d.get("segmentation"), "segmentation"),
                   EnsembleConfig.from_dict(d.get("classifier")),
                   _section(IOOptions, d.get("io"), "io"))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"{path}: cannot read config ({exc})") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return {"snake": self.snake.to_dict(),
                "segmentation": {"mode": self.segmentation.mode,
                                 "margin": self.segmentation.margin},
                "classifier": self.classifier.to_dict(),
                "io": {"workers": self.io.workers}}


@dataclass(frozen=True)
class ManifestRow:
    id: str
    image: Path
    ribs_mask: Path
    spine_mask: Path
    label: int | None
    truth_left: Path | None = None
    truth_right: Path | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def has_truth(self) -> bool:
        return self.truth_left is not None and self.truth_right is not None


def load_manifest(path, require_files=("ribs_mask", "spine_mask"),
                  require_labels: bool = False) -> list[ManifestRow]:
    """Parse and validate a manifest; every missing file is named in the error."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"{path}: cannot read manifest ({exc})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, list):
        raise InputError(f"{path}: manifest must be a JSON array of rows")
    base = path.parent
    rows, missing, seen = [], [], set()
    for i, rec in enumerate(data):
        if not isinstance(rec, dict):
            raise InputError(f"{path}: row {i} is not an object")
        absent = [k for k in REQUIRED_KEYS if k not in rec and k != "label"]
        if absent:
            raise InputError(f"{path}: row {i} lacks keys {absent}")
        pid = str(rec["id"])
        if pid in seen:
            raise InputError(f"{path}: duplicate id {pid!r}")
        seen.add(pid)
        label = rec.get("label")
        if label is not None and label not in (0, 1):
            raise InputError(f"{path}: row {pid} label must be 0, 1 or null")
        if require_labels and label is None:
            raise InputError(f"{path}: row {pid} has no label")
        paths = {k: base / rec[k] for k in ("image", "ribs_mask", "spine_mask")}
        for k in OPTIONAL_PATHS:
            paths[k] = base / rec[k] if rec.get(k) else None
        for k in require_files:
            if paths.get(k) is None:
                raise InputError(f"{path}: row {pid} lacks {k}")
            if not paths[k].is_file():
                missing.append(str(paths[k]))
        extra = {k: v for k, v in rec.items() if k not in REQUIRED_KEYS + OPTIONAL_PATHS}
        rows.append(ManifestRow(pid, label=label, extra=extra, **paths))
    if missing:
        raise InputError("missing files: " + ", ".join(missing))
    return rows


def map_rows(func, items, workers: int = 1):
    """``[func(x) for x in items]``, optionally across processes, order preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass(frozen=True)
class RowResult:
    id: str
    features: FeatureVector
    label: int | None
    iterations: int
    seconds: float


def segment_row(row: ManifestRow, config: PipelineConfig) -> tuple[HemithoraxPair, list]:
    traces: list[SnakeTrace] = []
    pair = segment_hemithoraces(load_mask(row.ribs_mask), load_mask(row.spine_mask),
                                config.snake, config.segmentation.mode,
                                config.segmentation.margin, traces)
    return pair, traces


def _features_job(args) -> RowResult:
    row, config = args
    t0 = time.perf_counter()
    pair, traces = segment_row(row, config)
    fv = extract_features(pair)
    return RowResult(row.id, fv, row.label, sum(t.iterations for t in traces),
                     time.perf_counter() - t0)


def features_for_manifest(rows, config: PipelineConfig | None = None) -> list[RowResult]:
    config = config or PipelineConfig()
    return map_rows(_features_job, [(r, config) for r in rows], config.io.workers)


def dataset_from_results(results) -> Dataset:
    return Dataset.from_rows([(r.id, r.features, r.label) for r in results])


# -- stand-in bone segmenter ------------------------------------------------

SEGMENTER_SMOOTHING = 1.5
SATURATION_LEVEL = 0.999
SPINE_PRIOR_DILATION = 4


def segment_bones(image, spine_prior) -> tuple[np.ndarray, np.ndarray]:
    """Rib and spine masks from a gray image by three-class Otsu thresholding.

    This replaces the learned bone segmenter for the robustness experiment:
    the brightest class is bone, saturated blobs (the occluder) are excluded,
    and bone inside a dilated ``spine_prior`` is the spine.
    """
    image = np.asarray(image, dtype=float)
    spine_prior = np.asarray(spine_prior, dtype=bool)
    if image.shape != spine_prior.shape:
        raise InputError("image and spine prior must share a frame")
    smooth = ndimage.gaussian_filter(image, SEGMENTER_SMOOTHING)
    saturated = ndimage.binary_opening(image >= SATURATION_LEVEL, structure=np.ones((5, 5)))
    saturated = ndimage.binary_dilation(saturated, iterations=2)
    values = smooth[~saturated] if (~saturated).any() else smooth.ravel()
    if np.ptp(values) <= 0:
        raise InputError("image has no contrast to segment")
    lo_hi = threshold_multiotsu(values, classes=3)
    bone = (smooth > lo_hi[1]) & ~saturated
    near_spine = ndimage.binary_dilation(spine_prior, iterations=SPINE_PRIOR_DILATION)
    return bone & ~near_spine, bone & near_spine
