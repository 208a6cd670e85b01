"""Cross-validation harness, classification metrics and the robustness experiment."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .classify.data import Dataset
from .classify.ensemble import MEMBERS, EnsembleConfig, train_ensemble
from .errors import InputError
from .hemithorax import HemithoraxPair, segment_hemithoraces
from .pipeline import PipelineConfig, map_rows, segment_bones
from .raster import (NOISE_SIGMA_RANGE, OVEREXPOSURE_GAMMA, UNDEREXPOSURE_GAMMA,
                     add_gaussian_noise, fit_ellipse, gamma_transform, load_gray,
                     load_mask, mask_iou, obstruct)
from .snake import contour_to_mask, fit_snake

CONDITIONS = ("normal", "under", "over", "obscured")
MODELS = ("ensemble",) + MEMBERS


# -- folds --------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    stratified: bool = True

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "stratified": self.stratified,
                "assignments": self.assignments.tolist()}


def make_folds(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified, shuffled fold assignment.

    Each class is shuffled and dealt round-robin; the second class continues
    the cycle where the first stopped, so fold sizes differ by at most one.
    """
    y = np.asarray(labels.y if isinstance(labels, Dataset) else labels)
    if int(k) != k or k < 2:
        raise InputError("fold count must be an integer >= 2")
    counts = [int(np.sum(y == c)) for c in (0, 1)]
    for c, n in zip((0, 1), counts):
        if n < k:
            raise InputError(f"class {c} has {n} rows; need at least k={k}")
    rng = np.random.default_rng(seed)
    assign = np.empty(y.size, dtype=np.int64)
    start = 0
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        assign[idx] = (start + np.arange(idx.size)) % k
        start = (start + idx.size) % k
    return FoldPlan(int(k), assign, int(seed), True)


# -- metrics ------------------------------------------------------------------

def confusion_counts(predicted, truths) -> dict:
    p = np.asarray(predicted).astype(int)
    t = np.asarray(truths).astype(int)
    return {"tp": int(np.sum((p == 1) & (t == 1))), "fp": int(np.sum((p == 1) & (t == 0))),
            "fn": int(np.sum((p == 0) & (t == 1))), "tn": int(np.sum((p == 0) & (t == 0)))}


def _ratio(a, b) -> float:
    return a / b if b else math.nan


def metrics_from_confusion(tp: int, fp: int, fn: int, tn: int = 0) -> dict:
    """Precision, recall and F1 of the positive class; undefined values are NaN."""
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if math.isnan(precision) or math.isnan(recall):
        f1 = math.nan
    else:
        f1 = _ratio(2 * precision * recall, precision + recall)
        if math.isnan(f1):
            f1 = 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def auc_score(scores, truths) -> float:
    """P(score of a random positive > a random negative), ties counted 1/2."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truths).astype(int)
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(s, method="average")
    u = ranks[t == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(predictions, truths) -> dict:
    """``predictions`` is a sequence of ``(hard_label, score)`` pairs."""
    predictions = list(predictions)
    truths = np.asarray(truths).astype(int)
    if len(predictions) == 0 or len(predictions) != truths.size:
        raise InputError("predictions and truths must be non-empty and of equal length")
    labels = np.array([p[0] for p in predictions], dtype=int)
    scores = np.array([p[1] for p in predictions], dtype=float)
    conf = confusion_counts(labels, truths)
    out = metrics_from_confusion(conf["tp"], conf["fp"], conf["fn"], conf["tn"])
    out["auc"] = auc_score(scores, truths)
    out["n"] = int(truths.size)
    out.update(conf)
    return out


# -- segmentation IoU -----------------------------------------------------------

def pair_iou(predicted: HemithoraxPair, truth: HemithoraxPair) -> float:
    if predicted.left.shape != truth.left.shape:
        raise InputError("predicted and truth masks have different frames")
    return 0.5 * (mask_iou(predicted.left, truth.left) + mask_iou(predicted.right, truth.right))


def segmentation_iou_report(predicted, truth, conditions=None) -> dict:
    """Mean hemithorax IoU overall and per caller-supplied condition tag."""
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise InputError("predicted and truth lists differ in length")
    if conditions is None:
        conditions = ["all"] * len(predicted)
    conditions = list(conditions)
    if len(conditions) != len(predicted):
        raise InputError("one condition tag per pair is required")
    ious = np.array([pair_iou(p, t) for p, t in zip(predicted, truth)], dtype=float)
    per = {}
    for tag in dict.fromkeys(conditions):
        sel = np.array([c == tag for c in conditions])
        per[tag] = {"mean_iou": float(ious[sel].mean()), "n": int(sel.sum())}
    return {"mean_iou": float(ious.mean()) if ious.size else math.nan,
            "n": int(ious.size), "per_condition": per, "per_pair": ious.tolist()}


# -- cross-validation -----------------------------------------------------------

@dataclass
class EvalReport:
    per_fold: list
    overall_pooled: dict
    overall_averaged: dict
    confusion: dict
    runtime_stats: dict = field(default_factory=dict)
    predictions: list = field(default_factory=list)
    folds: list = field(default_factory=list)

    def to_dict(self, include_timing: bool = True) -> dict:
        stats = self.runtime_stats if include_timing else {
            k: v for k, v in self.runtime_stats.items() if not k.endswith("_seconds")}
        return {"per_fold": self.per_fold, "overall_pooled": self.overall_pooled,
                "overall_averaged": self.overall_averaged, "confusion": self.confusion,
                "runtime_stats": stats, "predictions": self.predictions,
                "folds": self.folds}


def _fold_average(rows) -> dict:
    out = {}
    for key in ("precision", "recall", "f1", "auc"):
        vals = np.array([r[key] for r in rows], dtype=float)
        out[key] = float(np.nanmean(vals)) if np.isfinite(vals).any() else math.nan
    return out


def run_cv(data: Dataset, folds: FoldPlan, config: EnsembleConfig | None = None,
           seed: int = 0) -> EvalReport:
    """Train on k-1 folds, predict the held-out fold, for the ensemble and each member.

    Every fold trains its MLP with a seed derived from ``seed`` and the fold.
    """
    config = config or EnsembleConfig()
    if folds.assignments.shape != (len(data),):
        raise InputError("fold plan does not match the dataset size")
    n = len(data)
    labels = {m: np.zeros(n, dtype=int) for m in MODELS}
    scores = {m: np.zeros(n) for m in MODELS}
    per_fold, fold_ids = [], []
    fold_seeds = np.random.SeedSequence(seed).generate_state(folds.k)
    t_train = t_pred = 0.0
    for f in range(folds.k):
        tr, te = folds.train_index(f), folds.test_index(f)
        train_ids = {data.ids[i] for i in tr}
        if any(data.ids[i] in train_ids for i in te):
            raise InputError(f"fold {f}: a held-out row appears in training")
        t0 = time.perf_counter()
        model = train_ensemble(data.X[tr], data.y[tr], config, int(fold_seeds[f]))
        t1 = time.perf_counter()
        lab, sc, votes, member_scores = model.predict_batch(data.X[te], data.degenerate[te])
        t_pred += time.perf_counter() - t1
        t_train += t1 - t0
        labels["ensemble"][te], scores["ensemble"][te] = lab, sc
        for j, m in enumerate(MEMBERS):
            labels[m][te] = votes[:, j]
            scores[m][te] = member_scores[:, j]
        for m in MODELS:
            row = classification_metrics(zip(labels[m][te], scores[m][te]), data.y[te])
            per_fold.append({"fold": f, "model": m, **row})
        fold_ids.append({"fold": f, "train_ids": [data.ids[i] for i in tr],
                         "test_ids": [data.ids[i] for i in te]})
    pooled = {m: classification_metrics(zip(labels[m], scores[m]), data.y) for m in MODELS}
    averaged = {m: _fold_average([r for r in per_fold if r["model"] == m]) for m in MODELS}
    confusion = {k: pooled["ensemble"][k] for k in ("tp", "fp", "fn", "tn")}
    preds = [{"id": data.ids[i], "fold": int(folds.assignments[i]), "label": int(data.y[i]),
              **{f"{m}_label": int(labels[m][i]) for m in MODELS},
              **{f"{m}_score": float(scores[m][i]) for m in MODELS}} for i in range(n)]
    stats = {"rows": n, "folds": folds.k, "train_seconds": t_train, "predict_seconds": t_pred}
    return EvalReport(per_fold, pooled, averaged, confusion, stats, preds, fold_ids)


def grid_search(data: Dataset, grid: dict, folds: FoldPlan, base: EnsembleConfig | None = None,
                model: str = "ensemble", metric: str = "f1", seed: int = 0):
    """Exhaustive search over ``grid`` ``{"svm.C": [...], "gbc.max_depth": [...], ...}``.

    Returns ``(best_config, results)`` where results lists every grid point
    with its pooled cross-validated ``metric`` for ``model``.
    """
    base = (base or EnsembleConfig()).to_dict()
    keys = sorted(grid)
    for key in keys:
        section, _, name = key.partition(".")
        if section not in base or name not in base[section]:
            raise InputError(f"unknown grid key {key!r}")
    results, best = [], None
    for values in itertools.product(*(grid[k] for k in keys)):
        doc = {s: dict(v) for s, v in base.items()}
        for key, value in zip(keys, values):
            section, _, name = key.partition(".")
            doc[section][name] = value
        config = EnsembleConfig.from_dict(doc)
        value = run_cv(data, folds, config, seed).overall_pooled[model][metric]
        results.append({"params": dict(zip(keys, values)), metric: value})
        if not math.isnan(value) and (best is None or value > best[0]):
            best = (value, config)
    if best is None:
        raise InputError("no grid point produced a defined metric")
    return best[1], results


# -- robustness -------------------------------------------------------------------

def corrupt(image, condition: str, rng: np.random.Generator, thorax_ellipse=None) -> np.ndarray:
    """Apply one exposure or obstruction corruption to a gray image."""
    if condition == "normal":
        return np.array(image, dtype=float)
    if condition in ("under", "over"):
        lo, hi = UNDEREXPOSURE_GAMMA if condition == "under" else OVEREXPOSURE_GAMMA
        gamma = rng.uniform(lo, hi)
        sigma = rng.uniform(*NOISE_SIGMA_RANGE)
        return add_gaussian_noise(gamma_transform(image, gamma), sigma, rng)
    if condition == "obscured":
        if thorax_ellipse is None:
            raise InputError("obstruction needs the thorax ellipse")
        return obstruct(image, thorax_ellipse, rng)
    raise InputError(f"condition must be one of {CONDITIONS}, got {condition!r}")


def thorax_ellipse_from_ribs(ribs, config: PipelineConfig | None = None):
    """Ellipse fitted to the thorax a single snake wraps around ``ribs``."""
    config = config or PipelineConfig()
    h, w = ribs.shape
    contour = fit_snake(ribs, config.snake, config.segmentation.margin)
    return fit_ellipse(contour_to_mask(contour, w, h))


def _robustness_job(args):
    row, condition, seed_seq, config = args
    t0 = time.perf_counter()
    ribs = load_mask(row.ribs_mask)
    spine = load_mask(row.spine_mask)
    image = load_gray(row.image)
    truth_left, truth_right = load_mask(row.truth_left), load_mask(row.truth_right)
    rng = np.random.default_rng(seed_seq)
    ellipse = thorax_ellipse_from_ribs(ribs, config) if condition == "obscured" else None
    corrupted = corrupt(image, condition, rng, ellipse)
    bone_ribs, bone_spine = segment_bones(corrupted, spine)
    pair = segment_hemithoraces(bone_ribs, bone_spine, config.snake,
                                config.segmentation.mode, config.segmentation.margin)
    iou = 0.5 * (mask_iou(pair.left, truth_left) + mask_iou(pair.right, truth_right))
    return row.id, float(iou), time.perf_counter() - t0


@dataclass
class RobustnessReport:
    condition: str
    seed: int
    summary: dict
    per_row: list
    runtime_stats: dict

    def to_dict(self, include_timing: bool = True) -> dict:
        stats = self.runtime_stats if include_timing else {
            k: v for k, v in self.runtime_stats.items() if not k.endswith("_seconds")}
        return {"condition": self.condition, "seed": self.seed, "summary": self.summary,
                "per_row": self.per_row, "runtime_stats": stats}


def run_robustness_experiment(rows, condition: str, config: PipelineConfig | None = None,
                              seed: int = 0) -> RobustnessReport:
    """Corrupt each test image, re-segment bones and hemithoraces, report IoU vs truth.

    Every condition, ``normal`` included, goes through the same image-based
    bone segmenter, so differences between conditions isolate the corruption.
    Row ``i`` draws its corruption from the ``i``-th child of ``seed``.
    """
    if condition not in CONDITIONS:
        raise InputError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    config = config or PipelineConfig()
    rows = list(rows)
    missing = [str(p) for r in rows for p in (r.image, r.ribs_mask, r.spine_mask,
                                               r.truth_left, r.truth_right)
               if p is None or not p.is_file()]
    if missing:
        raise InputError("missing files: " + ", ".join(missing))
    children = np.random.SeedSequence(seed).spawn(len(rows))
    t0 = time.perf_counter()
    out = map_rows(_robustness_job, [(r, condition, s, config) for r, s in zip(rows, children)],
                   config.io.workers)
    ious = np.array([o[1] for o in out])
    summary = {"mean_iou": float(ious.mean()), "n": int(ious.size),
               "per_condition": {condition: {"mean_iou": float(ious.mean()),
                                             "n": int(ious.size)}}}
    per_row = [{"id": pid, "iou": iou} for pid, iou, _ in out]
    stats = {"rows": len(rows), "total_seconds": time.perf_counter() - t0,
             "mean_row_seconds": float(np.mean([o[2] for o in out]))}
    return RobustnessReport(condition, int(seed), summary, per_row, stats)

