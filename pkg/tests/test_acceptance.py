"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``.  The corpus
criteria (3, 5, 7) take a few minutes each on one core.
"""
import itertools
import json
import math
import time

import numpy as np
import pytest

from hemisym.classify import SVMConfig, majority, train_gbc, train_svm
from hemisym.classify.mlp import init_params, loss, loss_and_grad
from hemisym.cli import main
from hemisym.errors import EmptySideError
from hemisym.evaluate import (MODELS, auc_score, classification_metrics, make_folds,
                              metrics_from_confusion, run_cv, run_robustness_experiment)
from hemisym.features import Histogram, extract_features, hist_intersection, jsd, similarity_index
from hemisym.hemithorax import segment_hemithoraces
from hemisym.phantom import (corpus_specs, erase_rib_band, generate, generate_corpus,
                             random_spec)
from hemisym.pipeline import dataset_from_results, features_for_manifest, load_manifest
from hemisym.raster import mask_iou
from hemisym.snake import SnakeParams, SnakeTrace, contour_to_mask, fit_snake


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} ({name}): {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def pair_iou(pred, truth):
    return 0.5 * (mask_iou(pred.left, truth.left) + mask_iou(pred.right, truth.right))


@pytest.fixture(scope="module")
def erased_runs():
    """Criterion 4 corpus: 50 phantoms, middle third of the ribs erased, both modes."""
    runs = {"one-snake": [], "two-snake": []}
    traces = []
    contours = []
    for spec in corpus_specs(50, 0.3, seed=21):
        ph = generate(spec)
        for ribs in (ph.ribs, erase_rib_band(ph.ribs)):
            erased = ribs is not ph.ribs
            for mode in runs:
                t = []
                try:
                    pair = segment_hemithoraces(ribs, ph.spine, mode=mode, traces=t)
                except EmptySideError:
                    iou = 0.0
                else:
                    iou = pair_iou(pair, ph.truth)
                    contours.extend(pair.contours)
                traces.extend(t)
                if erased:
                    runs[mode].append(iou)
    return runs, traces, contours


def test_1_snake_oracle(report):
    yy, xx = np.mgrid[0:512, 0:512]
    disk = (xx - 256) ** 2 + (yy - 256) ** 2 <= 120 ** 2
    contour = fit_snake(disk, SnakeParams())
    iou = mask_iou(contour_to_mask(contour, 512, 512), disk)
    ph = generate(random_spec(np.random.default_rng(0), False, frame=(1024, 1024)))
    t0 = time.perf_counter()
    segment_hemithoraces(ph.ribs, ph.spine)
    seconds = time.perf_counter() - t0
    report(1, "snake oracle", iou >= 0.95 and seconds < 10,
           f"disk IoU {iou:.4f} (>= 0.95), 1024^2 segmentation {seconds:.2f} s (< 10 s)")


def test_2_energy_monotone(report, erased_runs):
    _, traces, contours = erased_runs
    yy, xx = np.mgrid[0:512, 0:512]
    disk = (xx - 256) ** 2 + (yy - 256) ** 2 <= 120 ** 2
    trace = SnakeTrace([], 0, False)
    contours.append(fit_snake(disk, SnakeParams(), trace=trace))
    traces = traces + [trace]
    worst = max(float(np.max(np.diff(t.energies), initial=-np.inf)) for t in traces)
    simple = all(c.is_simple() for c in contours)
    report(2, "energy monotonicity", worst <= 0 and simple,
           f"{len(traces)} snake runs, largest energy step {worst:.3e} (<= 0), "
           f"all {len(contours)} contours simple: {simple}")


@pytest.mark.slow
def test_3_robustness(report, tmp_path_factory):
    manifest = generate_corpus(100, tmp_path_factory.mktemp("robust"), 0.3, seed=7)
    rows = load_manifest(manifest, require_files=(
        "image", "ribs_mask", "spine_mask", "truth_left", "truth_right"))
    means = {c: run_robustness_experiment(rows, c, seed=1).summary["mean_iou"]
             for c in ("normal", "under", "over", "obscured")}
    drops = {c: 100 * (means["normal"] - means[c]) for c in ("under", "over", "obscured")}
    ok = all(d <= 5 for d in drops.values())
    report(3, "robustness", ok, f"normal IoU {100 * means['normal']:.2f}, drops (points) "
           + ", ".join(f"{c} {d:.2f}" for c, d in drops.items()) + " (each <= 5)")


def test_4_one_vs_two_snake(report, erased_runs):
    runs, _, _ = erased_runs
    one, two = 100 * np.mean(runs["one-snake"]), 100 * np.mean(runs["two-snake"])
    report(4, "one-snake vs two-snake", one - two >= 2,
           f"erased ribs, 50 phantoms: one-snake {one:.2f}, two-snake {two:.2f}, "
           f"gap {one - two:.2f} points (>= 2)")


def jsd_oracle(p, q):
    total = 0.0
    for pi, qi in zip(p, q):
        mi = 0.5 * (pi + qi)
        if pi > 0:
            total += 0.5 * pi * math.log2(pi / mi)
        if qi > 0:
            total += 0.5 * qi * math.log2(qi / mi)
    return total


@pytest.mark.slow
def test_5_feature_identities(report):
    rng = np.random.default_rng(5)
    failures = []
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        p = Histogram(rng.random(n) * (rng.random(n) < 0.8)).normalize()
        q = Histogram(rng.random(n) * (rng.random(n) < 0.8)).normalize()
        if p.degenerate or q.degenerate:
            continue
        d = jsd(p, q)
        if jsd(p, p) != 0 or not 0 <= d <= 1 or abs(d - jsd_oracle(p.bins, q.bins)) > 1e-9:
            failures.append("jsd")
        l1 = np.abs(p.bins - q.bins).sum()
        if abs(hist_intersection(p, q) - (1 - 0.5 * l1)) > 1e-9:
            failures.append("intersection")
        a, b = rng.random(2) * 10.0 ** rng.integers(-3, 6)
        k = 2.0 ** int(rng.integers(-20, 20))
        if similarity_index(k * a, k * b) != similarity_index(a, b):
            failures.append("similarity")
    lo, hi = 1.0, 0.0
    for i in range(1000):
        ph = generate(random_spec(np.random.default_rng([5, i]), asymmetric=i % 2 == 1))
        v = extract_features(ph.truth).values()
        lo, hi = min(lo, v.min()), max(hi, v.max())
        if not np.all((v >= 0) & (v <= 1)):
            failures.append(f"range {i}")
    report(5, "feature identities", not failures,
           f"1000 histogram pairs and 1000 phantoms, feature range [{lo:.4f}, {hi:.4f}], "
           f"failures: {sorted(set(failures)) or 'none'}")


def finite_difference(params, X, y, eps=1e-5):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            up = loss(params, X, y)
            p[i] = old - eps
            down = loss(params, X, y)
            p[i] = old
            g[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def test_6_classifier_correctness(report):
    rng = np.random.default_rng(6)
    X = rng.random((6, 7))
    y = np.array([0, 1, 1, 0, 1, 0], dtype=float)
    params = [p + 0.3 * rng.standard_normal(p.shape)
              for p in init_params((7, 50, 50, 50, 1), rng)]
    _, grads = loss_and_grad(params, X, y)
    rel = max(np.linalg.norm(g - f) / max(np.linalg.norm(g), np.linalg.norm(f), 1e-12)
              for g, f in zip(grads, finite_difference(params, X, y)))

    X = rng.random((200, 7))
    y = (X[:, 0] + X[:, 1] + 0.4 * rng.standard_normal(200) > 1).astype(int)
    gbc_step = float(np.max(np.diff(train_gbc(X, y).train_loss)))

    svm = train_svm(X, y, SVMConfig(C=1.0, gamma=1.0))
    alpha = np.abs(svm.coef)
    free = (alpha > 1e-8) & (alpha < svm.C * (1 - 1e-8))
    d = svm.decision(svm.scaler.mean + svm.support * svm.scaler.scale)
    margin = float(np.max(np.abs(np.sign(svm.coef[free]) * d[free] - 1)))

    votes_ok = all(majority(v) == int(sum(v) >= 2)
                   for v in itertools.product((0, 1), repeat=3))
    ok = rel < 1e-4 and gbc_step <= 0 and free.any() and margin < 1e-2 and votes_ok
    report(6, "classifier correctness", ok,
           f"MLP gradient rel err {rel:.2e} (< 1e-4), GBC largest loss step {gbc_step:.2e} "
           f"(<= 0), SVM max margin error {margin:.2e} over {int(free.sum())} free SVs "
           f"(< 1e-2), majority oracle {votes_ok}")


@pytest.mark.slow
def test_7_end_to_end(report, tmp_path_factory):
    t0 = time.perf_counter()
    manifest = generate_corpus(300, tmp_path_factory.mktemp("cls"), 0.3, seed=11)
    rows = load_manifest(manifest, require_labels=True)
    data = dataset_from_results(features_for_manifest(rows))
    rep = run_cv(data, make_folds(data, 5, seed=11), seed=11)
    minutes = (time.perf_counter() - t0) / 60
    f1 = {m: rep.overall_pooled[m]["f1"] for m in MODELS}
    best = max(np.nan_to_num(f1[m]) for m in MODELS if m != "ensemble")
    ok = f1["ensemble"] >= 0.90 and f1["ensemble"] >= best - 0.02 and minutes < 15
    report(7, "end-to-end classification", ok,
           "F1 " + ", ".join(f"{m} {f1[m]:.4f}" for m in MODELS)
           + f"; ensemble >= 0.90 and >= {best:.4f} - 0.02; {minutes:.1f} min (< 15)")


def auc_oracle(scores, truths):
    pos = [s for s, t in zip(scores, truths) if t == 1]
    neg = [s for s, t in zip(scores, truths) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_8_metrics_oracle(report):
    rng = np.random.default_rng(8)
    auc_err = conf_err = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        truths = rng.integers(0, 2, n)
        truths[:2] = (0, 1)
        scores = np.round(rng.random(n), 2)
        labels = (scores > rng.random()).astype(int)
        auc_err = max(auc_err, abs(auc_score(scores, truths) - auc_oracle(scores, truths)))
        rec = classification_metrics(list(zip(labels, scores)), truths)
        again = metrics_from_confusion(rec["tp"], rec["fp"], rec["fn"], rec["tn"])
        for key in ("precision", "recall", "f1"):
            a, b = rec[key], again[key]
            if not (math.isnan(a) and math.isnan(b)):
                conf_err = max(conf_err, abs(a - b))
    truths = [1] * 270 + [0] * 630
    preds = [1] * 209 + [0] * 61 + [1] * 28 + [0] * 602
    ref = classification_metrics([(p, float(p)) for p in preds], truths)
    reference_ok = (round(ref["precision"], 4), round(ref["recall"], 4)) == (0.8819, 0.7741)
    ok = auc_err <= 1e-9 and conf_err <= 1e-9 and reference_ok
    report(8, "metrics oracle", ok,
           f"100 random sets: AUC max err {auc_err:.1e}, confusion recompute max err "
           f"{conf_err:.1e} (<= 1e-9); TP/FP/FN 209/28/61 gives precision "
           f"{ref['precision']:.4f}, recall {ref['recall']:.4f}")


def test_9_cli_determinism(report, tmp_path):
    def run(k):
        d = tmp_path / f"run{k}"
        d.mkdir()
        out = {}
        assert main(["phantom", "--n", "12", "--asym-fraction", "0.5", "--seed", "4",
                     "--out-dir", str(d / "corpus")]) == 0
        manifest = d / "corpus" / "manifest.json"
        first = json.loads(manifest.read_text())[0]
        img, ribs = d / "corpus" / first["image"], d / "corpus" / first["ribs_mask"]
        for mode in ("under", "over", "obscured"):
            assert main(["corrupt", "--image", str(img), "--mode", mode, "--ribs", str(ribs),
                         "--seed", "9", "--out", str(d / f"{mode}.png")]) == 0
        assert main(["features", "--manifest", str(manifest), "--out", str(d / "f.csv")]) == 0
        assert main(["train", "--features", str(d / "f.csv"), "--model", str(d / "m.json"),
                     "--seed", "3"]) == 0
        assert main(["evaluate", "--features", str(d / "f.csv"), "--folds", "3", "--seed", "3",
                     "--out", str(d / "cv.json")]) == 0
        assert main(["evaluate", "--manifest", str(manifest), "--condition", "obscured",
                     "--seed", "3", "--out", str(d / "cond.json")]) == 0
        for p in sorted(d.rglob("*")):
            if p.is_file():
                out[str(p.relative_to(d))] = p.read_bytes()
        return out

    a, b = run(0), run(1)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    report(9, "CLI determinism", not differing,
           f"{len(a)} output files from phantom, corrupt x3, features, train, evaluate "
           f"(CV and condition); differing: {differing or 'none'}")
