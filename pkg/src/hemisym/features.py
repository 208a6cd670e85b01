"""Seven-feature symmetry encoding of a hemithorax pair.

Every feature is a similarity in [0, 1] where 1 means the two sides match:
four min/max ratios of shape statistics, one minus the Jensen-Shannon
divergence of the projection histograms, their intersection, and the IoU of
the registered (mirrored and centroid-aligned) hemithoraces.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import InputError
from .hemithorax import HemithoraxPair, SpineLine
from .raster import as_mask

FEATURE_NAMES = ("sim_area", "sim_perimeter", "sim_centroid_dx", "sim_first_rib_width",
                 "hist_jsd", "hist_intersection", "reg_iou")
CSV_HEADER = ("id",) + FEATURE_NAMES + ("label",)
NORM_TOL = 1e-9
FIRST_RIB_CAP = 4.0


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray
    normalized: bool = False
    degenerate: bool = False

    def normalize(self) -> "Histogram":
        total = float(self.bins.sum())
        if total <= 0:
            return Histogram(np.zeros_like(self.bins, dtype=float), True, True)
        return Histogram(self.bins / total, True, False)

    def __len__(self):
        return self.bins.size


@dataclass(frozen=True)
class ShapeStats:
    area: int
    perimeter: int
    centroid: tuple[float, float]
    centroid_dx: float
    first_rib_width: float
    first_rib_point: tuple[int, int]

    def to_dict(self) -> dict:
        return {"area": self.area, "perimeter": self.perimeter,
                "centroid": list(self.centroid), "centroid_dx": self.centroid_dx,
                "first_rib_width": self.first_rib_width,
                "first_rib_point": list(self.first_rib_point)}


@dataclass(frozen=True)
class FeatureVector:
    sim_area: float
    sim_perimeter: float
    sim_centroid_dx: float
    sim_first_rib_width: float
    hist_jsd: float
    hist_intersection: float
    reg_iou: float
    degenerate: bool = False

    def __post_init__(self):
        v = self.values()
        if not np.all(np.isfinite(v)):
            raise InputError("feature values must be finite")
        if np.any(v < 0) or np.any(v > 1):
            raise InputError(f"feature values must lie in [0, 1], got {v.tolist()}")

    def values(self) -> np.ndarray:
        return np.array(astuple(self)[:len(FEATURE_NAMES)], dtype=float)

    @classmethod
    def from_values(cls, values, degenerate: bool = False) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise InputError(f"expected {len(FEATURE_NAMES)} feature values, got {len(values)}")
        return cls(*values, degenerate=degenerate)

    @classmethod
    def degenerate_vector(cls) -> "FeatureVector":
        return cls(*([0.0] * len(FEATURE_NAMES)), degenerate=True)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def perimeter_count(mask) -> int:
    """Member pixels with a 4-neighbour outside the region or outside the frame."""
    m = np.pad(as_mask(mask), 1, constant_values=False)
    inner = m[1:-1, 1:-1]
    interior = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return int(np.count_nonzero(inner & ~interior))


def _first_rib_keys(xs, ys, side: str, spine: SpineLine):
    (px, py), (dx, dy) = spine.point, spine.direction
    along = (xs - px) * dx + (ys - py) * dy
    across = spine.side_value(xs, ys)
    if side == "left":
        return along + across
    if side == "right":
        return along - across
    raise InputError(f"side must be 'left' or 'right', got {side!r}")


def first_rib_point(mask, side: str, spine: SpineLine | None = None) -> tuple[int, int]:
    """Top-left-most member pixel for the left side, top-right-most for the right.

    With a vertical spine, left minimizes ``x + y`` and right minimizes
    ``y - x``.  A tilted spine rotates the axes: ``y`` becomes the position
    along the spine and ``x`` the signed offset across it.  Ties go to the
    smaller ``y`` and then the smaller ``x``.
    """
    ys, xs = np.nonzero(as_mask(mask))
    if ys.size == 0:
        raise InputError("empty mask has no first-rib point")
    key = _first_rib_keys(xs, ys, side, spine or SpineLine.vertical(0.0))
    # lexsort sorts by the last key first
    k = np.lexsort((xs, ys, np.round(key, 9)))[0]
    return int(xs[k]), int(ys[k])


def first_rib_width(mask, side: str, spine: SpineLine) -> float:
    """Distance from the first-rib endpoint to the spine line.

    On a tilted spine the pixel grid is not mirror-symmetric about the line
    and the single extreme pixel jumps along the nearly flat stretch of
    boundary around it; there the distance is averaged over the cap of pixels
    whose key lies within ``FIRST_RIB_CAP`` of the minimum.
    """
    ys, xs = np.nonzero(as_mask(mask))
    if ys.size == 0:
        raise InputError("empty mask has no first-rib point")
    if spine.direction[0] == 0.0:
        px, py = first_rib_point(mask, side, spine)
        return float(spine.distance(px, py))
    key = _first_rib_keys(xs, ys, side, spine)
    cap = key <= key.min() + FIRST_RIB_CAP
    return float(spine.distance(xs[cap], ys[cap]).mean())


def shape_stats(side_mask, spine: SpineLine, side: str) -> ShapeStats:
    mask = as_mask(side_mask)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise InputError(f"{side} hemithorax mask is empty")
    xo, yo = float(xs.mean()), float(ys.mean())
    return ShapeStats(
        area=int(ys.size),
        perimeter=perimeter_count(mask),
        centroid=(xo, yo),
        centroid_dx=float(abs(xo - spine.x_at(yo))),
        first_rib_width=first_rib_width(mask, side, spine),
        first_rib_point=first_rib_point(mask, side, spine),
    )


def projection_histograms(side_mask) -> tuple[Histogram, Histogram]:
    """Normalized row-count (horizontal) and column-count (vertical) profiles."""
    mask = as_mask(side_mask)
    rows = Histogram(mask.sum(axis=1).astype(float)).normalize()
    cols = Histogram(mask.sum(axis=0).astype(float)).normalize()
    return rows, cols


def spine_profile(side_mask, spine: SpineLine) -> Histogram:
    """Column profile measured outward from the spine line.

    Bin ``k`` counts member pixels whose distance to the spine lies in
    ``[k, k + 1)``.  Both sides are binned the same way, so a mirror-symmetric
    pair yields identical profiles wherever the pair sits in the frame.
    """
    mask = as_mask(side_mask)
    h, w = mask.shape
    nbins = int(math.ceil(math.hypot(h, w))) + 1
    ys, xs = np.nonzero(mask)
    d = np.floor(spine.distance(xs, ys)).astype(np.intp)
    return Histogram(np.bincount(d, minlength=nbins).astype(float)).normalize()


def _check_pair(h1: Histogram, h2: Histogram):
    if len(h1) != len(h2):
        raise InputError(f"histogram bin counts differ ({len(h1)} vs {len(h2)})")
    for h in (h1, h2):
        if not h.normalized:
            raise InputError("histograms must be normalized")
        s = float(h.bins.sum())
        if not (abs(s - 1.0) <= NORM_TOL or (h.degenerate and s == 0.0)):
            raise InputError(f"normalized histogram sums to {s}")
    return np.asarray(h1.bins, dtype=float), np.asarray(h2.bins, dtype=float)


def _kl2(p, m):
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / m[nz])))


def jsd(h1: Histogram, h2: Histogram) -> float:
    """Jensen-Shannon divergence with base-2 logarithms, in [0, 1]."""
    p, q = _check_pair(h1, h2)
    m = 0.5 * (p + q)
    d = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return float(min(max(d, 0.0), 1.0))


def hist_intersection(h1: Histogram, h2: Histogram) -> float:
    p, q = _check_pair(h1, h2)
    return float(min(np.minimum(p, q).sum(), 1.0))


def concatenate(*hists: Histogram) -> Histogram:
    """Join normalized histograms into one distribution (each part weighted equally)."""
    bins = np.concatenate([h.bins for h in hists])
    return Histogram(bins).normalize()


def _mirrored_coords(mask, spine: SpineLine):
    """Pixel coordinates of the mask reflected across the spine, unclipped by the frame."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    rx, ry = spine.reflect(xs, ys)
    x0, x1 = int(np.floor(rx.min())) - 1, int(np.ceil(rx.max())) + 1
    y0, y1 = int(np.floor(ry.min())) - 1, int(np.ceil(ry.max())) + 1
    gy, gx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    sx, sy = spine.reflect(gx, gy)
    sx = np.rint(sx).astype(np.intp)
    sy = np.rint(sy).astype(np.intp)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    hit = np.zeros(gx.shape, dtype=bool)
    hit[inside] = mask[sy[inside], sx[inside]]
    return gx[hit], gy[hit]


def _set_iou(ax, ay, bx, by) -> float:
    if ax.size == 0 and bx.size == 0:
        return 1.0
    x0 = min(ax.min(initial=0), bx.min(initial=0))
    y0 = min(ay.min(initial=0), by.min(initial=0))
    width = int(max(ax.max(initial=0), bx.max(initial=0)) - x0 + 1)
    a = np.unique((ay - y0) * width + (ax - x0))
    b = np.unique((by - y0) * width + (bx - x0))
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (a.size + b.size - inter)


def registered_iou(left, right, spine: SpineLine) -> float:
    """IoU of the right mask and the mirrored left mask after centroid alignment.

    The mirrored mask is shifted by the rounded centroid difference; the
    comparison is done on pixel sets, so nothing is lost at the frame border.
    Returns 0 when either side is empty.
    """
    left, right = as_mask(left), as_mask(right)
    if left.shape != right.shape:
        raise InputError("hemithorax masks must share a frame")
    if not left.any() or not right.any():
        return 0.0
    mx, my = _mirrored_coords(left, spine)
    ry, rx = np.nonzero(right)
    tx = int(np.rint(rx.mean() - mx.mean()))
    ty = int(np.rint(ry.mean() - my.mean()))
    return float(_set_iou(mx + tx, my + ty, rx, ry))


def similarity_index(r_left: float, r_right: float) -> float:
    """``min / max`` of two non-negative values; ``sim(0, 0) = 1``."""
    if r_left < 0 or r_right < 0:
        raise InputError("similarity index needs non-negative values")
    hi = max(r_left, r_right)
    if hi == 0:
        return 1.0
    return min(r_left, r_right) / hi


def extract_features(pair: HemithoraxPair) -> FeatureVector:
    if not pair.left.any() or not pair.right.any():
        return FeatureVector.degenerate_vector()
    sl = shape_stats(pair.left, pair.spine, "left")
    sr = shape_stats(pair.right, pair.spine, "right")
    hl, _ = projection_histograms(pair.left)
    hr, _ = projection_histograms(pair.right)
    pl = concatenate(hl, spine_profile(pair.left, pair.spine))
    pr = concatenate(hr, spine_profile(pair.right, pair.spine))
    return FeatureVector(
        sim_area=similarity_index(sl.area, sr.area),
        sim_perimeter=similarity_index(sl.perimeter, sr.perimeter),
        sim_centroid_dx=similarity_index(sl.centroid_dx, sr.centroid_dx),
        sim_first_rib_width=similarity_index(sl.first_rib_width, sr.first_rib_width),
        hist_jsd=1.0 - jsd(pl, pr),
        hist_intersection=hist_intersection(pl, pr),
        reg_iou=registered_iou(pair.left, pair.right, pair.spine),
    )


def write_features_csv(path, rows) -> None:
    """``rows`` is an iterable of ``(id, FeatureVector, label or None)``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for pid, fv, label in rows:
            vals = [repr(float(v)) for v in fv.values()]
            out.writerow([pid, *vals, "" if label is None else int(label)])


def read_features_csv(path):
    """Inverse of ``write_features_csv``; labels are ``None`` when the column is empty.

    A row whose values are all zero is read back as a degenerate vector.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"{path}: cannot read feature table ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise InputError(f"{path}: header must be {','.join(CSV_HEADER)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise InputError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            try:
                vals = [float(v) for v in rec[1:-1]]
                label = None if rec[-1].strip() == "" else int(rec[-1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if label not in (None, 0, 1):
                raise InputError(f"{path}:{lineno}: label must be 0, 1 or empty")
            fv = FeatureVector.from_values(vals, degenerate=not any(vals))
            rows.append((rec[0], fv, label))
    return rows
