"""Spine midline fitting and the thorax to left/right hemithorax split."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySideError, InputError
from .raster import as_mask
from .snake import Contour, SnakeParams, SnakeTrace, contour_to_mask, fit_snake

MIN_SPINE_ROWS = 20
MODES = ("one-snake", "two-snake")


@dataclass(frozen=True)
class SpineLine:
    point: tuple[float, float]
    direction: tuple[float, float]
    extent: tuple[float, float]

    def __post_init__(self):
        dx, dy = self.direction
        norm = math.hypot(dx, dy)
        if abs(norm - 1.0) > 1e-9:
            raise InputError("spine direction must be a unit vector")
        if abs(dy) < abs(dx):
            raise InputError("spine direction must be within 45 degrees of vertical")

    @classmethod
    def vertical(cls, x: float, extent=(0.0, 0.0)) -> "SpineLine":
        return cls((float(x), 0.0), (0.0, 1.0), extent)

    def x_at(self, y):
        """Horizontal position of the line at row ``y``."""
        (px, py), (dx, dy) = self.point, self.direction
        return px + (np.asarray(y, dtype=float) - py) * dx / dy

    def side_value(self, x, y):
        """Cross product of ``(p - point)`` with ``direction``; negative on the left."""
        (px, py), (dx, dy) = self.point, self.direction
        return (np.asarray(x, dtype=float) - px) * dy - (np.asarray(y, dtype=float) - py) * dx

    def distance(self, x, y):
        return np.abs(self.side_value(x, y))

    def reflect(self, x, y):
        """Mirror image of points ``(x, y)`` across the line."""
        (px, py), (dx, dy) = self.point, self.direction
        rx = np.asarray(x, dtype=float) - px
        ry = np.asarray(y, dtype=float) - py
        t = rx * dx + ry * dy
        return px + 2 * t * dx - rx, py + 2 * t * dy - ry

    def translated(self, tx: float, ty: float) -> "SpineLine":
        return SpineLine((self.point[0] + tx, self.point[1] + ty), self.direction,
                         (self.extent[0] + ty, self.extent[1] + ty))

    def to_dict(self) -> dict:
        return {"point": list(self.point), "direction": list(self.direction),
                "extent": list(self.extent)}


@dataclass(frozen=True)
class HemithoraxPair:
    left: np.ndarray
    right: np.ndarray
    spine: SpineLine
    contours: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise InputError("hemithorax masks must share a frame")
        if np.any(self.left & self.right):
            raise InputError("hemithorax masks overlap")


def fit_spine_midline(spine_mask) -> SpineLine:
    """Total-least-squares line through the per-row centroids of the spine mask."""
    spine_mask = as_mask(spine_mask)
    counts = spine_mask.sum(axis=1)
    rows = np.nonzero(counts)[0]
    if rows.size < MIN_SPINE_ROWS:
        raise InputError(f"spine mask covers {rows.size} rows; need at least {MIN_SPINE_ROWS}")
    cols = np.arange(spine_mask.shape[1], dtype=float)
    xc = (spine_mask[rows] * cols).sum(axis=1) / counts[rows]
    yc = rows.astype(float)
    mx, my = xc.mean(), yc.mean()
    cov = np.cov(np.vstack([xc - mx, yc - my]), bias=True)
    evals, evecs = np.linalg.eigh(cov)
    dx, dy = evecs[:, 1]
    if dy < 0:
        dx, dy = -dx, -dy
    norm = math.hypot(dx, dy)
    dx, dy = dx / norm, dy / norm
    if abs(dy) < abs(dx):
        raise InputError("fitted spine is more than 45 degrees from vertical")
    return SpineLine((float(mx), float(my)), (float(dx), float(dy)),
                     (float(rows[0]), float(rows[-1])))


def split_by_spine(region, spine: SpineLine) -> HemithoraxPair:
    """Assign region pixels to the side of the spine line they fall on.

    Pixels exactly on the line go to neither side.
    """
    region = as_mask(region)
    h, w = region.shape
    yy, xx = np.mgrid[0:h, 0:w]
    side = spine.side_value(xx, yy)
    return HemithoraxPair(region & (side < 0), region & (side > 0), spine)


def segment_hemithoraces(ribs, spine_mask, params: SnakeParams | None = None,
                         mode: str = "one-snake", margin: float = 10,
                         traces: list | None = None) -> HemithoraxPair:
    """Rib and spine masks to left/right hemithorax masks.

    ``one-snake`` fits a single contour to all ribs and splits the filled
    thorax by the spine line; ``two-snake`` splits the ribs first and fits one
    contour per side.  Per-snake ``SnakeTrace`` records are appended to
    ``traces`` when given.
    """
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    params = params or SnakeParams()
    ribs = as_mask(ribs)
    spine_mask = as_mask(spine_mask)
    if ribs.shape != spine_mask.shape:
        raise InputError("rib and spine masks must share a frame")
    if not ribs.any():
        raise InputError("rib mask is empty")
    spine = fit_spine_midline(spine_mask)
    h, w = ribs.shape

    def run(mask) -> Contour:
        tr = SnakeTrace([], 0, False)
        c = fit_snake(mask, params, margin, tr)
        if traces is not None:
            traces.append(tr)
        return c

    if mode == "one-snake":
        contour = run(ribs)
        pair = split_by_spine(contour_to_mask(contour, w, h), spine)
        return HemithoraxPair(pair.left, pair.right, spine, (contour,))

    sides = split_by_spine(ribs, spine)
    for name, side in (("left", sides.left), ("right", sides.right)):
        if not side.any():
            raise EmptySideError(f"{name} side of the rib mask is empty")
    c_left = run(sides.left)
    c_right = run(sides.right)
    left = split_by_spine(contour_to_mask(c_left, w, h), spine).left
    right = split_by_spine(contour_to_mask(c_right, w, h), spine).right
    return HemithoraxPair(left, right, spine, (c_left, c_right))


def mirror_pair(pair: HemithoraxPair) -> HemithoraxPair:
    """Flip the frame horizontally; the flipped left mask becomes the right one."""
    w = pair.left.shape[1]
    (px, py), (dx, dy) = pair.spine.point, pair.spine.direction
    spine = SpineLine((w - 1 - px, py), (-dx, dy), pair.spine.extent)
    return HemithoraxPair(pair.right[:, ::-1].copy(), pair.left[:, ::-1].copy(), spine)
