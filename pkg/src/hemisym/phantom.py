"""Synthetic thorax phantoms with analytically known hemithoraces.

A phantom is an axis-aligned elliptical thorax with a vertical spine strip
through its center and ``n_rib_pairs`` mirrored ribs.  Each rib is a medial
arm running from the spine edge out to the body wall plus a stretch of wall
band along the ellipse boundary.  An optional asymmetry deforms one side; the
whole scene can then be rotated about the thorax center (``spine_tilt``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize

from .errors import InputError
from .hemithorax import HemithoraxPair, SpineLine, split_by_spine
from .raster import Ellipse, save_gray, save_mask

ASYM_KINDS = ("scale", "shear", "truncate")
#: default magnitude ranges per asymmetry kind (factor, degrees, fraction)
ASYM_RANGES = {"scale": (0.5, 0.85), "shear": (5.0, 15.0), "truncate": (0.15, 0.4)}
#: clinical reference corpus: 270 asymmetric radiographs out of 900
DEFAULT_ASYM_FRACTION = 270 / 900
RIB_LEVEL, LUNG_LEVEL, BACKGROUND_LEVEL = 0.85, 0.2, 0.55
SYMMETRIC, ASYMMETRIC = 0, 1


@dataclass(frozen=True)
class Asymmetry:
    kind: str = "none"
    side: str = "left"
    amount: float = 0.0  # scale factor, shear angle in degrees, or truncated fraction

    def __post_init__(self):
        if self.kind not in ("none",) + ASYM_KINDS:
            raise InputError(f"unknown asymmetry kind {self.kind!r}")
        if self.side not in ("left", "right"):
            raise InputError(f"asymmetry side must be left or right, got {self.side!r}")
        if self.kind == "scale" and not 0 < self.amount <= 1:
            raise InputError("scale factor must be in (0, 1]")
        if self.kind == "shear" and not 0 <= self.amount < 45:
            raise InputError("shear angle must be in [0, 45) degrees")
        if self.kind == "truncate" and not 0 <= self.amount < 1:
            raise InputError("truncated fraction must be in [0, 1)")

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "side": self.side, "amount": self.amount}


@dataclass(frozen=True)
class PhantomSpec:
    frame: tuple[int, int] = (512, 512)  # (width, height)
    n_rib_pairs: int = 10
    rib_thickness: float = 8.0
    thorax: Ellipse = Ellipse((256.0, 240.0), 185.0, 165.0, math.pi / 2)
    spine_width: float = 16.0
    asymmetry: Asymmetry = field(default_factory=Asymmetry)
    noise_seed: int = 0
    spine_tilt: float = 0.0  # radians, rotation of the scene about the thorax center

    def __post_init__(self):
        w, h = self.frame
        if w < 32 or h < 32:
            raise InputError("phantom frame must be at least 32x32")
        if self.n_rib_pairs < 1:
            raise InputError("need at least one rib pair")
        if self.rib_thickness <= 0 or self.spine_width <= 0:
            raise InputError("rib thickness and spine width must be positive")
        if abs(self.spine_tilt) > math.radians(20):
            raise InputError("spine tilt must be within 20 degrees")
        ax, ay = self.half_axes
        cx, cy = self.thorax.center
        if self.spine_width / 2 + self.rib_thickness >= ax:
            raise InputError("thorax too narrow for the spine and ribs")
        c, s = abs(math.cos(self.spine_tilt)), abs(math.sin(self.spine_tilt))
        half_w = math.hypot(ax * c, ay * s)
        half_h = math.hypot(ax * s, ay * c)
        if self.asymmetry.kind == "shear":
            half_h += ax * math.tan(math.radians(self.asymmetry.amount))
        if cx - half_w < 1 or cx + half_w > w - 2 or cy - half_h < 1 or cy + half_h > h - 2:
            raise InputError("thorax ellipse must lie inside the frame")

    @property
    def half_axes(self) -> tuple[float, float]:
        """(horizontal, vertical) semi-axes of the thorax ellipse."""
        t = self.thorax
        rot = t.rotation % math.pi
        if min(rot, math.pi - rot) < 1e-9:
            return t.semi_major, t.semi_minor
        if abs(rot - math.pi / 2) < 1e-9:
            return t.semi_minor, t.semi_major
        raise InputError("phantom thorax ellipse must be axis-aligned (rotation 0 or pi/2)")

    def to_dict(self) -> dict:
        t = self.thorax
        return {"frame": list(self.frame), "n_rib_pairs": self.n_rib_pairs,
                "rib_thickness": self.rib_thickness,
                "thorax": {"center": list(t.center), "semi_major": t.semi_major,
                           "semi_minor": t.semi_minor, "rotation": t.rotation},
                "spine_width": self.spine_width, "asymmetry": self.asymmetry.to_dict(),
                "noise_seed": self.noise_seed, "spine_tilt": self.spine_tilt}


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray
    ribs: np.ndarray
    spine: np.ndarray
    truth: HemithoraxPair
    label: int
    spec: PhantomSpec


def _segment_distance(px, py, ax_, ay_, bx, by):
    vx, vy = bx - ax_, by - ay_
    t = ((px - ax_) * vx + (py - ay_) * vy) / (vx * vx + vy * vy)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax_ + t * vx), py - (ay_ + t * vy))


def _canonical(spec: PhantomSpec, x, y):
    """Thorax and rib membership at canonical (undeformed, untilted) coordinates."""
    cx, cy = spec.thorax.center
    ax, ay = spec.half_axes
    u = (x - cx) / ax
    v = (y - cy) / ay
    rho = np.hypot(u, v)
    thorax = rho <= 1.0
    t = spec.rib_thickness
    wall = (rho >= 1.0 - t / min(ax, ay)) & thorax
    # polar angle from the top of the ellipse, 0..pi on either side
    theta = np.arctan2(np.abs(u), -v)
    k = spec.n_rib_pairs
    lo, hi = 0.08 * math.pi, 0.95 * math.pi
    spacing = (hi - lo) / k
    ribs = np.zeros(np.shape(x), dtype=bool)
    xs_edge = spec.spine_width / 2 + 1.0
    axr = np.abs(x - cx)
    inner = 1.0 - 0.5 * t / min(ax, ay)
    for i in range(k):
        th0 = lo + i * spacing
        th1 = th0 + 0.75 * spacing
        ribs |= wall & (theta >= th0) & (theta <= th1)
        wx = inner * ax * math.sin(th0)
        wy = cy - inner * ay * math.cos(th0)
        sy = wy - 0.08 * ay
        d = _segment_distance(axr, y, xs_edge, sy, wx, wy)
        ribs |= (d <= t / 2) & (axr >= xs_edge) & thorax
    return thorax, ribs


def _truncation_level(fraction: float) -> float:
    """Normalized height ``v0`` whose lower cap ``v > v0`` holds ``fraction`` of a half-disk."""
    def cap(v0):
        return 0.5 * (0.5 * math.pi - v0 * math.sqrt(1.0 - v0 * v0) - math.asin(v0))
    return optimize.brentq(lambda v0: cap(v0) - fraction * 0.5 * math.pi, -1.0, 1.0)


def _source_coords(spec: PhantomSpec):
    """Canonical coordinates sampled by every output pixel, plus the side sign."""
    w, h = spec.frame
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    cx, cy = spec.thorax.center
    c, s = math.cos(spec.spine_tilt), math.sin(spec.spine_tilt)
    # undo the scene rotation
    rx, ry = xx - cx, yy - cy
    x = cx + c * rx + s * ry
    y = cy - s * rx + c * ry
    side = np.sign(x - cx)
    asym = spec.asymmetry
    if asym.is_none:
        return x, y, side, None
    on_side = side < 0 if asym.side == "left" else side > 0
    keep = None
    if asym.kind == "scale":
        x = np.where(on_side, cx + (x - cx) / asym.amount, x)
    elif asym.kind == "shear":
        y = np.where(on_side, y - math.tan(math.radians(asym.amount)) * np.abs(x - cx), y)
    elif asym.kind == "truncate":
        cut = cy + spec.half_axes[1] * _truncation_level(asym.amount)
        keep = ~(on_side & (y > cut))
    return x, y, side, keep


def spine_line(spec: PhantomSpec) -> SpineLine:
    cx, cy = spec.thorax.center
    t = spec.spine_tilt
    return SpineLine((cx, cy), (-math.sin(t), math.cos(t)), (0.0, spec.frame[1] - 1.0))


def generate(spec: PhantomSpec) -> Phantom:
    x, y, side, keep = _source_coords(spec)
    thorax, ribs = _canonical(spec, x, y)
    if keep is not None:
        thorax &= keep
        ribs &= keep
    # the spine is not deformed by the asymmetry, only tilted with the scene
    w, h = spec.frame
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    line = spine_line(spec)
    spine = line.distance(xx, yy) <= spec.spine_width / 2
    truth = split_by_spine(thorax, line)
    if not (ribs & (line.side_value(xx, yy) < 0)).any() or \
            not (ribs & (line.side_value(xx, yy) > 0)).any():
        raise InputError("phantom spec leaves one side without ribs")

    img = np.full((h, w), BACKGROUND_LEVEL)
    img[thorax] = LUNG_LEVEL
    img[ribs | spine] = RIB_LEVEL
    img = ndimage.gaussian_filter(img, 1.0, mode="nearest")
    rng = np.random.default_rng(spec.noise_seed)
    img = np.clip(img + rng.normal(0.0, 0.01, size=img.shape), 0.0, 1.0)
    label = SYMMETRIC if spec.asymmetry.is_none else ASYMMETRIC
    return Phantom(img, ribs, spine, truth, label, spec)


def mirror_mask(mask, spine: SpineLine) -> np.ndarray:
    """Reflect a mask across the spine line (nearest-pixel inverse mapping)."""
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    sx, sy = spine.reflect(xx, yy)
    sx = np.rint(sx).astype(int)
    sy = np.rint(sy).astype(int)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros_like(mask, dtype=bool)
    out[inside] = mask[sy[inside], sx[inside]]
    return out


def erase_rib_band(ribs, lo: float = 1 / 3, hi: float = 2 / 3) -> np.ndarray:
    """Clear the rows between fractions ``lo`` and ``hi`` of the rib mask's height."""
    ribs = np.asarray(ribs, dtype=bool)
    rows = np.nonzero(ribs.any(axis=1))[0]
    out = ribs.copy()
    if rows.size == 0:
        return out
    top, bottom = rows[0], rows[-1]
    a = int(math.ceil(top + lo * (bottom - top)))
    b = int(math.floor(top + hi * (bottom - top)))
    out[a:b + 1] = False
    return out


def random_spec(rng: np.random.Generator, asymmetric: bool, frame=(512, 512),
                ranges=None) -> PhantomSpec:
    """Draw a plausible phantom spec; sizes scale with the frame width."""
    ranges = dict(ASYM_RANGES, **(ranges or {}))
    w, h = frame
    s = w / 512.0
    ax = rng.uniform(150, 185) * s
    ay = rng.uniform(160, 190) * s
    cx = w / 2 + rng.uniform(-20, 20) * s
    cy = h / 2 - 20 * s + rng.uniform(-8, 8) * s
    if asymmetric:
        kind = ASYM_KINDS[int(rng.integers(len(ASYM_KINDS)))]
        side = ("left", "right")[int(rng.integers(2))]
        amount = float(rng.uniform(*ranges[kind]))
        asym = Asymmetry(kind, side, amount)
    else:
        asym = Asymmetry()
    n_ribs = int(rng.integers(8, 13))
    thickness = float(rng.uniform(7, 10) * s)
    spine_width = float(rng.uniform(14, 20) * s)
    noise_seed = int(rng.integers(2 ** 31))
    tilt = float(math.radians(rng.uniform(-3, 3)))
    # a large sheared thorax can overflow the frame; shrink it until it fits
    for _ in range(60):
        major, minor = (ax, ay) if ax >= ay else (ay, ax)
        rotation = 0.0 if ax >= ay else math.pi / 2
        try:
            return PhantomSpec(
                frame=(int(w), int(h)),
                n_rib_pairs=n_ribs,
                rib_thickness=thickness,
                thorax=Ellipse((float(cx), float(cy)), float(major), float(minor), rotation),
                spine_width=spine_width,
                asymmetry=asym,
                noise_seed=noise_seed,
                spine_tilt=tilt,
            )
        except InputError:
            ax, ay = 0.97 * ax, 0.97 * ay
    raise InputError("frame too small for a phantom")


def corpus_specs(n: int, asym_fraction: float = DEFAULT_ASYM_FRACTION, seed=0,
                 frame=(512, 512), ranges=None) -> list[PhantomSpec]:
    """``round(n * asym_fraction)`` asymmetric specs in shuffled order."""
    if n < 1:
        raise InputError("corpus size must be positive")
    if not 0 <= asym_fraction <= 1:
        raise InputError("asym_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n_asym = int(math.floor(n * asym_fraction + 0.5))
    flags = np.zeros(n, dtype=bool)
    flags[:n_asym] = True
    rng.shuffle(flags)
    return [random_spec(rng, bool(f), frame, ranges) for f in flags]


def generate_corpus(n: int, out_dir, asym_fraction: float = DEFAULT_ASYM_FRACTION,
                    seed=0, frame=(512, 512), ranges=None) -> Path:
    """Write ``n`` phantoms and a ``manifest.json`` under ``out_dir``.

    Returns the manifest path.  File names follow ``{id}_img.png``,
    ``{id}_ribs.png``, ``{id}_spine.png``, ``{id}_left.png``, ``{id}_right.png``.
    """
    if n < 10:
        raise InputError("a corpus needs at least 10 phantoms")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out_dir}: cannot create output directory ({exc})") from exc
    rows = []
    width = len(str(n - 1))
    for i, spec in enumerate(corpus_specs(n, asym_fraction, seed, frame, ranges)):
        pid = f"ph{i:0{width}d}"
        ph = generate(spec)
        save_gray(out_dir / f"{pid}_img.png", ph.image)
        save_mask(out_dir / f"{pid}_ribs.png", ph.ribs)
        save_mask(out_dir / f"{pid}_spine.png", ph.spine)
        save_mask(out_dir / f"{pid}_left.png", ph.truth.left)
        save_mask(out_dir / f"{pid}_right.png", ph.truth.right)
        rows.append({"id": pid, "image": f"{pid}_img.png", "ribs_mask": f"{pid}_ribs.png",
                     "spine_mask": f"{pid}_spine.png", "label": ph.label,
                     "truth_left": f"{pid}_left.png", "truth_right": f"{pid}_right.png",
                     "asymmetry": spec.asymmetry.to_dict()})
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(rows, indent=1))
    return manifest
