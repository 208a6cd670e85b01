"""Gray images, binary masks, PNG I/O and the synthetic corruption transforms.

Images are float64 arrays in [0, 1] indexed ``[row, col]``; masks are bool
arrays of the same layout.  Pixel ``(row=r, col=c)`` has center coordinates
``x = c``, ``y = r`` everywhere in the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DegenerateFitError, InputError

#: Gamma ranges used to simulate exposure errors.
UNDEREXPOSURE_GAMMA = (0.2, 0.5)
OVEREXPOSURE_GAMMA = (2.0, 5.0)
#: Noise standard deviation range, on the 8-bit intensity scale.
NOISE_SIGMA_RANGE = (0.0, 10.0)
#: Range of the divisors applied to the thorax ellipse axes by ``obstruct``.
OBSTRUCTION_DIVISORS = (2.0, 4.0)
OCCLUDER_INTENSITY = 1.0


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_major: float
    semi_minor: float
    rotation: float  # radians, direction of the major axis measured from +x

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0):
            raise ValueError(
                f"ellipse needs semi_major >= semi_minor > 0, got "
                f"{self.semi_major}, {self.semi_minor}")

    def scaled(self, major_div: float, minor_div: float) -> "Ellipse":
        a = self.semi_major / major_div
        b = self.semi_minor / minor_div
        if b > a:
            # the shrunken minor axis can overtake the major one
            return Ellipse(self.center, b, a, self.rotation + math.pi / 2)
        return Ellipse(self.center, a, b, self.rotation)

    def contains(self, shape: tuple[int, int]) -> np.ndarray:
        """Boolean mask of the pixel centers inside (or on) the ellipse."""
        h, w = shape
        yy, xx = np.mgrid[0:h, 0:w].astype(float)
        dx = xx - self.center[0]
        dy = yy - self.center[1]
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.semi_major) ** 2 + (v / self.semi_minor) ** 2 <= 1.0


def as_gray(a) -> np.ndarray:
    img = np.asarray(a, dtype=float)
    if img.ndim != 2:
        raise InputError(f"expected a 2-D image, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise InputError("image intensities must lie in [0, 1]")
    return img


def as_mask(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise InputError(f"expected a 2-D mask, got shape {m.shape}")
    return m.astype(bool, copy=False)


def _read(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=float)
                top = 65535.0 if arr.max() > 255 else 255.0
                return arr / top
            if im.mode == "F":
                return np.clip(np.asarray(im, dtype=float), 0.0, 1.0)
            if im.mode not in ("L", "1"):
                im = im.convert("L")  # luminance conversion for color input
            arr = np.asarray(im, dtype=float)
            return arr if im.mode == "1" else arr / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"{path}: cannot decode image ({exc})") from exc


def load_gray(path) -> np.ndarray:
    """Read a raster image as intensities in [0, 1]."""
    return _read(path)


def load_mask(path, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise InputError(f"mask threshold must be in (0, 1), got {threshold}")
    return _read(path) >= threshold


def save_gray(path, img) -> None:
    """Write an image as 8-bit PNG; this is the only place intensities are quantized."""
    img = as_gray(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L").save(path)


def save_mask(path, mask) -> None:
    mask = as_mask(mask)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def gamma_transform(img, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    return np.power(as_gray(img), gamma)


def add_gaussian_noise(img, sigma: float, seed) -> np.ndarray:
    """Add zero-mean Gaussian noise; ``sigma`` is on the 8-bit scale."""
    if sigma < 0:
        raise InputError(f"noise sigma must be non-negative, got {sigma}")
    img = as_gray(img)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    noisy = img + rng.normal(0.0, sigma / 255.0, size=img.shape)
    return np.clip(noisy, 0.0, 1.0)


def fit_ellipse(mask) -> Ellipse:
    """Moment-matching ellipse: same centroid and second central moments as the mask."""
    mask = as_mask(mask)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise InputError("cannot fit an ellipse to an empty mask")
    cx, cy = xs.mean(), ys.mean()
    dx, dy = xs - cx, ys - cy
    # a filled ellipse with semi-axis a has variance a**2/4 along that axis
    cov = np.array([[np.mean(dx * dx), np.mean(dx * dy)],
                    [np.mean(dx * dy), np.mean(dy * dy)]])
    evals, evecs = np.linalg.eigh(cov)
    lo, hi = evals
    if lo <= 1e-9 * max(hi, 1.0):
        raise DegenerateFitError("mask is collinear; ellipse fit is degenerate")
    major = evecs[:, 1]
    rotation = math.atan2(major[1], major[0]) % math.pi
    return Ellipse((float(cx), float(cy)), 2.0 * math.sqrt(hi), 2.0 * math.sqrt(lo),
                   float(rotation))


def obstruct(img, thorax_ellipse: Ellipse, seed, divisors=None) -> np.ndarray:
    """Paint a shrunken copy of the thorax ellipse as a bright occluder.

    ``divisors`` overrides the random (major, minor) divisors, which are
    otherwise drawn independently from ``OBSTRUCTION_DIVISORS``.
    """
    img = as_gray(img)
    if divisors is None:
        rng = np.random.default_rng(seed)
        divisors = rng.uniform(*OBSTRUCTION_DIVISORS, size=2)
    occluder = thorax_ellipse.scaled(float(divisors[0]), float(divisors[1]))
    region = occluder.contains(img.shape)
    if not region.any():
        raise InputError("occluder ellipse does not overlap the image")
    out = img.copy()
    out[region] = OCCLUDER_INTENSITY
    return out


def mask_iou(a, b) -> float:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise InputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
