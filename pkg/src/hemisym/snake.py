"""Active contours: energy terms, rectangle initialization, descent and rasterization.

The snake is a closed polygon ``v_0 .. v_{n-1}`` with energy

    E = alpha * sum |v_{i+1} - v_i|^2
      + beta  * sum |v_{i+1} - 2 v_i + v_{i-1}|^2
      + sum field(v_i)

where ``field`` is the (negative, squared) edge strength of the smoothed mask.
Descent steps are preconditioned by the internal-energy Hessian, which is a
circulant matrix, so each trial step costs one circular convolution.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import InputError, SnakeDivergedError
from .raster import as_mask

MAX_HALVINGS = 40
RESAMPLE_EVERY = 25


@dataclass(frozen=True)
class SnakeParams:
    alpha: float = 0.01
    beta: float = 0.1
    step_size: float = 64.0
    max_iters: int = 2000
    tol: float = 0.05
    n_vertices: int = 200
    field_smoothing: float = 3.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InputError("alpha and beta must be non-negative")
        if not self.step_size > 0:
            raise InputError("step_size must be positive")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.n_vertices < 8:
            raise InputError("n_vertices must be >= 8")
        if self.field_smoothing < 0:
            raise InputError("field_smoothing must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "SnakeParams":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown snake parameter(s): {sorted(unknown)}")
        kw = dict(doc)
        for key in ("max_iters", "n_vertices"):
            if key in kw:
                if float(kw[key]) != int(kw[key]):
                    raise InputError(f"{key} must be an integer")
                kw[key] = int(kw[key])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "SnakeParams":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise InputError("snake parameters must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


class Contour:
    """Closed polygon; ``vertices`` is an ``(n, 2)`` array of ``(x, y)``."""

    MIN_VERTICES = 8
    MIN_SPACING = 1e-6

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InputError(f"contour vertices must be (n, 2), got {v.shape}")
        if v.shape[0] < self.MIN_VERTICES:
            raise InputError(f"contour needs >= {self.MIN_VERTICES} vertices")
        if not np.all(np.isfinite(v)):
            raise InputError("contour vertices must be finite")
        gaps = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
        if np.any(gaps < self.MIN_SPACING):
            raise InputError("contour has consecutive duplicate vertices")
        v.setflags(write=False)
        self.vertices = v

    def __len__(self):
        return self.vertices.shape[0]

    def __repr__(self):
        return f"Contour(n={len(self)})"

    def perimeter(self) -> float:
        return float(np.sum(np.hypot(*(np.roll(self.vertices, -1, axis=0) - self.vertices).T)))

    def area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def reversed(self) -> "Contour":
        return Contour(self.vertices[::-1])

    def is_simple(self) -> bool:
        """True when no two non-adjacent edges intersect."""
        v = self.vertices
        n = len(v)
        a = v
        b = np.roll(v, -1, axis=0)
        for i in range(n):
            j = np.arange(i + 2, n)
            if i == 0:
                j = j[j != n - 1]
            if j.size == 0:
                continue
            if np.any(_segments_cross(a[i], b[i], a[j], b[j])):
                return False
        return True


def _segments_cross(p, q, r, s):
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - \
               (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    d1 = orient(r, s, p)
    d2 = orient(r, s, q)
    d3 = orient(p, q, r)
    d4 = orient(p, q, s)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _crossing_point(p, q, r, s):
    d, e = q - p, s - r
    t = ((r[0] - p[0]) * e[1] - (r[1] - p[1]) * e[0]) / (d[0] * e[1] - d[1] * e[0])
    return p + t * d


def remove_loops(xy, max_cuts: int = 100) -> np.ndarray:
    """Cut self-intersection loops out of a closed polyline.

    At each crossing of edges ``i`` and ``j`` the shorter of the two vertex
    runs between them is replaced by the crossing point.
    """
    xy = np.asarray(xy, dtype=float)
    for _ in range(max_cuts):
        n = len(xy)
        nxt = np.roll(xy, -1, axis=0)
        hit = None
        for i in range(n):
            j = np.arange(i + 2, n)
            if i == 0:
                j = j[j != n - 1]
            cross = j[_segments_cross(xy[i], nxt[i], xy[j], nxt[j])] if j.size else j
            if cross.size:
                hit = i, int(cross[0])
                break
        if hit is None or n < 8:
            return xy
        i, j = hit
        point = _crossing_point(xy[i], nxt[i], xy[j], nxt[j])
        if j - i <= n - (j - i):
            xy = np.vstack([xy[:i + 1], point, xy[j + 1:]])
        else:
            xy = np.vstack([point, xy[i + 1:j + 1]])
    return xy


@dataclass(frozen=True)
class EnergyField:
    values: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _edge_depth(sigma: float) -> float:
    """Peak squared gradient of a unit step edge under the same smoothing."""
    step = np.r_[np.zeros(64), np.ones(64)]
    if sigma > 0:
        step = ndimage.gaussian_filter1d(step, sigma, mode="nearest")
    return float(np.max(np.gradient(step)) ** 2)


def external_energy_field(mask, params: SnakeParams) -> EnergyField:
    """Negative squared gradient magnitude of the smoothed mask.

    The field is scaled so that a straight unit step edge produces a well of
    depth exactly 1, whatever the smoothing radius.
    """
    mask = as_mask(mask)
    if not mask.any():
        raise InputError("external energy needs a non-empty mask")
    img = mask.astype(float)
    sigma = params.field_smoothing
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gy, gx = np.gradient(img)
    values = -(gx * gx + gy * gy) / _edge_depth(sigma)
    fy, fx = np.gradient(values)
    return EnergyField(np.ascontiguousarray(values), np.ascontiguousarray(fx),
                       np.ascontiguousarray(fy))


def resample_closed(xy, n: int) -> np.ndarray:
    """Place ``n`` vertices at equal arc length along a closed polyline."""
    xy = np.asarray(xy, dtype=float)
    closed = np.vstack([xy, xy[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    keep = seg > 0
    if not keep.all():
        closed = np.vstack([xy[keep], xy[keep][:1]])
        seg = seg[keep]
    s = np.r_[0.0, np.cumsum(seg)]
    targets = np.arange(n) * (s[-1] / n)
    return np.column_stack([np.interp(targets, s, closed[:, 0]),
                            np.interp(targets, s, closed[:, 1])])


def init_rectangle(ribs, margin: float = 10, n_vertices: int = 200) -> Contour:
    """Bounding rectangle of the mask grown by ``margin`` and clipped to the frame."""
    ribs = as_mask(ribs)
    ys, xs = np.nonzero(ribs)
    if xs.size == 0:
        raise InputError("cannot initialize a snake from an empty mask")
    h, w = ribs.shape
    x0 = max(xs.min() - margin, 0)
    x1 = min(xs.max() + margin, w - 1)
    y0 = max(ys.min() - margin, 0)
    y1 = min(ys.max() + margin, h - 1)
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise InputError("bounding rectangle is degenerate; use a positive margin")
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    return Contour(resample_closed(corners, n_vertices))


def internal_energy(c: Contour, alpha: float, beta: float) -> float:
    v = c.vertices
    nxt, prv = np.roll(v, -1, axis=0), np.roll(v, 1, axis=0)
    d1 = nxt - v
    d2 = nxt - 2 * v + prv
    return float(alpha * np.sum(d1 * d1) + beta * np.sum(d2 * d2))


def snake_energy(c: Contour, field: EnergyField, alpha: float, beta: float) -> float:
    """Total energy: internal terms plus the field sampled at every vertex."""
    return float(_kernels.snake_energy(np.ascontiguousarray(c.vertices), field.values,
                                       alpha, beta))


def _internal_spectrum(n: int, alpha: float, beta: float) -> np.ndarray:
    mu = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)
    return 2.0 * alpha * mu + 2.0 * beta * mu * mu


def _step_kernels(n, alpha, beta, taus):
    lam = _internal_spectrum(n, alpha, beta)
    spec = 1.0 / (1.0 + taus[:, None] * lam[None, :])
    return np.ascontiguousarray(np.fft.ifft(spec, axis=1).real)


@dataclass
class SnakeTrace:
    energies: list
    iterations: int
    converged: bool


def evolve(init: Contour, field: EnergyField, params: SnakeParams,
           trace: SnakeTrace | None = None) -> Contour:
    """Descend the snake energy from ``init`` until it settles.

    Each iteration tries the step sizes ``step_size, step_size/2, ...`` and
    keeps the first one whose move stays within the trust radius (the field
    smoothing radius, at least one pixel) and does not increase the energy,
    so the recorded energies never increase.  The contour is resampled to
    equal arc length every 25 iterations when that does not raise the energy.
    Stops when no vertex moves more than ``tol`` or after ``max_iters``.  If
    the settled contour crosses itself, its loops are cut out afterwards; that
    clean-up is geometric, not a descent step, so it is not in ``trace``.
    """
    xy = np.ascontiguousarray(init.vertices, dtype=float)
    if params.n_vertices != len(xy):
        xy = resample_closed(xy, params.n_vertices)
    h, w = field.values.shape
    if (xy[:, 0].min() < 0 or xy[:, 1].min() < 0
            or xy[:, 0].max() > w - 1 or xy[:, 1].max() > h - 1):
        raise InputError("initial contour lies outside the energy field")
    n = len(xy)
    alpha, beta = params.alpha, params.beta
    taus = params.step_size * 0.5 ** np.arange(MAX_HALVINGS)
    kern = _step_kernels(n, alpha, beta, taus)
    trust = max(1.0, params.field_smoothing)
    energies = []
    done = 0
    converged = False
    while done < params.max_iters:
        if done:
            cand = resample_closed(xy, n)
            if (np.all(np.hypot(*(np.roll(cand, -1, axis=0) - cand).T) > Contour.MIN_SPACING)
                    and _kernels.snake_energy(cand, field.values, alpha, beta)
                    <= _kernels.snake_energy(xy, field.values, alpha, beta)):
                xy = cand
        chunk = min(RESAMPLE_EVERY, params.max_iters - done)
        xy, es, status, k = _kernels.snake_descent(
            xy, field.values, field.grad_x, field.grad_y, alpha, beta,
            taus, kern, trust, params.tol, chunk)
        if status == _kernels.DIVERGED:
            raise SnakeDivergedError(done + k)
        energies.extend(np.asarray(es).tolist())
        done += k
        if status in (_kernels.CONVERGED, _kernels.STALLED):
            converged = True
            break
    xy = _dedupe(xy)
    if not Contour(xy).is_simple():
        # a snake pinched into a sharp corner can tie sub-pixel knots
        xy = _refill(remove_loops(xy), n)
    if trace is not None:
        trace.energies = energies
        trace.iterations = done
        trace.converged = converged
    return Contour(xy)


def _refill(xy, n: int) -> np.ndarray:
    """Split the longest edges at their midpoints until there are ``n`` vertices."""
    xy = [tuple(v) for v in xy]
    while len(xy) < n:
        gaps = np.hypot(*(np.roll(xy, -1, axis=0) - np.asarray(xy)).T)
        i = int(np.argmax(gaps))
        a, b = np.asarray(xy[i]), np.asarray(xy[(i + 1) % len(xy)])
        xy.insert(i + 1, tuple(0.5 * (a + b)))
    return np.asarray(xy, dtype=float)


def _dedupe(xy):
    gaps = np.hypot(*(np.roll(xy, -1, axis=0) - xy).T)
    if np.all(gaps >= Contour.MIN_SPACING):
        return xy
    return resample_closed(xy, len(xy))


def contour_to_mask(c: Contour, width: int, height: int) -> np.ndarray:
    """Even-odd fill of the closed contour; pixel centers on an edge count as inside."""
    v = c.vertices
    return np.asarray(_kernels.fill_polygon(np.ascontiguousarray(v[:, 0]),
                                            np.ascontiguousarray(v[:, 1]),
                                            int(height), int(width)), dtype=bool)


def fit_snake(mask, params: SnakeParams, margin: float = 10,
              trace: SnakeTrace | None = None) -> Contour:
    """Rectangle initialization followed by ``evolve`` on the mask's edge field."""
    field = external_energy_field(mask, params)
    init = init_rectangle(mask, margin, params.n_vertices)
    return evolve(init, field, params, trace)


def circle_contour(cx, cy, r, n=200) -> Contour:
    t = 2 * math.pi * np.arange(n) / n
    return Contour(np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]))
