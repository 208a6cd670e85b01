import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disk_mask
from hemisym import _kernels
from hemisym.errors import InputError, SnakeDivergedError
from hemisym.raster import mask_iou
from hemisym.snake import (Contour, EnergyField, SnakeParams, SnakeTrace, circle_contour,
                           contour_to_mask, evolve, external_energy_field, fit_snake,
                           init_rectangle, internal_energy, remove_loops, snake_energy)


def test_params_json_strict():
    doc = {"alpha": 0.2, "beta": 0.5, "step_size": 4, "max_iters": 10, "tol": 0.1,
           "n_vertices": 50, "field_smoothing": 2}
    p = SnakeParams.from_json(json.dumps(doc))
    assert p.to_dict() == doc
    with pytest.raises(InputError, match="unknown"):
        SnakeParams.from_dict({"alpha": 1, "gamma": 2})
    for bad in ({"max_iters": 0}, {"tol": 0}, {"n_vertices": 7}, {"alpha": -1},
                {"max_iters": 2.5}):
        with pytest.raises(InputError):
            SnakeParams.from_dict(bad)


def test_contour_invariants():
    with pytest.raises(InputError):
        Contour(np.zeros((7, 2)) + np.arange(7)[:, None])
    v = circle_contour(10, 10, 5, 12).vertices.copy()
    v[3] = v[2]
    with pytest.raises(InputError, match="duplicate"):
        Contour(v)


def test_field_of_constant_mask_is_zero():
    field = external_energy_field(np.ones((40, 50), dtype=bool), SnakeParams())
    assert np.all(field.values == 0) and np.all(field.grad_x == 0)
    with pytest.raises(InputError):
        external_energy_field(np.zeros((40, 50), dtype=bool), SnakeParams())


def test_field_step_edge_support():
    m = np.zeros((64, 128), dtype=bool)
    m[:, 60:] = True
    s = 3.0
    f = external_energy_field(m, SnakeParams(field_smoothing=s)).values
    cols = np.flatnonzero(f.min(axis=0) < -1e-6)
    assert cols.min() >= 60 - 1 - 4 * s and cols.max() <= 60 + 4 * s
    assert np.all(np.abs(f[:, :30]) < 1e-12) and np.all(np.abs(f[:, 100:]) < 1e-12)
    assert np.argmin(f[32]) in (59, 60)


def test_field_disk_argmin_near_boundary():
    s = 3.0
    m = disk_mask((200, 200), 100, 100, 50)
    f = external_energy_field(m, SnakeParams(field_smoothing=s)).values
    ys, xs = np.nonzero(np.isclose(f, f.min()))
    r = np.hypot(xs - 100, ys - 100)
    assert np.all(np.abs(r - 50) <= 1 + s)


def test_init_rectangle_examples():
    m = np.zeros((200, 200), dtype=bool)
    m[60, 50] = True
    v = init_rectangle(m, 10, 40).vertices
    assert v[:, 0].min() == 40 and v[:, 0].max() == 60
    assert v[:, 1].min() == 50 and v[:, 1].max() == 70
    full = init_rectangle(np.ones((30, 40), dtype=bool), 0, 40).vertices
    assert (full[:, 0].min(), full[:, 0].max(), full[:, 1].min(), full[:, 1].max()) == \
        (0, 39, 0, 29)
    two = np.zeros((100, 100), dtype=bool)
    two[10:15, 10:15] = True
    two[70:80, 60:90] = True
    b = init_rectangle(two, 0, 40).vertices
    assert (b[:, 0].min(), b[:, 0].max(), b[:, 1].min(), b[:, 1].max()) == (10, 89, 10, 79)
    assert len(init_rectangle(two, 5, 123)) == 123
    with pytest.raises(InputError):
        init_rectangle(np.zeros((5, 5)), 1)


def test_internal_energy_examples():
    # the 4-corner square subdivided to 8 vertices: 8 edges of length 5
    sq = Contour([[0, 0], [5, 0], [10, 0], [10, 5], [10, 10], [5, 10], [0, 10], [0, 5]])
    assert internal_energy(sq, 1.0, 0.0) == 200.0
    # mid-edge vertices are collinear: only the 4 corners contribute stiffness
    assert internal_energy(sq, 0.0, 1.0) == 4 * (5 ** 2 + 5 ** 2)
    small = circle_contour(0, 0, 3, 24)
    big = circle_contour(0, 0, 6, 24)
    assert math.isclose(internal_energy(big, 0.3, 0.7), 4 * internal_energy(small, 0.3, 0.7))


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=8, max_size=30),
       st.floats(0, 5), st.floats(0, 5))
def test_internal_energy_nonnegative(pts, alpha, beta):
    try:
        c = Contour(pts)
    except InputError:
        return
    assert internal_energy(c, alpha, beta) >= 0


def _even_odd_oracle(vx, vy, px, py):
    inside = False
    n = len(vx)
    for i in range(n):
        x1, y1, x2, y2 = vx[i], vy[i], vx[(i + 1) % n], vy[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def test_rectangle_raster_is_121():
    c = Contour([[10, 10], [15, 10], [20, 10], [20, 15], [20, 20], [15, 20], [10, 20],
                 [10, 15]])
    m = contour_to_mask(c, 40, 40)
    assert m.sum() == 121
    assert m[10:21, 10:21].all()


def test_raster_matches_point_in_polygon_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(8, 14))
        t = np.sort(rng.uniform(0, 2 * np.pi, n))
        r = rng.uniform(4, 14, n)
        c = Contour(np.column_stack([16.3 + r * np.cos(t), 15.7 + r * np.sin(t)]))
        m = contour_to_mask(c, 32, 32)
        vx, vy = c.vertices.T
        oracle = np.array([[_even_odd_oracle(vx, vy, x, y) for x in range(32)]
                           for y in range(32)])
        assert np.array_equal(m, oracle)
        assert np.array_equal(m, contour_to_mask(c.reversed(), 32, 32))


def test_raster_degenerate_contour():
    t = np.linspace(0, 1, 20, endpoint=False)
    c = Contour(np.column_stack([10 + 20 * t, 10 + 1e-3 * np.sin(2 * np.pi * t)]))
    assert contour_to_mask(c, 50, 50).sum() <= 20


def test_zero_field_elastic_shrinkage():
    field = EnergyField(np.zeros((100, 100)), np.zeros((100, 100)), np.zeros((100, 100)))
    init = circle_contour(50, 50, 30, 40)
    perims = []
    for k in range(1, 30, 3):
        params = SnakeParams(alpha=0.05, beta=0.0, step_size=1.0, max_iters=k, n_vertices=40)
        perims.append(evolve(init, field, params).perimeter())
    assert perims[0] < init.perimeter()
    assert all(b <= a + 1e-9 for a, b in zip(perims, perims[1:]))


def test_disk_oracle_and_monotone_energy():
    m = disk_mask((512, 512), 256, 256, 120)
    trace = SnakeTrace([], 0, False)
    c = fit_snake(m, SnakeParams(), 10, trace)
    assert mask_iou(contour_to_mask(c, 512, 512), m) >= 0.95
    assert trace.converged and trace.iterations == len(trace.energies)
    assert np.all(np.diff(trace.energies) <= 0)
    assert c.is_simple()
    field = external_energy_field(m, SnakeParams())
    assert math.isclose(snake_energy(c, field, 0.01, 0.1), trace.energies[-1], rel_tol=0.05,
                        abs_tol=5.0)


def test_vertex_refinement_stable():
    m = disk_mask((512, 512), 256, 256, 120)
    ious = [mask_iou(contour_to_mask(fit_snake(m, SnakeParams(n_vertices=n)), 512, 512), m)
            for n in (100, 400)]
    assert abs(ious[0] - ious[1]) < 0.01


def test_evolve_deterministic_and_bounds_checked():
    m = disk_mask((128, 128), 64, 64, 30)
    a = fit_snake(m, SnakeParams(), 8)
    b = fit_snake(m, SnakeParams(), 8)
    assert np.array_equal(a.vertices, b.vertices)
    field = external_energy_field(m, SnakeParams())
    with pytest.raises(InputError):
        evolve(circle_contour(64, 64, 100, 40), field, SnakeParams())


def test_divergence_is_reported():
    zero = np.zeros((64, 64))
    field = EnergyField(zero, np.full((64, 64), np.nan), zero)
    previous = _kernels.backend()
    try:
        for backend in ("python", "compiled")[:1 + _kernels.COMPILED_AVAILABLE]:
            _kernels.use_backend(backend)
            with pytest.raises(SnakeDivergedError, match="iteration"):
                evolve(circle_contour(32, 32, 10, 40), field, SnakeParams(n_vertices=40))
    finally:
        _kernels.use_backend(previous)


def test_remove_loops_cuts_knot():
    square = [(0, 0), (10, 0), (10, 10), (0, 10)]
    # a small knot tied into the top edge: the path doubles back across itself
    knotted = [(0, 0), (10, 0), (10, 10), (6, 10), (4, 11), (4, 9), (5, 8.5),
               (6, 9), (3, 10), (0, 10)]
    assert not Contour(knotted).is_simple()
    cut = remove_loops(knotted)
    assert Contour(cut).is_simple() and len(cut) >= 8
    assert len(cut) < len(knotted)
    assert np.array_equal(remove_loops(square), np.asarray(square, dtype=float))
