import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disk_mask
from hemisym.errors import EmptySideError, InputError
from hemisym.hemithorax import (HemithoraxPair, SpineLine, fit_spine_midline, mirror_pair,
                                segment_hemithoraces, split_by_spine)
from hemisym.phantom import erase_rib_band, mirror_mask
from hemisym.raster import mask_iou
from hemisym.snake import SnakeParams, contour_to_mask


def strip(shape, x0, y0, angle, half_width, y_range):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    line = SpineLine((x0, y0), (math.sin(angle), math.cos(angle)), (0, 0))
    return (line.distance(xx, yy) <= half_width) & (yy >= y_range[0]) & (yy <= y_range[1])


def test_vertical_strip():
    m = np.zeros((1024, 1024), dtype=bool)
    m[100:900, 502:522] = True
    line = fit_spine_midline(m)
    assert line.direction == (0.0, 1.0)
    assert line.x_at(500) == pytest.approx(511.5)
    assert line.extent == (100.0, 899.0)


def test_tilted_strip_angle():
    tilt = math.radians(5)
    m = strip((1024, 1024), 512, 512, tilt, 10, (150, 870))
    dx, dy = fit_spine_midline(m).direction
    assert abs(math.atan2(dx, dy) - tilt) < math.radians(0.5)


def test_fit_robust_to_dropout():
    m = strip((1024, 1024), 512, 512, math.radians(3), 10, (150, 870))
    clean = fit_spine_midline(m)
    rng = np.random.default_rng(4)
    holes = m & (rng.random(m.shape) < 0.1)
    noisy = fit_spine_midline(m & ~holes)
    ys = np.arange(150, 871)
    assert np.sqrt(np.mean((clean.x_at(ys) - noisy.x_at(ys)) ** 2)) < 1.0


def test_fit_errors():
    with pytest.raises(InputError):
        fit_spine_midline(np.zeros((50, 50)))
    short = np.zeros((50, 50), dtype=bool)
    short[10:25, 20:24] = True
    with pytest.raises(InputError):
        fit_spine_midline(short)
    with pytest.raises(InputError):
        SpineLine((0, 0), (1.0, 0.0), (0, 0))


def test_split_disk_balanced():
    disk = disk_mask((301, 301), 150, 150, 100)
    for deg in (0, 10, 30, 45):
        t = math.radians(deg)
        line = SpineLine((150.0, 150.0), (math.sin(t), math.cos(t)), (0, 300))
        pair = split_by_spine(disk, line)
        assert abs(int(pair.left.sum()) - int(pair.right.sum())) <= 201
        assert not (pair.left & pair.right).any()


def test_split_one_sided_and_orientation():
    m = np.zeros((40, 40), dtype=bool)
    m[5:30, 2:10] = True
    pair = split_by_spine(m, SpineLine.vertical(20))
    assert np.array_equal(pair.left, m) and not pair.right.any()


@given(st.integers(0, 2 ** 32 - 1), st.floats(-0.7, 0.7), st.floats(5, 35))
def test_split_partitions(seed, angle, x0):
    rng = np.random.default_rng(seed)
    region = rng.random((40, 40)) < 0.5
    line = SpineLine((x0, 20.0), (math.sin(angle), math.cos(angle)), (0, 39))
    pair = split_by_spine(region, line)
    yy, xx = np.mgrid[0:40, 0:40]
    on_line = region & (line.side_value(xx, yy) == 0)
    assert not (pair.left & pair.right).any()
    assert np.array_equal(pair.left | pair.right | on_line, region)
    assert np.all(line.side_value(xx[pair.left], yy[pair.left]) < 0)
    assert np.all(line.side_value(xx[pair.right], yy[pair.right]) > 0)


def test_pair_rejects_overlap():
    m = np.ones((5, 5), dtype=bool)
    with pytest.raises(InputError):
        HemithoraxPair(m, m, SpineLine.vertical(2))


def _pair_iou(a, b):
    return 0.5 * (mask_iou(a.left, b.left) + mask_iou(a.right, b.right))


def test_symmetric_phantom_one_snake(symmetric_phantom):
    ph = symmetric_phantom
    pair = segment_hemithoraces(ph.ribs, ph.spine)
    assert mask_iou(mirror_mask(pair.left, pair.spine), pair.right) >= 0.9
    assert _pair_iou(pair, ph.truth) >= 0.9
    thorax = contour_to_mask(pair.contours[0], *ph.ribs.shape[::-1])
    assert pair.left.sum() + pair.right.sum() <= thorax.sum()


def test_erased_ribs_one_snake_beats_two_snake(symmetric_phantom):
    ph = symmetric_phantom
    erased = erase_rib_band(ph.ribs)
    assert erased.sum() < ph.ribs.sum()
    ref = segment_hemithoraces(ph.ribs, ph.spine)
    one = segment_hemithoraces(erased, ph.spine, mode="one-snake")
    two = segment_hemithoraces(erased, ph.spine, mode="two-snake")
    assert _pair_iou(one, ref) >= 0.9
    assert _pair_iou(two, ref) < _pair_iou(one, ref)


def test_mirror_invariance(scaled_phantom):
    ph = scaled_phantom
    pair = segment_hemithoraces(ph.ribs, ph.spine)
    flipped = segment_hemithoraces(ph.ribs[:, ::-1], ph.spine[:, ::-1])
    back = mirror_pair(flipped)
    assert mask_iou(back.left, pair.left) >= 0.99
    assert mask_iou(back.right, pair.right) >= 0.99


def test_two_snake_empty_side(symmetric_phantom):
    ph = symmetric_phantom
    one_sided = ph.ribs.copy()
    one_sided[:, 256:] = False
    with pytest.raises(EmptySideError, match="right"):
        segment_hemithoraces(one_sided, ph.spine, mode="two-snake")
    with pytest.raises(InputError):
        segment_hemithoraces(ph.ribs, ph.spine, mode="three-snake")


def test_traces_recorded(symmetric_phantom):
    ph = symmetric_phantom
    traces = []
    segment_hemithoraces(ph.ribs, ph.spine, SnakeParams(), "two-snake", traces=traces)
    assert len(traces) == 2
    for t in traces:
        assert np.all(np.diff(t.energies) <= 0)
