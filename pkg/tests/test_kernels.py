import numpy as np
import pytest

from hemisym import _kernels
from hemisym.classify import SVMConfig, train_svm
from hemisym.phantom import PhantomSpec, generate
from hemisym.snake import SnakeParams, circle_contour, contour_to_mask, fit_snake

needs_compiled = pytest.mark.skipif(not _kernels.COMPILED_AVAILABLE,
                                    reason="compiled kernels not built")


def both(func):
    previous = _kernels.backend()
    try:
        _kernels.use_backend("python")
        a = func()
        _kernels.use_backend("compiled")
        b = func()
    finally:
        _kernels.use_backend(previous)
    return a, b


def test_use_backend_switches_and_restores():
    previous = _kernels.use_backend("python")
    try:
        assert _kernels.backend() == "python"
        assert _kernels.snake_energy.__module__.endswith("_pykernels")
        with pytest.raises(ValueError):
            _kernels.use_backend("fortran")
    finally:
        _kernels.use_backend(previous)
    assert _kernels.backend() == previous
    with pytest.raises(AttributeError):
        _kernels.no_such_kernel


@needs_compiled
def test_compiled_is_default():
    assert _kernels.backend() == "compiled"


@needs_compiled
def test_snake_backends_agree():
    ribs = generate(PhantomSpec()).ribs
    a, b = both(lambda: fit_snake(ribs, SnakeParams()).vertices)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b)) < 1e-8


@needs_compiled
def test_smo_backends_agree():
    rng = np.random.default_rng(1)
    X = rng.random((150, 7))
    y = (X[:, 0] + 0.3 * rng.standard_normal(150) > 0.5).astype(int)
    a, b = both(lambda: train_svm(X, y, SVMConfig(C=1.0, gamma=2.0)))
    assert np.array_equal(a.coef, b.coef) and a.bias == b.bias
    assert a.iterations == b.iterations


@needs_compiled
def test_fill_backends_agree():
    rng = np.random.default_rng(2)
    for n in (8, 50, 301):
        c = circle_contour(100.0, 90.0, 60.0, n)
        verts = c.vertices + rng.uniform(-5, 5, c.vertices.shape)
        a, b = both(lambda: _kernels.fill_polygon(verts[:, 0], verts[:, 1], 200, 210))
        assert np.array_equal(a, b)
    a, b = both(lambda: contour_to_mask(circle_contour(50.0, 50.0, 30.0, 64), 100, 100))
    assert np.array_equal(a, b)
