import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hemisym.phantom import Asymmetry, PhantomSpec, generate

settings.register_profile("hemisym", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("hemisym")


def disk_mask(shape, cx, cy, r):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def square_mask(shape, x0, y0, size):
    m = np.zeros(shape, dtype=bool)
    m[y0:y0 + size, x0:x0 + size] = True
    return m


@pytest.fixture(scope="session")
def symmetric_phantom():
    return generate(PhantomSpec())


@pytest.fixture(scope="session")
def scaled_phantom():
    return generate(PhantomSpec(asymmetry=Asymmetry("scale", "left", 0.6)))
