from fractions import Fraction

import pytest
from hypothesis import settings

from skewfatou.disks import find_w0, find_nesting_threshold
from skewfatou.dynamics import critical_data, example_family
from skewfatou.numerics import precision_for_depth

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

TUNED_B = Fraction(-641, 4165)


@pytest.fixture(scope="session")
def tuned():
    return example_family(4, 1, TUNED_B)


@pytest.fixture(scope="session")
def untuned():
    return example_family(4, 1, 0)


@pytest.fixture(scope="session")
def crit(tuned):
    return critical_data(tuned.p)


@pytest.fixture(scope="session")
def w0(tuned, crit):
    return find_w0(tuned, crit).w0


@pytest.fixture(scope="session")
def w0_deep(tuned, crit):
    """w0 accurate enough for orbits to index 256."""
    return find_w0(tuned, crit, n=256, precision=precision_for_depth(256, 8)).w0


@pytest.fixture(scope="session")
def nesting_scan(tuned, crit, w0):
    return find_nesting_threshold(tuned, crit, w0)
