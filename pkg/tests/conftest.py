import numpy as np
import pytest

from src.vtd import numkernel as nk



@pytest.fixture(autouse=True)
def double_precision():
    """Every test starts and ends in double precision."""
    nk.configure(mode="double")
    yield
    nk.configure(mode="double")


@pytest.fixture
def extended():
    return nk.configure(mode="extended", bits=128)


def max_difference(first, second, points_per_interval: int = 11) -> float:
    _, a = first.samples(points_per_interval)
    _, b = second.samples(points_per_interval)
    return float(np.max(np.abs(nk.NumericContext.to_float(a) - nk.NumericContext.to_float(b))))
