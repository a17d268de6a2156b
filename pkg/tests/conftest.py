import numpy as np
import pytest

from gridsal.diffcore import set_finite_checks


@pytest.fixture(scope="session", autouse=True)
def _finite_checks():
    # Per-op NaN/Inf validation is off by default for speed; tests run with
    # it on so any non-finite forward value fails loudly.
    set_finite_checks(True)
    yield
    set_finite_checks(False)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
