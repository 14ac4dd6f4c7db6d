import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sp

from spdeblowup.special import reg_gamma_lower, reg_gamma_upper

X_GRID = np.logspace(-6, 2, 81)


@pytest.mark.parametrize("x", X_GRID)
def test_exponential_case(x):
    assert abs(reg_gamma_lower(1.0, x) - (1.0 - math.exp(-x))) < 1e-12


@pytest.mark.parametrize("x", X_GRID)
def test_half_integer_case(x):
    assert abs(reg_gamma_lower(0.5, x) - math.erf(math.sqrt(x))) < 1e-10


def test_zero_and_infinity():
    assert reg_gamma_lower(2.5, 0.0) == 0.0
    assert reg_gamma_upper(2.5, 0.0) == 1.0
    assert reg_gamma_lower(2.5, math.inf) == 1.0


def test_known_value():
    assert reg_gamma_lower(2.0, math.pi / 4) == pytest.approx(0.185968904063719, abs=1e-14)


@pytest.mark.parametrize("s,x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5), (math.nan, 1.0), (1.0, math.nan)])
def test_domain_errors(s, x):
    with pytest.raises(ValueError):
        reg_gamma_lower(s, x)


@settings(max_examples=200, deadline=None)
@given(
    s=st.floats(1e-3, 200.0),
    x=st.floats(0.0, 500.0),
)
def test_against_scipy_and_complement(s, x):
    P, Q = reg_gamma_lower(s, x), reg_gamma_upper(s, x)
    assert 0.0 <= P <= 1.0
    assert abs(P + Q - 1.0) < 1e-12
    assert P == pytest.approx(sp.gammainc(s, x), abs=1e-12)
    assert Q == pytest.approx(sp.gammaincc(s, x), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.05, 50.0), x=st.floats(0.0, 100.0), dx=st.floats(1e-6, 10.0))
def test_monotone_in_x(s, x, dx):
    assert reg_gamma_lower(s, x + dx) >= reg_gamma_lower(s, x) - 1e-15


def test_log_grid_complement():
    for s in np.logspace(-2, 2, 9):
        for x in X_GRID:
            assert abs(reg_gamma_lower(s, x) + reg_gamma_upper(s, x) - 1.0) < 1e-12
