import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fvlab.schedule import SamplingSchedule

schedules = st.one_of(
    st.floats(0.1, 5.0).map(SamplingSchedule.constant),
    st.floats(0.1, 3.0).map(SamplingSchedule.exponential),
    st.floats(0.5, 4.0).map(SamplingSchedule.polynomial),
)


def test_values():
    assert SamplingSchedule.constant(2.0)(3.0) == 2.0
    assert math.isclose(SamplingSchedule.exponential(1.0)(1.0), math.e)
    assert SamplingSchedule.polynomial(2.0)(3.0) == 10.0
    tab = SamplingSchedule.tabulated([(0, 1), (1, 3)])
    assert tab(0.5) == 2.0


def test_validation():
    with pytest.raises(ValueError):
        SamplingSchedule.constant(0.0)
    with pytest.raises(ValueError):
        SamplingSchedule.exponential(-1.0)
    with pytest.raises(ValueError):
        SamplingSchedule.tabulated([(0, 1), (1, -1)])


def test_tabulated_minimum_uses_interior_knots():
    tab = SamplingSchedule.tabulated([(0, 3), (1, 0.5), (2, 4)])
    assert not tab.nondecreasing
    assert tab.min_on(0.2, 1.8) == 0.5


@given(schedules, st.floats(0.0, 20.0))
def test_nondecreasing_on_grid(s, t0):
    grid = t0 + np.linspace(0, 5, 50)
    assert s.nondecreasing
    assert np.all(np.diff(s.evaluate(grid)) >= 0)
    assert np.all(s.evaluate(grid) > 0)


@given(schedules, st.floats(0.0, 10.0), st.floats(0.01, 5.0))
def test_inverse_integral_against_quad(s, a, h):
    ref = integrate.quad(lambda u: 1.0 / s(u), a, a + h)[0]
    assert math.isclose(s.inverse_integral(a, a + h), ref, rel_tol=1e-8)


@given(schedules, st.floats(0.0, 30.0))
def test_log_evaluate_consistent(s, t):
    assert math.isclose(s.log_evaluate(t), math.log(s(t)), rel_tol=1e-12, abs_tol=1e-12)


def test_log_evaluate_does_not_overflow():
    assert SamplingSchedule.exponential(1.0).log_evaluate(1e6) == 1e6
