"""Adaptive Simpson behavior on known integrals."""

import math

import pytest

from srptq.quadrature import QuadratureLimitError, adaptive_simpson


def test_cubic_is_exact():
    # Simpson integrates cubics exactly
    val = adaptive_simpson(lambda x: x**3 - 2 * x + 1, 0.0, 3.0)
    assert val == pytest.approx(3**4 / 4 - 9 + 3, abs=1e-12)

def test_exponential_tail():
    val = adaptive_simpson(math.exp, 0.0, 1.0, tol=1e-12)
    assert val == pytest.approx(math.e - 1.0, abs=1e-11)

def test_empty_interval():
    assert adaptive_simpson(math.sin, 2.0, 2.0) == 0.0
    assert adaptive_simpson(math.sin, 3.0, 2.0) == 0.0

def test_oscillatory_to_tolerance():
    val = adaptive_simpson(lambda x: math.sin(10 * x), 0.0, math.pi, tol=1e-11)
    exact = (1.0 - math.cos(10 * math.pi)) / 10.0
    assert val == pytest.approx(exact, abs=1e-9)

def test_interval_budget_enforced():
    with pytest.raises(QuadratureLimitError):
        adaptive_simpson(lambda x: math.sin(1000 * x) * x**0.1, 0.0, 50.0,
                         tol=1e-14, max_intervals=50)
