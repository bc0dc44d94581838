from math import factorial

import numpy as np
import pytest

from algstab.quadrature import DEGREES, triangle_rule


def exact_monomial(a, b):
    """Integral of x^a y^b over the reference triangle (0,0), (1,0), (0,1)."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", DEGREES)
def test_rule_is_exact_up_to_its_degree(degree):
    bary, w = triangle_rule(degree)
    assert np.isclose(w.sum(), 1.0, rtol=0, atol=1e-14)
    assert np.allclose(bary.sum(axis=1), 1.0)
    assert np.all(bary >= 0)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(w * x ** a * y ** b)
            assert approx == pytest.approx(exact_monomial(a, b), rel=1e-12, abs=1e-15)


def test_requests_round_up():
    assert len(triangle_rule(3)[1]) == len(triangle_rule(4)[1])
    with pytest.raises(ValueError):
        triangle_rule(99)
