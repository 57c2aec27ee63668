import math

import numpy as np
import pytest

from efiepc.quadrature import line_rule, triangle_rule


def _monomial(a, b):
    # integral of x^a y^b over the unit right triangle, divided by its area
    return 2.0 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 5, 8, 10, 14])
def test_triangle_rule_exact(degree):
    bary, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(bary.sum(axis=1), 1.0)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert np.dot(w, x ** a * y ** b) == pytest.approx(_monomial(a, b), rel=1e-12, abs=1e-15)


def test_triangle_rule_rejects_negative():
    with pytest.raises(ValueError):
        triangle_rule(-1)


def test_line_rule_integrates_log():
    t, w = line_rule(8, 3)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # int_0^1 log(t) + log(1 - t) dt = -2
    assert np.dot(w, np.log(t) + np.log(1 - t)) == pytest.approx(-2.0, rel=1e-5)
