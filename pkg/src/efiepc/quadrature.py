"""Symmetric and conical-product quadrature rules on the reference triangle.

Rules are returned in barycentric form: ``(bary, weights)`` with ``bary`` of
shape ``(n, 3)`` and weights summing to one, so that for a triangle with
vertices ``V`` (3x3) the physical points are ``bary @ V`` and the integral is
``area * sum(weights * f(points))``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["triangle_rule", "line_rule", "DEFAULT_DEGREE"]

#: degree of the default 7-point rule
DEFAULT_DEGREE = 5


def _symmetric_7():
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    w0 = 0.225
    w1 = 0.132394152788506
    w2 = 0.125939180544827
    bary = [
        (1 / 3, 1 / 3, 1 / 3),
        (a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
        (a2, b2, b2), (b2, a2, b2), (b2, b2, a2),
    ]
    w = [w0, w1, w1, w1, w2, w2, w2]
    return np.array(bary), np.array(w)


def _conical(degree):
    # collapsed-coordinate Gauss rule, exact for polynomials of `degree`
    n = max(1, (degree + 2) // 2)
    u, wu = roots_jacobi(n, 1.0, 0.0)  # weight (1 - u)
    v, wv = roots_legendre(n)
    s = (u + 1.0) / 2.0
    t = (v + 1.0) / 2.0
    wu = wu / 4.0
    wv = wv / 2.0
    # map (s, t) -> (x, y) = (s, (1 - s) t), Jacobian (1 - s)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wu, wv)
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = 2.0 * W.ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return bary, w


@lru_cache(maxsize=None)
def _rule(degree):
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6],
                         [1 / 6, 1 / 6, 2 / 3]])
        return bary, np.full(3, 1 / 3)
    if degree == DEFAULT_DEGREE:
        return _symmetric_7()
    return _conical(degree)


def triangle_rule(degree=DEFAULT_DEGREE):
    """Return ``(bary, weights)`` exact for polynomials up to `degree`.

    Degree 5 is the classic 7-point symmetric Gauss rule; other degrees
    above 2 fall back to a conical (collapsed Gauss-Jacobi x Gauss-Legendre)
    product rule.
    """
    if degree < 0:
        raise ValueError("quadrature degree must be non-negative")
    bary, w = _rule(int(degree))
    return bary.copy(), w.copy()


@lru_cache(maxsize=None)
def _line(n, grading):
    u, w = roots_legendre(n)
    u = (u + 1.0) / 2.0
    w = w / 2.0
    # half interval [0, 1/2] graded toward 0 by s = u**g / 2
    s = 0.5 * u ** grading
    ws = 0.5 * grading * u ** (grading - 1) * w
    t = np.concatenate([s, 1.0 - s[::-1]])
    wt = np.concatenate([ws, ws[::-1]])
    return t, wt


def line_rule(n=8, grading=3):
    """Gauss rule on [0, 1] graded toward both endpoints.

    Each half interval carries `n` Gauss-Legendre points mapped through
    ``s = u**grading``, which absorbs the ``s log s`` behaviour of
    potentials evaluated up to a triangle vertex.
    """
    t, w = _line(int(n), int(grading))
    return t.copy(), w.copy()
