"""Symmetric quadrature rules on triangles (barycentric points, weights sum to 1)."""
from __future__ import annotations

import numpy as np


def _orbit3(a, w):
    b = (1.0 - a) / 2.0
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


# Dunavant rules
_RULES = {
    1: _rule(([(1 / 3, 1 / 3, 1 / 3)], [1.0])),
    2: _rule(_orbit3(2 / 3, 1 / 3)),
    4: _rule(
        _orbit3(0.108103018168070, 0.223381589678011),
        _orbit3(0.816847572980459, 0.109951743655322),
    ),
    5: _rule(
        ([(1 / 3, 1 / 3, 1 / 3)], [0.225]),
        _orbit3(0.059715871789770, 0.132394152788506),
        _orbit3(0.797426985353087, 0.125939180544827),
    ),
    6: _rule(
        _orbit3(0.501426509658179, 0.116786275726379),
        _orbit3(0.873821971016996, 0.050844906370207),
        _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
    ),
}

DEGREES = tuple(sorted(_RULES))


def triangle_rule(degree: int):
    """Return (barycentric points (q, 3), weights (q,)) exact for the given degree.

    Requests for a degree without a stored rule get the next higher one.
    """
    for d in DEGREES:
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")
