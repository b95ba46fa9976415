"""Quadrature rules on the reference triangle and on the unit interval.

Triangle rules live on the reference triangle (0,0)-(1,0)-(0,1) and their
weights sum to 1/2. Interval rules live on [0, 1] with weights summing to 1;
the same Gauss-Legendre rules serve edges and time slabs.

Degrees up to 6 use fully symmetric rules (centroid, Strang-Fix, Radon,
Dunavant); higher degrees fall back on the collapsed Gauss-Jacobi conical
product, which is exact and has positive weights but is not symmetric.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares
from scipy.special import roots_jacobi, roots_legendre

MAX_TRIANGLE_DEGREE = 12
MAX_GAUSS_POINTS = 8


@dataclass(frozen=True)
class QuadratureRule:
    """Points, weights and exactness degree of a quadrature rule.

    ``points`` has shape (nq, 2) for triangles (reference coordinates) and
    (nq,) for intervals.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    @property
    def barycentric(self):
        """Barycentric coordinates (nq, 3) of triangle points."""
        xi, eta = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - xi - eta, xi, eta])


def _orbits_to_rule(orbits):
    """Expand symmetric orbits into points/weights on the reference triangle.

    Each orbit is ``(kind, weight, a, b)``: kind 0 is the centroid, kind 1 the
    3-point orbit of barycentric (a, a, 1-2a), kind 2 the 6-point orbit of
    (a, b, 1-a-b). Weights are relative to unit area and rescaled to 1/2.
    """
    pts, wts = [], []
    for kind, w, a, b in orbits:
        if kind == 0:
            bary = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == 1:
            c = 1.0 - 2.0 * a
            bary = [(a, a, c), (a, c, a), (c, a, a)]
        else:
            c = 1.0 - a - b
            bary = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
        for lam in bary:
            pts.append((lam[1], lam[2]))
            wts.append(0.5 * w)
    return np.array(pts), np.array(wts)


def _monomial_moments(degree):
    """Exact integrals of x^m y^n over the reference triangle, m+n <= degree."""
    from math import factorial

    exps = [(m, n) for total in range(degree + 1) for m in range(total + 1) for n in [total - m]]
    vals = [factorial(m) * factorial(n) / factorial(m + n + 2) for m, n in exps]
    return exps, np.array(vals)


def _polish(orbits, degree):
    # Table values carry ~15 digits; re-solve the moment equations so the
    # rule is exact to machine precision.
    exps, exact = _monomial_moments(degree)
    layout = [(kind, 1 + (kind >= 1) + (kind == 2)) for kind, *_ in orbits]
    x0 = []
    for kind, w, a, b in orbits:
        x0 += [w] + ([a] if kind >= 1 else []) + ([b] if kind == 2 else [])

    def unpack(x):
        out, k = [], 0
        for kind, n in layout:
            w = x[k]
            a = x[k + 1] if kind >= 1 else 0.0
            b = x[k + 2] if kind == 2 else 0.0
            out.append((kind, w, a, b))
            k += n
        return out

    def residual(x):
        pts, wts = _orbits_to_rule(unpack(x))
        return np.array([wts @ (pts[:, 0] ** m * pts[:, 1] ** n) for m, n in exps]) - exact

    sol = least_squares(residual, np.array(x0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return _orbits_to_rule(unpack(sol.x))


_SYMMETRIC_TABLES = {
    1: [(0, 1.0, 0.0, 0.0)],
    2: [(1, 1 / 3, 1 / 6, 0.0)],
    4: [
        (1, 0.223381589678011, 0.445948490915965, 0.0),
        (1, 0.109951743655322, 0.091576213509771, 0.0),
    ],
    6: [
        (1, 0.116786275726379, 0.249286745170910, 0.0),
        (1, 0.050844906370207, 0.063089014491502, 0.0),
        (2, 0.082851075618374, 0.053145049844817, 0.310352451033784),
    ],
}


def _radon_degree5():
    r = np.sqrt(15.0)
    a1, a2 = (6.0 - r) / 21.0, (6.0 + r) / 21.0
    w1, w2 = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    return _orbits_to_rule([(0, 9 / 40, 0.0, 0.0), (1, w1, a1, 0.0), (1, w2, a2, 0.0)])


def _conical_product(degree):
    n = (degree + 2) // 2
    xg, wg = roots_legendre(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xg + 1.0)
    r = 0.5 * (xj + 1.0)
    # (r, s) in the unit square -> (x, y) = (r, (1 - r) s); Jacobian (1 - r)
    # is absorbed by the Jacobi(1, 0) weight on the r axis.
    x = np.repeat(r, n)
    y = (1.0 - x) * np.tile(s, n)
    w = np.outer(wj, wg).ravel() / 8.0
    return np.column_stack([x, y]), w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Quadrature rule on the reference triangle exact for polynomials of ``degree``."""
    degree = int(degree)
    if not 1 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(f"triangle rule degree must be in [1, {MAX_TRIANGLE_DEGREE}], got {degree}")
    if degree in (1, 2):
        pts, wts = _orbits_to_rule(_SYMMETRIC_TABLES[degree])
    elif degree == 3 or degree == 5:
        pts, wts = _radon_degree5()
    elif degree in (4, 6):
        pts, wts = _polish(_SYMMETRIC_TABLES[degree], degree)
    else:
        pts, wts = _conical_product(degree)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def gauss_rule(points):
    """Gauss-Legendre rule with ``points`` nodes on [0, 1] (degree 2*points - 1)."""
    points = int(points)
    if not 1 <= points <= MAX_GAUSS_POINTS:
        raise ValueError(f"Gauss rule needs 1 to {MAX_GAUSS_POINTS} points, got {points}")
    x, w = roots_legendre(points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, 2 * points - 1)


def edge_rule(points):
    return gauss_rule(points)


def time_rule(points):
    return gauss_rule(points)
