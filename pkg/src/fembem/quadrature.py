"""Quadrature rules on intervals, triangles, tetrahedra and triangle pairs.

Conventions
-----------
* Interval rules live on [0, 1].
* Triangle rules use local coordinates (u, v) of the map
  ``x(u, v) = v0 + u (v1 - v0) + v (v2 - v0)``; weights sum to one so a
  physical integral is ``area * sum(w_q * f(x_q))``.
* Tetrahedron rules are analogous, with weights summing to one and the
  physical integral ``volume * sum(w_q * f(x_q))``.
* Singular pair rules integrate over two copies of the ordered reference
  triangle ``{0 <= x2 <= x1 <= 1}`` parametrised by
  ``x(x1, x2) = a + x1 (b - a) + x2 (c - b)`` for a vertex triple
  ``(a, b, c)``.  A physical double integral is then
  ``4 * area_x * area_y * sum(w * f(x, y))``.

The pair rules remove the kernel singularity for coincident, edge-sharing
and vertex-sharing triangles with polar-type substitutions whose Jacobians
cancel up to two inverse powers of the distance, which covers the weakly
singular and dipole kernels used here on flat panels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import QuadratureConfigError

__all__ = [
    "gauss01",
    "tri_rule",
    "tri_rule_collapsed",
    "tet_rule",
    "tri_bary",
    "tet_bary",
    "tri_monomial_integral",
    "tet_monomial_integral",
    "SingularRule",
    "singular_rule",
    "ss_bary",
]


@lru_cache(maxsize=None)
def gauss01(n: int):
    """n-point Gauss-Legendre rule on [0, 1]."""
    if n < 1:
        raise QuadratureConfigError("Gauss rule needs at least one point")
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


# Symmetric triangle rules, stored as (barycentric orbit generator, weight).
# Weights sum to one over the expanded orbits.
_TRI_RULES = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
    5: [
        ((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827),
    ],
}


def _expand_orbit(gen):
    a, b, c = gen
    if abs(a - b) < 1e-14 and abs(b - c) < 1e-14:
        return [(a, b, c)]
    # two equal entries: three cyclic placements of the distinct one
    return [(a, b, c), (b, a, c), (c, b, a)]


@lru_cache(maxsize=None)
def tri_rule(degree: int):
    """Symmetric rule on the triangle, exact to ``degree``.

    Returns local coordinates ``uv`` of shape (nq, 2) and weights summing
    to one.  Falls back to a collapsed tensor rule above degree 5.
    """
    if degree < 1:
        raise QuadratureConfigError("triangle rule degree must be >= 1")
    key = min(d for d in (1, 2, 4, 5) if d >= degree) if degree <= 5 else None
    if key is None:
        return tri_rule_collapsed((degree + 2 + 1) // 2)
    pts = []
    wts = []
    for gen, w in _TRI_RULES[key]:
        for lam in _expand_orbit(gen):
            pts.append((lam[1], lam[2]))
            wts.append(w)
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def tri_rule_collapsed(n: int):
    """Tensor Gauss rule collapsed onto the triangle (n^2 points)."""
    x, w = gauss01(n)
    u = np.repeat(x, n)
    s = np.tile(x, n)
    v = s * (1.0 - u)
    wt = np.repeat(w, n) * np.tile(w, n) * (1.0 - u)
    return np.column_stack([u, v]), 2.0 * wt


@lru_cache(maxsize=None)
def tet_rule(degree: int):
    """Collapsed tensor rule on the tetrahedron, exact to ``degree``.

    Returns local coordinates of shape (nq, 3) and weights summing to one.
    """
    if degree < 1:
        raise QuadratureConfigError("tet rule degree must be >= 1")
    n = (degree + 3 + 1) // 2  # 2n-1 >= degree+2 covers the map Jacobian
    x, w = gauss01(n)
    u, s, t = np.meshgrid(x, x, x, indexing="ij")
    wu, ws, wt = np.meshgrid(w, w, w, indexing="ij")
    u = u.ravel()
    s = s.ravel()
    t = t.ravel()
    v = s * (1.0 - u)
    z = t * (1.0 - u) * (1.0 - s)
    jac = (1.0 - u) ** 2 * (1.0 - s)
    wq = (wu * ws * wt).ravel() * jac
    return np.column_stack([u, v, z]), 6.0 * wq


def tri_bary(uv: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (nq, 3) for local triangle coordinates."""
    u, v = uv[:, 0], uv[:, 1]
    return np.column_stack([1.0 - u - v, u, v])


def tet_bary(uvw: np.ndarray) -> np.ndarray:
    u, v, z = uvw[:, 0], uvw[:, 1], uvw[:, 2]
    return np.column_stack([1.0 - u - v - z, u, v, z])


def tri_monomial_integral(a: int, b: int) -> float:
    """Exact integral of u^a v^b over the unit reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def tet_monomial_integral(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the unit reference tetrahedron."""
    num = math.factorial(a) * math.factorial(b) * math.factorial(c)
    return num / math.factorial(a + b + c + 3)


@dataclass(frozen=True)
class SingularRule:
    """Quadrature for a pair of reference triangles with shared geometry.

    ``x`` and ``y`` hold ordered-triangle coordinates (m, 2); ``w`` the
    weights including all substitution Jacobians.
    """

    case: str
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray


def _tensor4(n):
    x, w = gauss01(n)
    g = np.meshgrid(x, x, x, x, indexing="ij")
    gw = np.meshgrid(w, w, w, w, indexing="ij")
    pts = [a.ravel() for a in g]
    wt = gw[0].ravel() * gw[1].ravel() * gw[2].ravel() * gw[3].ravel()
    return pts, wt


def _coincident_rule(n):
    (xi, e1, e2, e3), w0 = _tensor4(n)
    jac = xi * (1.0 - xi) ** 2 * e2
    r = 1.0 - xi
    # three cones of the relative-coordinate hexagon; the mirrored cones
    # are obtained by swapping x and y afterwards
    maps = [
        ((xi + r * e2, xi * e1 + r * e2 * e3), (r * e2, r * e2 * e3)),
        ((xi + r * e2, xi + r * e2 * e3), (xi * (1 - e1) + r * e2, r * e2 * e3)),
        ((xi * e1 + r * e2, xi * e1 + r * e2 * e3), (xi + r * e2, r * e2 * e3)),
    ]
    xs, ys, ws = [], [], []
    for (x1, x2), (y1, y2) in maps:
        for swap in (False, True):
            if swap:
                xs.append(np.column_stack([y1, y2]))
                ys.append(np.column_stack([x1, x2]))
            else:
                xs.append(np.column_stack([x1, x2]))
                ys.append(np.column_stack([y1, y2]))
            ws.append(w0 * jac)
    return np.vstack(xs), np.vstack(ys), np.concatenate(ws)


def _edge_rule(n):
    # shared edge is x2 = 0 traversed identically by both parametrisations
    (xi, e1, e2, e3), w0 = _tensor4(n)
    maps = [
        ((xi, xi * e1 * e2), (xi * (1 - e1), xi * (1 - e1) * e1 * e3),
         xi ** 3 * e1 ** 2 * (1.0 - e1)),
        ((xi, xi * e1), (xi * (1 - e1 * e2), xi * (1 - e1 * e2) * e1 * e3),
         xi ** 3 * e1 ** 2 * (1.0 - e1 * e2)),
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * (1 - e1 * e2) * e1),
         xi ** 3 * e1 ** 2 * (1.0 - e1 * e2)),
    ]
    xs, ys, ws = [], [], []
    for (x1, x2), (y1, y2), jac in maps:
        for swap in (False, True):
            if swap:
                xs.append(np.column_stack([y1, y2]))
                ys.append(np.column_stack([x1, x2]))
            else:
                xs.append(np.column_stack([x1, x2]))
                ys.append(np.column_stack([y1, y2]))
            ws.append(w0 * jac)
    return np.vstack(xs), np.vstack(ys), np.concatenate(ws)


def _vertex_rule(n):
    # shared vertex sits at the origin of both parametrisations
    (xi, e1, e2, e3), w0 = _tensor4(n)
    jac = xi ** 3 * e2
    x = np.column_stack([xi, xi * e1])
    y = np.column_stack([xi * e2, xi * e2 * e3])
    xs = np.vstack([x, y])
    ys = np.vstack([y, x])
    ws = np.concatenate([w0 * jac, w0 * jac])
    return xs, ys, ws


@lru_cache(maxsize=None)
def singular_rule(case: str, n: int) -> SingularRule:
    """Pair rule for ``case`` in {"coincident", "edge", "vertex"}.

    ``n`` is the number of Gauss points per parameter direction; fewer
    than two points cannot integrate the substitution Jacobians.
    """
    if n < 2:
        raise QuadratureConfigError("singular pair rule needs >= 2 points per direction")
    if case == "coincident":
        x, y, w = _coincident_rule(n)
    elif case == "edge":
        x, y, w = _edge_rule(n)
    elif case == "vertex":
        x, y, w = _vertex_rule(n)
    else:
        raise QuadratureConfigError(f"unknown singular case {case!r}")
    return SingularRule(case, x, y, w)


def ss_bary(pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates w.r.t. the ordered-triangle vertex triple."""
    x1, x2 = pts[:, 0], pts[:, 1]
    return np.column_stack([1.0 - x1, x1 - x2, x2])
