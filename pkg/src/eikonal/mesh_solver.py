"""Planar-wavefront local solver on triangulated surfaces.

Per-triangle update: fit an affine front with unit slope to the two known
vertex values and read off the third; accept only causal, through-the-
interior solutions, otherwise fall back to edge propagation.  A vertex
estimate is the minimum over its incident triangles.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegeneratePatchError, DomainError, NotReady
from .mesh import MeshPatch, TriMesh, second_ring_patch


def solve_triangle(p1, p2, p3, u2, u3) -> float:
    """Planar-front estimate at p1 from values u2 at p2 and u3 at p3.

    Works in the Gram matrix of the edge vectors, so the result depends on
    the triangle only through lengths and angles (rigid-motion invariant).
    """
    p1 = np.asarray(p1, dtype=np.float64)
    e2 = np.asarray(p2, dtype=np.float64) - p1
    e3 = np.asarray(p3, dtype=np.float64) - p1
    u2, u3 = float(u2), float(u3)
    for u in (u2, u3):
        if not (math.isfinite(u) and u >= 0):
            raise DomainError(f"vertex value {u!r} must be finite and >= 0")

    g22 = float(e2 @ e2)
    g33 = float(e3 @ e3)
    g23 = float(e2 @ e3)
    det = g22 * g33 - g23 * g23  # = (2 * area)^2
    l2, l3 = math.sqrt(g22), math.sqrt(g33)
    longest_sq = max(g22, g33, float((e3 - e2) @ (e3 - e2)))
    if 0.5 * math.sqrt(max(det, 0.0)) <= 1e-12 * longest_sq:
        raise DegeneratePatchError("triangle area below threshold")

    fallback = min(u2 + l2, u3 + l3)

    # Q = G^-1; quadratic (1'Q1) t^2 - 2 (1'Qu) t + (u'Qu - 1) = 0.
    q22, q33, q23 = g33 / det, g22 / det, -g23 / det
    a = q22 + 2.0 * q23 + q33
    b = (q22 + q23) * u2 + (q23 + q33) * u3
    c = q22 * u2 * u2 + 2.0 * q23 * u2 * u3 + q33 * u3 * u3 - 1.0
    disc = b * b - a * c
    if disc < 0.0:
        return fallback
    t = (b + math.sqrt(disc)) / a

    # Causal and through the interior: t has to dominate both known values
    # and the front direction Q(u - t 1) must point into the triangle.
    if t < max(u2, u3):
        return fallback
    d2 = q22 * (u2 - t) + q23 * (u3 - t)
    d3 = q23 * (u2 - t) + q33 * (u3 - t)
    if d2 > 0.0 or d3 > 0.0:
        return fallback
    return t


class KimmelSethianSolver:
    name = "kimmel-sethian"
    monotone = True

    def estimate(self, patch: MeshPatch) -> float:
        """Minimum over incident one-ring triangles of the applicable update."""
        vals, vis, rel = patch.values, patch.visited, patch.rel
        best = math.inf
        origin = np.zeros(3)
        for a, b in patch.fan:
            va, vb = vis[a], vis[b]
            if va and vb:
                t = solve_triangle(origin, rel[a], rel[b], vals[a], vals[b])
            elif va:
                t = vals[a] + float(np.linalg.norm(rel[a]))
            elif vb:
                t = vals[b] + float(np.linalg.norm(rel[b]))
            else:
                continue
            if t < best:
                best = t
        if math.isinf(best):
            raise NotReady("no visited one-ring member")
        return float(best)


def solve_vertex(mesh: TriMesh, v: int, distances, visited) -> float:
    """Estimate for vertex v from its one-ring state (min over triangles)."""
    patch = second_ring_patch(mesh, v, distances, visited)
    return KimmelSethianSolver().estimate(patch)
