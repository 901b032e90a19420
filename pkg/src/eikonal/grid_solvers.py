"""Axiomatic grid local solvers: first-order and two-point second-order upwind."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotReady
from .grid import (
    X_MINUS_2H, X_MINUS_H, X_PLUS_H, X_PLUS_2H,
    Y_MINUS_2H, Y_MINUS_H, Y_PLUS_H, Y_PLUS_2H,
)

_AXES = (
    ((X_MINUS_H, X_MINUS_2H), (X_PLUS_H, X_PLUS_2H)),
    ((Y_MINUS_H, Y_MINUS_2H), (Y_PLUS_H, Y_PLUS_2H)),
)


@dataclass(frozen=True)
class GridPatchView:
    """The 12 canonical slots around a grid point, as seen by a local solver.

    Absent (off-grid) and unvisited slots both carry visited=False; their
    value entries are +inf and must not be read by axiomatic solvers.
    """

    h: float
    values: np.ndarray = field(repr=False)
    visited: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.values.shape != (12,) or self.visited.shape != (12,):
            raise ValueError("patch needs exactly 12 slots")
        used = self.values[self.visited]
        if used.size and not (np.isfinite(used).all() and used.min() >= 0):
            raise ValueError("visited slot values must be finite and >= 0")

    @classmethod
    def of_slots(cls, h, slot_values: dict):
        """Build a patch holding values only at the given slot indices."""
        vals = np.full(12, np.inf)
        vis = np.zeros(12, dtype=bool)
        for slot, v in slot_values.items():
            vals[slot] = v
            vis[slot] = True
        return cls(h=h, values=vals, visited=vis)


def _axis_min(vals, vis, slots) -> float:
    best = math.inf
    for s in slots:
        if vis[s] and vals[s] < best:
            best = vals[s]
    return best


def solve_first_order(patch: GridPatchView) -> float:
    """Single-point upwind update from the four axis neighbors.

    With a, b the smaller visited value per axis: the two-sided quadratic
    root (a + b + sqrt(2h^2 - (a-b)^2)) / 2 when |a-b| < h, else the
    one-sided min(a, b) + h.  This is the viscosity-consistent root.
    """
    vals, vis, h = patch.values, patch.visited, patch.h
    a = _axis_min(vals, vis, (X_MINUS_H, X_PLUS_H))
    b = _axis_min(vals, vis, (Y_MINUS_H, Y_PLUS_H))
    if math.isinf(a) and math.isinf(b):
        raise NotReady("no visited axis neighbor")
    if abs(a - b) < h:
        return (a + b + math.sqrt(2.0 * h * h - (a - b) ** 2)) / 2.0
    return min(a, b) + h


def _axis_candidates(patch: GridPatchView):
    """Per axis: upwind coefficient c, effective known value K, base value u1.

    Direction choice per axis: the visited h-slot with the smaller value
    (ties prefer the direction eligible for second order, then negative).
    The two-point stencil applies when the 2h-slot is visited with
    u2 <= u1, giving c = 3/(2h), K = (4 u1 - u2) / 3.
    """
    vals, vis, h = patch.values, patch.visited, patch.h
    out = []
    for directions in _AXES:
        best = None
        for near, far in directions:
            if not vis[near]:
                continue
            u1 = float(vals[near])
            second = vis[far] and vals[far] <= u1
            if second:
                c, k = 1.5 / h, (4.0 * u1 - float(vals[far])) / 3.0
            else:
                c, k = 1.0 / h, u1
            cand = (u1, not second, c, k)
            if best is None or cand[:2] < best[:2]:
                best = cand
        if best is not None:
            u1, _, c, k = best
            out.append((c, k, u1))
    return out


def solve_second_order(patch: GridPatchView) -> float:
    """Two-point upwind update; falls back to first order when starved.

    Solves sum c_i^2 (u - K_i)^2 = 1 for the largest root.  A root below the
    base value of a used axis violates upwinding, so that axis (the one with
    the larger base) is dropped and the quadratic re-solved; a negative
    discriminant falls back to the first-order answer entirely.
    """
    axes = _axis_candidates(patch)
    if not axes:
        raise NotReady("no visited axis neighbor")
    while True:
        a_coef = sum(c * c for c, _, _ in axes)
        b_coef = sum(c * c * k for c, k, _ in axes)
        c_coef = sum(c * c * k * k for c, k, _ in axes) - 1.0
        disc = b_coef * b_coef - a_coef * c_coef
        if disc < 0.0:
            return solve_first_order(patch)
        root = (b_coef + math.sqrt(disc)) / a_coef
        if all(root >= u1 for _, _, u1 in axes):
            return root
        axes.remove(max(axes, key=lambda t: t[2]))


class FirstOrderSolver:
    name = "fmm1"
    monotone = True

    def estimate(self, patch: GridPatchView) -> float:
        return solve_first_order(patch)


class SecondOrderSolver:
    # Two-point stencils are not provably causal, so the engine's
    # finalization-order assertion stays off for this solver.
    name = "fmm2"
    monotone = False

    def estimate(self, patch: GridPatchView) -> float:
        return solve_second_order(patch)
