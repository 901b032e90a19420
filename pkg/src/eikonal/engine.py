"""Front-marching engine: three-way tags, versioned heap, pluggable solvers.

The same loop drives grids and meshes; the topology object owns adjacency
(patch membership) and patch construction, the local solver owns estimation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EngineInvariantError, NotReady, SolverFault
from .grid import (
    SLOT_LENGTHS,
    DistanceField,
    GridDomain,
    PATCH_OFFSETS,
    SourceSet,
    rasterize_sources,
)
from .grid_solvers import GridPatchView
from .mesh import MeshPatch, TriMesh

UNVISITED, WAVEFRONT, VISITED = 0, 1, 2


@dataclass(frozen=True)
class _GridShape:
    nx: int
    ny: int
    h: float


class GridTopology:
    """Patch-membership adjacency of a grid: the 12-point 2h disk."""

    kind = "grid"

    def __init__(self, domain):
        # GridDomain in normal use; anything with nx/ny/h works, which lets
        # engine-level tests run grids below GridDomain's 5x5 floor.
        self.domain = domain
        self.nx, self.ny = int(domain.nx), int(domain.ny)
        self.h = float(domain.h)
        nx, ny, n = self.nx, self.ny, self.nx * self.ny
        ii, jj = np.divmod(np.arange(n), ny)
        table = np.full((n, 12), -1, dtype=np.int64)
        for s, (di, dj) in enumerate(PATCH_OFFSETS):
            ni, nj = ii + di, jj + dj
            ok = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
            table[ok, s] = ni[ok] * ny + nj[ok]
        table.setflags(write=False)
        self.slot_table = table
        self._neighbor_lists = [row[row >= 0] for row in table]

    @classmethod
    def from_shape(cls, nx: int, ny: int, h: float) -> "GridTopology":
        if nx < 1 or ny < 1 or not h > 0:
            raise DomainError(f"bad grid shape {nx}x{ny}, h={h!r}")
        return cls(_GridShape(int(nx), int(ny), float(h)))

    @property
    def num_points(self) -> int:
        return len(self.slot_table)

    def neighbors(self, i) -> np.ndarray:
        return self._neighbor_lists[i]

    def patch(self, i, values, visited) -> GridPatchView:
        row = self.slot_table[i]
        ok = row >= 0
        vals = np.full(12, np.inf)
        vis = np.zeros(12, dtype=bool)
        vis[ok] = visited[row[ok]]
        vals[vis] = values[row[vis]]
        return GridPatchView(h=self.h, values=vals, visited=vis)


class MeshTopology:
    """Patch-membership adjacency of a mesh: first plus second ring."""

    kind = "mesh"

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.members, self.rel, self.fan = mesh.patch_template()

    @property
    def num_points(self) -> int:
        return self.mesh.num_vertices

    def neighbors(self, i) -> np.ndarray:
        return self.members[i]

    def patch(self, i, values, visited) -> MeshPatch:
        mem = self.members[i]
        return MeshPatch(
            center=int(i),
            members=mem,
            rel=self.rel[i],
            values=values[mem],
            visited=visited[mem],
            fan=self.fan[i],
        )


@dataclass
class FrontState:
    """Mutable solve state: tags, tentative values, versioned priority heap."""

    values: np.ndarray
    tags: np.ndarray
    visited_mask: np.ndarray
    versions: np.ndarray
    heap: list = field(default_factory=list)
    last_finalized: float = -math.inf
    stats: dict = field(default_factory=lambda: {
        "finalized": 0, "pops": 0, "stale_pops": 0, "pushes": 0,
        "solver_calls": 0, "not_ready": 0,
    })


def initialize(topology, seeds: dict) -> FrontState:
    """Seed points enter Visited with their given values; everything else +inf."""
    n = topology.num_points
    if not seeds:
        raise DomainError("at least one source point is required")
    values = np.full(n, np.inf)
    tags = np.full(n, UNVISITED, dtype=np.uint8)
    visited_mask = np.zeros(n, dtype=bool)
    for i, v in seeds.items():
        if not 0 <= i < n:
            raise DomainError(f"seed index {i} out of range")
        if not (math.isfinite(v) and v >= 0):
            raise DomainError(f"seed value {v!r} must be finite and >= 0")
        values[i] = v
        tags[i] = VISITED
        visited_mask[i] = True
    return FrontState(values=values, tags=tags, visited_mask=visited_mask,
                      versions=np.zeros(n, dtype=np.int64))


def _patch_min_visited(patch) -> float:
    vals = patch.values[patch.visited]
    return float(vals.min()) if vals.size else math.inf


def _accept(state, q, est, vmin):
    if math.isnan(est) or est < 0:
        raise SolverFault(point=int(q), value=est)
    est = max(est, vmin)
    state.values[q] = est
    state.tags[q] = WAVEFRONT
    state.versions[q] += 1
    heapq.heappush(state.heap, (est, int(q), int(state.versions[q])))
    state.stats["pushes"] += 1


def update_neighbors(state: FrontState, topology, solver, point: int):
    """Re-estimate every non-Visited patch neighbor of a just-finalized point.

    Fresh estimates replace stored tentative values (newest-wins policy) and
    are clamped from below by the smallest Visited value in the neighbor's
    patch, so a slightly-low learned estimate cannot disorder the heap.
    """
    stats = state.stats
    cands = [int(q) for q in topology.neighbors(point)
             if state.tags[q] != VISITED]
    if not cands:
        return
    batch = getattr(solver, "estimate_batch", None)
    if batch is not None:
        ests, ready, vmins = batch(topology, cands, state.values,
                                   state.visited_mask)
        for q, est, ok, vmin in zip(cands, ests, ready, vmins):
            if not ok:
                stats["not_ready"] += 1
                continue
            stats["solver_calls"] += 1
            _accept(state, q, float(est), float(vmin))
        return
    for q in cands:
        patch = topology.patch(q, state.values, state.visited_mask)
        try:
            est = solver.estimate(patch)
        except NotReady:
            stats["not_ready"] += 1
            continue
        stats["solver_calls"] += 1
        _accept(state, q, float(est), _patch_min_visited(patch))


@dataclass
class MarchResult:
    values: np.ndarray
    stats: dict
    order: list


def march(topology, solver, seeds: dict, *, check_monotone=None,
          record_order: bool = False) -> MarchResult:
    """Run the front propagation to completion over one topology.

    Points unreachable from the seeds keep value +inf.  When the solver is
    monotone-consistent, finalization values must be non-decreasing and any
    violation raises an engine-invariant error.
    """
    if check_monotone is None:
        check_monotone = bool(getattr(solver, "monotone", False))
    state = initialize(topology, seeds)
    order = [] if record_order else None
    for s in sorted(seeds):
        update_neighbors(state, topology, solver, s)
    stats = state.stats
    while state.heap:
        val, idx, ver = heapq.heappop(state.heap)
        stats["pops"] += 1
        if ver != state.versions[idx] or state.tags[idx] == VISITED:
            stats["stale_pops"] += 1
            continue
        if check_monotone:
            slack = 1e-12 * max(1.0, abs(state.last_finalized))
            if val < state.last_finalized - slack:
                raise EngineInvariantError(
                    f"finalization order regressed at point {idx}: "
                    f"{val!r} after {state.last_finalized!r}")
        state.last_finalized = val
        state.tags[idx] = VISITED
        state.visited_mask[idx] = True
        stats["finalized"] += 1
        if order is not None:
            order.append((idx, val))
        update_neighbors(state, topology, solver, idx)
    return MarchResult(values=state.values, stats=stats, order=order)


def solve_grid(domain: GridDomain, sources: SourceSet, solver, *,
               band: float = 0.0, return_result: bool = False):
    """March over a grid from a geometric source set.

    band = 0 seeds only lattice points lying exactly on the sources (or the
    nearest point per the rasterizer's fallback); band = k seeds every point
    within k*h with its exact distance, which convergence studies need since
    sources rarely hit the lattice.
    """
    seeds = rasterize_sources(domain, sources, band)
    result = march(GridTopology(domain), solver, seeds)
    out = DistanceField(domain, result.values.reshape(domain.nx, domain.ny))
    return (out, result) if return_result else out


def solve_mesh(mesh: TriMesh, source_vertices, solver, *,
               return_result: bool = False):
    """March over a mesh from source vertices (distance 0 each)."""
    svs = [int(v) for v in source_vertices]
    if not svs:
        raise DomainError("at least one source vertex is required")
    for v in svs:
        if not 0 <= v < mesh.num_vertices:
            raise DomainError(f"source vertex {v} out of range")
    seeds = {v: 0.0 for v in svs}
    result = march(MeshTopology(mesh), solver, seeds)
    return (result.values, result) if return_result else result.values


class DijkstraSolver:
    """Graph-metric local solver: min over visited members of value + length.

    Plugged into the engine it reproduces classic shortest paths over the
    patch-membership graph exactly.
    """

    name = "dijkstra"
    monotone = True

    def estimate(self, patch) -> float:
        vis = patch.visited
        if not vis.any():
            raise NotReady("no visited member")
        if isinstance(patch, GridPatchView):
            lengths = SLOT_LENGTHS * patch.h
        else:
            lengths = np.linalg.norm(patch.rel, axis=1)
        return float(np.min(patch.values[vis] + lengths[vis]))
