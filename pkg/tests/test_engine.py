"""Marching engine: adjacency, heap discipline, and solver dispatch."""
import heapq
import math

import numpy as np
import pytest

from eikonal.engine import (
    DijkstraSolver,
    GridTopology,
    MeshTopology,
    march,
    solve_grid,
    solve_mesh,
)
from eikonal.errors import DomainError, EngineInvariantError, SolverFault
from eikonal.grid import (
    PATCH_OFFSETS,
    SLOT_LENGTHS,
    GridDomain,
    PointSource,
    SourceSet,
    euclidean_gt,
)
from eikonal.grid_solvers import FirstOrderSolver
from eikonal.mesh import TriMesh, make_sphere
from eikonal.neural import NeuralGridSolver
from eikonal.net import init_weights, grid_spec


def reference_dijkstra(adjacency_fn, lengths_fn, num_points, seeds):
    """Textbook lazy-deletion Dijkstra, independent of the engine."""
    dist = [math.inf] * num_points
    done = [False] * num_points
    heap = []
    for i, v in seeds.items():
        dist[i] = v
        done[i] = True
    for i in seeds:
        for j, w in zip(adjacency_fn(i), lengths_fn(i)):
            j = int(j)
            if not done[j] and dist[i] + w < dist[j]:
                dist[j] = dist[i] + w
                heapq.heappush(heap, (dist[j], j))
    while heap:
        d, i = heapq.heappop(heap)
        if done[i] or d > dist[i]:
            continue
        done[i] = True
        for j, w in zip(adjacency_fn(i), lengths_fn(i)):
            j = int(j)
            if not done[j] and dist[i] + w < dist[j]:
                dist[j] = dist[i] + w
                heapq.heappush(heap, (dist[j], j))
    return np.array(dist)


def grid_lengths_fn(topo):
    def lengths(i):
        row = topo.slot_table[i]
        return (SLOT_LENGTHS * topo.h)[row >= 0]
    return lengths


def mesh_lengths_fn(topo):
    def lengths(i):
        return np.linalg.norm(topo.rel[i], axis=1)
    return lengths


class TestThreeByThree:
    def test_spec_hand_example(self):
        topo = GridTopology.from_shape(3, 3, 1.0)
        result = march(topo, FirstOrderSolver(), {4: 0.0})
        u = result.values.reshape(3, 3)
        assert u[1, 1] == 0.0
        for i, j in ((0, 1), (1, 0), (1, 2), (2, 1)):
            assert u[i, j] == pytest.approx(1.0, abs=1e-15)
        corner = (1.0 + 1.0 + math.sqrt(2.0)) / 2.0
        for i, j in ((0, 0), (0, 2), (2, 0), (2, 2)):
            assert u[i, j] == pytest.approx(corner, rel=1e-15)

    def test_all_points_seeded_means_no_solver_calls(self):
        topo = GridTopology.from_shape(3, 3, 1.0)
        result = march(topo, FirstOrderSolver(),
                       {i: 0.0 for i in range(9)})
        assert np.all(result.values == 0.0)
        assert result.stats["solver_calls"] == 0
        assert result.stats["pops"] == 0


class TestDijkstraEquivalence:
    def test_grid_instances_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            nx, ny = rng.integers(5, 20, 2)
            h = float(rng.uniform(0.1, 2.0))
            topo = GridTopology.from_shape(int(nx), int(ny), h)
            seeds = {int(i): float(rng.uniform(0, 0.2))
                     for i in rng.choice(nx * ny, 3, replace=False)}
            got = march(topo, DijkstraSolver(), seeds).values
            want = reference_dijkstra(topo.neighbors, grid_lengths_fn(topo),
                                      topo.num_points, seeds)
            assert np.max(np.abs(got - want)) <= 1e-12

    def test_integer_weight_line_graph_bit_exact(self):
        # A 1xN grid with h=1 has only straight slots, lengths 1 and 2.
        topo = GridTopology.from_shape(1, 40, 1.0)
        seeds = {0: 0.0, 17: 3.0}
        got = march(topo, DijkstraSolver(), seeds).values
        want = reference_dijkstra(topo.neighbors, grid_lengths_fn(topo),
                                  topo.num_points, seeds)
        assert np.array_equal(got, want)

    def test_mesh_instances_match_oracle(self):
        mesh = make_sphere(2)
        topo = MeshTopology(mesh)
        rng = np.random.default_rng(11)
        for _ in range(5):
            seeds = {int(v): 0.0 for v in rng.choice(mesh.num_vertices, 2,
                                                     replace=False)}
            got = march(topo, DijkstraSolver(), seeds).values
            want = reference_dijkstra(topo.neighbors, mesh_lengths_fn(topo),
                                      topo.num_points, seeds)
            assert np.max(np.abs(got - want)) <= 1e-12

    def test_deterministic_across_runs(self):
        topo = GridTopology.from_shape(15, 15, 0.5)
        seeds = {3: 0.0, 120: 0.1}
        a = march(topo, DijkstraSolver(), seeds).values
        b = march(topo, DijkstraSolver(), seeds).values
        assert np.array_equal(a, b)


class TestFinalizationOrder:
    def test_monotone_solver_finalizes_in_nondecreasing_order(self):
        dom = GridDomain(21, 21, 0.05)
        src = SourceSet((PointSource(0.3, 0.4), PointSource(0.8, 0.7)))
        topo = GridTopology(dom)
        from eikonal.grid import rasterize_sources
        seeds = rasterize_sources(dom, src, 3.0)
        result = march(topo, FirstOrderSolver(), seeds, record_order=True)
        vals = [v for _, v in result.order]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_equal_values_pop_lowest_index_first(self):
        topo = GridTopology.from_shape(5, 5, 1.0)
        result = march(topo, FirstOrderSolver(), {12: 0.0},
                       record_order=True)
        first_four = result.order[:4]
        assert [idx for idx, _ in first_four] == [7, 11, 13, 17]
        assert all(v == 1.0 for _, v in first_four)

    def test_final_value_matches_estimate_on_prepop_patch(self):
        # Newest-wins: the locked value equals a fresh solver call on the
        # patch restricted to points finalized strictly before the pop.
        dom = GridDomain(11, 11, 0.1)
        src = SourceSet((PointSource(0.52, 0.51),))
        topo = GridTopology(dom)
        from eikonal.grid import rasterize_sources
        seeds = rasterize_sources(dom, src, 2.0)
        solver = FirstOrderSolver()
        result = march(topo, solver, seeds, record_order=True)
        values = result.values
        visited = np.zeros(topo.num_points, dtype=bool)
        for s in seeds:
            visited[s] = True
        for idx, val in result.order:
            patch = topo.patch(idx, values, visited)
            assert solver.estimate(patch) == pytest.approx(val, rel=1e-12)
            visited[idx] = True


class TestEngineGuards:
    def test_nan_estimate_raises_solver_fault(self):
        class NanSolver:
            def estimate(self, patch):
                return float("nan")

        topo = GridTopology.from_shape(5, 5, 1.0)
        with pytest.raises(SolverFault):
            march(topo, NanSolver(), {12: 0.0})

    def test_negative_estimate_raises_solver_fault(self):
        class NegativeSolver:
            def estimate(self, patch):
                return -0.5

        topo = GridTopology.from_shape(5, 5, 1.0)
        with pytest.raises(SolverFault):
            march(topo, NegativeSolver(), {12: 0.0})

    def test_monotone_regression_raises_invariant_error(self):
        class Regressing:
            monotone = True

            def __init__(self):
                self.calls = 0

            def estimate(self, patch):
                self.calls += 1
                return 10.0 / self.calls

        topo = GridTopology.from_shape(5, 5, 1.0)
        with pytest.raises(EngineInvariantError):
            march(topo, Regressing(), {12: 0.0})

    def test_seed_validation(self):
        topo = GridTopology.from_shape(5, 5, 1.0)
        solver = FirstOrderSolver()
        with pytest.raises(DomainError):
            march(topo, solver, {})
        with pytest.raises(DomainError):
            march(topo, solver, {99: 0.0})
        with pytest.raises(DomainError):
            march(topo, solver, {3: -1.0})
        with pytest.raises(DomainError):
            march(topo, solver, {3: float("nan")})

    def test_solver_call_budget(self):
        topo = GridTopology.from_shape(20, 20, 1.0)
        result = march(topo, DijkstraSolver(), {0: 0.0})
        directed_pairs = sum(len(topo.neighbors(i))
                             for i in range(topo.num_points))
        assert result.stats["solver_calls"] <= directed_pairs
        assert result.stats["pops"] <= result.stats["pushes"]


class TestBatchPathEquivalence:
    def test_batched_solver_matches_scalar_path(self):
        class BatchedDijkstra(DijkstraSolver):
            def estimate_batch(self, topology, cands, values, visited_mask):
                n = len(cands)
                ests = np.full(n, np.nan)
                ready = np.zeros(n, dtype=bool)
                vmins = np.full(n, np.inf)
                for k, q in enumerate(cands):
                    patch = topology.patch(q, values, visited_mask)
                    if not patch.visited.any():
                        continue
                    ests[k] = self.estimate(patch)
                    ready[k] = True
                    vmins[k] = patch.values[patch.visited].min()
                return ests, ready, vmins

        topo = GridTopology.from_shape(13, 17, 0.3)
        seeds = {5: 0.0, 140: 0.2}
        scalar = march(topo, DijkstraSolver(), seeds)
        batched = march(topo, BatchedDijkstra(), seeds)
        assert np.array_equal(scalar.values, batched.values)
        assert scalar.stats["solver_calls"] == batched.stats["solver_calls"]

    def test_neural_batch_matches_single_estimates(self):
        weights = init_weights(grid_spec(), seed=3)
        solver = NeuralGridSolver(weights)
        topo = GridTopology.from_shape(9, 9, 0.25)
        values = np.full(topo.num_points, np.inf)
        visited = np.zeros(topo.num_points, dtype=bool)
        rng = np.random.default_rng(5)
        chosen = rng.choice(topo.num_points, 30, replace=False)
        visited[chosen] = True
        values[chosen] = rng.uniform(0.0, 1.0, 30)
        cands = [int(q) for q in range(topo.num_points) if not visited[q]]
        ests, ready, vmins = solver.estimate_batch(topo, cands, values,
                                                   visited)
        for k, q in enumerate(cands):
            patch = topo.patch(q, values, visited)
            if not patch.visited.any():
                assert not ready[k]
                continue
            assert ready[k]
            assert ests[k] == pytest.approx(solver.estimate(patch),
                                            rel=1e-12, abs=1e-12)


class TestTopologies:
    def test_grid_adjacency_is_symmetric_with_mirrored_slots(self):
        topo = GridTopology.from_shape(7, 6, 1.0)
        table = topo.slot_table
        for i in range(topo.num_points):
            for s in range(12):
                j = table[i, s]
                if j >= 0:
                    assert table[j, 11 - s] == i

    def test_offsets_negate_to_mirrored_index(self):
        for s, (di, dj) in enumerate(PATCH_OFFSETS):
            assert PATCH_OFFSETS[11 - s] == (-di, -dj)

    def test_from_shape_validates(self):
        with pytest.raises(DomainError):
            GridTopology.from_shape(0, 3, 1.0)
        with pytest.raises(DomainError):
            GridTopology.from_shape(3, 3, 0.0)

    def test_mesh_adjacency_is_symmetric(self):
        topo = MeshTopology(make_sphere(1))
        for i in range(topo.num_points):
            for j in topo.neighbors(i):
                assert i in topo.neighbors(int(j))

    def test_disconnected_mesh_component_stays_infinite(self):
        verts = np.array([
            [0, 0, 0], [1, 0, 0], [0, 1, 0],
            [10, 0, 0], [11, 0, 0], [10, 1, 0],
        ], dtype=float)
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        mesh = TriMesh(verts, faces)
        u = solve_mesh(mesh, [0], DijkstraSolver())
        assert np.all(np.isfinite(u[:3]))
        assert np.all(np.isinf(u[3:]))


class TestSolveGrid:
    def test_band_seeds_exact_disk(self):
        dom = GridDomain(21, 21, 0.05)
        src = SourceSet((PointSource(0.52, 0.48),))
        field = solve_grid(dom, src, FirstOrderSolver(), band=3.0)
        gt = euclidean_gt(src, dom.all_coords()).reshape(21, 21)
        inside = gt <= 3.0 * dom.h
        assert inside.sum() > 1
        assert np.array_equal(field.values[inside], gt[inside])

    def test_band_zero_uses_nearest_fallback(self):
        dom = GridDomain(11, 11, 0.1)
        src = SourceSet((PointSource(0.503, 0.497),))
        field = solve_grid(dom, src, FirstOrderSolver(), band=0.0)
        gt = euclidean_gt(src, dom.all_coords()).reshape(11, 11)
        assert (field.values == gt).sum() == 1
        assert np.all(np.isfinite(field.values))
