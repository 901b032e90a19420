"""Planar-wavefront triangle updates and the one-ring mesh solver."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eikonal.engine import solve_mesh
from eikonal.errors import DegeneratePatchError, DomainError, NotReady
from eikonal.mesh import make_sphere, second_ring_patch, sphere_gt_field
from eikonal.mesh_solver import KimmelSethianSolver, solve_triangle, solve_vertex


def residual(p1, p2, p3, u2, u3, t):
    """Quadratic the accepted root must satisfy: |G^-1 (u - t 1)| = 1."""
    e = np.array([np.asarray(p2, float) - p1, np.asarray(p3, float) - p1])
    G = e @ e.T
    d = np.array([u2 - t, u3 - t])
    q = np.linalg.solve(G, d)
    return float(d @ q) - 1.0


class TestSolveTriangle:
    def test_affine_field_entering_opposite_edge_is_exact(self):
        # A unit-slope planar front whose gradient lies in the cone spanned
        # by -e2, -e3 sweeps the triangle through the far edge and reaches
        # the update vertex last; the solver must reproduce it exactly.
        rng = np.random.default_rng(2)
        hits = 0
        for _ in range(50):
            pts = np.zeros((3, 3))
            pts[:, :2] = rng.uniform(-1, 1, (3, 2))
            e2, e3 = pts[1] - pts[0], pts[2] - pts[0]
            alpha, beta = rng.uniform(0.05, 1.0, 2)
            n = -(alpha * e2 + beta * e3)
            norm = np.linalg.norm(n)
            if norm < 1e-6:
                continue
            n /= norm
            c = 5.0  # keep all values positive
            u = pts @ n + c
            if u[0] < max(u[1], u[2]):  # obtuse edge angle: p1 not last
                continue
            try:
                t = solve_triangle(pts[0], pts[1], pts[2], u[1], u[2])
            except DegeneratePatchError:
                continue
            assert t == pytest.approx(u[0], rel=1e-9)
            hits += 1
        assert hits > 25

    def test_equilateral_symmetric_update(self):
        # Unit equilateral triangle, both values 0: the planar root is the
        # triangle height h = sqrt(3)/2... but causality requires t >= 0 and
        # direction into the triangle; hand computation gives sqrt(3)/2.
        p1 = [0.0, math.sqrt(3) / 2, 0.0]
        p2 = [-0.5, 0.0, 0.0]
        p3 = [0.5, 0.0, 0.0]
        t = solve_triangle(p1, p2, p3, 0.0, 0.0)
        assert t == pytest.approx(math.sqrt(3) / 2, rel=1e-12)
        assert residual(p1, p2, p3, 0.0, 0.0, t) == pytest.approx(0.0, abs=1e-12)

    def test_right_triangle_hand_value(self):
        # Legs 1 along x and y, u2 = u3 = 0: front is the diagonal line,
        # distance to origin-corner... solving gives t with residual 0.
        t = solve_triangle([0, 0, 0], [1, 0, 0], [0, 1, 0], 0.0, 0.0)
        assert t == pytest.approx(math.sqrt(0.5), rel=1e-12)

    def test_acute_update_dominates_known_values(self):
        t = solve_triangle([0, 1, 0], [-0.4, 0, 0], [0.4, 0, 0], 0.1, 0.12)
        assert t >= 0.12

    def test_edge_fallback_when_root_not_causal(self):
        # Very unequal values force the planar root below max(u2, u3):
        # the update falls back to edge propagation.
        p1 = [0.0, 1.0, 0.0]
        p2 = [-0.5, 0.0, 0.0]
        p3 = [0.5, 0.0, 0.0]
        u2, u3 = 0.0, 5.0
        t = solve_triangle(p1, p2, p3, u2, u3)
        l2 = math.hypot(0.5, 1.0)
        l3 = math.hypot(0.5, 1.0)
        assert t == pytest.approx(min(u2 + l2, u3 + l3), rel=1e-12)

    def test_obtuse_direction_veto_falls_back(self):
        # In a very obtuse triangle the planar root's direction leaves the
        # triangle through a side; the update must not use it.
        p1 = [3.0, 0.2, 0.0]
        p2 = [0.0, 0.0, 0.0]
        p3 = [0.3, 0.0, 0.0]
        u2, u3 = 0.0, 0.3
        t = solve_triangle(p1, p2, p3, u2, u3)
        l2 = np.linalg.norm(np.array(p2) - p1)
        l3 = np.linalg.norm(np.array(p3) - p1)
        assert t == pytest.approx(min(u2 + l2, u3 + l3), rel=1e-12)

    def test_degenerate_triangle_rejected(self):
        with pytest.raises(DegeneratePatchError):
            solve_triangle([0, 0, 0], [1, 0, 0], [2, 0, 0], 0.1, 0.2)

    def test_bad_values_rejected(self):
        with pytest.raises(DomainError):
            solve_triangle([0, 1, 0], [-1, 0, 0], [1, 0, 0], -0.1, 0.0)
        with pytest.raises(DomainError):
            solve_triangle([0, 1, 0], [-1, 0, 0], [1, 0, 0], math.inf, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_result_bounded_by_edge_fallback_and_causal(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1, 1, (3, 3))
        u2, u3 = rng.uniform(0, 2, 2)
        try:
            t = solve_triangle(pts[0], pts[1], pts[2], u2, u3)
        except DegeneratePatchError:
            return
        l2 = np.linalg.norm(pts[1] - pts[0])
        l3 = np.linalg.norm(pts[2] - pts[0])
        fallback = min(u2 + l2, u3 + l3)
        assert t <= fallback + 1e-12
        assert t >= min(u2, u3) - 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_rigid_motion_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1, 1, (3, 3))
        u2, u3 = rng.uniform(0, 2, 2)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        shift = rng.uniform(-5, 5, 3)
        try:
            t0 = solve_triangle(pts[0], pts[1], pts[2], u2, u3)
        except DegeneratePatchError:
            return
        moved = pts @ R.T + shift
        t1 = solve_triangle(moved[0], moved[1], moved[2], u2, u3)
        assert t1 == pytest.approx(t0, rel=1e-8, abs=1e-10)


class TestKimmelSethianSolver:
    def test_min_over_fan_triangles(self):
        mesh = make_sphere(1)
        gt = sphere_gt_field(mesh, 0)
        v = 17
        visited = gt < gt[v]
        patch = second_ring_patch(mesh, v, gt, visited)
        est = KimmelSethianSolver().estimate(patch)
        # Independent recomputation straight from the mesh.
        best = math.inf
        for a, b in patch.fan:
            va, vb = patch.visited[a], patch.visited[b]
            if va and vb:
                t = solve_triangle([0, 0, 0], patch.rel[a], patch.rel[b],
                                   patch.values[a], patch.values[b])
            elif va:
                t = patch.values[a] + np.linalg.norm(patch.rel[a])
            elif vb:
                t = patch.values[b] + np.linalg.norm(patch.rel[b])
            else:
                continue
            best = min(best, t)
        assert est == pytest.approx(best, rel=1e-15)
        assert est == pytest.approx(solve_vertex(mesh, v, gt, visited),
                                    rel=1e-15)

    def test_not_ready_without_one_ring_visited(self):
        mesh = make_sphere(1)
        gt = sphere_gt_field(mesh, 0)
        v = 17
        visited = np.zeros(mesh.num_vertices, dtype=bool)
        # Mark only second-ring members visited: fan needs the one-ring.
        patch = second_ring_patch(mesh, v, gt, visited)
        one_ring = {int(patch.members[a]) for a, b in patch.fan} \
            | {int(patch.members[b]) for a, b in patch.fan}
        for m in patch.members:
            if int(m) not in one_ring:
                visited[m] = True
        patch = second_ring_patch(mesh, v, gt, visited)
        with pytest.raises(NotReady):
            KimmelSethianSolver().estimate(patch)

    def test_marched_sphere_error_and_monotonicity(self):
        mesh = make_sphere(3)
        gt = sphere_gt_field(mesh, 0)
        u = solve_mesh(mesh, [0], KimmelSethianSolver())
        assert np.all(np.isfinite(u))
        mask = gt > 0.3
        rel = np.abs(u[mask] - gt[mask]) / gt[mask]
        assert rel.mean() < 0.02
        assert np.all(u[1:] >= 0.0)

    def test_solver_metadata(self):
        s = KimmelSethianSolver()
        assert s.name == "kimmel-sethian"
        assert s.monotone is True
