"""Triangle meshes: validation, rings, file formats, icospheres."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eikonal.errors import (
    DegeneratePatchError,
    DomainError,
    MeshValidationError,
    ParseError,
    ResourceLimit,
)
from eikonal.mesh import (
    TriMesh,
    icosahedron,
    load_mesh,
    load_mesh_path,
    loop_subdivide,
    make_sphere,
    perturb_vertices,
    read_vertex_field,
    save_off,
    second_ring_patch,
    sphere_geodesic_gt,
    sphere_gt_field,
    write_vertex_field,
)

TETRA_VERTS = np.array([
    [1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0],
])
TETRA_FACES = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


def brute_force_rings(faces, n):
    ring = [set() for _ in range(n)]
    for a, b, c in faces:
        ring[a].update((b, c))
        ring[b].update((a, c))
        ring[c].update((a, b))
    return ring


class TestValidation:
    def test_tetrahedron_accepted(self):
        mesh = TriMesh(TETRA_VERTS, TETRA_FACES)
        assert mesh.num_vertices == 4
        assert mesh.num_faces == 4
        assert mesh.boundary_edges() == []

    def test_bad_vertex_shape(self):
        with pytest.raises(MeshValidationError):
            TriMesh(np.zeros((3, 2)), TETRA_FACES)

    def test_face_index_out_of_range(self):
        with pytest.raises(MeshValidationError):
            TriMesh(TETRA_VERTS, [[0, 1, 7]])

    def test_repeated_vertex_in_face(self):
        with pytest.raises(MeshValidationError):
            TriMesh(TETRA_VERTS, [[0, 1, 1]])

    def test_non_manifold_edge_rejected(self):
        verts = np.vstack([TETRA_VERTS, [[0.0, 0.0, 2.0]]])
        faces = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]
        with pytest.raises(MeshValidationError):
            TriMesh(verts, faces)

    def test_open_boundary_allowed(self):
        mesh = TriMesh(TETRA_VERTS[:3], [[0, 1, 2]])
        assert len(mesh.boundary_edges()) == 3

    def test_adjacency_matches_brute_force(self):
        mesh = make_sphere(1)
        rings = brute_force_rings(mesh.faces, mesh.num_vertices)
        for v in range(mesh.num_vertices):
            assert set(mesh.adjacency[v]) == rings[v]


class TestPatches:
    def test_members_match_bfs2_oracle(self):
        mesh = make_sphere(2)
        rings = brute_force_rings(mesh.faces, mesh.num_vertices)
        members, rels, fans = mesh.patch_template()
        for v in range(0, mesh.num_vertices, 7):
            two_hop = set(rings[v])
            for w in rings[v]:
                two_hop |= rings[w]
            two_hop.discard(v)
            assert list(members[v]) == sorted(two_hop)

    def test_rel_is_member_minus_center(self):
        mesh = icosahedron()
        members, rels, fans = mesh.patch_template()
        for v in (0, 5, 11):
            want = mesh.vertices[members[v]] - mesh.vertices[v]
            assert np.array_equal(rels[v], want)

    def test_fan_pairs_are_one_ring_triangles(self):
        mesh = make_sphere(1)
        members, rels, fans = mesh.patch_template()
        face_set = {frozenset(map(int, f)) for f in mesh.faces}
        for v in range(mesh.num_vertices):
            assert len(fans[v]) == len(mesh.adjacency[v])
            for a, b in fans[v]:
                tri = frozenset((v, int(members[v][a]), int(members[v][b])))
                assert tri in face_set

    def test_second_ring_patch_values_and_flags(self):
        mesh = icosahedron()
        dist = np.arange(12, dtype=float)
        visited = dist < 6
        patch = second_ring_patch(mesh, 0, dist, visited)
        assert patch.center == 0
        assert np.array_equal(patch.values, dist[patch.members])
        assert np.array_equal(patch.visited, visited[patch.members])
        assert patch.size == len(patch.members)

    def test_second_ring_patch_range_check(self):
        with pytest.raises(DomainError):
            second_ring_patch(icosahedron(), 99, np.zeros(12), np.zeros(12, bool))


class TestFileFormats:
    def test_off_roundtrip_bit_exact(self, tmp_path):
        mesh = perturb_vertices(make_sphere(1), 0.01, seed=3)
        path = tmp_path / "m.off"
        save_off(mesh, path)
        back = load_mesh_path(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)

    def test_off_header_and_counts_errors(self):
        with pytest.raises(ParseError):
            load_mesh("", "OFF")
        with pytest.raises(ParseError) as err:
            load_mesh("NOFF\n1 0 0\n0 0 0\n", "OFF")
        assert err.value.line == 1
        with pytest.raises(ParseError):
            load_mesh("OFF\n2 1 0\n0 0 0\n", "OFF")

    def test_off_rejects_quads(self):
        text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
        with pytest.raises(ParseError) as err:
            load_mesh(text, "OFF")
        assert err.value.line == 7

    def test_off_comments_ignored(self):
        text = ("# comment\nOFF\n3 1 0 # counts\n"
                "0 0 0\n1 0 0 # a vertex\n0 1 0\n3 0 1 2\n")
        mesh = load_mesh(text, "OFF")
        assert mesh.num_vertices == 3

    def test_obj_basics_and_slash_indices(self):
        text = ("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\n"
                "f 1/1/1 2/2/1 3/3/1\n")
        mesh = load_mesh(text, "OBJ")
        assert mesh.num_vertices == 3
        assert list(mesh.faces[0]) == [0, 1, 2]

    def test_obj_negative_indices(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"
        mesh = load_mesh(text, "OBJ")
        assert list(mesh.faces[0]) == [0, 1, 2]

    def test_obj_zero_index_rejected_with_line(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"
        with pytest.raises(ParseError) as err:
            load_mesh(text, "OBJ")
        assert err.value.line == 4

    def test_obj_non_triangle_rejected(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"
        with pytest.raises(ParseError):
            load_mesh(text, "OBJ")

    def test_unknown_format(self):
        with pytest.raises(DomainError):
            load_mesh("", "PLY")

    def test_vertex_field_roundtrip_with_inf(self, tmp_path):
        vals = np.array([0.0, 1.5, np.inf, 2.25e-12])
        path = tmp_path / "f.txt"
        write_vertex_field(vals, path)
        back = read_vertex_field(path)
        assert np.array_equal(back, vals)

    def test_vertex_field_bad_value_line(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("1.0\nnope\n")
        with pytest.raises(ParseError) as err:
            read_vertex_field(path)
        assert err.value.line == 2


class TestIcosphere:
    def test_icosahedron_shape(self):
        mesh = icosahedron()
        assert mesh.num_vertices == 12
        assert mesh.num_faces == 20
        assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)
        assert np.allclose(mesh.vertices[0], [0, 0, 1])
        assert np.allclose(mesh.vertices[11], [0, 0, -1])
        edges = np.array(mesh.edges())
        lengths = np.linalg.norm(mesh.vertices[edges[:, 0]]
                                 - mesh.vertices[edges[:, 1]], axis=1)
        assert np.allclose(lengths, lengths[0])
        assert all(len(r) == 5 for r in mesh.adjacency)

    def test_loop_subdivide_counts_and_euler(self):
        mesh = icosahedron()
        sub = loop_subdivide(mesh)
        assert sub.num_vertices == mesh.num_vertices + len(mesh.edges())
        assert sub.num_faces == 4 * mesh.num_faces
        v, e, f = sub.num_vertices, len(sub.edges()), sub.num_faces
        assert v - e + f == 2
        assert sub.boundary_edges() == []

    def test_loop_subdivide_open_strip_keeps_boundary(self):
        strip = TriMesh(TETRA_VERTS[:3], [[0, 1, 2]])
        sub = loop_subdivide(strip)
        assert len(sub.boundary_edges()) == 6

    def test_make_sphere_counts_and_unit_norm(self):
        for level in (0, 1, 2, 3):
            mesh = make_sphere(level)
            assert mesh.num_vertices == 10 * 4 ** level + 2
            assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0,
                               atol=1e-12)
        assert np.allclose(make_sphere(2).vertices[0], [0, 0, 1])

    def test_make_sphere_validation(self):
        with pytest.raises(DomainError):
            make_sphere(-1)
        with pytest.raises(ResourceLimit):
            make_sphere(8)

    def test_sphere_edges_shrink_with_level(self):
        prev = make_sphere(1).median_edge_length()
        for level in (2, 3):
            cur = make_sphere(level).median_edge_length()
            assert cur < prev
            prev = cur


class TestGeodesics:
    def test_arccos_oracle_values(self):
        assert sphere_geodesic_gt([0, 0, 1], [0, 0, 1]) == 0.0
        assert sphere_geodesic_gt([0, 0, 1], [0, 0, -1]) == pytest.approx(math.pi)
        assert sphere_geodesic_gt([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2)

    def test_non_unit_rejected(self):
        with pytest.raises(DomainError):
            sphere_geodesic_gt([0, 0, 2], [0, 0, 1])

    def test_gt_field_matches_scalar(self):
        mesh = make_sphere(1)
        field = sphere_gt_field(mesh, 0)
        for v in (0, 3, 17, 41):
            want = sphere_geodesic_gt(mesh.vertices[0], mesh.vertices[v])
            assert field[v] == pytest.approx(want, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_geodesic_symmetry_and_range(self, seed):
        rng = np.random.default_rng(seed)
        p, q = rng.normal(size=(2, 3))
        p /= np.linalg.norm(p)
        q /= np.linalg.norm(q)
        d1 = sphere_geodesic_gt(p, q)
        d2 = sphere_geodesic_gt(q, p)
        assert d1 == d2
        assert 0.0 <= d1 <= math.pi


class TestPerturbation:
    def test_zero_sigma_identity(self):
        mesh = make_sphere(1)
        out = perturb_vertices(mesh, 0.0, seed=4)
        assert np.array_equal(out.vertices, mesh.vertices)

    def test_deterministic_and_preserves_faces(self):
        mesh = make_sphere(1)
        a = perturb_vertices(mesh, 0.01, seed=4)
        b = perturb_vertices(mesh, 0.01, seed=4)
        c = perturb_vertices(mesh, 0.01, seed=5)
        assert np.array_equal(a.vertices, b.vertices)
        assert not np.array_equal(a.vertices, c.vertices)
        assert np.array_equal(a.faces, mesh.faces)

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            perturb_vertices(make_sphere(0), -0.1, seed=0)
