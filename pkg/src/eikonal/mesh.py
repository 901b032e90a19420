"""Triangle meshes: ingestion, neighborhoods, icospheres, perturbation.

Meshes are immutable after load.  Neighborhood extraction is read-only and
safe to run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePatchError,
    DomainError,
    MeshValidationError,
    ParseError,
    ResourceLimit,
)


class TriMesh:
    """Vertices, triangular faces, and per-vertex one-ring adjacency.

    Construction validates: all face indices in range, no repeated vertex
    within a face, every edge shared by at most two faces.  Non-manifold
    meshes are rejected, open boundaries are allowed.
    """

    def __init__(self, vertices, faces):
        verts = np.ascontiguousarray(vertices, dtype=np.float64)
        fcs = np.ascontiguousarray(faces, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshValidationError(f"vertices must be (n, 3), got {verts.shape}")
        if fcs.size == 0:
            fcs = fcs.reshape(0, 3)
        if fcs.ndim != 2 or fcs.shape[1] != 3:
            raise MeshValidationError(f"faces must be (m, 3), got {fcs.shape}")
        n = len(verts)
        if fcs.size and (fcs.min() < 0 or fcs.max() >= n):
            raise MeshValidationError("face index out of range")
        degen = (fcs[:, 0] == fcs[:, 1]) | (fcs[:, 1] == fcs[:, 2]) | (fcs[:, 0] == fcs[:, 2])
        if degen.any():
            raise MeshValidationError(
                "degenerate faces with repeated vertices",
                edges=[tuple(f) for f in fcs[degen][:8]],
            )

        edge_count = {}
        for a, b, c in fcs:
            for u, v in ((a, b), (b, c), (c, a)):
                key = (int(u), int(v)) if u < v else (int(v), int(u))
                edge_count[key] = edge_count.get(key, 0) + 1
        bad = [e for e, k in edge_count.items() if k > 2]
        if bad:
            raise MeshValidationError("non-manifold edges", edges=sorted(bad))

        ring = [set() for _ in range(n)]
        for a, b, c in fcs:
            ring[a].update((b, c))
            ring[b].update((a, c))
            ring[c].update((a, b))

        verts.setflags(write=False)
        fcs.setflags(write=False)
        self.vertices = verts
        self.faces = fcs
        self.adjacency = tuple(tuple(sorted(r)) for r in ring)
        self._edge_count = edge_count
        # Faces incident to each vertex, as the (other, other) vertex pairs.
        corners = [[] for _ in range(n)]
        for a, b, c in fcs:
            corners[a].append((int(b), int(c)))
            corners[b].append((int(c), int(a)))
            corners[c].append((int(a), int(b)))
        self.vertex_corners = tuple(tuple(cs) for cs in corners)
        self._patch_template = None

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def edges(self):
        return sorted(self._edge_count)

    def boundary_edges(self):
        return sorted(e for e, k in self._edge_count.items() if k == 1)

    def median_edge_length(self) -> float:
        e = np.array(self.edges())
        d = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        return float(np.median(d))

    def bounding_box_diagonal(self) -> float:
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))

    def patch_template(self):
        """Cached per-vertex (members, relative coords, fan) for fast patches.

        members[v] lists the union of first and second ring, ascending;
        rel[v] holds members' coordinates relative to v; fan[v] holds
        incident one-ring triangles as index pairs into members[v].
        """
        if self._patch_template is None:
            members, rels, fans = [], [], []
            for v in range(self.num_vertices):
                ring1 = self.adjacency[v]
                seen = set(ring1)
                for w in ring1:
                    seen.update(self.adjacency[w])
                seen.discard(v)
                mem = np.array(sorted(seen), dtype=np.int64)
                members.append(mem)
                rels.append(self.vertices[mem] - self.vertices[v]
                            if mem.size else np.zeros((0, 3)))
                pos = {int(m): k for k, m in enumerate(mem)}
                fans.append(np.array(
                    [(pos[a], pos[b]) for a, b in self.vertex_corners[v]],
                    dtype=np.int64).reshape(-1, 2))
            self._patch_template = (tuple(members), tuple(rels), tuple(fans))
        return self._patch_template


@dataclass(frozen=True)
class MeshPatch:
    """Second-ring neighborhood of a vertex, coordinates relative to it.

    `fan` lists the one-ring triangles incident to the center as index pairs
    into `members`, so a local solver needs nothing beyond the patch.
    """

    center: int
    members: np.ndarray = field(repr=False)
    rel: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    visited: np.ndarray = field(repr=False)
    fan: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.members)


def second_ring_patch(mesh: TriMesh, v: int, distances, visited) -> MeshPatch:
    """Patch of first+second ring members of v with values and visited flags.

    `distances` and `visited` are per-vertex arrays (current solve state or
    ground-truth-derived values and masks).
    """
    if not 0 <= v < mesh.num_vertices:
        raise DomainError(f"vertex {v} out of range")
    members, rels, fans = mesh.patch_template()
    mem = members[v]
    if mem.size == 0:
        raise DegeneratePatchError(f"vertex {v} is isolated")
    distances = np.asarray(distances, dtype=np.float64)
    visited = np.asarray(visited, dtype=bool)
    return MeshPatch(
        center=v,
        members=mem,
        rel=rels[v],
        values=distances[mem],
        visited=visited[mem],
        fan=fans[v],
    )


# ---------------------------------------------------------------------------
# File formats


def load_mesh(data, format: str) -> TriMesh:
    """Parse OFF or OBJ text (or bytes) into a validated TriMesh."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    fmt = format.upper()
    if fmt == "OFF":
        return _parse_off(data)
    if fmt == "OBJ":
        return _parse_obj(data)
    raise DomainError(f"unknown mesh format {format!r}")


def load_mesh_path(path) -> TriMesh:
    path = str(path)
    fmt = "OFF" if path.lower().endswith(".off") else "OBJ"
    with open(path) as f:
        return load_mesh(f.read(), fmt)


def _meaningful_lines(text):
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line


def _parse_off(text) -> TriMesh:
    lines = _meaningful_lines(text)
    try:
        ln, header = next(lines)
    except StopIteration:
        raise ParseError("empty OFF file", line=1) from None
    if header != "OFF":
        raise ParseError(f"expected OFF header, got {header!r}", line=ln)
    try:
        ln, counts = next(lines)
        nv, nf = [int(t) for t in counts.split()[:2]]
    except (StopIteration, ValueError, IndexError):
        raise ParseError("expected 'nv nf ne' counts after OFF header",
                         line=ln + 1) from None
    verts, faces = [], []
    for _ in range(nv):
        try:
            ln, line = next(lines)
            verts.append([float(t) for t in line.split()[:3]])
        except (StopIteration, ValueError, IndexError):
            raise ParseError(f"expected {nv} vertex lines", line=ln) from None
    for _ in range(nf):
        try:
            ln, line = next(lines)
            toks = line.split()
            k = int(toks[0])
        except (StopIteration, ValueError, IndexError):
            raise ParseError(f"expected {nf} face lines", line=ln) from None
        if k != 3:
            raise ParseError(f"only triangular faces supported, got {k}-gon", line=ln)
        try:
            faces.append([int(t) for t in toks[1:4]])
        except ValueError:
            raise ParseError("non-integer face index", line=ln) from None
    return TriMesh(np.array(verts, dtype=np.float64).reshape(nv, 3),
                   np.array(faces, dtype=np.int64).reshape(nf, 3))


def _parse_obj(text) -> TriMesh:
    verts, faces = [], []
    for ln, line in _meaningful_lines(text):
        toks = line.split()
        if toks[0] == "v":
            try:
                verts.append([float(t) for t in toks[1:4]])
            except (ValueError, IndexError):
                raise ParseError("bad vertex line", line=ln) from None
            if len(toks) < 4:
                raise ParseError("vertex needs 3 coordinates", line=ln)
        elif toks[0] == "f":
            if len(toks) != 4:
                raise ParseError("only triangular faces supported", line=ln)
            idx = []
            for t in toks[1:]:
                head = t.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise ParseError(f"bad face index {t!r}", line=ln) from None
                if k == 0:
                    raise ParseError("OBJ indices are 1-based; got 0", line=ln)
                if k < 0:
                    k = len(verts) + 1 + k
                idx.append(k - 1)
            faces.append(idx)
        # vn / vt / o / g / s / usemtl etc. are ignored
    if not verts:
        raise ParseError("no vertices found", line=1)
    return TriMesh(np.array(verts, dtype=np.float64),
                   np.array(faces, dtype=np.int64).reshape(len(faces), 3))


def save_off(mesh: TriMesh, path):
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{mesh.num_vertices} {mesh.num_faces} 0\n")
        for x, y, z in mesh.vertices:
            f.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.faces:
            f.write(f"3 {a} {b} {c}\n")


def write_vertex_field(values, path):
    """One value per line in vertex order; +inf serializes as `inf`."""
    with open(path, "w") as f:
        for u in np.asarray(values, dtype=np.float64):
            f.write("inf\n" if math.isinf(u) else f"{float(u)!r}\n")


def read_vertex_field(path) -> np.ndarray:
    vals = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                vals.append(float(s))
            except ValueError:
                raise ParseError(f"bad field value {s!r}", line=ln) from None
    return np.array(vals, dtype=np.float64)


# ---------------------------------------------------------------------------
# Icosphere generation

_MAX_SPHERE_LEVEL = 7


def icosahedron() -> TriMesh:
    """Unit icosahedron oriented with vertices at both poles.

    Vertex 0 is the north pole (0, 0, 1), vertex 11 the south pole.
    """
    top = [(0.0, 0.0, 1.0)]
    upper = [
        (2 / math.sqrt(5) * math.cos(2 * math.pi * k / 5),
         2 / math.sqrt(5) * math.sin(2 * math.pi * k / 5),
         1 / math.sqrt(5))
        for k in range(5)
    ]
    lower = [
        (2 / math.sqrt(5) * math.cos(2 * math.pi * k / 5 + math.pi / 5),
         2 / math.sqrt(5) * math.sin(2 * math.pi * k / 5 + math.pi / 5),
         -1 / math.sqrt(5))
        for k in range(5)
    ]
    verts = top + upper + lower + [(0.0, 0.0, -1.0)]
    faces = []
    for k in range(5):
        kn = (k + 1) % 5
        faces.append((0, 1 + k, 1 + kn))
        faces.append((1 + k, 6 + k, 1 + kn))
        faces.append((1 + kn, 6 + k, 6 + kn))
        faces.append((6 + k, 11, 6 + kn))
    return TriMesh(np.array(verts), np.array(faces))


def loop_subdivide(mesh: TriMesh) -> TriMesh:
    """One round of Loop's subdivision (original vertex ids preserved)."""
    verts = mesh.vertices
    n = mesh.num_vertices

    # Opposite vertices per edge, for the 3/8-3/8-1/8-1/8 odd rule.
    opposite = {}
    for a, b, c in mesh.faces:
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            opposite.setdefault(key, []).append(int(w))

    boundary = {v for e in mesh.boundary_edges() for v in e}

    new_even = np.empty_like(verts)
    for v in range(n):
        ring = mesh.adjacency[v]
        k = len(ring)
        if v in boundary:
            bnd = [w for w in ring
                   if mesh._edge_count[(min(v, w), max(v, w))] == 1]
            if len(bnd) == 2:
                new_even[v] = 0.75 * verts[v] + 0.125 * (verts[bnd[0]] + verts[bnd[1]])
            else:
                new_even[v] = verts[v]
        elif k == 0:
            new_even[v] = verts[v]
        else:
            beta = (5.0 / 8.0 - (3.0 / 8.0 + 0.25 * math.cos(2 * math.pi / k)) ** 2) / k
            new_even[v] = (1 - k * beta) * verts[v] + beta * verts[list(ring)].sum(axis=0)

    edge_id = {}
    odd_pts = []
    for key, opp in opposite.items():
        a, b = key
        if len(opp) == 2:
            p = 0.375 * (verts[a] + verts[b]) + 0.125 * (verts[opp[0]] + verts[opp[1]])
        else:
            p = 0.5 * (verts[a] + verts[b])
        edge_id[key] = n + len(odd_pts)
        odd_pts.append(p)

    def mid(u, v):
        return edge_id[(int(u), int(v)) if u < v else (int(v), int(u))]

    new_faces = []
    for a, b, c in mesh.faces:
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        new_faces.extend([(a, mab, mca), (b, mbc, mab), (c, mca, mbc), (mab, mbc, mca)])

    return TriMesh(np.vstack([new_even, np.array(odd_pts)]),
                   np.array(new_faces, dtype=np.int64))


def make_sphere(level: int) -> TriMesh:
    """Unit icosphere: Loop subdivision of the icosahedron, then projection.

    Pure Loop limits to a non-spherical surface, so every round ends with a
    projection back onto the unit sphere.  Vertex count is 10*4^level + 2 and
    vertex 0 stays at the north pole.
    """
    if level < 0:
        raise DomainError(f"subdivision level must be >= 0, got {level}")
    if level > _MAX_SPHERE_LEVEL:
        raise ResourceLimit(
            f"level {level} exceeds limit {_MAX_SPHERE_LEVEL} "
            f"({10 * 4 ** level + 2} vertices)")
    mesh = icosahedron()
    for _ in range(level):
        mesh = loop_subdivide(mesh)
        verts = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        mesh = TriMesh(verts, mesh.faces)
    return mesh


def sphere_geodesic_gt(p, q) -> float | np.ndarray:
    """Great-circle distance between unit vectors: arccos of the dot product.

    Accepts single vectors or (..., 3) arrays; inputs must be unit length
    within 1e-9.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    for name, v in (("p", p), ("q", q)):
        norms = np.linalg.norm(v, axis=-1)
        if not np.all(np.abs(norms - 1.0) <= 1e-9):
            raise DomainError(f"{name} is not unit length (|{name}| deviates "
                              f"by {np.max(np.abs(norms - 1.0)):.3g})")
    dots = np.clip(np.sum(p * q, axis=-1), -1.0, 1.0)
    out = np.arccos(dots)
    return float(out) if out.ndim == 0 else out


def sphere_gt_field(mesh: TriMesh, source_vertex: int) -> np.ndarray:
    """Per-vertex analytic geodesic distances from one vertex of a unit sphere."""
    src = mesh.vertices[source_vertex]
    return sphere_geodesic_gt(np.broadcast_to(src, mesh.vertices.shape), mesh.vertices)


def perturb_vertices(mesh: TriMesh, sigma: float, seed: int) -> TriMesh:
    """Displace each vertex by iid zero-mean Gaussian noise, per coordinate."""
    if sigma < 0:
        raise DomainError(f"noise level must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, mesh.vertices.shape)
    return TriMesh(mesh.vertices + sigma * noise, mesh.faces)
