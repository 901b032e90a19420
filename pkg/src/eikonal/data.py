"""Supervised training data: sources, ground truth, visited rule, JSONL I/O.

A member counts as visited exactly when its ground-truth distance is
strictly below the center's, i.e. when it would be finalized first and could
participate in the center's prediction.  Per-example seeded streams make
parallel and serial generation produce identical datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError
from .grid import (
    CircleSource,
    GridDomain,
    PATCH_OFFSETS,
    PointSource,
    PolylineSource,
    SourceSet,
    euclidean_gt,
)
from .grid_solvers import GridPatchView
from .mesh import MeshPatch, TriMesh, make_sphere, sphere_gt_field
from .neural import (
    apply_rotation,
    normalize_grid_patch,
    normalize_mesh_patch,
    random_rotation,
)

DATASET_FORMAT = "deik-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class TrainingExample:
    """One normalized (patch, target) pair with provenance for audits."""

    kind: str
    target: float
    bias: float
    scale: float
    inputs: np.ndarray | None = field(default=None, repr=False)   # grid: (13,)
    members: np.ndarray | None = field(default=None, repr=False)  # mesh: (M, 4)
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GridSourceFamily:
    """Mixture over source configurations for grid data generation."""

    point_weight: float = 0.4
    circle_weight: float = 0.3
    polyline_weight: float = 0.3
    max_points: int = 3
    polyline_vertices: tuple = (3, 6)

    def sample(self, rng: np.random.Generator) -> SourceSet:
        total = self.point_weight + self.circle_weight + self.polyline_weight
        r = rng.random() * total
        if r < self.point_weight:
            k = int(rng.integers(1, self.max_points + 1))
            prims = [PointSource(*rng.random(2)) for _ in range(k)]
        elif r < self.point_weight + self.circle_weight:
            cx, cy = rng.uniform(0.15, 0.85, 2)
            prims = [CircleSource(cx, cy, float(rng.uniform(0.05, 0.4)))]
        else:
            lo, hi = self.polyline_vertices
            k = int(rng.integers(lo, hi + 1))
            prims = [PolylineSource(rng.random((k, 2)))]
        return SourceSet(tuple(prims))


_OFFSETS = np.array(PATCH_OFFSETS, dtype=np.float64)
_MAX_ATTEMPTS = 1000
# Near-tied visited values make the 0.5/mean scale, and with it the
# normalized target and geometry features, arbitrarily large; a handful of
# such examples dominate the squared loss and stall training, so they are
# resampled.  Both bounds are loose: typical targets sit in [0, 3] and
# typical normalized spacings in [0.3, 3].
_MAX_TARGET = 10.0
_MAX_GEOMETRY = 20.0


def _grid_example(k: int, domain: GridDomain, family: GridSourceFamily,
                  seed: int, mask_cut: float = 0.25) -> TrainingExample:
    rng = np.random.default_rng([seed, k])
    # Every 10th example must be front-sparse, the next front-dense, so both
    # regimes stay represented whatever the source mixture does.
    stratum = "sparse" if k % 10 == 0 else "dense" if k % 10 == 1 else None
    h = domain.h
    for attempt in range(_MAX_ATTEMPTS):
        if stratum == "dense" and attempt >= 20:
            # Mostly-visited patches sit at local maxima of the distance
            # field (front collision points); random centers almost never
            # land there, so steer: a circle source viewed from its middle.
            cx = (rng.integers(2, domain.nx - 2) + rng.uniform(-0.4, 0.4)) * h
            cy = (rng.integers(2, domain.ny - 2) + rng.uniform(-0.4, 0.4)) * h
            radius = float(rng.uniform(3.0 * h, max(0.4, 4.0 * h)))
            sources = SourceSet((CircleSource(cx, cy, radius),))
            i = int(round(cx / h))
            j = int(round(cy / h))
        else:
            sources = family.sample(rng)
            i = int(rng.integers(2, domain.nx - 2))
            j = int(rng.integers(2, domain.ny - 2))
        center = np.array([i * h, j * h])
        gt_center = euclidean_gt(sources, center)
        if gt_center <= 0:
            continue
        member_gts = euclidean_gt(sources, center + _OFFSETS * h)
        vis = member_gts < gt_center
        nv = int(vis.sum())
        if nv == 0:
            continue
        # A marching front asks for estimates before every smaller-valued
        # member is finalized: what the solver sees is the causal set cut at
        # the current front value.  Sample that cut (uniform over depths,
        # full mask included) so early-front patches are represented; a net
        # trained on full masks alone undershoots badly on shallow ones.
        if stratum != "dense" and nv >= 2 and rng.random() < mask_cut:
            depth = int(rng.integers(1, nv + 1))
            tau = np.sort(member_gts[vis])[depth - 1]
            vis = vis & (member_gts <= tau)
            nv = int(vis.sum())
        if stratum == "sparse" and nv > 3:
            continue
        if stratum == "dense" and nv < 9:
            continue
        patch = GridPatchView(h=h, values=np.where(vis, member_gts, np.inf),
                              visited=vis)
        x, rec = normalize_grid_patch(patch)
        if rec.apply(gt_center) > _MAX_TARGET or x[12] > _MAX_GEOMETRY:
            continue
        return TrainingExample(
            kind="grid",
            target=rec.apply(gt_center),
            bias=rec.bias,
            scale=rec.scale,
            inputs=x,
            provenance={
                "example": k,
                "center": [i, j],
                "h": h,
                "gt": float(gt_center),
                "source": sources.describe(),
                "visited": nv,
            },
        )
    raise DomainError(f"could not realize example {k} in {_MAX_ATTEMPTS} tries")


def gen_grid_dataset(count: int, domain: GridDomain | None = None,
                     family: GridSourceFamily | None = None,
                     seed: int = 0, mask_cut: float = 0.25) -> list:
    """Normalized grid examples from random sources and centers.

    mask_cut is the fraction of examples whose visited set is additionally
    cut at a random front depth (see _grid_example); the rest keep the full
    causal mask.  Deterministic per seed (each example has its own
    substream, so chunked or parallel generation yields the same dataset).
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    if not 0.0 <= mask_cut <= 1.0:
        raise DomainError("mask_cut must be in [0, 1]")
    domain = domain or GridDomain(51, 51, 1.0 / 50.0)
    family = family or GridSourceFamily()
    return [_grid_example(k, domain, family, seed, mask_cut)
            for k in range(count)]


def _mesh_example(k: int, meshes, fields, templates, seed: int,
                  augment: bool) -> TrainingExample:
    rng = np.random.default_rng([seed, k])
    for _ in range(_MAX_ATTEMPTS):
        p = int(rng.integers(len(meshes)))
        gt = fields[p]
        v = int(rng.integers(len(gt)))
        gtv = float(gt[v])
        if not (np.isfinite(gtv) and gtv > 0):
            continue
        members, rels, fans = templates[p]
        mem = members[v]
        if mem.size == 0:
            continue
        vis = gt[mem] < gtv
        if not vis.any():
            continue
        patch = MeshPatch(center=v, members=mem, rel=rels[v],
                          values=gt[mem], visited=vis, fan=fans[v])
        X, rec = normalize_mesh_patch(patch)
        if (rec.apply(gtv) > _MAX_TARGET
                or np.abs(X[:, :3]).max() > _MAX_GEOMETRY):
            continue
        example = TrainingExample(
            kind="mesh",
            target=rec.apply(gtv),
            bias=rec.bias,
            scale=rec.scale,
            members=X,
            provenance={
                "example": k,
                "pair": p,
                "vertex": v,
                "gt": gtv,
                "visited": int(vis.sum()),
            },
        )
        if augment:
            example = apply_rotation(example, random_rotation(rng))
        return example
    raise DomainError(f"could not realize example {k} in {_MAX_ATTEMPTS} tries")


def gen_mesh_dataset(count: int, pairs, seed: int = 0,
                     augment: bool = True) -> list:
    """Normalized mesh examples from (mesh, per-vertex ground truth) pairs."""
    if count < 1:
        raise DomainError("count must be >= 1")
    if not pairs:
        raise DomainError("at least one (mesh, field) pair is required")
    meshes, fields = [], []
    for mesh, gt in pairs:
        gt = np.asarray(gt, dtype=np.float64)
        if gt.shape != (mesh.num_vertices,):
            raise DomainError(
                f"field length {gt.shape} does not match {mesh.num_vertices} vertices")
        meshes.append(mesh)
        fields.append(gt)
    templates = [m.patch_template() for m in meshes]
    return [_mesh_example(k, meshes, fields, templates, seed, augment)
            for k in range(count)]


# ---------------------------------------------------------------------------
# Desk-scale training corpora with analytic ground truth


def sphere_training_pairs(levels=(2, 3), sources_per_mesh: int = 6,
                          seed: int = 0) -> list:
    """Unit icospheres with exact great-circle fields from spread sources."""
    pairs = []
    for level in levels:
        mesh = make_sphere(level)
        rng = np.random.default_rng([seed, level])
        sources = rng.choice(mesh.num_vertices, size=sources_per_mesh,
                             replace=False)
        for sv in sources:
            pairs.append((mesh, sphere_gt_field(mesh, int(sv))))
    return pairs


def triangulated_plane(n: int = 21, jitter: float = 0.0, seed: int = 0,
                       extent: float = 1.0) -> TriMesh:
    """Unit-square triangulation at z = 0 with jittered interior vertices.

    jitter is a fraction of the spacing; boundary vertices stay put so the
    domain remains the exact square and planar distances stay Euclidean.
    """
    if n < 3:
        raise DomainError("plane needs n >= 3 vertices per side")
    step = extent / (n - 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    verts = np.zeros((n * n, 3))
    verts[:, 0] = (ii * step).ravel()
    verts[:, 1] = (jj * step).ravel()
    if jitter > 0:
        rng = np.random.default_rng(seed)
        bump = rng.uniform(-jitter * step, jitter * step, (n, n, 2))
        bump[0, :] = bump[-1, :] = 0.0
        bump[:, 0] = bump[:, -1] = 0.0
        verts[:, 0] += bump[..., 0].ravel()
        verts[:, 1] += bump[..., 1].ravel()
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = (i + 1) * n + j
            c = i * n + j + 1
            d = (i + 1) * n + j + 1
            if (i + j) % 2 == 0:
                faces.extend([(a, b, c), (b, d, c)])
            else:
                faces.extend([(a, b, d), (a, d, c)])
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def planar_training_pairs(count: int = 8, n: int = 21, jitter: float = 0.3,
                          seed: int = 0) -> list:
    """Jittered planar meshes with exact Euclidean fields from random sources."""
    family = GridSourceFamily(point_weight=0.5, circle_weight=0.0,
                              polyline_weight=0.5, max_points=2,
                              polyline_vertices=(2, 4))
    pairs = []
    for k in range(count):
        rng = np.random.default_rng([seed, k])
        mesh = triangulated_plane(n, jitter, seed=int(rng.integers(2 ** 31)))
        sources = family.sample(rng)
        pairs.append((mesh, euclidean_gt(sources, mesh.vertices[:, :2])))
    return pairs


# ---------------------------------------------------------------------------
# Serialization (line-delimited JSON records after one header line)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_dataset(examples, path, seed: int | None = None, meta: dict | None = None):
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION,
              "count": len(examples)}
    if seed is not None:
        header["seed"] = seed
    if meta:
        header.update(meta)
    with open(path, "w") as f:
        f.write(_dumps(header) + "\n")
        for ex in examples:
            row = {"kind": ex.kind, "target": ex.target, "bias": ex.bias,
                   "scale": ex.scale, "provenance": ex.provenance}
            if ex.kind == "grid":
                row["inputs"] = [float(v) for v in ex.inputs]
            else:
                row["members"] = [[float(v) for v in r] for r in ex.members]
            f.write(_dumps(row) + "\n")


def load_dataset(path):
    """Returns (examples, header)."""
    examples = []
    header = None
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON record: {e.msg}", line=ln) from None
            if ln == 1:
                if row.get("format") != DATASET_FORMAT:
                    raise ParseError("missing dataset header", line=1)
                header = row
                continue
            kind = row.get("kind")
            if kind == "grid":
                ex = TrainingExample(
                    kind="grid", target=row["target"], bias=row["bias"],
                    scale=row["scale"],
                    inputs=np.array(row["inputs"], dtype=np.float64),
                    provenance=row.get("provenance", {}))
                if ex.inputs.shape != (13,):
                    raise ParseError(f"grid inputs must have 13 slots, "
                                     f"got {ex.inputs.shape}", line=ln)
            elif kind == "mesh":
                members = np.array(row["members"], dtype=np.float64)
                if members.ndim != 2 or members.shape[1] != 4 or len(members) < 1:
                    raise ParseError("mesh members must be (M>=1, 4)", line=ln)
                ex = TrainingExample(
                    kind="mesh", target=row["target"], bias=row["bias"],
                    scale=row["scale"], members=members,
                    provenance=row.get("provenance", {}))
            else:
                raise ParseError(f"unknown example kind {kind!r}", line=ln)
            examples.append(ex)
    if header is None:
        raise ParseError("empty dataset file", line=1)
    return examples, header


def to_training_arrays(examples):
    """(inputs, targets) in the layout net.train expects, one kind at a time."""
    if not examples:
        raise DomainError("no examples")
    kinds = {ex.kind for ex in examples}
    if len(kinds) != 1:
        raise DomainError(f"mixed example kinds {sorted(kinds)}")
    y = np.array([ex.target for ex in examples])
    if kinds == {"grid"}:
        return np.stack([ex.inputs for ex in examples]), y
    return [ex.members for ex in examples], y
