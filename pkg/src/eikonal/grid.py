"""Regularly sampled planar domain: grid geometry, sources, distance fields.

The grid places point (i, j) at coordinates (i*h, j*h) with the same spacing
h on both axes.  Everything here is immutable after construction and safe to
share between concurrent solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError

# Neighbor offsets within the 2h disk, lexicographically sorted.  Slots at
# distance h and 2h sit on the axes; the four sqrt(2)h slots are diagonal.
PATCH_OFFSETS = (
    (-2, 0), (-1, -1), (-1, 0), (-1, 1),
    (0, -2), (0, -1), (0, 1), (0, 2),
    (1, -1), (1, 0), (1, 1), (2, 0),
)
PATCH_SIZE = len(PATCH_OFFSETS)

# Canonical slot indices used by the axiomatic grid solvers.
X_MINUS_2H, X_MINUS_H, X_PLUS_H, X_PLUS_2H = 0, 2, 9, 11
Y_MINUS_2H, Y_MINUS_H, Y_PLUS_H, Y_PLUS_2H = 4, 5, 6, 7

# Distance of each slot from the center, in units of h.
SLOT_LENGTHS = np.array(
    [math.hypot(di, dj) for di, dj in PATCH_OFFSETS], dtype=np.float64
)


@dataclass(frozen=True)
class GridDomain:
    """Uniform nx-by-ny sampling of the plane with spacing h."""

    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if self.nx < 5 or self.ny < 5:
            raise DomainError(f"grid must be at least 5x5, got {self.nx}x{self.ny}")
        if not (self.h > 0):
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))

    @property
    def num_points(self) -> int:
        return self.nx * self.ny

    def flat(self, i: int, j: int) -> int:
        return i * self.ny + j

    def unflat(self, p: int) -> tuple[int, int]:
        return divmod(p, self.ny)

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.nx and 0 <= j < self.ny

    def coords(self, i, j):
        return (i * self.h, j * self.h)

    def all_coords(self) -> np.ndarray:
        """(nx*ny, 2) coordinates in flat (row-major) order."""
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        return np.column_stack([ii.ravel() * self.h, jj.ravel() * self.h])


@dataclass(frozen=True)
class PointSource:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        return np.hypot(pts[..., 0] - self.x, pts[..., 1] - self.y)


@dataclass(frozen=True)
class CircleSource:
    """Zero set is the circle curve itself, not the enclosed disk."""

    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not (self.r > 0):
            raise DomainError(f"circle radius must be positive, got {self.r}")
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "r", float(self.r))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(np.hypot(pts[..., 0] - self.cx, pts[..., 1] - self.cy) - self.r)


@dataclass(frozen=True)
class PolylineSource:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 2:
            raise DomainError("polyline needs at least 2 vertices")
        object.__setattr__(self, "vertices", verts)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=np.float64)
        best = np.full(pts.shape[:-1], np.inf)
        for a, b in zip(v[:-1], v[1:]):
            best = np.minimum(best, _segment_distance(pts, a, b))
        return best


def _segment_distance(pts, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(pts[..., 0] - a[0], pts[..., 1] - a[1])
    t = ((pts[..., 0] - a[0]) * ab[0] + (pts[..., 1] - a[1]) * ab[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(pts[..., 0] - (a[0] + t * ab[0]), pts[..., 1] - (a[1] + t * ab[1]))


@dataclass(frozen=True)
class SourceSet:
    """Non-empty union of point / circle / polyline source primitives."""

    primitives: tuple

    def __post_init__(self):
        if len(self.primitives) == 0:
            raise DomainError("source set must contain at least one primitive")

    def __iter__(self):
        return iter(self.primitives)

    def __len__(self):
        return len(self.primitives)

    def describe(self) -> str:
        """The source-file text form, usable as provenance."""
        return "; ".join(_primitive_line(p) for p in self.primitives)


def euclidean_gt(sources: SourceSet, p) -> float | np.ndarray:
    """Exact Euclidean distance from p to the nearest source primitive.

    p may be a single (x, y) pair or an (..., 2) array of points; the result
    has the corresponding shape.
    """
    pts = np.asarray(p, dtype=np.float64)
    scalar = pts.ndim == 1
    if scalar:
        pts = pts[None, :]
    best = np.full(pts.shape[:-1], np.inf)
    for prim in sources:
        best = np.minimum(best, prim.distance(pts))
    return float(best[0]) if scalar else best


def grid_patch(domain: GridDomain, index, mode: str = "masked"):
    """The 12 lattice neighbors of `index` within the 2h disk, canonical order.

    In "strict" mode the index must be interior (at least 2 cells from every
    boundary) and a DomainError is raised otherwise.  In "masked" mode any
    in-bounds index is accepted and off-grid slots come back as None.
    """
    i, j = index
    if not domain.in_bounds(i, j):
        raise DomainError(f"index ({i}, {j}) outside {domain.nx}x{domain.ny} grid")
    if mode == "strict":
        if not (2 <= i < domain.nx - 2 and 2 <= j < domain.ny - 2):
            raise DomainError(f"index ({i}, {j}) is not interior (needs 2-cell margin)")
        return [(i + di, j + dj) for di, dj in PATCH_OFFSETS]
    if mode != "masked":
        raise DomainError(f"unknown patch mode {mode!r}")
    return [
        (i + di, j + dj) if domain.in_bounds(i + di, j + dj) else None
        for di, dj in PATCH_OFFSETS
    ]


@dataclass(frozen=True)
class DistanceField:
    """One non-negative value per grid point; +inf marks unreached points."""

    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.domain.nx, self.domain.ny):
            raise DomainError(
                f"values shape {vals.shape} does not match "
                f"{self.domain.nx}x{self.domain.ny} domain"
            )
        if np.isnan(vals).any():
            raise DomainError("distance field contains NaN")
        finite = vals[np.isfinite(vals)]
        if finite.size and finite.min() < 0:
            raise DomainError("distance field contains negative values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def to_csv(self, path):
        """Write `i,j,x,y,u` rows, row-major; +inf serializes as `inf`."""
        h = self.domain.h
        with open(path, "w") as f:
            f.write("i,j,x,y,u\n")
            for i in range(self.domain.nx):
                for j in range(self.domain.ny):
                    u = self.values[i, j]
                    s = "inf" if math.isinf(u) else repr(float(u))
                    f.write(f"{i},{j},{float(i * h)!r},{float(j * h)!r},{s}\n")

    @staticmethod
    def from_csv(path) -> "DistanceField":
        rows = []
        with open(path) as f:
            header = f.readline().strip()
            if header != "i,j,x,y,u":
                raise ParseError(f"unexpected header {header!r}", line=1)
            for ln, line in enumerate(f, start=2):
                if not line.strip():
                    continue
                parts = line.split(",")
                if len(parts) != 5:
                    raise ParseError("expected 5 comma-separated fields", line=ln)
                try:
                    rows.append((int(parts[0]), int(parts[1]),
                                 float(parts[2]), float(parts[4])))
                except ValueError as e:
                    raise ParseError(str(e), line=ln) from None
        if not rows:
            raise ParseError("empty distance field file", line=1)
        nx = max(r[0] for r in rows) + 1
        ny = max(r[1] for r in rows) + 1
        i0, j0, x0, _ = rows[0]
        i1 = next((r for r in rows if r[0] != i0), None)
        h = (i1[2] - x0) / (i1[0] - i0) if i1 is not None else 1.0
        if h <= 0:
            h = 1.0
        values = np.full((nx, ny), np.inf)
        for i, j, _, u in rows:
            values[i, j] = u
        return DistanceField(GridDomain(nx, ny, h), values)


def read_sources(path) -> SourceSet:
    """Parse the one-primitive-per-line source format.

    Lines: `point x y`, `circle cx cy r`, `polyline x1 y1 x2 y2 ...`.
    Blank lines and lines starting with `#` are ignored.
    """
    prims = []
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, *rest = line.split()
            try:
                nums = [float(t) for t in rest]
            except ValueError:
                raise ParseError(f"non-numeric field in {line!r}", line=ln) from None
            if kind == "point":
                if len(nums) != 2:
                    raise ParseError("point needs exactly 2 numbers", line=ln)
                prims.append(PointSource(*nums))
            elif kind == "circle":
                if len(nums) != 3:
                    raise ParseError("circle needs exactly 3 numbers", line=ln)
                prims.append(CircleSource(*nums))
            elif kind == "polyline":
                if len(nums) < 4 or len(nums) % 2:
                    raise ParseError("polyline needs an even count of >= 4 numbers",
                                     line=ln)
                pts = tuple(zip(nums[0::2], nums[1::2]))
                prims.append(PolylineSource(pts))
            else:
                raise ParseError(f"unknown primitive {kind!r}", line=ln)
    if not prims:
        raise ParseError("no source primitives found", line=1)
    return SourceSet(tuple(prims))


def _primitive_line(prim) -> str:
    if isinstance(prim, PointSource):
        return f"point {prim.x!r} {prim.y!r}"
    if isinstance(prim, CircleSource):
        return f"circle {prim.cx!r} {prim.cy!r} {prim.r!r}"
    if isinstance(prim, PolylineSource):
        flat = " ".join(f"{c!r}" for xy in prim.vertices for c in xy)
        return f"polyline {flat}"
    raise DomainError(f"unknown primitive type {type(prim).__name__}")


def write_sources(sources: SourceSet, path):
    with open(path, "w") as f:
        for prim in sources:
            f.write(_primitive_line(prim) + "\n")


def rasterize_sources(domain: GridDomain, sources: SourceSet,
                      band: float = 3.0) -> dict[int, float]:
    """Grid initialization for continuous sources.

    Every grid point within `band*h` of the source set becomes a boundary
    point carrying its exact distance.  Sources rarely coincide with lattice
    points, and seeding a band of exact values is what lets higher-order
    solvers keep their order through the source singularity.  Falls back to
    the single nearest grid point if the band captures nothing.
    """
    gt = euclidean_gt(sources, domain.all_coords())
    mask = gt <= band * domain.h
    if not mask.any():
        mask[np.argmin(gt)] = True
    return {int(p): float(gt[p]) for p in np.flatnonzero(mask)}
