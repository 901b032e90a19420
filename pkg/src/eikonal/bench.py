"""Error metrics, convergence fits, iso-contours, benchmark reports.

Reports and CSVs are byte-deterministic for fixed seeds; wall times go to a
separate timings file that is excluded from that contract.
"""

from __future__ import annotations

import math
import os
import time
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .engine import MeshTopology, march, solve_grid
from .errors import DomainError
from .grid import DistanceField, GridDomain, PointSource, SourceSet, euclidean_gt
from .mesh import TriMesh, make_sphere, perturb_vertices, sphere_gt_field
from .neural import make_solver


def relative_errors(u, u_gt, exclusion: float = 0.0):
    """(L1, Linf) of |(u - u_gt)/u_gt| over points with u_gt > exclusion.

    Accepts two DistanceFields on the same domain or two plain arrays
    (per-vertex mesh fields).  The exclusion radius keeps source
    singularities (u_gt -> 0) out of the relative error.
    """
    if isinstance(u, DistanceField) or isinstance(u_gt, DistanceField):
        if not (isinstance(u, DistanceField) and isinstance(u_gt, DistanceField)):
            raise DomainError("mixed field/array comparison")
        if u.domain != u_gt.domain:
            raise DomainError("fields live on different domains")
        a, b = u.values, u_gt.values
    else:
        a, b = np.asarray(u, dtype=np.float64), np.asarray(u_gt, dtype=np.float64)
        if a.shape != b.shape:
            raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    mask = b > exclusion
    if not mask.any():
        raise DomainError("exclusion radius removed every point")
    rel = np.abs((a[mask] - b[mask]) / b[mask])
    return float(rel.mean()), float(rel.max())


def fit_order(pairs):
    """Least-squares slope/intercept of log eps against log h: eps ~ C h^r."""
    pts = [(float(h), float(e)) for h, e in pairs]
    if len(pts) < 2:
        raise DomainError("order fit needs at least 2 (h, eps) pairs")
    if any(h <= 0 or e <= 0 for h, e in pts):
        raise DomainError("order fit needs positive h and eps")
    logh = np.log([h for h, _ in pts])
    loge = np.log([e for _, e in pts])
    r, intercept = np.polyfit(logh, loge, 1)
    return float(r), float(np.exp(intercept))


# ---------------------------------------------------------------------------
# Iso-contours

# Cell corners: A=(i,j) B=(i+1,j) C=(i+1,j+1) D=(i,j+1); bit k set = corner
# below the level.  Entries are pairs of cell-edge names to connect.
_SQUARE_CASES = {
    1: [("AB", "AD")], 2: [("AB", "BC")], 4: [("BC", "DC")], 8: [("DC", "AD")],
    3: [("AD", "BC")], 12: [("AD", "BC")],
    6: [("AB", "DC")], 9: [("AB", "DC")],
    7: [("AD", "DC")], 14: [("AB", "AD")],
    13: [("AB", "BC")], 11: [("BC", "DC")],
}


def _chain_segments(segments, coords):
    """Merge segments (pairs of point keys) into maximal polylines.

    Endpoints are dictionary keys computed once per crossing, so shared
    segment ends match exactly and chains never break on round-off.
    """
    adj = defaultdict(list)
    for a, b in segments:
        adj[a].append(b)
        adj[b].append(a)
    used = set()

    def walk(start):
        path = [start]
        while True:
            here = path[-1]
            step = None
            for nxt in adj[here]:
                key = (here, nxt) if here <= nxt else (nxt, here)
                if key not in used:
                    step = (nxt, key)
                    break
            if step is None:
                return path
            used.add(step[1])
            path.append(step[0])

    polylines = []
    ends = sorted(k for k, v in adj.items() if len(v) == 1)
    for k in ends:
        if any(((k, n) if k <= n else (n, k)) not in used for n in adj[k]):
            path = walk(k)
            if len(path) > 1:
                polylines.append(np.array([coords[p] for p in path]))
    for k in sorted(adj):
        if any(((k, n) if k <= n else (n, k)) not in used for n in adj[k]):
            path = walk(k)
            if len(path) > 1:
                polylines.append(np.array([coords[p] for p in path]))
    return polylines


def grid_isolines(u: DistanceField, levels):
    """Marching-squares contours: {level: [(k, 2) xy polylines]}."""
    U = u.values
    h = u.domain.h
    nx, ny = u.domain.nx, u.domain.ny
    out = {}
    for level in levels:
        level = float(level)
        below = U < level
        finite = np.isfinite(U)
        coords, segments = {}, []

        def crossing(i0, j0, i1, j1, key):
            if key in coords:
                return key
            a, b = U[i0, j0], U[i1, j1]
            t = (level - a) / (b - a)
            coords[key] = ((i0 + t * (i1 - i0)) * h, (j0 + t * (j1 - j0)) * h)
            return key

        for i in range(nx - 1):
            for j in range(ny - 1):
                if not (finite[i, j] and finite[i + 1, j]
                        and finite[i + 1, j + 1] and finite[i, j + 1]):
                    continue
                mask = (below[i, j] | (below[i + 1, j] << 1)
                        | (below[i + 1, j + 1] << 2) | (below[i, j + 1] << 3))
                if mask in (0, 15):
                    continue
                if mask in (5, 10):
                    center_below = (U[i, j] + U[i + 1, j] + U[i + 1, j + 1]
                                    + U[i, j + 1]) / 4.0 < level
                    if mask == 5:
                        pairs = ([("AB", "BC"), ("DC", "AD")] if center_below
                                 else [("AB", "AD"), ("BC", "DC")])
                    else:
                        pairs = ([("AB", "AD"), ("BC", "DC")] if center_below
                                 else [("AB", "BC"), ("DC", "AD")])
                else:
                    pairs = _SQUARE_CASES[int(mask)]
                name_to_key = {
                    "AB": lambda: crossing(i, j, i + 1, j, ("x", i, j)),
                    "DC": lambda: crossing(i, j + 1, i + 1, j + 1, ("x", i, j + 1)),
                    "AD": lambda: crossing(i, j, i, j + 1, ("y", i, j)),
                    "BC": lambda: crossing(i + 1, j, i + 1, j + 1, ("y", i + 1, j)),
                }
                for e1, e2 in pairs:
                    segments.append((name_to_key[e1](), name_to_key[e2]()))
        out[level] = _chain_segments(segments, coords)
    return out


def mesh_isolines(mesh: TriMesh, values, levels):
    """Per-triangle crossings chained over edges: {level: [(k, 3) polylines]}."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (mesh.num_vertices,):
        raise DomainError("field length does not match vertex count")
    verts = mesh.vertices
    out = {}
    for level in levels:
        level = float(level)
        below = vals < level
        coords, segments = {}, []

        def crossing(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in coords:
                t = (level - vals[key[0]]) / (vals[key[1]] - vals[key[0]])
                coords[key] = tuple(verts[key[0]] + t * (verts[key[1]] - verts[key[0]]))
            return key

        for fa, fb, fc in mesh.faces:
            if not (np.isfinite(vals[fa]) and np.isfinite(vals[fb])
                    and np.isfinite(vals[fc])):
                continue
            hits = [(u, v) for u, v in ((fa, fb), (fb, fc), (fc, fa))
                    if below[u] != below[v]]
            if len(hits) == 2:
                segments.append((crossing(*hits[0]), crossing(*hits[1])))
        out[level] = _chain_segments(segments, coords)
    return out


def extract_isolines(target, levels):
    """Dispatch: a DistanceField or a (mesh, per-vertex values) pair."""
    if isinstance(target, DistanceField):
        return grid_isolines(target, levels)
    mesh, values = target
    return mesh_isolines(mesh, values, levels)


# ---------------------------------------------------------------------------
# Benchmark runner


def two_point_sources() -> SourceSet:
    """The classic two-point benchmark on the unit square."""
    return SourceSet((PointSource(0.25, 0.5), PointSource(0.75, 0.5)))


DEFAULT_H = (1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Study setup.

    Convergence studies seed exact values inside a fixed physical radius of
    the sources (init_radius on grids, geodesic cap_radius on spheres) and
    mask errors within exclusion_factor*h.  An h-proportional seed region
    would leak the source cone singularity into every level as an
    h*log(1/h) term and drag fitted orders well below their textbook
    values; a fixed region keeps fmm1 at ~1 and fmm2 at ~2.
    """

    benchmark: str                       # two-point | sphere | noise
    solvers: tuple
    out_dir: str
    seed: int = 0
    h_list: tuple = DEFAULT_H            # two-point
    init_radius: float = 0.1             # two-point exact-seed radius (physical)
    exclusion_factor: float = 3.0        # error mask, in units of h
    iso_levels: tuple = (0.1, 0.2, 0.3, 0.4)
    sphere_levels: tuple = (2, 3, 4, 5)  # sphere / noise
    cap_radius: float = 0.3              # sphere exact-seed cap (geodesic radius)
    noise_sigmas: tuple = (0.0, 0.005, 0.01)  # noise, fraction of bbox diagonal
    noise_level: int = 4                 # subdivision level the noise study uses
    sphere_iso_levels: tuple = (0.5, 1.0, 1.5, 2.0, 2.5)


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(str(c) for c in row) + "\n")


def _isoline_rows(series, isolines, dim):
    rows = []
    for level in sorted(isolines):
        for p, poly in enumerate(isolines[level]):
            tag = f"{series}/{p}"
            for pt in poly:
                rows.append([tag, _fmt(level)] + [_fmt(c) for c in pt[:dim]])
    return rows


def _solve_timed(fn):
    t0 = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - t0


def run_benchmark(config: BenchmarkConfig) -> dict:
    """Run one benchmark; writes report.txt, errors/ooa/isolines/timings CSVs.

    Everything except timings.csv is byte-identical across reruns with the
    same config (wall clock is inherently non-reproducible).
    """
    os.makedirs(config.out_dir, exist_ok=True)
    if config.benchmark == "two-point":
        summary = _two_point_study(config)
    elif config.benchmark in ("sphere", "noise"):
        summary = _sphere_study(config, noise=config.benchmark == "noise")
    else:
        raise DomainError(f"unknown benchmark {config.benchmark!r}")
    _write_report(config, summary)
    return summary


def _two_point_study(config) -> dict:
    sources = two_point_sources()
    err_rows, ooa_rows, iso_rows, time_rows = [], [], [], []
    solvers = {}
    for name in config.solvers:
        solver = make_solver(name)
        series = []
        errors = {}
        for h in config.h_list:
            n = int(round(1.0 / h)) + 1
            domain = GridDomain(n, n, h)
            u, dt = _solve_timed(
                lambda: solve_grid(domain, sources, solver,
                                   band=config.init_radius / h))
            gt = DistanceField(
                domain, euclidean_gt(sources, domain.all_coords())
                .reshape(n, n))
            l1, linf = relative_errors(u, gt, exclusion=config.exclusion_factor * h)
            case = f"h={_fmt(h)}"
            errors[case] = (l1, linf)
            series.append((h, l1))
            err_rows.append([name, case, _fmt(l1), _fmt(linf)])
            time_rows.append([name, case, repr(dt)])
            if abs(h - 1.0 / 50.0) < 1e-12:
                iso = grid_isolines(u, config.iso_levels)
                iso_rows.extend(_isoline_rows(name, iso, dim=2))
        r, c = fit_order(series) if len(series) >= 2 else (math.nan, math.nan)
        ooa_rows.append([name, _fmt(r), _fmt(c)])
        solvers[name] = {"errors": errors, "order": r, "constant": c,
                         "series": series}
    files = _write_files(config, err_rows, ooa_rows, iso_rows, time_rows,
                         iso_header="series,level,x,y")
    return {"benchmark": config.benchmark, "solvers": solvers, "files": files}


def _cap_seeds(gt, cap: float) -> dict:
    """Exact seeds for every vertex within geodesic radius cap of the pole."""
    return {int(v): float(gt[v]) for v in np.nonzero(gt <= cap)[0]}


def _sphere_study(config, noise: bool) -> dict:
    err_rows, ooa_rows, iso_rows, time_rows = [], [], [], []
    meshes = {L: make_sphere(L) for L in config.sphere_levels}
    gts = {L: sphere_gt_field(m, 0) for L, m in meshes.items()}
    solvers = {}
    for name in config.solvers:
        solver = make_solver(name)
        series = []
        errors = {}
        for L in config.sphere_levels:
            mesh = meshes[L]
            h = mesh.median_edge_length()
            seeds = _cap_seeds(gts[L], config.cap_radius)
            u, dt = _solve_timed(
                lambda: march(MeshTopology(mesh), solver, seeds).values)
            l1, linf = relative_errors(u, gts[L],
                                       exclusion=config.exclusion_factor * h)
            case = f"L={L}"
            errors[case] = (l1, linf)
            series.append((h, l1))
            err_rows.append([name, case, _fmt(l1), _fmt(linf)])
            time_rows.append([name, case, repr(dt)])
            if L == max(config.sphere_levels):
                iso = mesh_isolines(mesh, u, config.sphere_iso_levels)
                iso_rows.extend(_isoline_rows(name, iso, dim=3))
        r, c = fit_order(series) if len(series) >= 2 else (math.nan, math.nan)
        solvers[name] = {"errors": errors, "order": r, "constant": c,
                         "series": series}
        ooa_rows.append([name, _fmt(r), _fmt(c)])
        if noise:
            L = config.noise_level
            base = meshes[L] if L in meshes else make_sphere(L)
            diag = base.bounding_box_diagonal()
            excl = config.exclusion_factor * base.median_edge_length()
            gt = gts.get(L)
            if gt is None:
                gt = sphere_gt_field(base, 0)
            seeds = _cap_seeds(gt, config.cap_radius)
            for sigma in config.noise_sigmas:
                if sigma == 0.0:
                    mesh = base
                else:
                    mesh = perturb_vertices(base, sigma * diag,
                                            seed=config.seed + int(sigma * 1e6))
                u, dt = _solve_timed(
                    lambda: march(MeshTopology(mesh), solver, seeds).values)
                l1, linf = relative_errors(u, gt, exclusion=excl)
                case = f"L={L}:sigma={_fmt(sigma)}"
                errors[case] = (l1, linf)
                err_rows.append([name, case, _fmt(l1), _fmt(linf)])
                time_rows.append([name, case, repr(dt)])
    files = _write_files(config, err_rows, ooa_rows, iso_rows, time_rows,
                         iso_header="series,level,x,y,z")
    return {"benchmark": config.benchmark, "solvers": solvers, "files": files}


def _write_files(config, err_rows, ooa_rows, iso_rows, time_rows, iso_header):
    paths = {
        "errors": os.path.join(config.out_dir, "errors.csv"),
        "ooa": os.path.join(config.out_dir, "ooa.csv"),
        "isolines": os.path.join(config.out_dir, "isolines.csv"),
        "timings": os.path.join(config.out_dir, "timings.csv"),
        "report": os.path.join(config.out_dir, "report.txt"),
    }
    _write_csv(paths["errors"], "solver,case,l1,linf", err_rows)
    _write_csv(paths["ooa"], "solver,order,constant", ooa_rows)
    _write_csv(paths["isolines"], iso_header, iso_rows)
    _write_csv(paths["timings"], "solver,case,seconds", time_rows)
    return paths


def _write_report(config, summary):
    lines = [
        "# benchmark report",
        f"benchmark: {config.benchmark}",
        f"seed: {config.seed}",
        f"solvers: {','.join(config.solvers)}",
    ]
    if config.benchmark == "two-point":
        lines.append(f"h: {','.join(_fmt(h) for h in config.h_list)}")
        lines.append(f"init_radius: {_fmt(config.init_radius)}")
        lines.append(f"exclusion_factor: {_fmt(config.exclusion_factor)}")
    else:
        lines.append(
            f"sphere_levels: {','.join(str(L) for L in config.sphere_levels)}")
        lines.append(f"cap_radius: {_fmt(config.cap_radius)}")
        lines.append(f"exclusion_factor: {_fmt(config.exclusion_factor)}")
        if config.benchmark == "noise":
            lines.append(f"noise_level: {config.noise_level}")
            lines.append(
                f"noise_sigmas: {','.join(_fmt(s) for s in config.noise_sigmas)}")
    lines.append("")
    lines.append("## relative errors")
    lines.append("solver | case | L1 | Linf")
    for name in config.solvers:
        info = summary["solvers"][name]
        for case, (l1, linf) in info["errors"].items():
            lines.append(f"{name} | {case} | {_fmt(l1)} | {_fmt(linf)}")
    lines.append("")
    lines.append("## fitted order")
    lines.append("solver | order | constant")
    for name in config.solvers:
        info = summary["solvers"][name]
        lines.append(f"{name} | {_fmt(info['order'])} | {_fmt(info['constant'])}")
    lines.append("")
    with open(summary["files"]["report"], "w") as f:
        f.write("\n".join(lines))
