"""Command-line front end.

Heavy imports happen inside subcommand handlers so --threads can cap the
BLAS pool through the environment before numpy loads.  Exit codes: 0 ok,
1 runtime failure (single-line diagnostic on stderr), 2 flag errors.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_threads_env(argv):
    threads = None
    for k, a in enumerate(argv):
        if a == "--threads" and k + 1 < len(argv):
            threads = argv[k + 1]
        elif a.startswith("--threads="):
            threads = a.split("=", 1)[1]
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _parse_config_file(path) -> dict:
    """`key = value` lines; keys use flag names, values parsed as int/float/str."""
    from .errors import ParseError

    out = {}
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ParseError(f"expected 'key = value', got {line!r}",
                                     line=ln)
                key, value = parts
            key = key.strip().replace("-", "_")
            value = value.strip()
            for cast in (int, float):
                try:
                    value = cast(value)
                    break
                except ValueError:
                    continue
            out[key] = value
    return out


def _floats(text) -> tuple:
    return tuple(float(t) for t in str(text).split(",") if t != "")


def _ints(text) -> tuple:
    return tuple(int(t) for t in str(text).split(",") if t != "")


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_solve_grid(args) -> int:
    from .engine import solve_grid
    from .grid import GridDomain, read_sources
    from .neural import make_solver

    nx = args.nx or args.n
    ny = args.ny or args.n
    domain = GridDomain(nx, ny, args.h)
    u = solve_grid(domain, read_sources(args.sources), make_solver(args.solver),
                   band=args.band)
    u.to_csv(args.out)
    print(f"wrote {args.out} ({domain.nx}x{domain.ny}, h={domain.h})")
    return 0


def cmd_solve_mesh(args) -> int:
    from .engine import solve_mesh
    from .mesh import load_mesh_path, write_vertex_field
    from .neural import make_solver

    mesh = load_mesh_path(args.mesh)
    values = solve_mesh(mesh, args.source, make_solver(args.solver))
    write_vertex_field(values, args.out)
    print(f"wrote {args.out} ({mesh.num_vertices} vertices)")
    return 0


def cmd_gen_data(args) -> int:
    from .data import (
        gen_grid_dataset,
        gen_mesh_dataset,
        planar_training_pairs,
        save_dataset,
        sphere_training_pairs,
    )

    if args.kind == "grid":
        examples = gen_grid_dataset(args.count, seed=args.seed)
    else:
        pairs = sphere_training_pairs(levels=args.sphere_levels, seed=args.seed)
        pairs += planar_training_pairs(count=args.planes, seed=args.seed + 1)
        examples = gen_mesh_dataset(args.count, pairs, seed=args.seed,
                                    augment=not args.no_augment)
    save_dataset(examples, args.out, seed=args.seed, meta={"kind": args.kind})
    print(f"wrote {args.out} ({len(examples)} examples)")
    return 0


def cmd_train(args) -> int:
    from .data import load_dataset, to_training_arrays
    from .errors import DomainError
    from .net import TrainConfig, grid_spec, mesh_spec, save_weights, train

    examples, _header = load_dataset(args.data)
    kinds = {ex.kind for ex in examples}
    if kinds != {args.arch}:
        raise DomainError(
            f"dataset holds {sorted(kinds)} examples, --arch is {args.arch}")
    dataset = to_training_arrays(examples)
    spec = grid_spec() if args.arch == "grid" else mesh_spec()
    cfg = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, max_epochs=args.epochs,
        patience=args.patience, val_fraction=args.val_fraction,
        lr_decay=args.lr_decay)
    weights, history = train(dataset, spec, cfg, seed=args.seed)
    save_weights(weights, args.out)
    if args.history:
        with open(args.history, "w") as f:
            f.write("epoch,train_mse,val_mse\n")
            for epoch, tr, va in history:
                f.write(f"{epoch},{float(tr)!r},{float(va)!r}\n")
    best = min(h[2] for h in history)
    print(f"wrote {args.out} (epochs={history[-1][0]}, best_val_mse={best!r})")
    return 0


def _benchmark_config(args, h_list=None, sphere_levels=None):
    from .bench import DEFAULT_H, BenchmarkConfig

    kw = {}
    if h_list is not None:
        kw["h_list"] = h_list
    elif args.h_list:
        kw["h_list"] = _floats(args.h_list)
    if sphere_levels is not None:
        kw["sphere_levels"] = sphere_levels
    elif args.sphere_levels:
        kw["sphere_levels"] = _ints(args.sphere_levels)
    if args.noise_sigmas:
        kw["noise_sigmas"] = _floats(args.noise_sigmas)
    return BenchmarkConfig(
        benchmark=args.benchmark,
        solvers=tuple(args.solvers.split(",")),
        out_dir=args.out_dir,
        seed=args.seed,
        init_radius=args.init_radius,
        cap_radius=args.cap_radius,
        **kw,
    )


def cmd_eval(args) -> int:
    from .bench import run_benchmark

    summary = run_benchmark(_benchmark_config(args))
    for name, info in summary["solvers"].items():
        print(f"{name}: order={info['order']!r}")
    print(f"report: {summary['files']['report']}")
    return 0


def cmd_ooa(args) -> int:
    from .bench import run_benchmark

    if args.benchmark == "two-point":
        h_list = tuple(1.0 / 25.0 / 2 ** k for k in range(args.levels))
        config = _benchmark_config(args, h_list=h_list)
    else:
        config = _benchmark_config(
            args, sphere_levels=tuple(range(2, 2 + args.levels)))
    summary = run_benchmark(config)
    for name, info in summary["solvers"].items():
        print(f"{name}: order={info['order']!r} constant={info['constant']!r}")
    print(f"series: {summary['files']['errors']}")
    return 0


def cmd_isolines(args) -> int:
    from .bench import _isoline_rows, _write_csv, grid_isolines, mesh_isolines
    from .errors import DomainError
    from .grid import DistanceField
    from .mesh import load_mesh_path, read_vertex_field

    levels = _floats(args.levels)
    if args.mesh:
        if not args.field:
            raise DomainError("--mesh needs --field with per-vertex values")
        mesh = load_mesh_path(args.mesh)
        iso = mesh_isolines(mesh, read_vertex_field(args.field), levels)
        header, dim = "series,level,x,y,z", 3
    else:
        if not args.field:
            raise DomainError("--field is required")
        iso = grid_isolines(DistanceField.from_csv(args.field), levels)
        header, dim = "series,level,x,y", 2
    _write_csv(args.out, header, _isoline_rows(args.series, iso, dim=dim))
    count = sum(len(p) for p in iso.values())
    print(f"wrote {args.out} ({count} polylines over {len(levels)} levels)")
    return 0


def cmd_make_sphere(args) -> int:
    from .mesh import make_sphere, perturb_vertices, save_off

    mesh = make_sphere(args.level)
    if args.noise > 0:
        mesh = perturb_vertices(mesh, args.noise * mesh.bounding_box_diagonal(),
                                seed=args.seed)
    save_off(mesh, args.out)
    print(f"wrote {args.out} ({mesh.num_vertices} vertices, "
          f"{mesh.num_faces} faces)")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eikonal",
        description="Distance fields on grids and meshes via front marching "
                    "with axiomatic or learned local solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP threads")
        p.add_argument("--config", default=None,
                       help="key = value defaults file; flags win")

    p = sub.add_parser("solve-grid", help="distance field on a Cartesian grid")
    p.add_argument("--n", type=int, default=51, help="points per side")
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--h", type=float, required=True, help="grid spacing")
    p.add_argument("--sources", required=True, help="source primitives file")
    p.add_argument("--solver", default="fmm1")
    p.add_argument("--band", type=float, default=0.0,
                   help="seed exact values within band*h of the sources")
    p.add_argument("--out", required=True, help="output CSV path")
    common(p)
    p.set_defaults(func=cmd_solve_grid)

    p = sub.add_parser("solve-mesh", help="geodesic distances on a mesh")
    p.add_argument("--mesh", required=True, help="OFF or OBJ file")
    p.add_argument("--source", type=int, nargs="+", required=True,
                   help="source vertex ids")
    p.add_argument("--solver", default="kimmel-sethian")
    p.add_argument("--out", required=True, help="per-vertex output txt")
    common(p)
    p.set_defaults(func=cmd_solve_mesh)

    p = sub.add_parser("gen-data", help="generate a training dataset")
    p.add_argument("--kind", choices=("grid", "mesh"), required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--sphere-levels", type=_ints, default=(2, 3))
    p.add_argument("--planes", type=int, default=8)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--out", required=True, help="JSONL output path")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a local-solver network")
    p.add_argument("--data", required=True, help="JSONL dataset")
    p.add_argument("--arch", choices=("grid", "mesh"), required=True)
    p.add_argument("--out", required=True, help="weights output path")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-decay", type=float, default=1.0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--history", default=None, help="loss history CSV path")
    common(p)
    p.set_defaults(func=cmd_train)

    def bench_flags(p):
        p.add_argument("--solvers", required=True,
                       help="comma list: fmm1,fmm2,kimmel-sethian,dijkstra,"
                            "neural:<weights>")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--init-radius", type=float, default=0.1,
                       help="exact-seed radius around grid sources (physical)")
        p.add_argument("--cap-radius", type=float, default=0.3,
                       help="exact-seed geodesic cap around the sphere pole")
        p.add_argument("--h-list", default=None,
                       help="comma list of grid spacings (two-point)")
        p.add_argument("--sphere-levels", default=None,
                       help="comma list of subdivision levels")
        p.add_argument("--noise-sigmas", default=None,
                       help="comma list, fraction of bounding-box diagonal")

    p = sub.add_parser("eval", help="run a benchmark and write a report")
    p.add_argument("--benchmark", choices=("two-point", "sphere", "noise"),
                   required=True)
    bench_flags(p)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ooa", help="order-of-accuracy study")
    p.add_argument("--benchmark", choices=("two-point", "sphere"),
                   default="two-point")
    p.add_argument("--levels", type=int, default=4,
                   help="number of refinement levels")
    bench_flags(p)
    common(p)
    p.set_defaults(func=cmd_ooa)

    p = sub.add_parser("isolines", help="extract iso-contours from a field")
    p.add_argument("--field", required=True,
                   help="DistanceField CSV (grid) or per-vertex txt (mesh)")
    p.add_argument("--mesh", default=None, help="mesh file for mesh fields")
    p.add_argument("--levels", required=True, help="comma list of levels")
    p.add_argument("--series", default="field", help="series tag in the CSV")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_isolines)

    p = sub.add_parser("make-sphere", help="write an icosphere OFF file")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0,
                   help="vertex jitter, fraction of bounding-box diagonal")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_make_sphere)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads_env(argv)
    parser = build_parser()
    for k, a in enumerate(argv):
        path = None
        if a == "--config" and k + 1 < len(argv):
            path = argv[k + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        if path:
            parser.set_defaults(**_parse_config_file(path))
    args = parser.parse_args(argv)
    from .errors import EikonalError

    try:
        return args.func(args) or 0
    except (EikonalError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
