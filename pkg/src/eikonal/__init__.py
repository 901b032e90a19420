"""Distance fields on Cartesian grids and triangulated surfaces.

A Dijkstra-ordered marching engine advances a front from the sources and
finalizes one point at a time; pluggable local solvers (first/second-order
upwind, a triangle solver, plain Dijkstra, or trained networks) supply the
estimate at each step.
"""

from .bench import (
    BenchmarkConfig,
    extract_isolines,
    fit_order,
    relative_errors,
    run_benchmark,
)
from .data import (
    GridSourceFamily,
    TrainingExample,
    gen_grid_dataset,
    gen_mesh_dataset,
    load_dataset,
    planar_training_pairs,
    save_dataset,
    sphere_training_pairs,
    to_training_arrays,
    triangulated_plane,
)
from .engine import (
    UNVISITED,
    VISITED,
    WAVEFRONT,
    DijkstraSolver,
    FrontState,
    GridTopology,
    MarchResult,
    MeshTopology,
    march,
    solve_grid,
    solve_mesh,
)
from .errors import (
    DegeneratePatchError,
    DomainError,
    EikonalError,
    EngineInvariantError,
    MeshValidationError,
    NotReady,
    ParseError,
    ResourceLimit,
    SolverFault,
    TrainingDiverged,
)
from .grid import (
    PATCH_OFFSETS,
    PATCH_SIZE,
    CircleSource,
    DistanceField,
    GridDomain,
    PointSource,
    PolylineSource,
    SourceSet,
    euclidean_gt,
    grid_patch,
    rasterize_sources,
    read_sources,
    write_sources,
)
from .grid_solvers import (
    FirstOrderSolver,
    GridPatchView,
    SecondOrderSolver,
    solve_first_order,
    solve_second_order,
)
from .mesh import (
    MeshPatch,
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
from .mesh_solver import KimmelSethianSolver, solve_triangle, solve_vertex
from .net import (
    MlpSpec,
    NetworkWeights,
    SetNetSpec,
    TrainConfig,
    backward,
    forward,
    grid_spec,
    init_weights,
    load_weights,
    loss_at,
    mesh_spec,
    save_weights,
    train,
)
from .neural import (
    NeuralGridSolver,
    NeuralMeshSolver,
    NormalizationRecord,
    apply_rotation,
    estimate,
    make_solver,
    mesh_rotation_augment,
    normalize_grid_patch,
    normalize_mesh_patch,
    normalize_patch,
    random_rotation,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
