"""Learned local solvers: normalization pipeline around the networks.

One shared normalization path serves dataset generation and inference, the
dominant source of train/serve skew otherwise.  Estimates are exactly shift-
and scale-equivariant by construction, whatever the weights.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotReady
from .grid_solvers import GridPatchView
from .mesh import MeshPatch
from .net import (
    DEFAULT_SENTINEL,
    NetworkWeights,
    forward,
    load_weights,
    set_forward_pooled,
)


@dataclass(frozen=True)
class NormalizationRecord:
    """Affine transform applied to one patch: subtract bias, multiply scale."""

    bias: float
    scale: float

    def __post_init__(self):
        if not (self.scale > 0):
            raise DomainError(f"scale must be positive, got {self.scale}")

    def apply(self, u):
        return (u - self.bias) * self.scale

    def invert(self, u):
        return u / self.scale + self.bias


def _bias_scale(visited_values: np.ndarray):
    m = float(visited_values.min())
    shifted = visited_values - m
    mean = float(shifted.mean())
    s = 0.5 / mean if mean > 0 else 1.0
    return m, s, shifted


def normalize_grid_patch(patch: GridPatchView, sentinel: float = DEFAULT_SENTINEL):
    """13-vector net input: 12 canonical slots then h, all in normalized units.

    Bias = smallest visited value; scale brings the mean shifted visited
    value to 0.5 (1 when all shifted values are 0).  Unvisited and absent
    slots read the sentinel.  Geometry (h) scales along with values.
    """
    vis = patch.visited
    if not vis.any():
        raise NotReady("patch has no visited member")
    m, s, shifted = _bias_scale(patch.values[vis])
    x = np.full(13, float(sentinel))
    x[:12][vis] = shifted * s
    x[12] = patch.h * s
    return x, NormalizationRecord(bias=m, scale=s)


def normalize_mesh_patch(patch: MeshPatch, sentinel: float = DEFAULT_SENTINEL):
    """(M, 4) net input: relative coordinates then value, normalized units."""
    vis = patch.visited
    if not vis.any():
        raise NotReady("patch has no visited member")
    m, s, shifted = _bias_scale(patch.values[vis])
    X = np.empty((patch.size, 4))
    X[:, :3] = patch.rel * s
    X[:, 3] = float(sentinel)
    X[vis, 3] = shifted * s
    return X, NormalizationRecord(bias=m, scale=s)


def normalize_patch(patch, sentinel: float = DEFAULT_SENTINEL):
    if isinstance(patch, GridPatchView):
        return normalize_grid_patch(patch, sentinel)
    if isinstance(patch, MeshPatch):
        return normalize_mesh_patch(patch, sentinel)
    raise DomainError(f"unknown patch type {type(patch).__name__}")


def estimate(weights: NetworkWeights, patch) -> float:
    """De-normalized network output for one patch (engine clamps it later)."""
    x, rec = normalize_patch(patch, weights.sentinel)
    return rec.invert(forward(weights, x))


class _NeuralSolverBase:
    monotone = False

    def __init__(self, weights: NetworkWeights, kind: str):
        if weights.kind != kind:
            raise DomainError(
                f"{type(self).__name__} needs {kind} weights, got {weights.kind}")
        self.weights = weights
        self.name = f"neural-{kind}"

    def estimate(self, patch) -> float:
        x, rec = normalize_patch(patch, self.weights.sentinel)
        raw = rec.invert(forward(self.weights, x))
        # Same lower clamp the engine applies; keeps raw output non-negative.
        return max(raw, rec.bias)


class NeuralGridSolver(_NeuralSolverBase):
    """Grid MLP as a local solver with per-finalization batched inference."""

    def __init__(self, weights: NetworkWeights):
        super().__init__(weights, "grid")

    def estimate_batch(self, topology, cands, values, visited_mask):
        rows = topology.slot_table[np.asarray(cands, dtype=np.int64)]
        ok = rows >= 0
        safe = np.where(ok, rows, 0)
        vis = ok & visited_mask[safe]
        ready = vis.any(axis=1)
        n = len(rows)
        ests = np.full(n, np.nan)
        vmins = np.full(n, np.inf)
        if not ready.any():
            return ests, ready, vmins
        with np.errstate(invalid="ignore"):
            vals = np.where(vis, values[safe], np.inf)
            m = vals.min(axis=1)
            shifted = np.where(vis, vals - m[:, None], 0.0)
        counts = vis.sum(axis=1)
        means = shifted.sum(axis=1) / np.maximum(counts, 1)
        s = np.where(means > 0, 0.5 / np.where(means > 0, means, 1.0), 1.0)
        X = np.where(vis, shifted * s[:, None], self.weights.sentinel)
        X = np.concatenate([X, (self.topology_h(topology) * s)[:, None]], axis=1)
        out = forward(self.weights, X[ready])
        raw = out / s[ready] + m[ready]
        ests[ready] = np.maximum(raw, m[ready])
        vmins[ready] = m[ready]
        return ests, ready, vmins

    @staticmethod
    def topology_h(topology):
        return topology.domain.h


class NeuralMeshSolver(_NeuralSolverBase):
    """Set network as a local solver with per-finalization batched inference."""

    def __init__(self, weights: NetworkWeights):
        super().__init__(weights, "mesh")

    def estimate_batch(self, topology, cands, values, visited_mask):
        n = len(cands)
        ests = np.full(n, np.nan)
        ready = np.zeros(n, dtype=bool)
        vmins = np.full(n, np.inf)
        mats, recs, keep = [], [], []
        sentinel = self.weights.sentinel
        for i, q in enumerate(cands):
            mem = topology.members[q]
            if mem.size == 0:
                continue
            vis = visited_mask[mem]
            if not vis.any():
                continue
            vals = values[mem]
            m, s, shifted = _bias_scale(vals[vis])
            X = np.empty((len(mem), 4))
            X[:, :3] = topology.rel[q] * s
            X[:, 3] = sentinel
            X[vis, 3] = shifted * s
            mats.append(X)
            recs.append((m, s))
            keep.append(i)
        if not keep:
            return ests, ready, vmins
        starts = np.concatenate([[0], np.cumsum([len(x) for x in mats])[:-1]])
        out = set_forward_pooled(self.weights, np.vstack(mats), starts)
        for j, i in enumerate(keep):
            m, s = recs[j]
            ests[i] = max(out[j] / s + m, m)
            ready[i] = True
            vmins[i] = m
        return ests, ready, vmins


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def apply_rotation(example, rotation: np.ndarray):
    """Rotate a mesh example's member coordinates; values stay untouched."""
    members = np.asarray(example.members, dtype=np.float64)
    rotated = members.copy()
    rotated[:, :3] = members[:, :3] @ np.asarray(rotation).T
    return dataclasses.replace(example, members=rotated)


def mesh_rotation_augment(example, seed: int):
    """Seeded uniformly-random rotation of one mesh training example."""
    if getattr(example, "kind", None) != "mesh":
        raise DomainError("rotation augmentation applies to mesh examples")
    return apply_rotation(example, random_rotation(np.random.default_rng(seed)))


def make_solver(spec: str):
    """Solver factory for CLI/benchmark names.

    Accepts fmm1, fmm2, kimmel-sethian, dijkstra, or neural:<weights-path>.
    """
    from .engine import DijkstraSolver
    from .grid_solvers import FirstOrderSolver, SecondOrderSolver
    from .mesh_solver import KimmelSethianSolver

    if spec == "fmm1":
        return FirstOrderSolver()
    if spec == "fmm2":
        return SecondOrderSolver()
    if spec == "kimmel-sethian":
        return KimmelSethianSolver()
    if spec == "dijkstra":
        return DijkstraSolver()
    if spec.startswith("neural:"):
        weights = load_weights(spec.split(":", 1)[1])
        if weights.kind == "grid":
            return NeuralGridSolver(weights)
        return NeuralMeshSolver(weights)
    raise DomainError(f"unknown solver {spec!r}")
