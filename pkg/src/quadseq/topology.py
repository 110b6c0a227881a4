"""Topological reward terms and geometric evaluation metrics.

Rewards operate on (possibly partial) generated meshes:

* fracture count: boundary faces lying entirely at or below the generation
  frontier, the lowest up-axis coordinate of the last generated face;
* quad rings and lines: chains of quads linked through opposite edges,
  closed (rings) or open (lines).

Geometric metrics are Chamfer / Hausdorff distance between point samples and
the quad ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .mesh import Mesh, MeshError, PointCloud, boundary_faces, sample_point_cloud

AXES = {"x": 0, "y": 1, "z": 2}
FRONTIER_SLACK = 1e-9


def fracture_count(mesh: Mesh, face_order: Sequence[int] | None = None, up_axis: str = "y") -> int:
    """Count boundary faces whose vertices all sit at or below the frontier.

    ``face_order`` is the generation order of the faces (default: storage
    order); only its last entry defines the frontier.
    """
    if mesh.n_faces == 0:
        return 0
    axis = AXES[up_axis]
    if face_order is None:
        last = mesh.n_faces - 1
    else:
        if len(face_order) != mesh.n_faces:
            raise ValueError("face_order must list every face")
        last = int(face_order[-1])
    v = mesh.vertices[:, axis]
    frontier = v[list(mesh.faces[last])].min()
    count = 0
    for f in boundary_faces(mesh):
        if v[list(mesh.faces[f])].max() <= frontier + FRONTIER_SLACK:
            count += 1
    return count


@dataclass
class Walk:
    faces: list[int]
    edges: list[int]
    closed: bool

    def __len__(self):
        return len(self.faces)


def discover_walks(mesh: Mesh, mode: str = "bidirectional") -> list[Walk]:
    if mode not in ("bidirectional", "oneway"):
        raise ValueError(f"unknown walk mode {mode!r}")
    adj = mesh.adjacency
    raw = kernels.discover_walks(
        adj.face_edges, adj.arity, adj.ptr, adj.incident, adj.n_edges, mode == "bidirectional"
    )
    return [Walk(list(f), list(e), bool(r)) for r, f, e in raw]


def discover_rings_and_lines(mesh: Mesh, mode: str = "bidirectional"):
    """Quad rings (closed) and quad lines (open) as lists of face-id lists.

    Each unprocessed edge starts a walk that enters the lowest-id quad on it
    (other than the one just left) and exits through the opposite edge. In
    ``oneway`` mode the walk runs one way only, so results depend on edge
    order; ``bidirectional`` mode also walks backwards from open starts and
    joins both halves, so every chain is found whole from any edge on it.
    Walks stop at triangles, boundaries and edges with more than two faces.
    """
    walks = discover_walks(mesh, mode)
    rings = [w.faces for w in walks if w.closed]
    lines = [w.faces for w in walks if not w.closed]
    return rings, lines


@dataclass
class TopoScore:
    fracture_count: int
    r_frac: float
    l_avg: float
    ring_face_ratio: float
    ring_avg: float
    rings: list[list[int]] = field(repr=False)
    lines: list[list[int]] = field(repr=False)

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def summary(self) -> dict:
        return {
            "c_frac": self.fracture_count,
            "r_frac": self.r_frac,
            "l_avg": self.l_avg,
            "ring_face_ratio": self.ring_face_ratio,
            "ring_avg": self.ring_avg,
            "rings": self.n_rings,
            "lines": self.n_lines,
        }


def topo_score(
    mesh: Mesh,
    face_order: Sequence[int] | None = None,
    up_axis: str = "y",
    mode: str = "bidirectional",
) -> TopoScore:
    c_frac = fracture_count(mesh, face_order, up_axis)
    rings, lines = discover_rings_and_lines(mesh, mode)
    l_avg = sum(len(l) for l in lines) / len(lines) if lines else 0.0
    ring_avg = sum(len(r) for r in rings) / len(rings) if rings else 0.0
    in_ring = {f for r in rings for f in r}
    ratio = len(in_ring) / mesh.n_faces if mesh.n_faces else 0.0
    return TopoScore(
        fracture_count=c_frac,
        r_frac=c_frac / max(1, mesh.n_faces),
        l_avg=l_avg,
        ring_face_ratio=ratio,
        ring_avg=ring_avg,
        rings=rings,
        lines=lines,
    )


def _positions(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        pts = cloud.positions
    else:
        pts = np.asarray(cloud, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        pts = pts[:, :3]
    if len(pts) == 0:
        raise MeshError("point cloud is empty")
    return pts


def _nn_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact distance from each point of ``a`` to its nearest point in ``b``."""
    d, _ = cKDTree(b).query(a, k=1)
    return d


def chamfer_distance(a, b) -> float:
    """Mean of the two directed mean nearest-neighbour distances (positions only)."""
    pa, pb = _positions(a), _positions(b)
    return 0.5 * float(_nn_distances(pa, pb).mean()) + 0.5 * float(_nn_distances(pb, pa).mean())


def hausdorff_distance(a, b) -> float:
    pa, pb = _positions(a), _positions(b)
    return max(float(_nn_distances(pa, pb).max()), float(_nn_distances(pb, pa).max()))


def quad_ratio(mesh: Mesh) -> float:
    if mesh.n_faces == 0:
        raise MeshError("quad ratio of an empty mesh is undefined")
    return mesh.n_quads / mesh.n_faces


@dataclass
class GeoScore:
    chamfer: float
    hausdorff: float
    quad_ratio: float


def geo_score(ref: Mesh, gen: Mesh, n_points: int = 40960, seed: int = 0) -> GeoScore:
    """CD/HD between noise-free surface samples of two meshes, plus the generated quad ratio."""
    a = sample_point_cloud(ref, n_points, noise_scale=0.0, seed=seed)
    b = sample_point_cloud(gen, n_points, noise_scale=0.0, seed=seed + 1)
    return GeoScore(chamfer_distance(a, b), hausdorff_distance(a, b), quad_ratio(gen))
