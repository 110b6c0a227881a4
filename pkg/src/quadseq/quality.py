"""Rule-based mesh screening: fractured seams, face aspect ratio, face count."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

from .mesh import Mesh, MeshError, connected_components

RULES = ("face_count", "aspect", "fracture")


@dataclass(frozen=True)
class FilterConfig:
    tau_vtx_min: int = 16
    tau_weld: float = 1e-4  # fraction of the bounding box diagonal
    tau_edge_delta: int = 4
    aspect_max: float = 8.0
    face_min: int = 500
    face_max: int = 20000
    rules: tuple[str, ...] = RULES

    def __post_init__(self):
        if min(self.tau_vtx_min, self.tau_weld, self.tau_edge_delta, self.aspect_max, self.face_min) <= 0:
            raise ValueError("filter thresholds must be positive")
        if self.face_min >= self.face_max:
            raise ValueError("face_min must be below face_max")
        unknown = set(self.rules) - set(RULES)
        if unknown:
            raise ValueError(f"unknown filter rules: {sorted(unknown)}")
        object.__setattr__(self, "rules", tuple(self.rules))

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown filter config keys: {sorted(extra)}")
        d = dict(d)
        if "rules" in d:
            d["rules"] = tuple(d["rules"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "FilterConfig":
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(data.get("filter", data))


@dataclass
class FilterVerdict:
    passed: bool
    rules: dict[str, bool]
    fracture: bool
    component_count: int
    max_aspect: float
    face_count: int
    notes: list[str] = field(default_factory=list)

    @property
    def failed_rules(self) -> list[str]:
        return [r for r, ok in self.rules.items() if not ok]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["failed_rules"] = self.failed_rules
        if not np.isfinite(d["max_aspect"]):
            d["max_aspect"] = None
        return d


def _merge_vertices(mesh: Mesh, groups: np.ndarray) -> Mesh:
    """Collapse vertices by group label; faces losing corners shrink or vanish, unused vertices go."""
    _, first, label = np.unique(groups, return_index=True, return_inverse=True)
    label = label.reshape(-1)
    verts = mesh.vertices[first]
    faces = []
    for f in mesh.faces:
        g = [int(label[i]) for i in f]
        ring = [x for k, x in enumerate(g) if x != g[k - 1]] if len(set(g)) < len(g) else g
        if len(set(ring)) == len(ring) and len(ring) >= 3:
            faces.append(tuple(ring))
    used = sorted({i for f in faces for i in f})
    remap = {old: new for new, old in enumerate(used)}
    return Mesh(verts[used] if used else np.zeros((0, 3)), tuple(tuple(remap[i] for i in f) for f in faces))


def preprocess(mesh: Mesh) -> Mesh:
    """Merge bitwise-identical vertices and drop vertices no face uses."""
    if mesh.n_vertices == 0:
        return mesh
    _, groups = np.unique(mesh.vertices, axis=0, return_inverse=True)
    return _merge_vertices(mesh, groups.reshape(-1))


def weld(mesh: Mesh, distance: float) -> Mesh:
    """Merge every cluster of vertices linked by gaps of at most ``distance``."""
    n = mesh.n_vertices
    if n == 0:
        return mesh
    pairs = cKDTree(mesh.vertices).query_pairs(distance, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = _cc(g, directed=False)
    return _merge_vertices(mesh, labels)


def edge_count(mesh: Mesh) -> int:
    return mesh.adjacency.n_edges


def is_manifold(mesh: Mesh) -> bool:
    """Closed 2-manifold test: every edge has exactly two faces and every vertex star is one fan.

    Boundary edges count as non-manifold here so that open seams reach the weld test.
    """
    adj = mesh.adjacency
    if adj.n_edges == 0 or np.any(adj.counts != 2):
        return False
    # corner graph: the two corners of a vertex on either side of an edge are linked
    fa, arity = mesh.face_array, mesh.arity
    F = len(fa)
    slot = np.arange(4)[None, :]
    nxt = np.where(slot + 1 < arity[:, None], slot + 1, 0)
    valid = slot < arity[:, None]
    f_idx, k_idx = np.nonzero(valid)
    k2 = nxt[f_idx, k_idx]
    lo_first = fa[f_idx, k_idx] < fa[f_idx, k2]
    lo_corner = 4 * f_idx + np.where(lo_first, k_idx, k2)
    hi_corner = 4 * f_idx + np.where(lo_first, k2, k_idx)
    order = np.argsort(adj.face_edges[f_idx, k_idx], kind="stable")
    lo_corner, hi_corner = lo_corner[order].reshape(-1, 2), hi_corner[order].reshape(-1, 2)
    links = np.concatenate([lo_corner, hi_corner])
    g = coo_matrix((np.ones(len(links)), (links[:, 0], links[:, 1])), shape=(4 * F, 4 * F))
    _, labels = _cc(g, directed=False)
    corner_vertex = fa[valid]
    corner_label = labels.reshape(F, 4)[valid]
    nv = mesh.n_vertices
    lo_label = np.full(nv, np.iinfo(np.int64).max)
    hi_label = np.full(nv, -1)
    np.minimum.at(lo_label, corner_vertex, corner_label)
    np.maximum.at(hi_label, corner_vertex, corner_label)
    used = hi_label >= 0
    return bool(np.all(lo_label[used] == hi_label[used]))


def detect_fracture(mesh: Mesh, cfg: FilterConfig = FilterConfig()) -> bool:
    """Test-weld every sizable non-manifold component and flag edge loss without face loss."""
    clean = preprocess(mesh)
    if clean.n_faces == 0:
        return False
    threshold = cfg.tau_weld * clean.bbox_diagonal()
    for comp in connected_components(clean):
        if comp.n_vertices < cfg.tau_vtx_min:
            continue
        if is_manifold(comp):
            continue
        e_before, f_before = edge_count(comp), comp.n_faces
        welded = weld(comp, threshold)
        e_after, f_after = edge_count(welded), welded.n_faces
        if e_before - e_after > cfg.tau_edge_delta and f_before == f_after:
            return True
    return False


class DegenerateFaceError(MeshError):
    pass


def face_aspect_ratios(mesh: Mesh) -> np.ndarray:
    fa = mesh.face_array
    if len(fa) == 0:
        return np.zeros(0)
    v = mesh.vertices
    nxt = np.where(np.arange(4)[None, :] + 1 < mesh.arity[:, None], np.arange(1, 5) % 4, 0)
    valid = np.arange(4)[None, :] < mesh.arity[:, None]
    a = v[np.where(valid, fa, 0)]
    b = v[np.take_along_axis(np.where(valid, fa, 0), nxt, axis=1)]
    lengths = np.linalg.norm(b - a, axis=2)
    longest = np.where(valid, lengths, -np.inf).max(axis=1)
    shortest = np.where(valid, lengths, np.inf).min(axis=1)
    if np.any(shortest == 0):
        bad = int(np.nonzero(shortest == 0)[0][0])
        raise DegenerateFaceError(f"face {bad} has a zero-length edge")
    return longest / shortest


def check_aspect_ratio(mesh: Mesh, aspect_max: float) -> tuple[bool, float]:
    """Longest over shortest edge, per face; fails if any face exceeds ``aspect_max``."""
    ratios = face_aspect_ratios(mesh)
    worst = float(ratios.max()) if len(ratios) else 1.0
    return worst <= aspect_max, worst


def run_filter(mesh: Mesh, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    rules: dict[str, bool] = {}
    notes = []
    if "face_count" in cfg.rules:
        rules["face_count"] = cfg.face_min <= mesh.n_faces <= cfg.face_max
    try:
        aspect_ok, worst = check_aspect_ratio(mesh, cfg.aspect_max)
    except DegenerateFaceError as exc:
        aspect_ok, worst = False, float("inf")
        notes.append(str(exc))
    if "aspect" in cfg.rules:
        rules["aspect"] = aspect_ok
    fracture = detect_fracture(mesh, cfg) if "fracture" in cfg.rules else False
    if "fracture" in cfg.rules:
        rules["fracture"] = not fracture
    return FilterVerdict(
        passed=all(rules.values()),
        rules=rules,
        fracture=fracture,
        component_count=len(connected_components(mesh)),
        max_aspect=worst,
        face_count=mesh.n_faces,
        notes=notes,
    )
