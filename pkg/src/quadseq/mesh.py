"""Indexed mixed triangle/quad meshes.

A :class:`Mesh` is an immutable pair of a ``(n, 3)`` float vertex array and a
tuple of faces, each face a tuple of 3 or 4 vertex indices with consistent
winding. Everything else in the package consumes and produces this type.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

DEFAULT_NOISE = 0.005
NORMALIZE_BOUND = 0.95


class MeshError(ValueError):
    """Invalid mesh data or an operation that needs geometry the mesh lacks."""


class ObjParseError(MeshError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class FaceArityError(ObjParseError):
    pass


class DegenerateExtentError(MeshError):
    pass


class _FaceArray:
    """Pre-packed faces handed to ``Mesh`` by ``Mesh.from_arrays``."""

    __slots__ = ("array", "arity")

    def __init__(self, array: np.ndarray, arity: np.ndarray):
        self.array = array
        self.arity = arity


def _validate_face_array(fa: np.ndarray, arity: np.ndarray, n: int) -> None:
    valid = np.arange(4)[None, :] < arity[:, None]
    out_of_range = valid & ((fa < 0) | (fa >= n))
    if out_of_range.any():
        fid, k = (int(x) for x in np.argwhere(out_of_range)[0])
        raise MeshError(f"face {fid} index {fa[fid, k]} out of range for {n} vertices")
    same = (fa[:, :, None] == fa[:, None, :]) & valid[:, :, None] & valid[:, None, :]
    rep = np.nonzero(same.sum(axis=(1, 2)) != arity)[0]
    if len(rep):
        fid = int(rep[0])
        raise MeshError(f"face {fid} repeats a vertex: {tuple(fa[fid, : arity[fid]].tolist())}")


class Mesh:
    """Indexed mesh of triangles and quads.

    ``vertices`` is a read-only ``(n, 3)`` float array and ``faces`` a tuple
    of vertex-index tuples. Instances are immutable.
    """

    def __init__(self, vertices, faces):
        verts = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        verts.setflags(write=False)
        if isinstance(faces, _FaceArray):
            fa, arity, tuples = faces.array, faces.arity, None
        else:
            tuples = tuple(tuple(map(int, f)) for f in faces)
            arity = np.fromiter(map(len, tuples), dtype=np.int64, count=len(tuples))
            bad = np.nonzero((arity != 3) & (arity != 4))[0]
            if len(bad):
                fid = int(bad[0])
                raise FaceArityError(f"face {fid} has {arity[fid]} vertices; only 3 or 4 allowed")
            fa = np.array([f if len(f) == 4 else f + (-1,) for f in tuples], dtype=np.int64).reshape(-1, 4)
        _validate_face_array(fa, arity, len(verts))
        fa.setflags(write=False)
        arity.setflags(write=False)
        d = self.__dict__
        d["vertices"] = verts
        d["_face_array"] = fa
        d["_arity"] = arity
        if tuples is not None:
            d["faces"] = tuples

    def __setattr__(self, name, value):
        raise AttributeError("Mesh is immutable")

    @cached_property
    def faces(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(r if r[3] >= 0 else r[:3]) for r in self._face_array.tolist())

    @classmethod
    def from_arrays(cls, vertices, face_array) -> "Mesh":
        """Build from an ``(F, 3)`` or ``(F, 4)`` int array; in a 4-column array ``-1`` in the last column marks a triangle."""
        fa = np.array(face_array, dtype=np.int64)
        if fa.size == 0:
            fa = np.zeros((0, 4), dtype=np.int64)
        if fa.ndim != 2 or fa.shape[1] not in (3, 4):
            raise FaceArityError(f"face array must have 3 or 4 columns, got shape {fa.shape}")
        if fa.shape[1] == 3:
            fa = np.concatenate([fa, np.full((len(fa), 1), -1, dtype=np.int64)], axis=1)
        if np.any(fa[:, :3] < 0):
            raise MeshError("negative vertex index in face array")
        arity = np.where(fa[:, 3] >= 0, 4, 3).astype(np.int64)
        fa[:, 3] = np.where(arity == 4, fa[:, 3], -1)
        return cls(vertices, _FaceArray(fa, arity))

    @classmethod
    def empty(cls) -> "Mesh":
        return cls(np.zeros((0, 3)), ())

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self._face_array)

    @property
    def n_quads(self) -> int:
        return int(np.count_nonzero(self._arity == 4))

    @property
    def n_triangles(self) -> int:
        return int(np.count_nonzero(self._arity == 3))

    @property
    def face_array(self) -> np.ndarray:
        """Faces as a read-only ``(F, 4)`` int array, triangles padded with -1."""
        return self._face_array

    @property
    def arity(self) -> np.ndarray:
        return self._arity

    @cached_property
    def adjacency(self) -> "EdgeAdjacency":
        return EdgeAdjacency(self)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.faces)

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_tris={self.n_triangles}, n_quads={self.n_quads})"


class EdgeAdjacency:
    """Undirected edge table of a mesh.

    Edges are the sorted vertex pairs ``(a, b)`` with ``a < b``, numbered in
    lexicographic order. Edge ``k`` of face ``f`` joins corners ``k`` and
    ``k + 1``; for a quad the opposite of local edge ``k`` is ``k + 2 mod 4``.
    Incident faces of each edge are kept in ascending face id order.
    """

    def __init__(self, mesh: Mesh):
        fa = mesh.face_array
        arity = mesh.arity
        F = len(fa)
        nv = max(mesh.n_vertices, 1)
        if F == 0:
            self.edges = np.zeros((0, 2), dtype=np.int64)
            self.face_edges = np.zeros((0, 4), dtype=np.int64)
            self.ptr = np.zeros(1, dtype=np.int64)
            self.incident = np.zeros(0, dtype=np.int64)
            self.arity = arity
            return
        nxt = np.where(np.arange(4)[None, :] + 1 < arity[:, None], np.arange(1, 5) % 4, 0)
        nxt = np.where(np.arange(4)[None, :] < arity[:, None], nxt, -1)
        a = fa
        b = np.take_along_axis(fa, np.maximum(nxt, 0), axis=1)
        valid = nxt >= 0
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = lo * nv + hi
        flat_keys = keys[valid]
        uniq, inv = np.unique(flat_keys, return_inverse=True)
        self.edges = np.stack([uniq // nv, uniq % nv], axis=1)
        face_edges = np.full((F, 4), -1, dtype=np.int64)
        face_edges[valid] = inv
        self.face_edges = face_edges
        face_ids = np.broadcast_to(np.arange(F)[:, None], (F, 4))[valid]
        order = np.lexsort((face_ids, inv))
        self.incident = face_ids[order].astype(np.int64)
        counts = np.bincount(inv, minlength=len(uniq))
        self.ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.arity = arity

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    @cached_property
    def _index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    def edge_id(self, a: int, b: int) -> int:
        return self._index[(min(a, b), max(a, b))]

    def faces_of(self, edge: int) -> np.ndarray:
        return self.incident[self.ptr[edge] : self.ptr[edge + 1]]

    def is_boundary(self, edge: int) -> bool:
        return self.counts[edge] == 1

    def is_nonmanifold(self, edge: int) -> bool:
        return self.counts[edge] > 2

    def opposite(self, face: int, edge: int) -> int:
        """Edge of quad ``face`` opposite to ``edge``."""
        if self.arity[face] != 4:
            raise MeshError(f"face {face} is not a quad")
        row = self.face_edges[face]
        k = int(np.nonzero(row == edge)[0][0])
        return int(row[(k + 2) % 4])

    def as_dict(self) -> dict[tuple[int, int], list[int]]:
        return {
            (int(a), int(b)): self.faces_of(i).tolist() for i, (a, b) in enumerate(self.edges)
        }


def _parse_index(tok: str, n_vertices: int, lineno: int) -> int:
    head = tok.split("/", 1)[0]
    try:
        i = int(head)
    except ValueError:
        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
    if i > 0:
        return i - 1
    if i < 0:
        return n_vertices + i
    raise ObjParseError("face index 0 is not valid in OBJ", lineno)


def load_obj(path, triangulate_ngons: bool = False) -> Mesh:
    """Read the ``v`` and ``f`` records of a Wavefront OBJ file.

    Faces keep file order and 1-based (or negative, relative) indices become
    0-based. Other records are ignored. Polygons with more than 4 corners
    raise :class:`FaceArityError` unless ``triangulate_ngons`` is set, in
    which case they are fan-triangulated from their first corner.
    """
    verts: list[list[float]] = []
    faces: list[tuple[int, ...]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex record needs 3 coordinates", lineno)
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ObjParseError(f"bad vertex coordinate in {line.strip()!r}", lineno) from None
            elif tag == "f":
                idx = tuple(_parse_index(t, len(verts), lineno) for t in parts[1:])
                for i in idx:
                    if i < 0 or i >= len(verts):
                        raise ObjParseError(f"face index {i + 1} refers to an undefined vertex", lineno)
                if len(set(idx)) != len(idx):
                    raise ObjParseError(f"face repeats a vertex: {line.strip()!r}", lineno)
                if len(idx) < 3:
                    raise FaceArityError(f"face has {len(idx)} vertices", lineno)
                if len(idx) > 4:
                    if not triangulate_ngons:
                        raise FaceArityError(f"face has {len(idx)} vertices; only 3 or 4 allowed", lineno)
                    faces.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
                else:
                    faces.append(idx)
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3), tuple(faces))


def format_obj(mesh: Mesh) -> str:
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in mesh.vertices]
    lines.extend("f " + " ".join(str(i + 1) for i in f) + "\n" for f in mesh.faces)
    return "".join(lines)


def save_obj(mesh: Mesh, path) -> None:
    Path(path).write_bytes(format_obj(mesh).encode("ascii"))


def normalize(mesh: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale its longest side to [-0.95, 0.95]."""
    if mesh.n_vertices == 0:
        raise MeshError("cannot normalize an empty mesh")
    v = mesh.vertices
    if not np.all(np.isfinite(v)):
        raise MeshError("mesh has non-finite coordinates")
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = float((hi - lo).max())
    if extent == 0.0:
        raise DegenerateExtentError("bounding box has zero extent")
    center = (lo + hi) / 2.0
    scale = 2.0 * NORMALIZE_BOUND / extent
    return mesh.with_vertices((v - center) * scale)


def connected_components(mesh: Mesh) -> list[Mesh]:
    """Split into face sets connected through shared vertices.

    Components are ordered by their lowest face id; each keeps its own
    vertices in original relative order. Unreferenced vertices are dropped.
    """
    F = mesh.n_faces
    if F == 0:
        return []
    fa = mesh.face_array
    rows = np.repeat(np.arange(F), 4)
    cols = fa.ravel()
    keep = cols >= 0
    nv = mesh.n_vertices
    # bipartite face/vertex graph: nodes 0..F-1 are faces, F.. are vertices
    g = coo_matrix(
        (np.ones(keep.sum()), (rows[keep], F + cols[keep])), shape=(F + nv, F + nv)
    )
    _, labels = _cc(g, directed=False)
    face_labels = labels[:F]
    seen: dict[int, int] = {}
    for lab in face_labels:
        seen.setdefault(int(lab), len(seen))
    groups: list[list[int]] = [[] for _ in seen]
    for fid, lab in enumerate(face_labels):
        groups[seen[int(lab)]].append(fid)
    return [submesh(mesh, g) for g in groups]


def submesh(mesh: Mesh, face_ids: Iterable[int]) -> Mesh:
    """Mesh made of the given faces, re-indexed over only the vertices they use."""
    faces = [mesh.faces[i] for i in face_ids]
    used = sorted({i for f in faces for i in f})
    remap = {old: new for new, old in enumerate(used)}
    return Mesh(
        mesh.vertices[used] if used else np.zeros((0, 3)),
        tuple(tuple(remap[i] for i in f) for f in faces),
    )


def boundary_faces(mesh: Mesh) -> set[int]:
    """Ids of faces with at least one edge that no other face shares."""
    adj = mesh.adjacency
    if adj.n_edges == 0:
        return set()
    fe = adj.face_edges
    on_boundary = np.zeros(len(fe), dtype=bool)
    single = adj.counts == 1
    valid = fe >= 0
    on_boundary = np.any(valid & single[np.where(valid, fe, 0)], axis=1)
    return set(np.nonzero(on_boundary)[0].tolist())


def face_normals(mesh: Mesh) -> np.ndarray:
    """Unit normals (Newell's method, so quads need not be planar). Zero for degenerate faces."""
    fa = mesh.face_array
    v = mesh.vertices
    n = np.zeros((len(fa), 3))
    for k in range(4):
        cur = fa[:, k]
        nxt = np.where(
            (k + 1 < mesh.arity) & (fa[:, (k + 1) % 4] >= 0), fa[:, (k + 1) % 4], fa[:, 0]
        )
        valid = cur >= 0
        p = v[np.where(valid, cur, 0)]
        q = v[nxt]
        contrib = np.cross(p, q)
        n += np.where(valid[:, None], contrib, 0.0)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norm > 0, n / np.where(norm > 0, norm, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points with unit normals, stored as an ``(n, 6)`` array ``[xyz | nxyz]``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 6)
        if len(pts):
            lens = np.linalg.norm(pts[:, 3:], axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-6):
                raise MeshError("point normals must have unit length")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def positions(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def normals(self) -> np.ndarray:
        return self.points[:, 3:]

    def __len__(self):
        return len(self.points)


def _triangle_pieces(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Triangles used for sampling and the face id each came from. Quads split on (v0, v2)."""
    fa = mesh.face_array
    quads = mesh.arity == 4
    first = fa[:, :3]
    second = fa[quads][:, [0, 2, 3]]
    tris = np.concatenate([first, second])
    owner = np.concatenate([np.arange(len(fa)), np.nonzero(quads)[0]])
    return tris, owner


def sample_point_cloud(
    mesh: Mesh, n: int, noise_scale: float = DEFAULT_NOISE, seed: int = 0
) -> PointCloud:
    """Area-uniform surface samples carrying face normals, with Gaussian position jitter.

    Jitter standard deviation is ``noise_scale`` times the bounding box diagonal.
    """
    if mesh.n_faces == 0:
        raise MeshError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    tris, owner = _triangle_pieces(mesh)
    v = mesh.vertices
    a, b, c = v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = float(areas.sum())
    if not total > 0.0:
        raise MeshError("mesh has zero total area")
    normals = face_normals(mesh)[owner]
    # degenerate pieces of an otherwise fine quad fall back to their own normal
    bad = np.linalg.norm(normals, axis=1) == 0
    if np.any(bad):
        own = np.cross(b - a, c - a)
        normals[bad] = own[bad] / np.maximum(np.linalg.norm(own[bad], axis=1, keepdims=True), 1e-300)
    pick = rng.choice(len(tris), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    pts = (
        (1 - r1)[:, None] * a[pick]
        + (r1 * (1 - r2))[:, None] * b[pick]
        + (r1 * r2)[:, None] * c[pick]
    )
    if noise_scale > 0:
        pts = pts + rng.normal(0.0, noise_scale * mesh.bbox_diagonal(), size=pts.shape)
    return PointCloud(np.concatenate([pts, normals[pick]], axis=1))


def mesh_from_lists(vertices: Sequence[Sequence[float]], faces: Sequence[Sequence[int]]) -> Mesh:
    return Mesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), tuple(tuple(f) for f in faces))
