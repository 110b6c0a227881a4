"""Procedural meshes: boxes, grids, strips, prisms, tori.

All faces are wound counter-clockwise seen from outside (or from +normal
for open sheets).
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh


class _Builder:
    def __init__(self):
        self.index: dict[tuple, int] = {}
        self.verts: list[tuple] = []
        self.faces: list[tuple[int, ...]] = []

    def vid(self, p) -> int:
        key = tuple(p)
        i = self.index.get(key)
        if i is None:
            i = self.index[key] = len(self.verts)
            self.verts.append(key)
        return i

    def face(self, *pts):
        self.faces.append(tuple(self.vid(p) for p in pts))

    def mesh(self, scale=1.0, offset=(0.0, 0.0, 0.0)) -> Mesh:
        v = np.array(self.verts, dtype=np.float64).reshape(-1, 3) * scale + np.asarray(offset)
        return Mesh(v, tuple(self.faces))


def cube(size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned cube of 6 quads; vertex ``i`` sits at bits ``(x, y, z) = (i&1, i>>1&1, i>>2&1)``."""
    v = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.float64)
    faces = ((0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5))
    return Mesh(v * size + np.asarray(origin, dtype=np.float64), faces)


def box(nx: int, ny: int, nz: int, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Closed box surface subdivided into ``nx * ny * nz``-lattice quads."""
    n = (nx, ny, nz)
    b = _Builder()
    for a in range(3):
        u, w = (a + 1) % 3, (a + 2) % 3
        for side in (0, 1):
            for i in range(n[u]):
                for j in range(n[w]):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0, 0, 0]
                        p[a] = side * n[a]
                        p[u] = i + di
                        p[w] = j + dj
                        corners.append(p)
                    if side == 0:
                        corners.reverse()
                    b.face(*corners)
    scale = np.asarray(size, dtype=np.float64) / np.asarray(n, dtype=np.float64)
    return b.mesh(scale, origin)


def grid(nx: int, ny: int, size=(1.0, 1.0), triangulate: bool = False, alternate: bool = False) -> Mesh:
    """Flat ``nx`` by ``ny`` sheet in the z=0 plane, facing +z.

    With ``triangulate`` every cell is split along a diagonal; ``alternate``
    flips the diagonal in a checkerboard pattern.
    """
    xs = np.linspace(0.0, size[0], nx + 1)
    ys = np.linspace(0.0, size[1], ny + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs])
    idx = lambda i, j: j * (nx + 1) + i  # noqa: E731
    faces = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if not triangulate:
                faces.append((a, b, c, d))
            elif alternate and (i + j) % 2:
                faces.extend([(a, b, d), (b, c, d)])
            else:
                faces.extend([(a, b, c), (a, c, d)])
    return Mesh(verts, tuple(faces))


def strip(n: int) -> Mesh:
    """Open row of ``n`` unit quads."""
    return grid(n, 1, size=(float(n), 1.0))


def prism(sides: int, segments: int = 1, radius: float = 1.0, height: float = 1.0) -> Mesh:
    """Closed prism: quad walls, triangle-fan caps around a center vertex."""
    verts = []
    for k in range(segments + 1):
        y = height * k / segments
        for s in range(sides):
            t = 2 * math.pi * s / sides
            verts.append((radius * math.cos(t), y, radius * math.sin(t)))
    bottom_c = len(verts)
    verts.append((0.0, 0.0, 0.0))
    top_c = len(verts)
    verts.append((0.0, height, 0.0))
    ring = lambda k, s: k * sides + s % sides  # noqa: E731
    faces = []
    for k in range(segments):
        for s in range(sides):
            faces.append((ring(k, s), ring(k + 1, s), ring(k + 1, s + 1), ring(k, s + 1)))
    for s in range(sides):
        faces.append((bottom_c, ring(0, s), ring(0, s + 1)))
        faces.append((top_c, ring(segments, s + 1), ring(segments, s)))
    return Mesh(np.array(verts), tuple(faces))


def torus(n_major: int, n_minor: int, r_major: float = 1.0, r_minor: float = 0.35) -> Mesh:
    verts = []
    for i in range(n_major):
        u = 2 * math.pi * i / n_major
        for j in range(n_minor):
            w = 2 * math.pi * j / n_minor
            rr = r_major + r_minor * math.cos(w)
            verts.append((rr * math.cos(u), r_minor * math.sin(w), rr * math.sin(u)))
    idx = lambda i, j: (i % n_major) * n_minor + (j % n_minor)  # noqa: E731
    faces = [
        (idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j))
        for i in range(n_major)
        for j in range(n_minor)
    ]
    return Mesh(np.array(verts), tuple(faces))


def triangulate(mesh: Mesh) -> Mesh:
    """Split every quad along its (v0, v2) diagonal, keeping winding."""
    faces = []
    for f in mesh.faces:
        if len(f) == 4:
            faces.extend([(f[0], f[1], f[2]), (f[0], f[2], f[3])])
        else:
            faces.append(f)
    return Mesh(mesh.vertices, tuple(faces))


def merge(*meshes: Mesh) -> Mesh:
    """Disjoint union."""
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.extend(tuple(i + off for i in f) for f in m.faces)
        off += m.n_vertices
    return Mesh(np.concatenate(verts) if verts else np.zeros((0, 3)), tuple(faces))


def transform(mesh: Mesh, rotation=None, translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> Mesh:
    r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    return mesh.with_vertices(scale * mesh.vertices @ r.T + np.asarray(translation))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
