"""Triangle-to-quad conversion as maximum-weight matching on the dual graph.

Each interior manifold edge between two triangles is a candidate merge.
Its weight is ``a * p``: ``a`` rewards right angles in the merged quad
(``1 - max|angle - 90|/90``, clamped to [0, 1], angles measured in the
quad's least-squares plane) and ``p = max(0, cos(dihedral))`` rewards
flatness. Non-convex merges and weights below ``MIN_WEIGHT`` are not
candidates at all. After merging, quads with an interior angle above the
limit are split back into their two triangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mesh import FaceArityError, Mesh

MIN_WEIGHT = 1e-4
EXACT_MAX_NODES = 24
DEFAULT_MAX_ANGLE = 150.0


class ProblemTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    id: int
    t1: int
    t2: int
    weight: float
    quad: tuple[int, int, int, int] = ()
    edge: tuple[int, int] = ()


@dataclass
class MatchingProblem:
    nodes: list[int]
    candidates: list[Candidate]

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "MatchingProblem":
        """Abstract problem from ``(u, v, weight)`` triples over nodes ``0..n_nodes-1``."""
        cands = []
        for k, (u, v, w) in enumerate(edges):
            if u == v:
                raise ValueError("candidate edge must join two distinct nodes")
            if not (math.isfinite(w) and 0.0 <= w <= 1.0):
                raise ValueError(f"weight {w} outside [0, 1]")
            cands.append(Candidate(k, int(u), int(v), float(w)))
        return cls(list(range(n_nodes)), cands)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


@dataclass
class MatchingSolution:
    selected: list[int]
    total_weight: float
    used: dict[int, bool] = field(default_factory=dict)

    @classmethod
    def from_ids(cls, p: MatchingProblem, ids) -> "MatchingSolution":
        ids = sorted(ids)
        used = {n: False for n in p.nodes}
        for k in ids:
            c = p.candidates[k]
            if used[c.t1] or used[c.t2]:
                raise ValueError(f"candidate {k} reuses a triangle")
            used[c.t1] = used[c.t2] = True
        return cls(ids, math.fsum(p.candidates[k].weight for k in ids), used)


def _plane_basis(pts: np.ndarray) -> np.ndarray:
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered)
    return vt[:2]


def quad_angles(pts: np.ndarray) -> np.ndarray | None:
    """Interior angles (degrees) of a 4-gon projected to its best-fit plane, or None if not strictly convex."""
    p2 = (pts - pts.mean(axis=0)) @ _plane_basis(pts).T
    crosses = []
    angles = []
    for i in range(4):
        prev, cur, nxt = p2[i - 1], p2[i], p2[(i + 1) % 4]
        e1, e2 = cur - prev, nxt - cur
        crosses.append(e1[0] * e2[1] - e1[1] * e2[0])
        a, b = prev - cur, nxt - cur
        angles.append(math.degrees(math.atan2(abs(a[0] * b[1] - a[1] * b[0]), a @ b)))
    crosses = np.array(crosses)
    if not (np.all(crosses > 0) or np.all(crosses < 0)):
        return None
    return np.array(angles)


def _tri_normal(p) -> np.ndarray:
    n = np.cross(p[1] - p[0], p[2] - p[0])
    norm = np.linalg.norm(n)
    return n / norm if norm > 0 else n


def merge_weight(vertices: np.ndarray, quad, tri_a, tri_b) -> float | None:
    """Quality of merging two triangles into ``quad``; None if the merge is inadmissible."""
    angles = quad_angles(vertices[list(quad)])
    if angles is None:
        return None
    a = min(1.0, max(0.0, 1.0 - float(np.max(np.abs(angles - 90.0))) / 90.0))
    na = _tri_normal(vertices[list(tri_a)])
    nb = _tri_normal(vertices[list(tri_b)])
    p = max(0.0, min(1.0, float(na @ nb)))
    w = a * p
    return w if w >= MIN_WEIGHT else None


def _merged_quad(fa: tuple[int, int, int], fb: tuple[int, int, int], u: int, v: int):
    """Quad from triangles sharing edge (u, v), wound like ``fa``; plus ``fb`` re-wound to match."""
    i = fa.index(u)
    if fa[(i + 1) % 3] != v:
        u, v = v, u
    # fa runs u -> v -> p
    p = next(x for x in fa if x not in (u, v))
    q = next(x for x in fb if x not in (u, v))
    return (u, q, v, p), (v, u, q)


def build_problem(mesh: Mesh) -> MatchingProblem:
    if any(len(f) != 3 for f in mesh.faces):
        raise FaceArityError("tri-to-quad conversion needs an all-triangle mesh")
    adj = mesh.adjacency
    cands = []
    for e, (u, v) in enumerate(adj.edges):
        faces = adj.faces_of(e)
        if len(faces) != 2:
            continue
        t1, t2 = int(faces[0]), int(faces[1])
        quad, tb = _merged_quad(mesh.faces[t1], mesh.faces[t2], int(u), int(v))
        if len(set(quad)) != 4:
            continue
        w = merge_weight(mesh.vertices, quad, mesh.faces[t1], tb)
        if w is None:
            continue
        cands.append(Candidate(len(cands), t1, t2, w, quad, (int(u), int(v))))
    return MatchingProblem(list(range(mesh.n_faces)), cands)


def _compact(p: MatchingProblem):
    """Relabel the nodes that touch a candidate as 0..k-1."""
    touched = sorted({c.t1 for c in p.candidates} | {c.t2 for c in p.candidates})
    label = {n: i for i, n in enumerate(touched)}
    eu = [label[c.t1] for c in p.candidates]
    ev = [label[c.t2] for c in p.candidates]
    return len(touched), eu, ev


def solve_exact(p: MatchingProblem, max_nodes: int = EXACT_MAX_NODES) -> MatchingSolution:
    """Globally optimal matching by branch and bound.

    Ties within 1e-12 go to the lexicographically smallest set of candidate ids.
    """
    if p.n_nodes > max_nodes:
        raise ProblemTooLargeError(
            f"exact solver limited to {max_nodes} triangles, problem has {p.n_nodes}"
        )
    if not p.candidates:
        return MatchingSolution.from_ids(p, [])
    n, eu, ev = _compact(p)
    ids = kernels.max_weight_matching(n, eu, ev, [c.weight for c in p.candidates])
    return MatchingSolution.from_ids(p, ids)


def solve_greedy(p: MatchingProblem) -> MatchingSolution:
    used: set[int] = set()
    picked = []
    for c in sorted(p.candidates, key=lambda c: (-c.weight, c.id)):
        if c.t1 in used or c.t2 in used:
            continue
        used.update((c.t1, c.t2))
        picked.append(c.id)
    return MatchingSolution.from_ids(p, picked)


@dataclass
class ConversionStats:
    input_triangles: int
    merged: int
    split_back: int
    output_triangles: int
    output_quads: int
    quad_ratio: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def max_interior_angle(vertices: np.ndarray, quad) -> float:
    angles = quad_angles(vertices[list(quad)])
    return 180.0 if angles is None else float(angles.max())


def apply_and_validate(
    mesh: Mesh,
    sol: MatchingSolution,
    max_angle_deg: float = DEFAULT_MAX_ANGLE,
    problem: MatchingProblem | None = None,
) -> tuple[Mesh, ConversionStats]:
    """Merge the selected pairs; any quad with an interior angle above ``max_angle_deg`` is split back.

    Each quad takes the place of its lower-id triangle in the face list.
    """
    if problem is None:
        problem = build_problem(mesh)
    partner: dict[int, Candidate] = {}
    for k in sol.selected:
        c = problem.candidates[k]
        partner[c.t1] = c
        partner[c.t2] = c
    faces = []
    merged = split = 0
    for fid, f in enumerate(mesh.faces):
        c = partner.get(fid)
        if c is None:
            faces.append(f)
            continue
        keep = max_interior_angle(mesh.vertices, c.quad) <= max_angle_deg
        if fid == min(c.t1, c.t2):
            if keep:
                faces.append(c.quad)
                merged += 1
            else:
                faces.append(f)
                split += 1
        elif not keep:
            faces.append(f)
    out = Mesh(mesh.vertices, tuple(faces))
    stats = ConversionStats(
        input_triangles=mesh.n_faces,
        merged=merged,
        split_back=split,
        output_triangles=out.n_triangles,
        output_quads=out.n_quads,
        quad_ratio=out.n_quads / out.n_faces if out.n_faces else 0.0,
    )
    return out, stats


def quadify(
    mesh: Mesh,
    solver: str = "auto",
    max_angle_deg: float = DEFAULT_MAX_ANGLE,
    max_exact_nodes: int = EXACT_MAX_NODES,
) -> tuple[Mesh, ConversionStats]:
    """Build, solve and apply in one go. ``auto`` uses the exact solver when the mesh is small enough."""
    p = build_problem(mesh)
    if solver == "auto":
        solver = "exact" if p.n_nodes <= max_exact_nodes else "greedy"
    if solver == "exact":
        sol = solve_exact(p, max_exact_nodes)
    elif solver == "greedy":
        sol = solve_greedy(p)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return apply_and_validate(mesh, sol, max_angle_deg, p)
