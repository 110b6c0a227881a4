"""Shared fixture builders and brute-force oracles for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from quadseq import shapes
from quadseq.codec import PAD
from quadseq.mesh import Mesh, save_obj
from quadseq.preference import Candidate
from quadseq.topology import TopoScore


def seam_gap_box(gap: float = 1e-5) -> Mesh:
    """2x2x2-lattice box of edge 2 cut at the z=1 equator; the upper half's equator
    vertices are copies shifted by ``gap`` in z, except one vertex both halves share.

    One connected component, 8 open seam edges on each side.
    """
    b = shapes.box(2, 2, 2, size=(2.0, 2.0, 2.0))
    v = b.vertices
    equator = [i for i in range(len(v)) if v[i, 2] == 1.0]
    shared = min(equator)
    extra = []
    remap = {}
    for i in equator:
        if i == shared:
            continue
        remap[i] = len(v) + len(extra)
        extra.append(v[i] + np.array([0.0, 0.0, gap]))
    faces = []
    for f in b.faces:
        upper = all(v[i, 2] >= 1.0 for i in f) and any(v[i, 2] > 1.0 for i in f)
        faces.append(tuple(remap.get(i, i) for i in f) if upper else f)
    return Mesh(np.vstack([v, np.array(extra)]), tuple(faces))


def cube_missing_bottom_top_last() -> Mesh:
    """Unit cube without its z=0 face, face order with the y=1 (top) face emitted last."""
    c = shapes.cube()
    v = c.vertices
    keep = [f for f in c.faces if not all(v[i, 2] == 0.0 for i in f)]
    top = [f for f in keep if all(v[i, 1] == 1.0 for i in f)]
    rest = [f for f in keep if f not in top]
    return Mesh(v, tuple(rest + top))


def brute_force_matching(n_nodes: int, edges) -> float:
    """Best total weight over every subset of pairwise-disjoint edges."""
    best = 0.0
    m = len(edges)

    def rec(k, used, total):
        nonlocal best
        if k == m:
            best = max(best, total)
            return
        rec(k + 1, used, total)
        u, v, w = edges[k]
        if not (used >> u) & 1 and not (used >> v) & 1:
            rec(k + 1, used | (1 << u) | (1 << v), total + w)

    rec(0, 0, 0.0)
    return best


def brute_force_dominance(scores: dict[str, tuple[float, float]]) -> set[tuple[str, str]]:
    """Ordered (winner, loser) names with strictly higher line length and strictly lower fracture rate."""
    out = set()
    for a, (la, ra) in scores.items():
        for b, (lb, rb) in scores.items():
            if la > lb and ra < rb:
                out.add((a, b))
    return out


def partially_triangulate(mesh: Mesh, rng: np.random.Generator, fraction: float) -> Mesh:
    faces = []
    for f in mesh.faces:
        if len(f) == 4 and rng.random() < fraction:
            if rng.random() < 0.5:
                faces += [(f[0], f[1], f[2]), (f[0], f[2], f[3])]
            else:
                faces += [(f[0], f[1], f[3]), (f[1], f[2], f[3])]
        else:
            faces.append(f)
    return Mesh(mesh.vertices, tuple(faces))


def _single_face(rng, arity):
    pts = rng.normal(size=(arity, 3))
    if arity == 4:
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float) + rng.normal(size=(4, 3)) * 0.05
    return Mesh(pts, (tuple(range(arity)),))


def random_mesh(rng: np.random.Generator, max_faces: int = 5000) -> Mesh:
    """One procedural mesh (grid, box, prism or strip) with a log-uniform face budget, partly triangulated and posed."""
    target = int(np.exp(rng.uniform(0.0, np.log(max_faces))))
    kind = rng.choice(["grid", "box", "prism", "strip"])
    if target <= 2:
        m = _single_face(rng, int(rng.choice([3, 4])))
    elif kind == "grid":
        nx = int(rng.integers(1, max(2, int(np.sqrt(target))) + 1))
        m = shapes.grid(nx, max(1, min(target // nx, 5000 // nx)))
    elif kind == "box":
        k = max(1, int(np.sqrt(target / 6)))
        m = shapes.box(k, max(1, k + int(rng.integers(-1, 2))), k, size=tuple(rng.uniform(0.5, 2.0, 3)))
    elif kind == "prism":
        sides = int(rng.integers(3, 40))
        m = shapes.prism(sides, max(1, (target - 2 * sides) // sides))
    else:
        m = shapes.strip(max(1, min(target, 5000)))
    m = partially_triangulate(m, rng, float(rng.choice([0.0, 0.3, 1.0])))
    if m.n_faces > max_faces:
        m = Mesh(m.vertices, m.faces[:max_faces])
        used = sorted({i for f in m.faces for i in f})
        remap = {o: n for n, o in enumerate(used)}
        m = Mesh(m.vertices[used], tuple(tuple(remap[i] for i in f) for f in m.faces))
    return shapes.transform(m, shapes.random_rotation(rng), rng.normal(size=3), float(rng.uniform(0.5, 3.0)))


def mixed_corpus(n: int = 200, seed: int = 2024) -> list[Mesh]:
    rng = np.random.default_rng(seed)
    return [random_mesh(rng) for _ in range(n)]


def permuted(mesh: Mesh, rng: np.random.Generator) -> Mesh:
    """Same mesh with shuffled vertices, shuffled faces and each face cyclically rotated."""
    perm = rng.permutation(mesh.n_vertices)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    fa = mesh.face_array[rng.permutation(mesh.n_faces)]
    arity = np.where(fa[:, 3] >= 0, 4, 3)
    shift = rng.integers(0, arity)
    cols = (shift[:, None] + np.arange(4)[None, :]) % arity[:, None]
    rot = np.take_along_axis(fa, cols, axis=1)
    valid = np.arange(4)[None, :] < arity[:, None]
    return Mesh.from_arrays(mesh.vertices[perm], np.where(valid, inv[np.where(valid, rot, 0)], -1))


def walk_oracle(mesh: Mesh):
    """Quad chains as components of the graph whose nodes are edges and whose links are quads
    joining opposite edges. Returns ``(rings, lines)`` as sorted lists of sorted face tuples.

    Valid for meshes without edges shared by more than two faces.
    """
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fid, f in enumerate(mesh.faces):
        for i in range(len(f)):
            e = tuple(sorted((f[i], f[(i + 1) % len(f)])))
            edge_faces.setdefault(e, []).append(fid)
    links: dict[tuple[int, int], list[tuple[int, tuple[int, int]]]] = {e: [] for e in edge_faces}
    for fid, f in enumerate(mesh.faces):
        if len(f) != 4:
            continue
        for i in range(2):
            a = tuple(sorted((f[i], f[i + 1])))
            b = tuple(sorted((f[i + 2], f[(i + 3) % 4])))
            links[a].append((fid, b))
            links[b].append((fid, a))
    seen_edges = set()
    rings, lines = [], []
    for start in sorted(edge_faces):
        if start in seen_edges or not links[start]:
            continue
        comp_edges = {start}
        stack = [start]
        faces = []
        seen_links = set()
        while stack:
            e = stack.pop()
            for fid, other in links[e]:
                key = (fid, frozenset((e, other)))
                if key not in seen_links:
                    seen_links.add(key)
                    faces.append(fid)
                if other not in comp_edges:
                    comp_edges.add(other)
                    stack.append(other)
        seen_edges |= comp_edges
        closed = len(faces) == len(comp_edges)
        (rings if closed else lines).append(tuple(sorted(faces)))
    return sorted(rings), sorted(lines)


def random_quad_mesh(rng: np.random.Generator) -> Mesh:
    """Quad-dominant test mesh: box, grid, prism, torus or strip, with some faces removed or triangulated."""
    kind = int(rng.integers(5))
    if kind == 0:
        m = shapes.box(*(int(x) for x in rng.integers(1, 4, size=3)))
    elif kind == 1:
        m = shapes.grid(int(rng.integers(1, 6)), int(rng.integers(1, 6)))
    elif kind == 2:
        m = shapes.prism(int(rng.integers(3, 8)), int(rng.integers(1, 4)))
    elif kind == 3:
        m = shapes.torus(int(rng.integers(3, 8)), int(rng.integers(3, 6)))
    else:
        m = shapes.strip(int(rng.integers(1, 8)))
    keep = [f for f in m.faces if rng.random() > 0.15] or [m.faces[0]]
    m = Mesh(m.vertices, tuple(keep))
    return partially_triangulate(m, rng, 0.1)


def random_block_tokens(rng: np.random.Generator, n_blocks: int) -> np.ndarray:
    """Structurally valid payload: each block is a quad or a PAD-prefixed triangle."""
    blocks = rng.integers(0, 1024, size=(n_blocks, 12))
    tri = rng.random(n_blocks) < 0.3
    blocks[tri, :3] = PAD
    return blocks.reshape(-1)


def synthetic_candidate(condition: str, name: str, l_avg: float, r_frac: float, rng, n_blocks=None):
    score = TopoScore(0, r_frac, l_avg, 0.0, 0.0, [], [])
    n = int(rng.integers(1, 20)) if n_blocks is None else n_blocks
    return Candidate(condition, name, random_block_tokens(rng, n), Mesh.empty(), score)


def planted_conditions(n_conditions: int = 10, seed: int = 99):
    """Conditions whose candidates sit on a coarse score lattice so ties, conflicts and chains all occur."""
    rng = np.random.default_rng(seed)
    conds, truth = {}, {}
    for c in range(n_conditions):
        name = f"cond{c:02d}"
        k = int(rng.integers(2, 8))
        scores = {f"c{i}": (float(rng.integers(0, 4)) / 2, float(rng.integers(0, 4)) / 8) for i in range(k)}
        conds[name] = [synthetic_candidate(name, n, la, rf, rng) for n, (la, rf) in scores.items()]
        truth[name] = brute_force_dominance(scores)
    return conds, truth


def write_pipeline_fixture(root, conditions=("a", "b"), tdpo_block: bool = True):
    """Candidate OBJs (2x3, 3x3, 4x4 grids per condition, a strict dominance chain) and a TOML config."""
    root = Path(root)
    for c in conditions:
        d = root / "cands" / c
        d.mkdir(parents=True, exist_ok=True)
        for nx, ny in ((2, 3), (3, 3), (4, 4)):
            save_obj(shapes.grid(nx, ny), d / f"g{nx}{ny}.obj")
    lines = [
        "seed = 7",
        "tau = 24",
        "pairs_per_condition = 2",
        'out = "out"',
        "[conditions]",
        *(f'{c} = "cands/{c}"' for c in conditions),
        "[filter]",
        "face_min = 1",
        "face_max = 1000",
    ]
    if tdpo_block:
        lines += ["[tdpo]", "policy_seed = 1", "ref_seed = 2", "beta = 0.1"]
    cfg = root / "pipeline.toml"
    cfg.write_text("\n".join(lines) + "\n")
    return cfg


def manifold_oracle(mesh: Mesh) -> bool:
    """Closed-manifold check by walking each vertex star face to face."""
    edge_faces: dict[frozenset, list[int]] = {}
    for fid, f in enumerate(mesh.faces):
        for i in range(len(f)):
            edge_faces.setdefault(frozenset((f[i], f[(i + 1) % len(f)])), []).append(fid)
    if not edge_faces or any(len(v) != 2 for v in edge_faces.values()):
        return False
    star: dict[int, set[int]] = {}
    for fid, f in enumerate(mesh.faces):
        for v in f:
            star.setdefault(v, set()).add(fid)
    for v, faces in star.items():
        start = min(faces)
        seen, todo = {start}, [start]
        while todo:
            f = mesh.faces[todo.pop()]
            for e, owners in edge_faces.items():
                if v in e and set(e) <= set(f):
                    for g in owners:
                        if g not in seen:
                            seen.add(g)
                            todo.append(g)
        if seen != faces:
            return False
    return True


def random_patch(rng, max_tris=10):
    """Jittered triangulated grid patch, cut down to a random subset of its triangles."""
    g = shapes.grid(3, 3, triangulate=True, alternate=bool(rng.integers(2)))
    v = g.vertices + np.concatenate([rng.normal(size=(g.n_vertices, 2)) * 0.12, rng.normal(size=(g.n_vertices, 1)) * 0.05], axis=1)
    k = int(rng.integers(1, max_tris + 1))
    keep = sorted(rng.choice(g.n_faces, size=k, replace=False).tolist())
    return Mesh(v, tuple(g.faces[i] for i in keep))
