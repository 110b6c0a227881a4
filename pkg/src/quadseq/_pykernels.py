"""Pure-Python kernels. Same algorithms, same visiting order as ``_ckernels.pyx``."""

from __future__ import annotations

TIE_EPS = 1e-12


def _walk(start, prev_face, face_edges, arity, ptr, incident, in_path):
    """Follow opposite edges from ``start``; returns (faces, edges, closing edge or -1)."""
    faces = []
    edges = []
    cur = start
    while cur != -1 and cur not in in_path:
        edges.append(cur)
        in_path.add(cur)
        lo, hi = ptr[cur], ptr[cur + 1]
        nxt_face = -1
        if hi - lo <= 2:
            for k in range(lo, hi):
                f = incident[k]
                if f != prev_face and arity[f] == 4:
                    nxt_face = f
                    break
        if nxt_face == -1:
            cur = -1
            break
        faces.append(nxt_face)
        row = face_edges[nxt_face]
        j = row.index(cur)
        cur = row[(j + 2) % 4]
        prev_face = nxt_face
    return faces, edges, cur


def discover_walks(face_edges, arity, ptr, incident, n_edges, bidirectional):
    """Quad ring/line discovery over an edge table.

    Returns a list of ``(is_ring, faces, edges)`` in discovery order. Walks
    that cross no quad are not reported.
    """
    face_edges = [list(r) for r in face_edges]
    arity = list(arity)
    ptr = list(ptr)
    incident = list(incident)
    processed = bytearray(n_edges)
    out = []
    for e in range(n_edges):
        if processed[e]:
            continue
        in_path = set()
        faces, edges, cur = _walk(e, -1, face_edges, arity, ptr, incident, in_path)
        ring = cur == e and cur != -1
        if bidirectional and not ring and faces:
            back_faces, back_edges, _ = _walk(
                e, faces[0], face_edges, arity, ptr, incident, in_path - {e}
            )
            faces = back_faces[::-1] + faces
            edges = back_edges[:0:-1] + edges
        for x in edges:
            processed[x] = 1
        if faces:
            out.append((ring, faces, edges))
    return out


def _upper_bound(i, order, eu, ev, w, used, n_nodes):
    best = [0.0] * n_nodes
    total = 0.0
    for j in range(i, len(order)):
        k = order[j]
        u, v = eu[k], ev[k]
        if (used >> u) & 1 or (used >> v) & 1:
            continue
        wk = w[k]
        total += wk
        if wk > best[u]:
            best[u] = wk
        if wk > best[v]:
            best[v] = wk
    half = sum(best) / 2.0
    return half if half < total else total


def max_weight_matching(n_nodes, eu, ev, w):
    """Exact maximum-weight matching by branch and bound.

    Edges are branched in descending weight order (ties by id). Among optima
    within ``TIE_EPS`` the lexicographically smallest sorted id tuple wins.
    Returns the selected edge ids in ascending order.
    """
    m = len(w)
    order = sorted(range(m), key=lambda k: (-w[k], k))
    best_total = [0.0]
    best_set = [()]
    chosen = []

    def better(total):
        if total > best_total[0] + TIE_EPS:
            return True
        if total >= best_total[0] - TIE_EPS:
            return tuple(sorted(chosen)) < best_set[0]
        return False

    def rec(i, used, total):
        if i == m:
            if better(total):
                best_total[0] = total
                best_set[0] = tuple(sorted(chosen))
            return
        if total + _upper_bound(i, order, eu, ev, w, used, n_nodes) < best_total[0] - TIE_EPS:
            return
        k = order[i]
        u, v = eu[k], ev[k]
        if not ((used >> u) & 1 or (used >> v) & 1):
            chosen.append(k)
            rec(i + 1, used | (1 << u) | (1 << v), total + w[k])
            chosen.pop()
        rec(i + 1, used, total)

    rec(0, 0, 0.0)
    return list(best_set[0])
