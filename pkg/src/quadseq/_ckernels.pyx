# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Must stay step-for-step identical to ``_pykernels.py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double TIE_EPS = 1e-12


cdef int _walk(long start, long prev_face,
               const long[:, ::1] face_edges, const long[::1] arity,
               const long[::1] ptr, const long[::1] incident,
               unsigned int[::1] mark, unsigned int stamp, long skip_edge,
               list faces, list edges):
    """Walk opposite edges from ``start``; returns the closing edge or -1.

    ``mark[e] == stamp`` means edge ``e`` is already on the current path.
    """
    cdef long cur = start, lo, hi, k, f, nxt_face, j
    while cur != -1 and (mark[cur] != stamp or cur == skip_edge):
        if cur == skip_edge:
            skip_edge = -1
        edges.append(cur)
        mark[cur] = stamp
        lo = ptr[cur]
        hi = ptr[cur + 1]
        nxt_face = -1
        if hi - lo <= 2:
            for k in range(lo, hi):
                f = incident[k]
                if f != prev_face and arity[f] == 4:
                    nxt_face = f
                    break
        if nxt_face == -1:
            return -1
        faces.append(nxt_face)
        j = 0
        while face_edges[nxt_face, j] != cur:
            j += 1
        cur = face_edges[nxt_face, (j + 2) % 4]
        prev_face = nxt_face
    return cur


def discover_walks(face_edges, arity, ptr, incident, long n_edges, bint bidirectional):
    cdef const long[:, ::1] fe = np.ascontiguousarray(face_edges, dtype=np.int64)
    cdef const long[::1] ar = np.ascontiguousarray(arity, dtype=np.int64)
    cdef const long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef const long[::1] inc = np.ascontiguousarray(incident, dtype=np.int64)
    cdef unsigned int[::1] mark = np.zeros(max(n_edges, 1), dtype=np.uint32)
    cdef unsigned char[::1] processed = np.zeros(max(n_edges, 1), dtype=np.uint8)
    cdef unsigned int stamp = 0
    cdef long e, cur, x
    cdef bint ring
    cdef list out = []
    cdef list faces, edges, back_faces, back_edges
    for e in range(n_edges):
        if processed[e]:
            continue
        stamp += 1
        faces = []
        edges = []
        cur = _walk(e, -1, fe, ar, pt, inc, mark, stamp, -1, faces, edges)
        ring = cur == e
        if bidirectional and not ring and faces:
            back_faces = []
            back_edges = []
            # the back walk shares the forward path marks but may re-enter e
            _walk(e, faces[0], fe, ar, pt, inc, mark, stamp, e, back_faces, back_edges)
            faces = back_faces[::-1] + faces
            edges = back_edges[:0:-1] + edges
        for x in edges:
            processed[x] = 1
        if faces:
            out.append((bool(ring), faces, edges))
    return out


cdef double _upper_bound(int i, int m, const long[::1] order, const long[::1] eu,
                         const long[::1] ev, const double[::1] w,
                         unsigned long long used, double* best, int n_nodes):
    cdef int j, u, v
    cdef long k
    cdef double total = 0.0, half = 0.0, wk
    for j in range(n_nodes):
        best[j] = 0.0
    for j in range(i, m):
        k = order[j]
        u = eu[k]
        v = ev[k]
        if (used >> u) & 1 or (used >> v) & 1:
            continue
        wk = w[k]
        total += wk
        if wk > best[u]:
            best[u] = wk
        if wk > best[v]:
            best[v] = wk
    for j in range(n_nodes):
        half += best[j]
    half = half / 2.0
    return half if half < total else total


cdef class _BnB:
    cdef int m, n_nodes
    cdef const long[::1] order
    cdef const long[::1] eu
    cdef const long[::1] ev
    cdef const double[::1] w
    cdef unsigned char[::1] chosen
    cdef unsigned char[::1] best_set
    cdef double best_total
    cdef double* scratch

    def __cinit__(self, int n_nodes, eu, ev, w, order):
        self.n_nodes = n_nodes
        self.m = len(w)
        self.eu = eu
        self.ev = ev
        self.w = w
        self.order = order
        self.chosen = np.zeros(max(self.m, 1), dtype=np.uint8)
        self.best_set = np.zeros(max(self.m, 1), dtype=np.uint8)
        self.best_total = 0.0
        self.scratch = <double*> malloc(sizeof(double) * max(n_nodes, 1))

    def __dealloc__(self):
        free(self.scratch)

    cdef bint _lex_smaller(self):
        # compare ascending id lists of chosen vs best_set
        cdef int a = 0, b = 0
        while True:
            while a < self.m and not self.chosen[a]:
                a += 1
            while b < self.m and not self.best_set[b]:
                b += 1
            if a == self.m or b == self.m:
                return a == self.m and b != self.m
            if a != b:
                return a < b
            a += 1
            b += 1

    cdef void rec(self, int i, unsigned long long used, double total):
        cdef long k
        cdef int u, v
        if i == self.m:
            if total > self.best_total + TIE_EPS or (
                total >= self.best_total - TIE_EPS and self._lex_smaller()
            ):
                self.best_total = total
                self.best_set[:] = self.chosen
            return
        if total + _upper_bound(i, self.m, self.order, self.eu, self.ev, self.w, used,
                                self.scratch, self.n_nodes) < self.best_total - TIE_EPS:
            return
        k = self.order[i]
        u = self.eu[k]
        v = self.ev[k]
        if not ((used >> u) & 1 or (used >> v) & 1):
            self.chosen[k] = 1
            self.rec(i + 1, used | (1ULL << u) | (1ULL << v), total + self.w[k])
            self.chosen[k] = 0
        self.rec(i + 1, used, total)


def max_weight_matching(int n_nodes, eu, ev, w):
    if n_nodes > 64:
        raise ValueError("compiled matcher supports at most 64 nodes")
    cdef long m = len(w)
    wl = [float(x) for x in w]
    order = np.array(sorted(range(m), key=lambda k: (-wl[k], k)), dtype=np.int64)
    bnb = _BnB(n_nodes, np.ascontiguousarray(eu, dtype=np.int64),
               np.ascontiguousarray(ev, dtype=np.int64),
               np.ascontiguousarray(wl, dtype=np.float64), order)
    bnb.rec(0, 0, 0.0)
    return [k for k in range(m) if bnb.best_set[k]]
