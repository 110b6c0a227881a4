"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from quadseq import _pykernels, shapes

try:
    from quadseq import _ckernels
except ImportError:
    _ckernels = None


def walk_case(n_major, n_minor):
    adj = shapes.torus(n_major, n_minor).adjacency
    return (adj.face_edges, adj.arity, adj.ptr, adj.incident, adj.n_edges, True)


def matching_case(seed, n_nodes=20, density=0.3):
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n_nodes) for v in range(u + 1, n_nodes) if rng.random() < density]
    return (n_nodes, [p[0] for p in pairs], [p[1] for p in pairs], rng.random(len(pairs)).tolist())


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    cases = [
        ("walks, torus 100x200 (20k quads)", "discover_walks", walk_case(100, 200)),
        ("walks, torus 30x30", "discover_walks", walk_case(30, 30)),
        ("matching, 20 nodes, density 0.3", "max_weight_matching", matching_case(0)),
        ("matching, 24 nodes, density 0.2", "max_weight_matching", matching_case(1, 24, 0.2)),
    ]
    print(f"{'case':38s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, args in cases:
        t_py = bench(getattr(_pykernels, name), args, opts.repeat)
        if _ckernels is None:
            print(f"{label:38s} {t_py * 1e3:10.2f} {'n/a':>10s} {'':>8s}")
            continue
        t_c = bench(getattr(_ckernels, name), args, opts.repeat)
        assert list(getattr(_ckernels, name)(*args)) == list(getattr(_pykernels, name)(*args))
        print(f"{label:38s} {t_py * 1e3:10.2f} {t_c * 1e3:10.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
