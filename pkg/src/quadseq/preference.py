"""Preference pairs from scored candidate generations.

A candidate beats another only under strict dominance: longer average quad
line *and* lower fracture rate. Pairs are then cut down to a random
block-aligned window shared by winner and loser.
"""

from __future__ import annotations

import json
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .codec import BLOCK, BOS, EOS, CodecError, check_blocks, detokenize, payload, write_tokens_bin
from .mesh import Mesh
from .topology import TopoScore, topo_score


@dataclass(eq=False)
class Candidate:
    condition: str
    name: str
    tokens: np.ndarray
    mesh: Mesh
    score: TopoScore

    @classmethod
    def from_tokens(cls, condition: str, name: str, tokens, up_axis: str = "y", mode: str = "bidirectional"):
        """Score a generated sequence; the mesh comes from lenient decoding, in generation order."""
        toks = payload(tokens)
        stop = np.nonzero((toks == BOS) | (toks == EOS))[0]
        if len(stop):
            toks = toks[: stop[0]]
        mesh, diag = detokenize(toks, "lenient")
        # keep only the decoded prefix so windows never reach past parsed blocks
        n_blocks = len(toks) // BLOCK if diag.malformed_block is None else diag.malformed_block
        toks = toks[: n_blocks * BLOCK]
        return cls(condition, name, toks, mesh, topo_score(mesh, None, up_axis, mode))


def dominates(a: TopoScore, b: TopoScore) -> bool:
    return a.l_avg > b.l_avg and a.r_frac < b.r_frac


def rank_candidates(cands: Sequence[Candidate]) -> tuple[list[tuple[Candidate, Candidate]], Counter]:
    """All strictly dominating (winner, loser) pairs; undecided pairs are counted as ``tie`` or ``conflict``."""
    pairs = []
    discarded: Counter = Counter()
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            a, b = cands[i], cands[j]
            if dominates(a.score, b.score):
                pairs.append((a, b))
            elif dominates(b.score, a.score):
                pairs.append((b, a))
            elif a.score.l_avg == b.score.l_avg or a.score.r_frac == b.score.r_frac:
                discarded["tie"] += 1
            else:
                discarded["conflict"] += 1
    return pairs, discarded


@dataclass
class PreferencePair:
    condition: str
    winner: str
    loser: str
    winner_window: np.ndarray
    loser_window: np.ndarray
    m: int
    tau: int
    winner_score: dict = field(default_factory=dict)
    loser_score: dict = field(default_factory=dict)


def extract_windows(winner_seq, loser_seq, m: int, tau: int) -> tuple[np.ndarray, np.ndarray]:
    if m % BLOCK or tau % BLOCK:
        raise CodecError("window offset and length must be multiples of 12")
    w = np.asarray(winner_seq, dtype=np.int64)
    l = np.asarray(loser_seq, dtype=np.int64)
    return w[m : m + tau], l[m : m + tau]


def draw_offset(len_w: int, len_l: int, rng: np.random.Generator) -> int:
    n_blocks = min(len_w, len_l) // BLOCK
    if n_blocks < 1:
        raise CodecError("both sequences need at least one full block")
    return BLOCK * int(rng.integers(0, n_blocks))


def sample_prefix_window(winner_seq, loser_seq, tau: int, seed) -> tuple[int, np.ndarray, np.ndarray]:
    """Draw a block boundary ``m`` shared by both sequences and cut ``[m, m + tau)`` from each."""
    if tau <= 0 or tau % BLOCK:
        raise CodecError("tau must be a positive multiple of 12")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = draw_offset(len(winner_seq), len(loser_seq), rng)
    w, l = extract_windows(winner_seq, loser_seq, m, tau)
    return m, w, l


def condition_rng(seed: int, condition: str) -> np.random.Generator:
    """Per-condition stream, so adding a condition never reshuffles the others."""
    return np.random.default_rng([int(seed), zlib.crc32(condition.encode("utf-8"))])


@dataclass
class Dataset:
    pairs: list[PreferencePair]
    stats: dict


def build_dataset(
    conditions: Mapping[str, Sequence[Candidate]],
    tau: int,
    pairs_per_condition: int,
    seed: int,
) -> Dataset:
    """Rank every condition's candidates and window up to ``pairs_per_condition`` of the dominance pairs."""
    pairs: list[PreferencePair] = []
    stats = {"conditions": {}, "dominance_pairs": 0, "emitted_pairs": 0, "discarded": {"tie": 0, "conflict": 0}}
    for cond in sorted(conditions):
        cands = conditions[cond]
        ranked, discarded = rank_candidates(cands)
        rng = condition_rng(seed, cond)
        keep = list(range(len(ranked)))
        if len(ranked) > pairs_per_condition:
            keep = sorted(rng.choice(len(ranked), size=pairs_per_condition, replace=False).tolist())
        for idx in keep:
            win, lose = ranked[idx]
            m, ww, lw = sample_prefix_window(win.tokens, lose.tokens, tau, rng)
            pairs.append(
                PreferencePair(cond, win.name, lose.name, ww, lw, m, tau,
                               win.score.summary(), lose.score.summary())
            )
        stats["conditions"][cond] = {
            "candidates": len(cands),
            "dominance_pairs": len(ranked),
            "emitted": len(keep),
            "discarded": dict(discarded),
            "l_avg": [c.score.l_avg for c in cands],
            "r_frac": [c.score.r_frac for c in cands],
        }
        stats["dominance_pairs"] += len(ranked)
        stats["emitted_pairs"] += len(keep)
        for k, v in discarded.items():
            stats["discarded"][k] += v
    return Dataset(pairs, stats)


def pair_id(index: int) -> str:
    return f"pair_{index:05d}"


def write_dataset(ds: Dataset, out_dir) -> Path:
    """Write windows (binary token files), ``manifest.json`` and ``summary.json``; returns the manifest path."""
    out = Path(out_dir)
    (out / "windows").mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, p in enumerate(ds.pairs):
        pid = pair_id(i)
        wf = f"windows/{pid}_w.bin"
        lf = f"windows/{pid}_l.bin"
        check_blocks(p.winner_window)
        check_blocks(p.loser_window)
        write_tokens_bin(out / wf, p.winner_window)
        write_tokens_bin(out / lf, p.loser_window)
        manifest.append({
            "id": pid,
            "condition": p.condition,
            "winner": p.winner,
            "loser": p.loser,
            "winner_file": wf,
            "loser_file": lf,
            "m": p.m,
            "tau": p.tau,
            "scores": {"winner": p.winner_score, "loser": p.loser_score},
        })
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(ds.stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    return data
