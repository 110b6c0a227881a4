"""Truncated DPO loss over per-token log-probabilities of winner/loser windows.

With window log-ratios ``d_w = sum(policy_w) - sum(ref_w)`` and
``d_l = sum(policy_l) - sum(ref_l)``, the margin is ``z = beta * (d_w - d_l)``,
the preference probability ``sigmoid(z)`` and the loss ``-log sigmoid(z)``.
Any per-condition reward offset cancels inside ``d_w - d_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_BETA = 0.1


def _stream(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or infinite log-probabilities")
    return a


@dataclass(frozen=True, eq=False)
class WindowLogProbs:
    policy_w: np.ndarray
    ref_w: np.ndarray
    policy_l: np.ndarray
    ref_l: np.ndarray
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        for name in ("policy_w", "ref_w", "policy_l", "ref_l"):
            object.__setattr__(self, name, _stream(getattr(self, name), name))
        if len(self.policy_w) != len(self.ref_w) or len(self.policy_l) != len(self.ref_l):
            raise ValueError("policy and reference streams of a sequence must have equal length")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be a positive finite number")

    def swapped(self) -> "WindowLogProbs":
        return WindowLogProbs(self.policy_l, self.ref_l, self.policy_w, self.ref_w, self.beta)


@dataclass
class TdpoResult:
    loss: float
    preference_prob: float
    margin: float
    grad_policy_w: np.ndarray
    grad_policy_l: np.ndarray


def implicit_reward_margin(w: WindowLogProbs) -> float:
    # one correctly rounded sum over all four signed streams
    terms = np.concatenate([w.policy_w, -w.ref_w, -w.policy_l, w.ref_l])
    return w.beta * math.fsum(terms.tolist())


def log1p_exp(x: float) -> float:
    """``log(1 + exp(x))`` without overflow."""
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def loss_from_margin(z: float) -> float:
    """``-log sigmoid(z)``."""
    return log1p_exp(-z)


def tdpo_loss(w: WindowLogProbs) -> TdpoResult:
    z = implicit_reward_margin(w)
    g = w.beta * sigmoid(-z)
    return TdpoResult(
        loss=loss_from_margin(z),
        preference_prob=sigmoid(z),
        margin=z,
        grad_policy_w=np.full(len(w.policy_w), -g),
        grad_policy_l=np.full(len(w.policy_l), g),
    )


def batch_loss(pairs: Sequence[WindowLogProbs]) -> tuple[float, list[TdpoResult]]:
    """Mean loss over pairs (summed in input order) and the per-pair results."""
    if not pairs:
        raise ValueError("empty batch")
    results = [tdpo_loss(p) for p in pairs]
    total = 0.0
    for r in results:
        total += r.loss
    return total / len(results), results


def read_logprob_file(path) -> np.ndarray:
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if s and not s.startswith("#"):
                vals.append(float(s))
    return _stream(vals, str(path))


def write_logprob_file(path, values) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(values, dtype=np.float64).reshape(-1):
            fh.write(f"{float(v)!r}\n")
