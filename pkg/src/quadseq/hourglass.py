"""Small hourglass decoder with seeded random weights, forward pass only.

Layout for an input of ``n`` tokens (``n`` a multiple of 12)::

    embed + position + r-embedding         (n, D0)
    causal blocks                          (n, D0)   -> kept as residual h0
    shorten x4                             (n/4, D1)
    causal blocks                          (n/4, D1) -> kept as residual h1
    shorten x3                             (n/12, D2)
    causal blocks + cross-attn to shape    (n/12, D2)
    upsample x3, add h1, causal blocks     (n/4, D1)
    upsample x4, add h0, causal blocks     (n, D0)
    logits                                 (n, vocab)

Shortening by ``s`` shifts the sequence right by ``s - 1`` slots (filled with
a learned boundary vector) before linearly mapping each group of ``s``
vectors to one, so a coarse vector only sees tokens at or before the first
fine position it is later copied back to. Logits at position ``t`` predict
token ``t + 1`` and depend on tokens ``0..t`` only.
"""

from __future__ import annotations

import json
import struct
from functools import lru_cache
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .codec import BLOCK, BOS, EOS, PAD, VOCAB_SIZE
from .mesh import PointCloud

SHORTEN = (4, 3)
N_R_BUCKETS = 8
WEIGHT_MAGIC = b"QGHW"
WEIGHT_VERSION = 1


@dataclass(frozen=True)
class HourglassConfig:
    dims: tuple[int, int, int] = (16, 32, 64)
    heads: tuple[int, int, int] = (2, 2, 4)
    layers: tuple[int, int, int] = (1, 1, 1)
    max_len: int = 144
    shape_dim: int = 32
    n_context: int = 4
    vocab: int = VOCAB_SIZE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "layers", tuple(int(n) for n in self.layers))
        if self.max_len <= 0 or self.max_len % BLOCK:
            raise ValueError(f"max_len must be a positive multiple of {BLOCK}")
        d0, d1, d2 = self.dims
        if not d0 <= d1 <= d2:
            raise ValueError("stage widths must not shrink toward the bottleneck")
        for d, h in zip(self.dims, self.heads):
            if d % h:
                raise ValueError(f"width {d} not divisible by {h} heads")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConditionSpec:
    shape_embedding: np.ndarray
    r: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("quad-dominance r must lie in [0, 1]")
        object.__setattr__(self, "shape_embedding", np.asarray(self.shape_embedding, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class SamplerConfig:
    top_k: int = 10
    top_p: float = 0.95
    temperature: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def stub_shape_encoder(cloud, dim: int, seed: int = 0) -> np.ndarray:
    """Stand-in shape encoder: fixed random projection of pooled point statistics.

    Pools the mean and the upper triangle of the covariance of the 6-d point
    features. Points are sorted first so any permutation gives bit-identical
    output.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    pts = pts[np.lexsort(pts.T[::-1])]
    mean = pts.mean(axis=0)
    cov = np.cov(pts, rowvar=False, bias=True) if len(pts) > 1 else np.zeros((pts.shape[1],) * 2)
    feats = np.concatenate([mean, cov[np.triu_indices(pts.shape[1])]])
    proj = np.random.default_rng([seed, 0x5EED]).normal(size=(len(feats), dim)) / np.sqrt(len(feats))
    return np.tanh(feats @ proj)


def _param_specs(cfg: HourglassConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes, in weight-file order."""
    d0, d1, d2 = cfg.dims
    specs = [
        ("tok_emb", (cfg.vocab, d0)),
        ("pos_emb", (cfg.max_len, d0)),
        ("r_emb", (N_R_BUCKETS, d0)),
    ]

    def block(prefix, d, cross=False):
        out = [
            (f"{prefix}.ln1", (2, d)),
            (f"{prefix}.qkv", (d, 3 * d)),
            (f"{prefix}.proj", (d, d)),
        ]
        if cross:
            out += [
                (f"{prefix}.lnx", (2, d)),
                (f"{prefix}.xq", (d, d)),
                (f"{prefix}.xkv", (d, 2 * d)),
                (f"{prefix}.xproj", (d, d)),
            ]
        out += [
            (f"{prefix}.ln2", (2, d)),
            (f"{prefix}.ff1", (d, 4 * d)),
            (f"{prefix}.ff2", (4 * d, d)),
        ]
        return out

    for i in range(cfg.layers[0]):
        specs += block(f"pre0.{i}", d0)
    specs += [("down0.boundary", (d0,)), ("down0.w", (SHORTEN[0] * d0, d1)), ("down0.b", (d1,))]
    for i in range(cfg.layers[1]):
        specs += block(f"pre1.{i}", d1)
    specs += [("down1.boundary", (d1,)), ("down1.w", (SHORTEN[1] * d1, d2)), ("down1.b", (d2,))]
    specs += [("ctx.w", (cfg.shape_dim, cfg.n_context * d2))]
    for i in range(cfg.layers[2]):
        specs += block(f"mid.{i}", d2, cross=True)
    specs += [("up1.w", (d2, d1))]
    for i in range(cfg.layers[1]):
        specs += block(f"post1.{i}", d1)
    specs += [("up0.w", (d1, d0))]
    for i in range(cfg.layers[0]):
        specs += block(f"post0.{i}", d0)
    specs += [("ln_f", (2, d0)), ("head", (d0, cfg.vocab))]
    return specs


def init_weights(cfg: HourglassConfig) -> dict[str, np.ndarray]:
    """Seeded random weights, stored as float32-representable float64 values."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in _param_specs(cfg):
        if name.rsplit(".", 1)[-1].startswith("ln"):
            w = np.stack([np.ones(shape[1]), np.zeros(shape[1])])
        elif len(shape) == 2:
            w = rng.normal(size=shape) / np.sqrt(shape[0])
        else:
            w = rng.normal(size=shape) * 0.02
        params[name] = w.astype(np.float32).astype(np.float64)
    return params


def save_weights(path, cfg: HourglassConfig, params: dict[str, np.ndarray]) -> None:
    """Flat weight file.

    Layout: ``QGHW``, version byte, little-endian uint32 header length, UTF-8
    JSON config header, then every tensor as little-endian float32 in
    ``_param_specs`` order, row-major.
    """
    header = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    chunks = [WEIGHT_MAGIC, struct.pack("<BI", WEIGHT_VERSION, len(header)), header]
    for name, shape in _param_specs(cfg):
        chunks.append(np.ascontiguousarray(params[name], dtype="<f4").reshape(shape).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_weights(path) -> tuple[HourglassConfig, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != WEIGHT_MAGIC:
        raise ValueError(f"{path}: not a weight file")
    version, hlen = struct.unpack_from("<BI", data, 4)
    if version != WEIGHT_VERSION:
        raise ValueError(f"{path}: unsupported weight file version {version}")
    off = 9
    cfg = HourglassConfig(**json.loads(data[off : off + hlen].decode("utf-8")))
    off += hlen
    params = {}
    for name, shape in _param_specs(cfg):
        n = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 4 * n
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return cfg, params


def _layer_norm(x, p):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * p[0] + p[1]


def _softmax(x, axis=-1):
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def _heads(x, h):
    n, d = x.shape
    return x.reshape(n, h, d // h).transpose(1, 0, 2)


@lru_cache(maxsize=8)
def _causal_mask(n: int) -> np.ndarray:
    m = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), -np.inf, 0.0)
    m.flags.writeable = False
    return m


def _causal_attention(x, qkv_w, proj_w, h):
    n, d = x.shape
    q, k, v = np.split(x @ qkv_w, 3, axis=-1)
    q, k, v = _heads(q, h), _heads(k, h), _heads(v, h)
    scores = q @ k.transpose(0, 2, 1)
    scores *= 1.0 / np.sqrt(d // h)
    scores += _causal_mask(n)
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    out = scores @ v
    return out.transpose(1, 0, 2).reshape(n, d) @ proj_w


def _cross_attention(x, ctx, q_w, kv_w, proj_w, h):
    n, d = x.shape
    q = _heads(x @ q_w, h)
    k, v = np.split(ctx @ kv_w, 2, axis=-1)
    k, v = _heads(k, h), _heads(v, h)
    att = _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(d // h))
    return (att @ v).transpose(1, 0, 2).reshape(n, d) @ proj_w


class HourglassLM:
    def __init__(self, cfg: HourglassConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.params = init_weights(cfg) if params is None else params

    @classmethod
    def load(cls, path) -> "HourglassLM":
        cfg, params = load_weights(path)
        return cls(cfg, params)

    def save(self, path) -> None:
        save_weights(path, self.cfg, self.params)

    def _block(self, x, prefix, h, ctx=None):
        p = self.params
        x = x + _causal_attention(_layer_norm(x, p[f"{prefix}.ln1"]), p[f"{prefix}.qkv"], p[f"{prefix}.proj"], h)
        if ctx is not None:
            x = x + _cross_attention(
                _layer_norm(x, p[f"{prefix}.lnx"]), ctx,
                p[f"{prefix}.xq"], p[f"{prefix}.xkv"], p[f"{prefix}.xproj"], h,
            )
        y = _layer_norm(x, p[f"{prefix}.ln2"])
        return x + _gelu(y @ p[f"{prefix}.ff1"]) @ p[f"{prefix}.ff2"]

    def _stage(self, x, name, stage, ctx=None):
        for i in range(self.cfg.layers[stage]):
            x = self._block(x, f"{name}.{i}", self.cfg.heads[stage], ctx)
        return x

    def _shorten(self, x, name, s):
        p = self.params
        shifted = np.concatenate([np.broadcast_to(p[f"{name}.boundary"], (s - 1, x.shape[1])), x[: len(x) - (s - 1)]])
        return shifted.reshape(len(x) // s, s * x.shape[1]) @ p[f"{name}.w"] + p[f"{name}.b"]

    def r_embedding(self, r: float) -> np.ndarray:
        pos = r * (N_R_BUCKETS - 1)
        i = min(int(np.floor(pos)), N_R_BUCKETS - 2)
        frac = pos - i
        e = self.params["r_emb"]
        return (1.0 - frac) * e[i] + frac * e[i + 1]

    def context(self, cond: ConditionSpec) -> np.ndarray:
        emb = cond.shape_embedding
        if emb.shape != (self.cfg.shape_dim,):
            raise ValueError(f"shape embedding must have width {self.cfg.shape_dim}")
        return (emb @ self.params["ctx.w"]).reshape(self.cfg.n_context, self.cfg.dims[2])

    def forward(self, tokens, cond: ConditionSpec, return_hidden: bool = False):
        """Next-token logits, shape ``(len(tokens), vocab)``.

        Inputs not a multiple of 12 long are right-padded with PAD internally;
        logits of the padding are cut off again.
        """
        toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
        n = len(toks)
        if n == 0:
            raise ValueError("empty token sequence")
        if toks.min() < 0 or toks.max() >= self.cfg.vocab:
            raise ValueError("token outside vocabulary")
        padded = -(-n // BLOCK) * BLOCK
        if padded > self.cfg.max_len:
            raise ValueError(f"sequence of {n} tokens exceeds max_len {self.cfg.max_len}")
        if padded != n:
            toks = np.concatenate([toks, np.full(padded - n, PAD, dtype=np.int64)])
        p = self.params
        x = p["tok_emb"][toks] + p["pos_emb"][:padded] + self.r_embedding(cond.r)
        h0 = self._stage(x, "pre0", 0)
        x1 = self._shorten(h0, "down0", SHORTEN[0])
        h1 = self._stage(x1, "pre1", 1)
        x2 = self._shorten(h1, "down1", SHORTEN[1])
        h2 = self._stage(x2, "mid", 2, ctx=self.context(cond))
        u1 = np.repeat(h2 @ p["up1.w"], SHORTEN[1], axis=0) + h1
        u1 = self._stage(u1, "post1", 1)
        u0 = np.repeat(u1 @ p["up0.w"], SHORTEN[0], axis=0) + h0
        u0 = self._stage(u0, "post0", 0)
        logits = (_layer_norm(u0, p["ln_f"]) @ p["head"])[:n]
        if return_hidden:
            return logits, {"stage0": h0.shape, "stage1": h1.shape, "stage2": h2.shape}
        return logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def next_token_loss(logits, targets, n_valid: int | None = None) -> float:
    """Mean cross-entropy of ``logits[t]`` against ``targets[t + 1]``.

    ``n_valid`` limits the loss to the first ``n_valid`` targets (for padded inputs).
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n = len(targets) if n_valid is None else int(n_valid)
    if n < 2:
        raise ValueError("need at least two tokens for a next-token loss")
    if len(logits) < n - 1:
        raise ValueError(f"{len(logits)} logit rows cannot predict {n - 1} targets")
    lp = log_softmax(logits[: n - 1])
    return float(-lp[np.arange(n - 1), targets[1:n]].mean())


def support(logits, s: SamplerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tokens kept by temperature + top-k + top-p filtering and their renormalized probabilities.

    Candidates are ranked by probability, ties to the lower token id; the
    nucleus is the shortest ranked prefix reaching ``top_p``.
    """
    z = np.asarray(logits, dtype=np.float64).reshape(-1) / s.temperature
    probs = _softmax(z)
    order = np.lexsort((np.arange(len(probs)), -probs))[: s.top_k]
    kept = probs[order]
    cum = np.cumsum(kept)
    # tolerance absorbs rounding in the cumulative sum at an exact boundary
    n = int(np.searchsorted(cum, s.top_p - 1e-12, side="left")) + 1
    n = min(n, len(order))
    kept = kept[:n]
    return order[:n], kept / kept.sum()


def sample_tokens(logits, s: SamplerConfig, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    ids, probs = support(logits, s)
    cdf = np.cumsum(probs)
    u = rng.random(n)
    pick = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(ids) - 1)
    return ids[pick]


def sample_step(logits, s: SamplerConfig, rng: np.random.Generator) -> int:
    return int(sample_tokens(logits, s, rng, 1)[0])


def generate(model: HourglassLM, prefix, cond: ConditionSpec, s: SamplerConfig, max_tokens: int) -> np.ndarray:
    """Extend ``prefix`` one sampled token at a time until EOS or ``max_tokens``."""
    seq = [int(t) for t in np.asarray(prefix, dtype=np.int64).reshape(-1)]
    if not seq:
        seq = [BOS]
    if max_tokens > model.cfg.max_len:
        raise ValueError("max_tokens exceeds the model context")
    rng = s.rng()
    while len(seq) < max_tokens and seq[-1] != EOS:
        logits = model.forward(seq, cond)
        seq.append(sample_step(logits[-1], s, rng))
    return np.array(seq, dtype=np.int64)


def window_logprobs(model: HourglassLM, tokens, m: int, tau: int, cond: ConditionSpec) -> np.ndarray:
    """Log-probabilities of ``tokens[m : m + tau]``, each conditioned on BOS and every earlier token."""
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if m % BLOCK or tau <= 0 or tau % BLOCK:
        raise ValueError("window offset and length must be block aligned")
    if m >= len(toks):
        raise ValueError("window starts past the end of the sequence")
    end = min(m + tau, len(toks))
    inp = np.concatenate([[BOS], toks[:end]])
    lp = log_softmax(model.forward(inp[:-1], cond))
    pos = np.arange(m, end)
    return lp[pos, toks[m:end]]
