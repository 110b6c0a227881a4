"""Canonical mesh <-> token sequence codec.

Every face becomes one 12-token block. A quad block is its four corners'
quantized coordinates, each corner emitted as ``(z, x, y)``; a triangle block
is three PAD tokens followed by its three corners. Coordinates use 1024
levels over [-0.95, 0.95]. Vertices are deduplicated and sorted by
``(z, x, y)``; each face is rotated (winding preserved) to start at its
smallest vertex id and faces are sorted by that rotated tuple.

Token sequences are plain 1-D ``int64`` numpy arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .mesh import NORMALIZE_BOUND, Mesh, normalize

N_LEVELS = 1024
PAD = 1024
BOS = 1025
EOS = 1026
VOCAB_SIZE = 1027
BLOCK = 12

BIN_MAGIC = b"QGPT"
BIN_VERSION = 1


class CodecError(ValueError):
    pass


class MalformedBlockError(CodecError):
    def __init__(self, message: str, block: int, offset: int):
        self.block = block
        self.offset = offset
        super().__init__(f"block {block}, offset {offset}: {message}")


def quantize(coords) -> np.ndarray:
    """Map normalized coordinates to integer levels, rounding halves away from zero."""
    c = np.clip(np.asarray(coords, dtype=np.float64), -NORMALIZE_BOUND, NORMALIZE_BOUND)
    q = (c + NORMALIZE_BOUND) / (2 * NORMALIZE_BOUND) * (N_LEVELS - 1)
    # q >= 0 after clipping, so floor(q + 0.5) is round-half-away-from-zero
    return np.clip(np.floor(q + 0.5), 0, N_LEVELS - 1).astype(np.int64)


def quantize_coord(c: float) -> int:
    return int(quantize(c))


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / (N_LEVELS - 1) * (2 * NORMALIZE_BOUND) - NORMALIZE_BOUND


class QuantizedMesh:
    """Canonical quantized mesh.

    ``vertices`` is an ``(n, 3)`` int array in x, y, z component order, sorted
    strictly increasing by ``(z, x, y)``. ``faces`` are canonically rotated
    and sorted; ``face_array`` holds the same faces as an ``(F, 4)`` array
    with -1 in the last column of triangles.
    """

    def __init__(self, vertices, faces, dropped_faces: int = 0):
        self.vertices = np.asarray(vertices, dtype=np.int64).reshape(-1, 3)
        if isinstance(faces, np.ndarray):
            self.face_array = faces.reshape(-1, 4)
        else:
            faces = tuple(tuple(int(i) for i in f) for f in faces)
            self.face_array = np.array(
                [f if len(f) == 4 else f + (-1,) for f in faces], dtype=np.int64
            ).reshape(-1, 4)
            self.__dict__["faces"] = faces
        self.dropped_faces = dropped_faces

    @cached_property
    def faces(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(r if r[3] >= 0 else r[:3]) for r in self.face_array.tolist())

    def __eq__(self, other):
        if not isinstance(other, QuantizedMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(self.face_array, other.face_array)

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.face_array.tobytes()))

    def __repr__(self):
        return f"QuantizedMesh(n_vertices={len(self.vertices)}, n_faces={len(self.face_array)})"

    @property
    def n_faces(self) -> int:
        return len(self.face_array)

    @property
    def n_triangles(self) -> int:
        return int(np.count_nonzero(self.face_array[:, 3] < 0))

    @property
    def n_quads(self) -> int:
        return int(np.count_nonzero(self.face_array[:, 3] >= 0))

    def to_mesh(self) -> Mesh:
        return Mesh.from_arrays(dequantize(self.vertices), self.face_array)


def rotate_face(face: Sequence[int]) -> tuple[int, ...]:
    k = min(range(len(face)), key=face.__getitem__)
    return tuple(face[k:]) + tuple(face[:k])


def canonicalize(mesh: Mesh) -> QuantizedMesh:
    """Quantize, merge coincident vertices, and put vertices and faces in canonical order.

    Faces that repeat a vertex after quantization are dropped (counted in
    ``dropped_faces``), as are vertices no surviving face references.
    """
    if mesh.n_vertices == 0 or mesh.n_faces == 0:
        return QuantizedMesh(np.zeros((0, 3), dtype=np.int64), np.zeros((0, 4), dtype=np.int64), 0)
    q = quantize(mesh.vertices)
    # packed (z, x, y) key: 10 bits per component, so integer order is the lexicographic order
    key = (q[:, 2] << 20) | (q[:, 0] << 10) | q[:, 1]
    ukey, inv = np.unique(key, return_inverse=True)
    inv = inv.reshape(-1)
    uniq = np.stack([ukey >> 20, (ukey >> 10) & 1023, ukey & 1023], axis=1)
    fa = mesh.face_array
    arity = mesh.arity
    valid = fa >= 0
    g = np.where(valid, inv[np.where(valid, fa, 0)], -1)
    # a face degenerates when two of its valid corners collapse onto one vertex
    same = (g[:, :, None] == g[:, None, :]) & valid[:, :, None] & valid[:, None, :]
    keep = same.sum(axis=(1, 2)) == arity
    g, arity, valid = g[keep], arity[keep], valid[keep]
    dropped = int(len(keep) - keep.sum())
    used = np.unique(g[valid])
    remap = np.full(len(uniq), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    g = np.where(valid, remap[np.where(valid, g, 0)], -1)
    start = np.argmin(np.where(valid, g, np.iinfo(np.int64).max), axis=1)
    cols = (start[:, None] + np.arange(4)[None, :]) % arity[:, None]
    rot = np.where(valid, np.take_along_axis(g, cols, axis=1), -1)
    # -1 padding sorts a triangle before any quad sharing its first three ids, as tuple order does
    order = np.lexsort(rot.T[::-1])
    verts = uniq[used][:, [1, 2, 0]]
    return QuantizedMesh(verts, rot[order], dropped)


def tokenize(qm: QuantizedMesh, with_delimiters: bool = False) -> np.ndarray:
    """Emit one 12-token block per face in canonical order."""
    F = qm.n_faces
    zxy = qm.vertices[:, [2, 0, 1]] if len(qm.vertices) else np.zeros((0, 3), dtype=np.int64)
    out = np.full((F, BLOCK), PAD, dtype=np.int64)
    if F:
        # triangles: shift corners right so the PAD slot leads the block
        fa = np.where((qm.face_array[:, 3] < 0)[:, None], np.roll(qm.face_array, 1, axis=1), qm.face_array)
        valid = fa >= 0
        coords = zxy[np.where(valid, fa, 0)]  # (F, 4, 3)
        out = np.where(np.repeat(valid, 3, axis=1), coords.reshape(F, BLOCK), PAD)
    seq = out.reshape(-1)
    if with_delimiters:
        seq = np.concatenate([[BOS], seq, [EOS]])
    return seq.astype(np.int64)


def encode_mesh(mesh: Mesh, with_delimiters: bool = False, normalized: bool = False) -> np.ndarray:
    if not normalized and mesh.n_vertices:
        mesh = normalize(mesh)
    return tokenize(canonicalize(mesh), with_delimiters)


@dataclass
class DecodeDiagnostics:
    n_faces: int = 0
    n_triangles: int = 0
    n_quads: int = 0
    partial_blocks: int = 0
    trailing_tokens_dropped: int = 0
    malformed_block: int | None = None
    malformed_offset: int | None = None
    blocks_skipped: int = 0
    degenerate_faces: int = 0
    had_bos: bool = False
    had_eos: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _strip_delimiters(seq: np.ndarray, strict: bool) -> tuple[np.ndarray, bool, bool, int | None]:
    """Return payload, BOS/EOS presence, and the payload index of a stray delimiter."""
    had_bos = bool(len(seq) > 0 and seq[0] == BOS)
    start = 1 if had_bos else 0
    body = seq[start:]
    eos_pos = np.nonzero(body == EOS)[0]
    had_eos = False
    if len(eos_pos):
        first = int(eos_pos[0])
        if first == len(body) - 1:
            had_eos = True
            body = body[:-1]
        elif not strict:
            # generation stops at EOS; anything after it is not payload
            had_eos = True
            body = body[:first]
    stray = np.nonzero((body == BOS) | (body == EOS))[0]
    return body, had_bos, had_eos, (int(stray[0]) if len(stray) else None)


def _check_block(block: np.ndarray) -> tuple[str, int] | None:
    """Describe the first structural defect in a 12-token block, or None."""
    for off, t in enumerate(block):
        if t < 0 or t > EOS:
            return f"token {int(t)} outside vocabulary", off
        if t in (BOS, EOS):
            return f"delimiter {int(t)} inside payload", off
    is_pad = block == PAD
    if is_pad[0]:
        for off in range(3):
            if not is_pad[off]:
                return "triangle block needs exactly 3 leading PAD tokens", off
        rest = np.nonzero(is_pad[3:])[0]
        if len(rest):
            return "PAD outside the triangle prefix", int(rest[0]) + 3
    else:
        rest = np.nonzero(is_pad)[0]
        if len(rest):
            return "PAD outside the triangle prefix", int(rest[0])
    return None


def detokenize(seq, mode: str = "strict") -> tuple[Mesh, DecodeDiagnostics]:
    """Rebuild a mesh from tokens.

    ``strict`` raises :class:`MalformedBlockError` on any structural defect.
    ``lenient`` drops a trailing partial block, stops at the first malformed
    block, skips faces that repeat a vertex, and reports all of it in the
    returned diagnostics.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown mode {mode!r}")
    strict = mode == "strict"
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    diag = DecodeDiagnostics()
    body, diag.had_bos, diag.had_eos, stray = _strip_delimiters(seq, strict)
    n_full, rem = divmod(len(body), BLOCK)
    if strict and stray is not None:
        raise MalformedBlockError("misplaced BOS/EOS", stray // BLOCK, stray % BLOCK)
    if rem:
        if strict:
            check_blocks(body[: n_full * BLOCK])
            raise MalformedBlockError(
                f"payload length {len(body)} is not a multiple of {BLOCK}", n_full, rem
            )
        diag.partial_blocks = 1
        diag.trailing_tokens_dropped = rem
    blocks = body[: n_full * BLOCK].reshape(n_full, BLOCK)

    vert_ids: dict[tuple[int, int, int], int] = {}
    coords: list[tuple[int, int, int]] = []
    faces: list[tuple[int, ...]] = []
    for b, block in enumerate(blocks):
        bad = _check_block(block)
        if bad is not None:
            if strict:
                raise MalformedBlockError(bad[0], b, bad[1])
            diag.malformed_block, diag.malformed_offset = b, bad[1]
            diag.blocks_skipped = n_full - b
            break
        start = 3 if block[0] == PAD else 0
        corners = block[start:].reshape(-1, 3)
        face = []
        for z, x, y in corners.tolist():
            key = (z, x, y)
            vid = vert_ids.get(key)
            if vid is None:
                vid = vert_ids[key] = len(coords)
                coords.append((x, y, z))
            face.append(vid)
        if len(set(face)) != len(face):
            if strict:
                raise MalformedBlockError("face repeats a vertex", b, start)
            diag.degenerate_faces += 1
            continue
        faces.append(tuple(face))

    verts = dequantize(np.array(coords, dtype=np.int64).reshape(-1, 3))
    mesh = Mesh(verts, tuple(faces))
    diag.n_faces = len(faces)
    diag.n_quads = sum(1 for f in faces if len(f) == 4)
    diag.n_triangles = diag.n_faces - diag.n_quads
    return mesh, diag


def check_blocks(seq) -> None:
    """Raise :class:`MalformedBlockError` unless ``seq`` is a delimiter-free block-valid payload."""
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    n_full, rem = divmod(len(seq), BLOCK)
    for b in range(n_full):
        bad = _check_block(seq[b * BLOCK : (b + 1) * BLOCK])
        if bad is not None:
            raise MalformedBlockError(bad[0], b, bad[1])
    if rem:
        raise MalformedBlockError(f"length {len(seq)} is not a multiple of {BLOCK}", n_full, rem)


def payload(seq) -> np.ndarray:
    """Tokens with a leading BOS and trailing EOS removed."""
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    if len(seq) and seq[0] == BOS:
        seq = seq[1:]
    if len(seq) and seq[-1] == EOS:
        seq = seq[:-1]
    return seq


def truncate_windows(seq, window_len: int) -> list[np.ndarray]:
    """Cut a block-valid payload into consecutive block-aligned windows; the last may be short."""
    if window_len <= 0 or window_len % BLOCK:
        raise CodecError(f"window length must be a positive multiple of {BLOCK}, got {window_len}")
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    check_blocks(seq)
    return [seq[i : i + window_len] for i in range(0, len(seq), window_len)]


# token files


def write_tokens_text(path, tokens, comments: Sequence[str] = ()) -> None:
    lines = [f"# {c}\n" for c in comments]
    lines.extend(f"{int(t)}\n" for t in np.asarray(tokens).reshape(-1))
    Path(path).write_bytes("".join(lines).encode("ascii"))


def read_tokens_text(path) -> np.ndarray:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise CodecError(f"{path}: line {lineno}: not an integer token: {s!r}") from None
    return np.array(out, dtype=np.int64)


def write_tokens_bin(path, tokens) -> None:
    arr = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if len(arr) and (arr.min() < 0 or arr.max() > 0xFFFF):
        raise CodecError("tokens do not fit in 16 bits")
    Path(path).write_bytes(BIN_MAGIC + struct.pack("B", BIN_VERSION) + arr.astype("<u2").tobytes())


def read_tokens_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != BIN_MAGIC:
        raise CodecError(f"{path}: not a binary token file (bad magic)")
    if len(data) < 5 or data[4] != BIN_VERSION:
        raise CodecError(f"{path}: unsupported token file version {data[4] if len(data) > 4 else None}")
    body = data[5:]
    if len(body) % 2:
        raise CodecError(f"{path}: truncated 16-bit token stream")
    return np.frombuffer(body, dtype="<u2").astype(np.int64)


def read_tokens(path) -> np.ndarray:
    """Read either token format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BIN_MAGIC:
        return read_tokens_bin(path)
    return read_tokens_text(path)


def write_tokens(path, tokens, fmt: str = "text") -> None:
    if fmt == "bin":
        write_tokens_bin(path, tokens)
    elif fmt == "text":
        write_tokens_text(path, tokens)
    else:
        raise ValueError(f"unknown token format {fmt!r}")
