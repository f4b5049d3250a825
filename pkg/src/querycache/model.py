"""Toy decoder transformer used as the numeric substrate.

The model is deliberately small and fully deterministic: every weight comes
from a splitmix64 stream keyed by ``(seed, tensor index)``, so two processes
on any platform build bit-identical parameters from the same config.

Layout (pre-norm decoder, no biases, no weight tying between embedding and
unembedding)::

    h = embed[tokens]
    for each layer:
        x = rmsnorm(h)
        q, k, v = x @ w_q, x @ w_k, x @ w_v      (w_k is w_q when qk_tied)
        h = h + attention_provider(q, k, v) @ w_o
        h = h + gelu(rmsnorm(h) @ w_up) @ w_down
    logits = rmsnorm(h) @ w_out

Keys and queries are never rotated at projection time. Rotary embedding is
applied inside :func:`masked_attention` from a per-pair distance matrix, which
is what lets the engine reassign positions on every step.

Arithmetic: weights and activations are stored as float32, every matrix
product and reduction runs in float64 and is rounded back to float32.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, PreconditionError

__all__ = [
    "ModelConfig",
    "ToyModel",
    "QkvChunk",
    "AttentionInput",
    "ForwardResult",
    "build_toy_model",
    "project_qkv",
    "rotary_rotate",
    "masked_attention",
    "forward_chunk",
    "causal_self_attention_provider",
    "dense_forward",
    "save_weights",
    "load_weights",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_STRIDE = 0xD1B54A32D192ED03
_FFN_EXPANSION = 4
_NORM_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    n_heads: int = 4
    d_head: int = 16
    d_model: int = 64
    vocab_size: int = 512
    rope_base: float = 10000.0
    seed: int = 0
    qk_tied: bool = True

    def __post_init__(self):
        for name in ("n_layers", "n_heads", "d_head", "d_model", "vocab_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model != self.n_heads * self.d_head:
            raise ConfigurationError(
                f"d_model={self.d_model} does not equal n_heads*d_head="
                f"{self.n_heads}*{self.d_head}={self.n_heads * self.d_head}"
            )
        if self.d_head % 2:
            raise ConfigurationError(f"rotary embedding needs an even d_head, got {self.d_head}")
        if not self.rope_base > 0:
            raise ConfigurationError(f"rope_base must be > 0, got {self.rope_base}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    @property
    def d_ffn(self) -> int:
        return _FFN_EXPANSION * self.d_model

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------
# Portable pseudo-random generation
# --------------------------------------------------------------------------

def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of the splitmix64 generator started at ``seed``.

    Output ``i`` (0-based) is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15)``
    with all arithmetic modulo 2**64.
    """
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(int(seed) & _MASK64) + idx * np.uint64(_GOLDEN)
        return _mix64(z)


def _stream_seed(seed: int, tensor_index: int) -> int:
    with np.errstate(over="ignore"):
        z = np.array([(int(seed) + tensor_index * _STREAM_STRIDE) & _MASK64], dtype=np.uint64)
        return int(_mix64(z)[0])


def seeded_uniform(seed: int, tensor_index: int, shape: Sequence[int], bound: float) -> np.ndarray:
    """float32 samples from uniform(-bound, bound) for one named tensor.

    The top 24 bits of each splitmix64 output give u = bits / 2**24 in
    [0, 1), exactly representable in float32; the sample is (2u - 1) * bound.
    """
    n = int(np.prod(shape))
    bits = splitmix64(_stream_seed(seed, tensor_index), n) >> np.uint64(40)
    u = bits.astype(np.float64) / float(1 << 24)
    return ((2.0 * u - 1.0) * bound).astype(np.float32).reshape(shape)


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------

def tensor_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Documented tensor order, shared by generation and the weight file."""
    d, f, v = config.d_model, config.d_ffn, config.vocab_size
    names: list[tuple[str, tuple[int, ...]]] = [("embed", (v, d))]
    for layer in range(config.n_layers):
        names += [
            (f"layers.{layer}.w_q", (d, d)),
            (f"layers.{layer}.w_k", (d, d)),
            (f"layers.{layer}.w_v", (d, d)),
            (f"layers.{layer}.w_o", (d, d)),
            (f"layers.{layer}.w_up", (d, f)),
            (f"layers.{layer}.w_down", (f, d)),
        ]
    names.append(("w_out", (d, v)))
    return names


class ToyModel:
    """Immutable parameter container. Build with :func:`build_toy_model`."""

    def __init__(self, config: ModelConfig, weights: dict[str, np.ndarray]):
        self.config = config
        layout = tensor_layout(config)
        missing = [name for name, _ in layout if name not in weights]
        if missing:
            raise ConfigurationError(f"missing weight tensors: {missing}")
        self._weights: dict[str, np.ndarray] = {}
        self._w64: dict[str, np.ndarray] = {}
        for name, shape in layout:
            w = np.ascontiguousarray(weights[name], dtype=np.float32)
            if w.shape != shape:
                raise ConfigurationError(f"{name} has shape {w.shape}, expected {shape}")
            w.setflags(write=False)
            self._weights[name] = w
            w64 = w.astype(np.float64)
            w64.setflags(write=False)
            self._w64[name] = w64

    def weight(self, name: str) -> np.ndarray:
        return self._weights[name]

    def w64(self, name: str) -> np.ndarray:
        return self._w64[name]

    @property
    def weights(self) -> dict[str, np.ndarray]:
        return dict(self._weights)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, _ in tensor_layout(self.config):
            h.update(self._weights[name].astype("<f4").tobytes())
        return h.hexdigest()


def build_toy_model(config: ModelConfig) -> ToyModel:
    """Generate all weights from ``config.seed``.

    Tensor ``t`` in :func:`tensor_layout` order draws from its own splitmix64
    stream. Projections use uniform(-1/sqrt(d_in), 1/sqrt(d_in)); embeddings
    use uniform(-sqrt(3), sqrt(3)) so each coordinate has unit variance.
    With ``qk_tied`` the key projection is a copy of the query projection.
    """
    if not isinstance(config, ModelConfig):
        raise ConfigurationError("build_toy_model expects a ModelConfig")
    weights = {}
    for index, (name, shape) in enumerate(tensor_layout(config)):
        if name == "embed":
            bound = float(np.sqrt(3.0))
        else:
            bound = 1.0 / float(np.sqrt(shape[0]))
        if config.qk_tied and name.endswith(".w_k"):
            weights[name] = weights[name[: -len("w_k")] + "w_q"].copy()
            continue
        weights[name] = seeded_uniform(config.seed, index, shape, bound)
    return ToyModel(config, weights)


# --------------------------------------------------------------------------
# Per-operation building blocks
# --------------------------------------------------------------------------

@dataclass
class QkvChunk:
    """Per-head projections of one chunk of tokens at one layer."""

    layer: int
    queries: np.ndarray  # [l_H, n_heads, d_head]
    keys: np.ndarray
    values: np.ndarray
    absolute_positions: np.ndarray  # [l_H], strictly increasing

    def __post_init__(self):
        n = self.queries.shape[0]
        if self.keys.shape != self.queries.shape or self.values.shape != self.queries.shape:
            raise PreconditionError("queries, keys and values must share one shape")
        self.absolute_positions = np.asarray(self.absolute_positions, dtype=np.int64)
        if self.absolute_positions.shape != (n,):
            raise PreconditionError("absolute_positions must have one entry per token")
        if n > 1 and np.any(np.diff(self.absolute_positions) <= 0):
            raise PreconditionError("absolute_positions must be strictly increasing")

    def __len__(self) -> int:
        return self.queries.shape[0]


@dataclass
class AttentionInput:
    """Queries, concatenated keys/values and the per-pair distance matrix.

    ``causal_mask[i, j]`` is True where query ``i`` may attend to key ``j``.
    ``relative_distances[i, j]`` is the distance used to rotate key ``j`` for
    query ``i``; it must be >= 0 wherever the mask allows attention.
    """

    a_q: np.ndarray  # [n_q, n_heads, d_head]
    a_k: np.ndarray  # [n_k, n_heads, d_head]
    a_v: np.ndarray  # [n_k, n_heads, d_head]
    relative_distances: np.ndarray  # [n_q, n_k] int
    causal_mask: np.ndarray  # [n_q, n_k] bool
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.a_k.shape != self.a_v.shape:
            raise PreconditionError(f"a_k {self.a_k.shape} and a_v {self.a_v.shape} differ")
        if self.a_q.ndim != 3 or self.a_k.ndim != 3 or self.a_q.shape[1:] != self.a_k.shape[1:]:
            raise PreconditionError("a_q and a_k must both be [n, n_heads, d_head]")
        n_q, n_k = self.a_q.shape[0], self.a_k.shape[0]
        self.relative_distances = np.asarray(self.relative_distances, dtype=np.int64)
        self.causal_mask = np.asarray(self.causal_mask, dtype=bool)
        if self.relative_distances.shape != (n_q, n_k) or self.causal_mask.shape != (n_q, n_k):
            raise PreconditionError(
                f"distance/mask matrices must be {(n_q, n_k)}, got "
                f"{self.relative_distances.shape} and {self.causal_mask.shape}"
            )
        if np.any(self.relative_distances[self.causal_mask] < 0):
            raise PreconditionError("unmasked entries must have non-negative distance")


def project_qkv(model: ToyModel, hidden: np.ndarray, layer: int,
                positions: Sequence[int] | np.ndarray | None = None) -> QkvChunk:
    """Linear q/k/v projections of (already normalised) hidden states."""
    cfg = model.config
    if not 0 <= layer < cfg.n_layers:
        raise PreconditionError(f"layer {layer} out of range [0, {cfg.n_layers})")
    hidden = np.asarray(hidden)
    if hidden.ndim != 2 or hidden.shape[1] != cfg.d_model:
        raise PreconditionError(f"hidden must be [l_H, {cfg.d_model}], got {hidden.shape}")
    n = hidden.shape[0]
    h64 = hidden.astype(np.float64)
    shape = (n, cfg.n_heads, cfg.d_head)
    out = []
    for name in ("w_q", "w_k", "w_v"):
        proj = h64 @ model.w64(f"layers.{layer}.{name}")
        out.append(proj.astype(np.float32).reshape(shape))
    if positions is None:
        positions = np.arange(n, dtype=np.int64)
    return QkvChunk(layer, out[0], out[1], out[2], np.asarray(positions, dtype=np.int64))


def _rope_angles(distances: np.ndarray, d_head: int, rope_base: float) -> np.ndarray:
    inv_freq = rope_base ** (-np.arange(0, d_head, 2, dtype=np.float64) / d_head)
    return np.asarray(distances, dtype=np.float64)[..., None] * inv_freq


def rotary_rotate(vectors: np.ndarray, distances, rope_base: float) -> np.ndarray:
    """Rotate component pairs (2i, 2i+1) by ``distance * rope_base**(-2i/d)``.

    ``vectors`` is ``[n, d_head]`` or ``[n, n_heads, d_head]``; ``distances``
    has length ``n``. Rotation is counter-clockwise in each pair's plane and
    the result keeps the input dtype.
    """
    vectors = np.asarray(vectors)
    d_head = vectors.shape[-1]
    if d_head % 2:
        raise ConfigurationError(f"rotary embedding needs an even d_head, got {d_head}")
    distances = np.asarray(distances)
    if distances.shape != (vectors.shape[0],):
        raise PreconditionError("need exactly one distance per vector")
    angles = _rope_angles(distances, d_head, rope_base)  # [n, d/2]
    angles = angles.reshape((vectors.shape[0],) + (1,) * (vectors.ndim - 2) + (d_head // 2,))
    cos, sin = np.cos(angles), np.sin(angles)
    x = vectors.astype(np.float64)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out.astype(vectors.dtype, copy=False)


def _factor_distances(sub: np.ndarray):
    """Find ``a, b, cap`` with ``sub == minimum(a[:, None] - b[None, :], cap)``.

    ``cap`` is None when no clamping is needed. Returns None when the matrix
    has no such structure.
    """
    b = -sub[0]
    a = sub[:, 0] + b[0]
    if np.array_equal(a[:, None] - b[None, :], sub):
        return a, b, None
    cap = sub.max()
    col_max = sub.max(axis=0)
    j0 = int(np.argmin(col_max))
    if col_max[j0] >= cap:
        return None
    a = sub[:, j0].copy()
    rows = np.argmin(sub, axis=0)
    low = sub[rows, np.arange(sub.shape[1])]
    b = np.where(low < cap, a[rows] - low, a.min() - cap)
    if np.array_equal(np.minimum(a[:, None] - b[None, :], cap), sub):
        return a, b, cap
    return None


def _head_dots(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """[n_q, H, D] x [n_k, H, D] -> [H, n_q, n_k] via batched matmul."""
    return np.matmul(q.transpose(1, 0, 2), k.transpose(1, 2, 0))


def _const_scores(q: np.ndarray, k: np.ndarray, dists: np.ndarray, rope_base: float) -> np.ndarray:
    return _head_dots(q, rotary_rotate(k, dists, rope_base))


def _rotated_scores(q: np.ndarray, k: np.ndarray, dist: np.ndarray, rope_base: float) -> np.ndarray:
    """scores[h, i, j] = q[i, h] . rotate(k[j, h], dist[i, j]) in float64.

    Columns whose distance is the same for every query rotate the key once.
    The remaining columns use the standard RoPE factorisation when the
    distances have the form ``min(a_i - b_j, cap)``, and a per-pair fallback
    otherwise.
    """
    n_q, n_k = dist.shape
    n_heads, d_head = q.shape[1], q.shape[2]
    scores = np.empty((n_heads, n_q, n_k), dtype=np.float64)
    if n_k == 0:
        return scores
    const = np.all(dist == dist[0:1, :], axis=0)
    cols = np.flatnonzero(const)
    if cols.size:
        scores[:, :, cols] = _const_scores(q, k[cols], dist[0, cols], rope_base)
    rest = np.flatnonzero(~const)
    if rest.size == 0:
        return scores
    sub = dist[:, rest]
    kr = k[rest]
    factored = _factor_distances(sub)
    if factored is not None:
        a, b, cap = factored
        q_rot = rotary_rotate(q, -a, rope_base)
        k_rot = rotary_rotate(kr, -b, rope_base)
        block = _head_dots(q_rot, k_rot)
        if cap is not None:
            capped = _const_scores(q, kr, np.full(rest.size, cap), rope_base)
            block = np.where((a[:, None] - b[None, :] >= cap)[None], capped, block)
        scores[:, :, rest] = block
        return scores
    # general distance matrix: q . R(phi) k = cos*(qa.ka + qb.kb) + sin*(qb.ka - qa.kb)
    qa, qb = q[..., 0::2], q[..., 1::2]
    ka, kb = kr[..., 0::2], kr[..., 1::2]
    angles = _rope_angles(sub, d_head, rope_base)  # [n_q, n_r, d/2]
    same = np.einsum("qhp,khp->hqkp", qa, ka) + np.einsum("qhp,khp->hqkp", qb, kb)
    cross = np.einsum("qhp,khp->hqkp", qb, ka) - np.einsum("qhp,khp->hqkp", qa, kb)
    scores[:, :, rest] = (same * np.cos(angles)[None] + cross * np.sin(angles)[None]).sum(-1)
    return scores


def masked_attention(inp: AttentionInput, debug: bool = False) -> np.ndarray:
    """Softmax attention with rotary distances applied to the keys.

    Returns ``[n_q, n_heads, d_head]`` float32. Raises
    :class:`DegenerateInputError` when some query row has no unmasked key.
    """
    mask = inp.causal_mask
    if mask.shape[0] and not np.all(mask.any(axis=1)):
        bad = np.flatnonzero(~mask.any(axis=1))
        raise DegenerateInputError(f"query rows {bad.tolist()} have no unmasked key")
    q = inp.a_q.astype(np.float64)
    k = inp.a_k.astype(np.float64)
    v = inp.a_v.astype(np.float64)
    d_head = q.shape[-1]
    scores = _rotated_scores(q, k, inp.relative_distances, inp.rope_base)
    scores *= 1.0 / np.sqrt(d_head)
    if not mask.all():
        scores[:, ~mask] = -np.inf
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores, out=scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    if debug:
        sums = weights.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise AssertionError(f"softmax rows deviate from 1 by {np.abs(sums - 1).max()}")
    out = np.matmul(weights, v.transpose(1, 0, 2)).transpose(1, 0, 2)
    return out.astype(np.float32)


# --------------------------------------------------------------------------
# Forward pass
# --------------------------------------------------------------------------

AttentionProvider = Callable[[int, QkvChunk], np.ndarray]


@dataclass
class ForwardResult:
    hidden: np.ndarray  # [l_H, d_model] final residual stream, float32
    logits: np.ndarray  # [l_H, vocab_size], float32


def _rmsnorm(x: np.ndarray) -> np.ndarray:
    x64 = x.astype(np.float64)
    scale = 1.0 / np.sqrt(np.mean(x64 * x64, axis=-1, keepdims=True) + _NORM_EPS)
    return (x64 * scale).astype(np.float32)


def _gelu(x: np.ndarray) -> np.ndarray:
    inner = x * x
    inner *= 0.044715
    inner += 1.0
    inner *= x
    inner *= np.sqrt(2.0 / np.pi)
    np.tanh(inner, out=inner)
    inner += 1.0
    inner *= x
    inner *= 0.5
    return inner


def embed_tokens(model: ToyModel, tokens) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise PreconditionError("token sequence must be a non-empty 1-D sequence")
    if tokens.min() < 0 or tokens.max() >= model.config.vocab_size:
        raise PreconditionError(
            f"token ids must lie in [0, {model.config.vocab_size}), got "
            f"[{tokens.min()}, {tokens.max()}]"
        )
    return model.weight("embed")[tokens].copy()


def forward_chunk(model: ToyModel, tokens, attention_provider: AttentionProvider,
                  start_position: int = 0) -> ForwardResult:
    """Run one chunk through every layer.

    ``attention_provider(layer, qkv)`` receives the chunk's unrotated
    projections and must return the attention output
    ``[l_H, n_heads, d_head]``; this is where the engine splices in memory.
    """
    cfg = model.config
    h = embed_tokens(model, tokens)
    n = h.shape[0]
    positions = np.arange(start_position, start_position + n, dtype=np.int64)
    for layer in range(cfg.n_layers):
        qkv = project_qkv(model, _rmsnorm(h), layer, positions)
        attn = np.asarray(attention_provider(layer, qkv))
        if attn.shape != (n, cfg.n_heads, cfg.d_head):
            raise PreconditionError(f"attention provider returned shape {attn.shape}")
        h = (h.astype(np.float64)
             + attn.reshape(n, cfg.d_model).astype(np.float64) @ model.w64(f"layers.{layer}.w_o")
             ).astype(np.float32)
        up = _rmsnorm(h).astype(np.float64) @ model.w64(f"layers.{layer}.w_up")
        h = (h.astype(np.float64) + _gelu(up) @ model.w64(f"layers.{layer}.w_down")).astype(np.float32)
    logits = (_rmsnorm(h).astype(np.float64) @ model.w64("w_out")).astype(np.float32)
    return ForwardResult(hidden=h, logits=logits)


def causal_self_attention_provider(model: ToyModel) -> AttentionProvider:
    """Plain causal attention of a chunk over itself with true distances."""

    def provider(layer: int, qkv: QkvChunk) -> np.ndarray:
        pos = qkv.absolute_positions
        dist = pos[:, None] - pos[None, :]
        return masked_attention(AttentionInput(
            qkv.queries, qkv.keys, qkv.values, dist, dist >= 0, model.config.rope_base))

    return provider


def dense_forward(model: ToyModel, tokens) -> ForwardResult:
    """Full causal forward pass over ``tokens`` in a single chunk."""
    return forward_chunk(model, tokens, causal_self_attention_provider(model))


# --------------------------------------------------------------------------
# Weight file
# --------------------------------------------------------------------------

_WEIGHT_MAGIC = "querycache-weights"
_WEIGHT_VERSION = 1
_HEADER_FIELDS = ("n_layers", "n_heads", "d_head", "d_model", "vocab_size",
                  "rope_base", "seed", "qk_tied")


def save_weights(model: ToyModel, path) -> None:
    """Write the weight file.

    Format: UTF-8 header lines ``magic version``, then ``field=value`` for
    every ModelConfig field in the fixed order ``n_layers, n_heads, d_head,
    d_model, vocab_size, rope_base, seed, qk_tied``, then ``end``. After the
    header come the tensors of :func:`tensor_layout` as little-endian
    float32, row-major, no padding.
    """
    cfg = model.config
    lines = [f"{_WEIGHT_MAGIC} {_WEIGHT_VERSION}"]
    for name in _HEADER_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, bool):
            value = int(value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name}={value}")
    lines.append("end")
    buf = io.BytesIO()
    buf.write(("\n".join(lines) + "\n").encode("utf-8"))
    for name, _ in tensor_layout(cfg):
        buf.write(model.weight(name).astype("<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_weights(path) -> ToyModel:
    data = Path(path).read_bytes()
    end = data.find(b"\nend\n")
    if end < 0:
        raise ConfigurationError("weight file header is missing its 'end' line")
    header = data[:end].decode("utf-8").split("\n")
    magic = header[0].split()
    if len(magic) != 2 or magic[0] != _WEIGHT_MAGIC or int(magic[1]) != _WEIGHT_VERSION:
        raise ConfigurationError(f"unrecognised weight file header {header[0]!r}")
    fields = dict(line.split("=", 1) for line in header[1:])
    if tuple(fields) != _HEADER_FIELDS:
        raise ConfigurationError(f"header fields {tuple(fields)} are not in the documented order")
    cfg = ModelConfig(
        n_layers=int(fields["n_layers"]), n_heads=int(fields["n_heads"]),
        d_head=int(fields["d_head"]), d_model=int(fields["d_model"]),
        vocab_size=int(fields["vocab_size"]), rope_base=float(fields["rope_base"]),
        seed=int(fields["seed"]), qk_tied=bool(int(fields["qk_tied"])),
    )
    offset = end + len(b"\nend\n")
    weights = {}
    for name, shape in tensor_layout(cfg):
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        weights[name] = arr.astype(np.float32).reshape(shape)
        offset += 4 * count
    if offset != len(data):
        raise ConfigurationError(f"weight file has {len(data) - offset} trailing bytes")
    return ToyModel(cfg, weights)

