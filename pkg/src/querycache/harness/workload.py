"""Synthetic workloads: planted needles, key/value records and random text.

Token ids are synthetic, so "relevance" is defined geometrically. At the
first layer a token's query and key vectors depend on its id alone (the
layer sees only its normalised embedding), which makes the alignment between
a planted block and the user query something the generator can dial in
exactly and the test suite can re-measure afterwards.

Deeper layers mix context into every vector, so first-layer alignment only
carries through when the query shares tokens with the needle, the way a
real question repeats words of the passage it asks about. That is the
default. With ``needle_in_query=False`` the query may not contain the
needle token; the target is then met at the first layer only and decays
deeper in the stack.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..engine import EngineConfig, SegmentedPrompt
from ..errors import ConfigurationError, GenerationError
from ..model import ToyModel, _rmsnorm, project_qkv

__all__ = ["WorkloadSpec", "Workload", "generate_workload", "first_layer_tables", "cosine",
           "orthogonal_query_pair",
           "WORKLOAD_KINDS"]

WORKLOAD_KINDS = ("planted-needle", "kv-retrieval", "random-context", "oracle-check")
KV_RECORD_KEY_REPEAT = 4
KV_RECORD_VALUES = 4


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "planted-needle"
    context_length: int = 4096
    needle_depth: float | None = None
    needle_alignment: float | None = None
    seed: int = 0
    repetitions: int = 1
    query_length: int = 8
    global_length: int = 16
    continuation_length: int = 0
    decode_tokens: int = 8
    needle_in_query: bool = True  # False: alignment must come from other tokens

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise ConfigurationError(f"unknown workload kind {self.kind!r}; expected one of {WORKLOAD_KINDS}")
        if self.context_length < 1:
            raise ConfigurationError("context_length must be >= 1")
        needle = self.kind == "planted-needle"
        has_fields = self.needle_depth is not None and self.needle_alignment is not None
        if needle and not has_fields:
            raise ConfigurationError("planted-needle workloads need needle_depth and needle_alignment")
        if not needle and (self.needle_depth is not None or self.needle_alignment is not None):
            raise ConfigurationError(f"needle fields are only valid for planted-needle, not {self.kind}")
        if needle and not 0.0 <= self.needle_depth <= 1.0:
            raise ConfigurationError("needle_depth must lie in [0, 1]")
        if needle and not -1.0 <= self.needle_alignment <= 1.0:
            raise ConfigurationError("needle_alignment must lie in [-1, 1]")
        for name in ("repetitions",):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("query_length", "global_length", "continuation_length", "decode_tokens"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    def with_seed(self, seed: int) -> "WorkloadSpec":
        return WorkloadSpec(**{**asdict(self), "seed": seed})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Workload:
    spec: WorkloadSpec
    prompt: SegmentedPrompt
    ground_truth_block: int | None = None
    needle_span: tuple[int, int] | None = None  # offsets into the context segment
    alignment: float | None = None  # first-layer cosine, measured at generation
    diagnostics: dict = field(default_factory=dict)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom else 0.0


def first_layer_tables(model: ToyModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-token first-layer query and key vectors, flattened over heads."""
    cfg = model.config
    emb = _rmsnorm(model.weight("embed"))
    qkv = project_qkv(model, emb, 0)
    return (qkv.queries.reshape(cfg.vocab_size, -1).astype(np.float64),
            qkv.keys.reshape(cfg.vocab_size, -1).astype(np.float64))


def _allowed(vocab: int, excluded) -> np.ndarray:
    mask = np.ones(vocab, dtype=bool)
    mask[np.asarray(sorted(set(int(t) for t in excluded)), dtype=np.int64)] = False
    return np.flatnonzero(mask)


def _search_query(q_table: np.ndarray, target: np.ndarray, fillers: np.ndarray,
                  alignment: float, forbidden=(), max_passes: int = 8) -> tuple[np.ndarray, float, int]:
    """Coordinate ascent over query slots until the summed query aligns with ``target``.

    Each step rewrites one slot with the allowed vocabulary entry that
    maximises the cosine between the summed first-layer query vectors and
    the needle key. Slots are visited round-robin; the search stops at the
    target, after a pass with no improvement, or after ``max_passes``.
    Returns (tokens, cosine, slot rewrites).
    """
    banned = np.zeros(q_table.shape[0], dtype=bool)
    banned[list(forbidden)] = True
    tokens = fillers.copy()
    total = q_table[tokens].sum(axis=0)
    unit = target / np.linalg.norm(target)
    best = cosine(total, target)
    rewritten = 0
    for _ in range(max_passes):
        improved = False
        for slot in range(len(tokens)):
            if best >= alignment:
                return tokens, best, rewritten
            base = total - q_table[tokens[slot]]
            cand = base[None, :] + q_table
            cos = (cand @ unit) / np.maximum(np.linalg.norm(cand, axis=1), 1e-300)
            cos[banned] = -np.inf
            choice = int(np.argmax(cos))
            if cos[choice] > best and choice != tokens[slot]:
                tokens[slot] = choice
                total = base + q_table[choice]
                best = float(cos[choice])
                rewritten += 1
                improved = True
        if not improved:
            break
    return tokens, best, rewritten


def _finalized_blocks(spec: WorkloadSpec, cfg: EngineConfig) -> int:
    stream = spec.context_length + spec.continuation_length
    return max(0, (stream - cfg.local_window) // cfg.block_size)


def generate_workload(spec: WorkloadSpec, model: ToyModel, engine_config: EngineConfig) -> Workload:
    """Build one deterministic prompt (and ground truth) from ``spec.seed``."""
    if spec.global_length > engine_config.n_init:
        raise ConfigurationError(
            f"global_length={spec.global_length} exceeds n_init={engine_config.n_init}")
    rng = np.random.default_rng(spec.seed)
    vocab = model.config.vocab_size
    if spec.kind == "planted-needle":
        return _planted_needle(spec, model, engine_config, rng)
    if spec.kind == "kv-retrieval":
        return _kv_retrieval(spec, model, engine_config, rng)
    if spec.kind == "oracle-check":
        context = rng.integers(0, vocab, spec.context_length)
        return Workload(spec, SegmentedPrompt(context_tokens=context))
    glob = rng.integers(0, vocab, spec.global_length)
    query = rng.integers(0, vocab, spec.query_length)
    context = rng.integers(0, vocab, spec.context_length)
    cont = rng.integers(0, vocab, spec.continuation_length)
    return Workload(spec, SegmentedPrompt(glob, query, context, cont))


def _planted_needle(spec: WorkloadSpec, model: ToyModel, cfg: EngineConfig,
                    rng: np.random.Generator) -> Workload:
    vocab = model.config.vocab_size
    lb = cfg.block_size
    n_final = _finalized_blocks(spec, cfg)
    if n_final < 1 or spec.context_length < lb:
        raise GenerationError(
            f"context of {spec.context_length} tokens finalizes no block with "
            f"local_window={cfg.local_window}, block_size={lb}")
    if spec.query_length < 1:
        raise GenerationError("a planted needle needs at least one query token to align with")
    q_table, k_table = first_layer_tables(model)
    needle_token = int(rng.integers(0, vocab))
    target = k_table[needle_token]
    fillers = rng.choice(_allowed(vocab, [needle_token]), spec.query_length)
    forbidden = [] if spec.needle_in_query else [needle_token]
    query, achieved, rewritten = _search_query(q_table, target, fillers, spec.needle_alignment,
                                               forbidden=forbidden)
    if achieved < spec.needle_alignment:
        raise GenerationError(
            f"needle alignment {spec.needle_alignment} unattainable: best first-layer cosine "
            f"{achieved:.4f} with {spec.query_length} query tokens, d_model={model.config.d_model}, "
            f"vocab_size={vocab}; lengthen the query or lower the target")
    excluded = {needle_token, *query.tolist()}  # distractors never echo the query
    pool = _allowed(vocab, excluded)
    context = rng.choice(pool, spec.context_length)
    max_block = min(n_final, spec.context_length // lb) - 1
    block = min(int(np.floor(spec.needle_depth * spec.context_length)) // lb, max_block)
    start = block * lb
    context[start:start + lb] = needle_token
    glob = rng.choice(pool, spec.global_length)
    cont = rng.choice(pool, spec.continuation_length)
    diagnostics = {
        "needle_token": needle_token,
        "query_slots_rewritten": rewritten,
        "needle_copies_in_query": int(np.count_nonzero(query == needle_token)),
        "finalizable_blocks": n_final,
        "requested_depth_offset": int(np.floor(spec.needle_depth * spec.context_length)),
    }
    return Workload(spec, SegmentedPrompt(glob, query, context, cont), ground_truth_block=block,
                    needle_span=(start, start + lb), alignment=achieved, diagnostics=diagnostics)


def _kv_retrieval(spec: WorkloadSpec, model: ToyModel, cfg: EngineConfig,
                  rng: np.random.Generator) -> Workload:
    """Context made of records ``key x4, value x4``; the query repeats one key."""
    vocab = model.config.vocab_size
    record = KV_RECORD_KEY_REPEAT + KV_RECORD_VALUES
    n_records = spec.context_length // record
    n_final = _finalized_blocks(spec, cfg)
    if n_records < 1 or n_final < 1:
        raise GenerationError("context too short for a single finalized key/value record")
    keys = rng.choice(vocab, size=min(n_records, vocab // 2), replace=False)
    keys = np.resize(keys, n_records)
    value_pool = _allowed(vocab, keys)
    context = rng.choice(value_pool, spec.context_length)
    for r in range(n_records):
        base = r * record
        context[base:base + KV_RECORD_KEY_REPEAT] = keys[r]
    eligible = [r for r in range(n_records)
                if (r * record + record - 1) // cfg.block_size < n_final
                and r * record // cfg.block_size == (r * record + record - 1) // cfg.block_size
                and np.count_nonzero(keys == keys[r]) == 1]
    if not eligible:
        raise GenerationError("no key/value record lies inside a finalized block")
    target = int(eligible[int(rng.integers(0, len(eligible)))])
    query = np.full(max(spec.query_length, 1), keys[target], dtype=np.int64)
    glob = rng.choice(value_pool, spec.global_length)
    cont = rng.choice(value_pool, spec.continuation_length)
    start = target * record
    return Workload(spec, SegmentedPrompt(glob, query, context, cont),
                    ground_truth_block=start // cfg.block_size, needle_span=(start, start + record),
                    diagnostics={"queried_key": int(keys[target]), "records": n_records})


def orthogonal_query_pair(model: ToyModel, length: int, seed: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Two query segments whose summed first-layer query vectors are orthogonal.

    The first query is random; the second starts random and is rewritten
    slot by slot, each time picking the token that brings the cosine with
    the first query closest to zero. Returns (query_a, query_b, cosine).
    """
    if length < 1:
        raise GenerationError("queries need at least one token")
    rng = np.random.default_rng(seed)
    q_table, _ = first_layer_tables(model)
    vocab = model.config.vocab_size
    a = rng.integers(0, vocab, length)
    b = rng.integers(0, vocab, length)
    target = q_table[a].sum(axis=0)
    unit = target / np.linalg.norm(target)
    total = q_table[b].sum(axis=0)
    for _ in range(2):
        for slot in range(length):
            base = total - q_table[b[slot]]
            cand = base[None, :] + q_table
            cos = np.abs(cand @ unit) / np.maximum(np.linalg.norm(cand, axis=1), 1e-300)
            b[slot] = int(np.argmin(cos))
            total = base + q_table[b[slot]]
    return a, b, cosine(total, target)
