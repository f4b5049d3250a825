"""Streaming inference loop with query-aware block memory.

A session keeps, for every layer:

* the pinned global span (system prompt / task description, at most
  ``n_init`` tokens) and the pinned query span;
* a *tail* of not-yet-finalized context tokens: the newest ``local_window``
  of them form the local span, anything older sits in the accumulating block;
* a :class:`~querycache.tiers.BlockStore` of finalized memory blocks.

Each step (a prefill chunk, or one token while decoding) scores every
finalized block against the current tokens and the query, fetches the best
``num_blocks`` through the LRU hot tier, attends over
``global | query | retrieved | local | current chunk`` and then pushes the
chunk into the tail, finalizing blocks as whole ``block_size`` groups leave
the local window.

Positions: every global, query and retrieved key is rotated by exactly
``local_window``; local and in-chunk keys use their true distance to the
query token, capped at ``local_window``.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .blocks import (BlockScore, BlockScorer, LookupRequest, QueryScoreMemo, ScoreTable,
                     finalize_block, representative_scores, select_top)
from .errors import ConfigurationError, InternalError, PreconditionError
from .model import (AttentionInput, ForwardResult, QkvChunk, ToyModel, forward_chunk,
                    masked_attention)
from .tiers import BlockStore, CacheStats, TierConfig

__all__ = [
    "EngineConfig",
    "WINDOW_PRESETS",
    "SegmentedPrompt",
    "CurrentCache",
    "CacheSpan",
    "SelectionRecord",
    "DecodeResult",
    "Session",
    "start_session",
    "write_trace",
    "read_trace",
    "TRACE_SCHEMA_VERSION",
]

# context window -> (local tokens, block size, block count)
WINDOW_PRESETS = {
    512: (256, 64, 4),
    1024: (512, 64, 8),
    2048: (1024, 128, 8),
}

TRACE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EngineConfig:
    local_window: int = 256
    block_size: int = 64
    num_blocks: int = 4
    num_repr: int = 4
    beta: float = 1.0
    chunk_size: int = 64
    n_init: int = 128
    hot_capacity: int = 32
    max_query_tokens: int = 128
    pin_query: bool = True
    reuse_interval: int = 1

    def __post_init__(self):
        for name in ("local_window", "block_size", "num_repr", "chunk_size", "n_init",
                     "hot_capacity", "max_query_tokens", "reuse_interval"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}")
        if not isinstance(self.num_blocks, (int, np.integer)) or self.num_blocks < 0:
            raise ConfigurationError(f"num_blocks must be an integer >= 0, got {self.num_blocks!r}")
        if not float(self.beta) >= 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta!r}")
        if self.chunk_size > self.local_window:
            raise ConfigurationError(
                f"chunk_size={self.chunk_size} exceeds local_window={self.local_window}")
        if self.hot_capacity < self.num_blocks:
            raise ConfigurationError(
                f"hot_capacity={self.hot_capacity} cannot hold num_blocks={self.num_blocks}")

    @classmethod
    def preset(cls, context_window: int, **overrides) -> "EngineConfig":
        """Preset for one of the 512 / 1024 / 2048 context-window rows."""
        try:
            local, block, count = WINDOW_PRESETS[context_window]
        except KeyError:
            raise ConfigurationError(
                f"no preset for context window {context_window}; known: {sorted(WINDOW_PRESETS)}") from None
        base = dict(local_window=local, block_size=block, num_blocks=count, num_repr=4,
                    n_init=128, chunk_size=min(64, local), hot_capacity=max(32, count))
        base.update(overrides)
        return cls(**base)

    def window_budget(self, query_len: int) -> int:
        """Upper bound on the number of cached tokens attended at any step."""
        return self.n_init + query_len + self.num_blocks * self.block_size + self.local_window

    def with_(self, **changes) -> "EngineConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SegmentedPrompt:
    global_tokens: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    query_tokens: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    context_tokens: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    continuation_tokens: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        for name in ("global_tokens", "query_tokens", "context_tokens", "continuation_tokens"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1))

    @property
    def stream_tokens(self) -> np.ndarray:
        """Tokens streamed through the local window: context then continuation."""
        return np.concatenate([self.context_tokens, self.continuation_tokens])

    def __len__(self) -> int:
        return sum(len(getattr(self, n)) for n in
                   ("global_tokens", "query_tokens", "context_tokens", "continuation_tokens"))


@dataclass
class CacheSpan:
    name: str  # "global" | "query" | "retrieved" | "local"
    token_ids: np.ndarray
    positions: np.ndarray
    assigned_distance: np.ndarray  # distance to the first current token
    block_ids: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.token_ids.size


@dataclass
class CurrentCache:
    """The attended context for one layer and one step, in G, Q, R, L order."""

    spans: list[CacheSpan]
    keys: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.keys.shape[0]

    def span(self, name: str) -> CacheSpan:
        for s in self.spans:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def token_ids(self) -> np.ndarray:
        return np.concatenate([s.token_ids for s in self.spans])

    @property
    def assigned_distance(self) -> np.ndarray:
        return np.concatenate([s.assigned_distance for s in self.spans])


@dataclass
class SelectionRecord:
    phase: str  # "prefill" | "decode"
    step: int
    layer: int
    selected: list[int]
    scores: list[BlockScore]

    def to_json(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "phase": self.phase,
            "step": self.step,
            "layer": self.layer,
            "selected": list(self.selected),
            "scores": [asdict(s) for s in self.scores],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionRecord":
        return cls(obj["phase"], obj["step"], obj["layer"], list(obj["selected"]),
                   [BlockScore(**s) for s in obj["scores"]])


@dataclass
class DecodeResult:
    tokens: list[int]
    trace: list[SelectionRecord]


class _LayerState:
    def __init__(self, layer: int, tier: TierConfig, d_shape: tuple[int, int]):
        empty = np.zeros((0,) + d_shape, dtype=np.float32)
        self.layer = layer
        self.global_k = self.global_v = empty
        self.query_k = self.query_v = self.query_q = empty
        self.tail_k = self.tail_v = self.tail_q = empty
        self.store = BlockStore(tier)
        self.memo = QueryScoreMemo(empty)
        self.last_selection: list[int] = []


class Session:
    """One streaming inference session. Create with :func:`start_session`."""

    def __init__(self, model: ToyModel, config: EngineConfig, prompt: SegmentedPrompt,
                 debug: bool = False, keep_hidden: bool = False):
        mc = model.config
        if len(prompt.global_tokens) > config.n_init:
            raise ConfigurationError(
                f"global segment has {len(prompt.global_tokens)} tokens, n_init is {config.n_init}")
        if len(prompt.query_tokens) > config.max_query_tokens:
            raise ConfigurationError(
                f"query segment has {len(prompt.query_tokens)} tokens, budget is {config.max_query_tokens}")
        self.model = model
        self.config = config
        self.prompt = prompt
        self.debug = debug
        self.keep_hidden = keep_hidden
        tier = TierConfig(config.hot_capacity)
        self.layers = [_LayerState(i, tier, (mc.n_heads, mc.d_head)) for i in range(mc.n_layers)]
        self.global_tokens = prompt.global_tokens.copy()
        self.query_tokens = prompt.query_tokens.copy()
        self.global_positions = np.arange(len(self.global_tokens), dtype=np.int64)
        self.query_positions = np.arange(len(self.query_tokens), dtype=np.int64) + len(self.global_tokens)
        self.next_position = len(self.global_tokens) + len(self.query_tokens)
        self.stream_start = self.next_position
        self.tail_tokens = np.zeros(0, dtype=np.int64)
        self.tail_positions = np.zeros(0, dtype=np.int64)
        self.block_ranges: list[tuple[int, int]] = []
        self.block_token_ids: list[np.ndarray] = []
        self.last_logits: np.ndarray | None = None
        self.hidden_states: list[np.ndarray] = []
        self.generated: list[int] = []
        self.trace: list[SelectionRecord] = []
        self.chunk_times: list[float] = []
        self.peak_cache_tokens = 0
        self.prefill_steps = 0
        self.decode_steps = 0
        self._encode_pinned()

    # -- pinned segments -------------------------------------------------

    def _pinned_attention(self, qkv: QkvChunk, prefix_k: np.ndarray, prefix_v: np.ndarray) -> np.ndarray:
        lw = self.config.local_window
        pos = qkv.absolute_positions
        n_prefix = prefix_k.shape[0]
        self_dist = pos[:, None] - pos[None, :]
        dist = np.concatenate([np.full((len(pos), n_prefix), lw, dtype=np.int64),
                               np.minimum(self_dist, lw)], axis=1)
        mask = np.concatenate([np.ones((len(pos), n_prefix), dtype=bool), self_dist >= 0], axis=1)
        return masked_attention(AttentionInput(
            qkv.queries, np.concatenate([prefix_k, qkv.keys]), np.concatenate([prefix_v, qkv.values]),
            dist, mask, self.model.config.rope_base), debug=self.debug)

    def _encode_pinned(self) -> None:
        if len(self.global_tokens):
            def global_provider(layer: int, qkv: QkvChunk) -> np.ndarray:
                st = self.layers[layer]
                st.global_k, st.global_v = qkv.keys, qkv.values
                return self._pinned_attention(qkv, st.global_k[:0], st.global_v[:0])

            res = forward_chunk(self.model, self.global_tokens, global_provider, 0)
            self._remember(res)
        if len(self.query_tokens):
            def query_provider(layer: int, qkv: QkvChunk) -> np.ndarray:
                st = self.layers[layer]
                out = self._pinned_attention(qkv, st.global_k, st.global_v)
                st.query_k, st.query_v, st.query_q = qkv.keys, qkv.values, qkv.queries
                return out

            res = forward_chunk(self.model, self.query_tokens, query_provider,
                                len(self.global_tokens))
            self._remember(res)
        for st in self.layers:
            st.memo = QueryScoreMemo(st.query_q)

    def _remember(self, res: ForwardResult) -> None:
        self.last_logits = res.logits[-1]
        if self.keep_hidden:
            self.hidden_states.append(res.hidden)

    # -- lookup and cache assembly ---------------------------------------

    def _select(self, layer: int, qkv: QkvChunk, phase: str, step: int) -> list[int]:
        st = self.layers[layer]
        cfg = self.config
        if cfg.num_blocks == 0 or len(st.store) == 0:
            selected: list[int] = []
            scores: list[BlockScore] = []
        elif phase == "decode" and cfg.reuse_interval > 1 and step % cfg.reuse_interval and st.last_selection:
            selected = list(st.last_selection)
            scorer = BlockScorer(LookupRequest(layer, st.query_q, qkv.queries, cfg.num_blocks, cfg.beta), st.memo)
            scores = [scorer.score_block(st.store.cold[b]) for b in selected]
        else:
            request = LookupRequest(layer, st.query_q, qkv.queries, cfg.num_blocks, float(cfg.beta))
            scorer = BlockScorer(request, st.memo)
            table: ScoreTable = st.store.scan(scorer.score_stack)
            selected = select_top(table, cfg.num_blocks, st.store.starts())
            scores = [table[b] for b in selected]  # ids equal admission index
        if selected:
            st.store.fetch(selected)
        st.last_selection = selected
        self.trace.append(SelectionRecord(phase, step, layer, selected, scores))
        return selected

    def assemble_cache(self, layer: int, selected_block_ids: Iterable[int],
                       current: QkvChunk) -> tuple[CurrentCache, AttentionInput]:
        """Concatenate G, Q, R, L for ``layer`` and build the attention input."""
        st = self.layers[layer]
        cfg = self.config
        lw = cfg.local_window
        pos = current.absolute_positions
        first = int(pos[0])
        spans: list[CacheSpan] = []
        keys: list[np.ndarray] = []
        values: list[np.ndarray] = []

        def add(name, token_ids, positions, k, v, distance, block_ids=()):
            spans.append(CacheSpan(name, np.asarray(token_ids, dtype=np.int64),
                                   np.asarray(positions, dtype=np.int64),
                                   np.asarray(distance, dtype=np.int64), list(block_ids)))
            keys.append(k)
            values.append(v)

        add("global", self.global_tokens, self.global_positions, st.global_k, st.global_v,
            np.full(len(self.global_tokens), lw))
        if cfg.pin_query:
            add("query", self.query_tokens, self.query_positions, st.query_k, st.query_v,
                np.full(len(self.query_tokens), lw))
        else:
            add("query", self.query_tokens[:0], self.query_positions[:0], st.query_k[:0],
                st.query_v[:0], np.zeros(0))
        selected = list(selected_block_ids)
        r_tok, r_pos, r_k, r_v = [], [], [], []
        for bid in selected:
            if bid not in st.store.hot:
                raise InternalError(f"block {bid} selected for layer {layer} but not resident")
            block = st.store.hot_block(bid)
            start, end = block.token_range
            r_tok.append(self.block_token_ids[bid])
            r_pos.append(np.arange(start, end))
            r_k.append(block.keys)
            r_v.append(block.values)
        empty = st.global_k[:0]
        n_r = sum(len(t) for t in r_tok)
        add("retrieved",
            np.concatenate(r_tok) if r_tok else np.zeros(0, dtype=np.int64),
            np.concatenate(r_pos) if r_pos else np.zeros(0, dtype=np.int64),
            np.concatenate(r_k) if r_k else empty, np.concatenate(r_v) if r_v else empty,
            np.full(n_r, lw), selected)
        n_local = min(lw, len(self.tail_tokens))
        local_pos = self.tail_positions[len(self.tail_positions) - n_local:]
        add("local", self.tail_tokens[len(self.tail_tokens) - n_local:], local_pos,
            st.tail_k[len(st.tail_k) - n_local:], st.tail_v[len(st.tail_v) - n_local:],
            np.minimum(first - local_pos, lw))
        cache = CurrentCache(spans, np.concatenate(keys), np.concatenate(values))

        budget = cfg.window_budget(len(self.query_tokens))
        if len(cache) > budget:
            raise InternalError(f"cache holds {len(cache)} tokens, budget is {budget}")
        self.peak_cache_tokens = max(self.peak_cache_tokens, len(cache))

        n_q, n_m = len(pos), len(cache)
        n_pinned = n_m - n_local
        chunk_dist = pos[:, None] - pos[None, :]
        dist = np.concatenate([
            np.full((n_q, n_pinned), lw, dtype=np.int64),
            np.minimum(pos[:, None] - local_pos[None, :], lw),
            np.minimum(chunk_dist, lw),
        ], axis=1)
        mask = np.concatenate([np.ones((n_q, n_m), dtype=bool), chunk_dist >= 0], axis=1)
        attn = AttentionInput(current.queries, np.concatenate([cache.keys, current.keys]),
                              np.concatenate([cache.values, current.values]), dist, mask,
                              self.model.config.rope_base)
        return cache, attn

    # -- eviction ----------------------------------------------------------

    def _absorb(self, layer: int, qkv: QkvChunk) -> None:
        st = self.layers[layer]
        cfg = self.config
        st.tail_k = np.concatenate([st.tail_k, qkv.keys])
        st.tail_v = np.concatenate([st.tail_v, qkv.values])
        st.tail_q = np.concatenate([st.tail_q, qkv.queries])
        lw, lb = cfg.local_window, cfg.block_size
        while len(st.tail_k) - lw >= lb:
            # successors of block token i are tail tokens i+1 .. i+lw
            scores, _ = representative_scores(st.tail_k[:lb], st.tail_q[1:lb + lw], lw)
            block_id = len(st.store)
            start = self.stream_block_start(block_id)
            block = finalize_block(st.tail_k[:lb].copy(), st.tail_v[:lb].copy(), scores,
                                   cfg.num_repr, block_id=block_id, layer=layer, start=start)
            st.store.admit(block)
            st.tail_k, st.tail_v, st.tail_q = st.tail_k[lb:], st.tail_v[lb:], st.tail_q[lb:]

    def stream_block_start(self, block_id: int) -> int:
        return self.stream_start + block_id * self.config.block_size

    def _advance_tokens(self, tokens: np.ndarray, positions: np.ndarray) -> None:
        lw, lb = self.config.local_window, self.config.block_size
        self.tail_tokens = np.concatenate([self.tail_tokens, tokens])
        self.tail_positions = np.concatenate([self.tail_positions, positions])
        while len(self.tail_tokens) - lw >= lb:
            start = int(self.tail_positions[0])
            self.block_ranges.append((start, start + lb))
            self.block_token_ids.append(self.tail_tokens[:lb].copy())
            self.tail_tokens = self.tail_tokens[lb:]
            self.tail_positions = self.tail_positions[lb:]

    # -- stepping ----------------------------------------------------------

    def _step(self, tokens: np.ndarray, phase: str, step: int) -> ForwardResult:
        tokens = np.asarray(tokens, dtype=np.int64)
        start = self.next_position
        t0 = time.perf_counter()

        def provider(layer: int, qkv: QkvChunk) -> np.ndarray:
            selected = self._select(layer, qkv, phase, step)
            _, attn = self.assemble_cache(layer, selected, qkv)
            out = masked_attention(attn, debug=self.debug)
            self._absorb(layer, qkv)
            return out

        res = forward_chunk(self.model, tokens, provider, start)
        self._advance_tokens(tokens, np.arange(start, start + len(tokens), dtype=np.int64))
        self.next_position += len(tokens)
        self._remember(res)
        self.chunk_times.append(time.perf_counter() - t0)
        return res

    def prefill(self, tokens) -> None:
        """Stream ``tokens`` through the window in ``chunk_size`` pieces."""
        tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
        cs = self.config.chunk_size
        for i in range(0, len(tokens), cs):
            self._step(tokens[i:i + cs], "prefill", self.prefill_steps)
            self.prefill_steps += 1

    def decode(self, max_new_tokens: int) -> DecodeResult:
        """Greedy decoding, one token per step.

        Each step emits ``argmax`` of the latest logits and then feeds that
        token back, so the step's lookup is driven by the emitted token.
        """
        if max_new_tokens < 0:
            raise PreconditionError("max_new_tokens must be >= 0")
        if self.last_logits is None:
            raise PreconditionError("nothing has been encoded yet; prefill first")
        out: list[int] = []
        first_record = len(self.trace)
        for _ in range(max_new_tokens):
            token = int(np.argmax(self.last_logits))
            out.append(token)
            self._step(np.array([token]), "decode", self.decode_steps)
            self.decode_steps += 1
        self.generated.extend(out)
        return DecodeResult(out, self.trace[first_record:])

    # -- introspection -----------------------------------------------------

    @property
    def num_blocks_finalized(self) -> int:
        return len(self.block_ranges)

    def cache_stats(self) -> CacheStats:
        total = CacheStats()
        for st in self.layers:
            total = total.merged(st.store.stats)
        return total

    def peak_hot_blocks(self) -> int:
        return max((st.store.stats.peak_hot_blocks for st in self.layers), default=0)

    def token_accounting(self) -> dict[str, np.ndarray]:
        """Stream positions per residency class: local, accumulating, finalized."""
        n_local = min(self.config.local_window, len(self.tail_positions))
        split = len(self.tail_positions) - n_local
        finalized = (np.concatenate([np.arange(a, b) for a, b in self.block_ranges])
                     if self.block_ranges else np.zeros(0, dtype=np.int64))
        return {
            "local": self.tail_positions[split:].copy(),
            "accumulating": self.tail_positions[:split].copy(),
            "finalized": finalized,
        }

    def all_hidden(self) -> np.ndarray:
        return np.concatenate(self.hidden_states) if self.hidden_states else np.zeros((0, self.model.config.d_model))


def start_session(model: ToyModel, config: EngineConfig, prompt: SegmentedPrompt, *,
                  debug: bool = False, keep_hidden: bool = False) -> Session:
    """Encode the global and query segments and return a ready session."""
    return Session(model, config, prompt, debug=debug, keep_hidden=keep_hidden)


def write_trace(records: Iterable[SelectionRecord], dest: str | Path | IO[str]) -> None:
    """One JSON object per line with fields ``schema_version, phase, step,
    layer, selected, scores`` (each score has ``block_id, s_query,
    s_current, combined``)."""
    lines = "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in records)
    if hasattr(dest, "write"):
        dest.write(lines)
    else:
        Path(dest).write_text(lines, encoding="utf-8")


def read_trace(src: str | Path) -> list[SelectionRecord]:
    out = []
    for line in Path(src).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            if obj.get("schema_version") != TRACE_SCHEMA_VERSION:
                raise ConfigurationError(f"unsupported trace schema {obj.get('schema_version')}")
            out.append(SelectionRecord.from_json(obj))
    return out
