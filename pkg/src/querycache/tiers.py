"""Two-tier block store: a bounded LRU hot tier over an unbounded cold store.

The tiers are an accounting model of device residency, not real memory
placement. Full key/value payloads live in the cold store; a fetch "moves"
them into the hot tier and is charged as a transfer on a miss. The stacked
representative keys stay resident at all times and are what lookups scan.
"""

from __future__ import annotations

import io
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .blocks import MemoryBlock, ScoreTable
from .errors import ConfigurationError, InternalError, NotFoundError, PreconditionError

__all__ = ["TierConfig", "CacheStats", "ResidentIndex", "FetchResult", "BlockStore",
           "save_snapshot", "load_snapshot"]

DEFAULT_HOT_CAPACITY = 32


@dataclass(frozen=True)
class TierConfig:
    hot_capacity_blocks: int = DEFAULT_HOT_CAPACITY
    track_transfers: bool = True

    def __post_init__(self):
        if self.hot_capacity_blocks < 1:
            raise ConfigurationError("hot_capacity_blocks must be >= 1")

    def check_lookup_fits(self, n_b: int) -> None:
        if self.hot_capacity_blocks < n_b:
            raise ConfigurationError(
                f"hot tier holds {self.hot_capacity_blocks} blocks but a lookup returns {n_b}")


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    bytes_transferred_analogue: int = 0
    peak_hot_blocks: int = 0

    @property
    def fetches(self) -> int:
        return self.hits + self.misses

    def merged(self, other: "CacheStats") -> "CacheStats":
        return CacheStats(
            self.hits + other.hits,
            self.misses + other.misses,
            self.evictions + other.evictions,
            self.bytes_transferred_analogue + other.bytes_transferred_analogue,
            max(self.peak_hot_blocks, other.peak_hot_blocks),
        )

    def to_dict(self) -> dict:
        return asdict(self)


class ResidentIndex:
    """Always-resident representative keys, stacked for flat scans."""

    def __init__(self):
        self.block_ids: list[int] = []
        self.starts: list[int] = []
        self.representative_keys: dict[int, np.ndarray] = {}
        self.resident: dict[int, bool] = {}
        self.recency: dict[int, int] = {}
        self._sums = np.zeros((0, 0))
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def register(self, block: MemoryBlock) -> None:
        rep_sum = block.representative_sum
        if self._sums.shape[1] != rep_sum.size:
            if self._count:
                raise PreconditionError("representative width changed between blocks")
            self._sums = np.zeros((16, rep_sum.size))
        if self._count == self._sums.shape[0]:
            grown = np.zeros((2 * self._sums.shape[0], self._sums.shape[1]))
            grown[: self._count] = self._sums
            self._sums = grown
        self._sums[self._count] = rep_sum
        self._count += 1
        self.block_ids.append(block.block_id)
        self.starts.append(block.token_range[0])
        self.representative_keys[block.block_id] = block.representative_keys
        self.resident[block.block_id] = False
        self.recency[block.block_id] = -1

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(block ids, start positions, representative-key sums) in admission order."""
        n = self._count
        return (np.asarray(self.block_ids, dtype=np.int64),
                np.asarray(self.starts, dtype=np.int64),
                self._sums[:n])


@dataclass
class FetchResult:
    blocks: list[MemoryBlock]
    hits: list[bool] = field(default_factory=list)
    evicted: list[int] = field(default_factory=list)


class BlockStore:
    """Single-writer block store for one layer of one session."""

    def __init__(self, config: TierConfig | None = None):
        self.config = config or TierConfig()
        self.cold: dict[int, MemoryBlock] = {}
        self.hot: OrderedDict[int, MemoryBlock] = OrderedDict()
        self.index = ResidentIndex()
        self.stats = CacheStats()
        self._clock = 0

    def __len__(self) -> int:
        return len(self.cold)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self.cold

    def admit(self, block: MemoryBlock) -> int:
        """Write a finalized block to the cold store and register its representatives."""
        if not block.finalized:
            raise PreconditionError(f"block {block.block_id} is not finalized")
        if block.block_id in self.cold:
            raise InternalError(f"block id {block.block_id} admitted twice")
        self.cold[block.block_id] = block
        self.index.register(block)
        return block.block_id

    def fetch(self, ids: Sequence[int]) -> FetchResult:
        """Bring ``ids`` into the hot tier, left to right, under LRU."""
        for bid in ids:
            if bid not in self.cold:
                raise NotFoundError(bid)
        result = FetchResult(blocks=[])
        for bid in ids:
            self._clock += 1
            self.index.recency[bid] = self._clock
            if bid in self.hot:
                self.hot.move_to_end(bid)
                self.stats.hits += 1
                result.hits.append(True)
            else:
                if len(self.hot) >= self.config.hot_capacity_blocks:
                    victim, _ = self.hot.popitem(last=False)
                    self.index.resident[victim] = False
                    self.stats.evictions += 1
                    result.evicted.append(victim)
                block = self.cold[bid]
                self.hot[bid] = block
                self.index.resident[bid] = True
                self.stats.misses += 1
                if self.config.track_transfers:
                    self.stats.bytes_transferred_analogue += block.size
                result.hits.append(False)
            self.stats.peak_hot_blocks = max(self.stats.peak_hot_blocks, len(self.hot))
            result.blocks.append(self.hot[bid])
        return result

    def hot_block(self, block_id: int) -> MemoryBlock:
        try:
            return self.hot[block_id]
        except KeyError:
            raise InternalError(f"block {block_id} used without being fetched") from None

    def scan(self, scorer: Callable[[np.ndarray, np.ndarray], ScoreTable]) -> ScoreTable:
        """Exact flat scan of the resident index; never touches cold payloads.

        ``scorer(block_ids, rep_sums)`` receives the ids and the stacked
        representative-key sums, e.g. :meth:`BlockScorer.score_stack`.
        """
        ids, _, sums = self.index.stacked()
        return scorer(ids, sums)

    def starts(self) -> np.ndarray:
        return np.asarray(self.index.starts, dtype=np.int64)


# --------------------------------------------------------------------------
# Snapshot file
# --------------------------------------------------------------------------

_SNAPSHOT_MAGIC = "querycache-blockstore"
_SNAPSHOT_VERSION = 1


def save_snapshot(store: BlockStore, path) -> None:
    """Write every admitted block in admission order.

    Header (UTF-8 lines): ``magic version``, ``hot_capacity_blocks=N``,
    ``track_transfers=0|1``, ``block_count=N``, ``end``. Each block record is
    one UTF-8 line ``block id layer start end n_tokens n_heads d_head
    n_repr`` followed by little-endian float32 keys, values and
    representative keys, then the representative indices as little-endian
    int32.
    """
    cfg = store.config
    buf = io.BytesIO()
    header = [f"{_SNAPSHOT_MAGIC} {_SNAPSHOT_VERSION}",
              f"hot_capacity_blocks={cfg.hot_capacity_blocks}",
              f"track_transfers={int(cfg.track_transfers)}",
              f"block_count={len(store.cold)}", "end"]
    buf.write(("\n".join(header) + "\n").encode("utf-8"))
    for bid in store.index.block_ids:
        b = store.cold[bid]
        n, h, d = b.keys.shape
        line = f"block {b.block_id} {b.layer} {b.token_range[0]} {b.token_range[1]} {n} {h} {d} {len(b.representative_indices)}\n"
        buf.write(line.encode("utf-8"))
        for arr in (b.keys, b.values, b.representative_keys):
            buf.write(np.asarray(arr, dtype="<f4").tobytes())
        buf.write(np.asarray(b.representative_indices, dtype="<i4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_snapshot(path) -> BlockStore:
    data = Path(path).read_bytes()
    pos = 0

    def readline() -> str:
        nonlocal pos
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("utf-8")
        pos = end + 1
        return line

    magic = readline().split()
    if magic != [_SNAPSHOT_MAGIC, str(_SNAPSHOT_VERSION)]:
        raise ConfigurationError(f"not a block-store snapshot: {magic}")
    fields = {}
    while (line := readline()) != "end":
        key, value = line.split("=", 1)
        fields[key] = int(value)
    store = BlockStore(TierConfig(fields["hot_capacity_blocks"], bool(fields["track_transfers"])))

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal pos
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    for _ in range(fields["block_count"]):
        parts = readline().split()
        bid, layer, start, end, n, h, d, r = map(int, parts[1:])
        keys = take(n * h * d, "<f4").astype(np.float32).reshape(n, h, d)
        values = take(n * h * d, "<f4").astype(np.float32).reshape(n, h, d)
        reps = take(r * h * d, "<f4").astype(np.float32).reshape(r, h, d)
        idx = take(r, "<i4").astype(np.int64)
        store.admit(MemoryBlock(bid, layer, (start, end), keys, values, reps, idx))
    return store
