"""Query-aware block memory for streaming attention on a seeded toy transformer."""

from .blocks import (BlockScore, BlockScorer, LookupRequest, MemoryBlock, QueryScoreMemo,
                     RepresentativeScore, ScoreTable, finalize_block, lookup,
                     representative_scores, score_block_current, score_block_query, select_top)
from .engine import (WINDOW_PRESETS, CurrentCache, DecodeResult, EngineConfig, SegmentedPrompt,
                     SelectionRecord, Session, read_trace, start_session, write_trace)
from .errors import (ConfigurationError, DegenerateInputError, GenerationError, InternalError,
                     NotFoundError, PreconditionError, QueryCacheError)
from .model import (AttentionInput, ModelConfig, QkvChunk, ToyModel, build_toy_model,
                    dense_forward, load_weights, masked_attention, rotary_rotate, save_weights)
from .tiers import BlockStore, CacheStats, TierConfig, load_snapshot, save_snapshot

__version__ = "0.1.0"
