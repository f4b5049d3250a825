"""Policies, end-to-end runs, parameter sweeps and the needle grid."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..engine import EngineConfig, SelectionRecord, start_session
from ..errors import ConfigurationError, GenerationError, QueryCacheError
from ..model import ToyModel
from ..tiers import CacheStats
from .workload import Workload, WorkloadSpec, generate_workload

__all__ = ["POLICIES", "PolicySpec", "RepetitionResult", "RunReport", "SweepRow",
           "recall_from_trace", "selection_heatmap", "run_experiment", "run_workload",
           "sweep", "needle_grid", "SWEEP_PARAMETERS", "DEFAULT_LENGTHS", "DEFAULT_DEPTHS"]

POLICIES = ("qllm", "current-only", "local-only")
SWEEP_PARAMETERS = ("beta", "num_repr", "block_size", "num_blocks", "block_size_x_num_blocks")
DEFAULT_LENGTHS = (1024, 2048, 4096, 8192, 16384, 32768)
DEFAULT_DEPTHS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class PolicySpec:
    name: str = "qllm"
    beta: float = 1.0

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ConfigurationError(f"unknown policy {self.name!r}; expected one of {POLICIES}")
        if not float(self.beta) >= 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta!r}")

    def apply(self, config: EngineConfig) -> EngineConfig:
        """The engine configuration this policy runs under."""
        if self.name == "qllm":
            return config.with_(beta=float(self.beta))
        if self.name == "current-only":
            return config.with_(beta=0.0)
        return config.with_(num_blocks=0, beta=0.0)

    def to_dict(self) -> dict:
        return {"name": self.name, "beta": float(self.beta) if self.name == "qllm" else 0.0}


@dataclass
class RepetitionResult:
    seed: int
    ground_truth_block: int | None
    alignment: float | None
    recall: float | None
    generated: list[int]
    blocks_finalized: int
    peak_cache_tokens: int
    stats: CacheStats
    heatmap: np.ndarray
    trace: list[SelectionRecord]
    timings: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        return {
            "seed": self.seed,
            "ground_truth_block": self.ground_truth_block,
            "alignment": None if self.alignment is None else round(self.alignment, 12),
            "recall": self.recall,
            "generated": list(self.generated),
            "blocks_finalized": self.blocks_finalized,
            "peak_cache_tokens": self.peak_cache_tokens,
            "cache_stats": self.stats.to_dict(),
        }


@dataclass
class RunReport:
    model: dict
    engine: dict
    policy: dict
    workload: dict
    repetitions: list[RepetitionResult]

    @property
    def recalls(self) -> list[float]:
        return [r.recall for r in self.repetitions if r.recall is not None]

    @property
    def mean_recall(self) -> float | None:
        values = self.recalls
        return float(np.mean(values)) if values else None

    @property
    def cache_stats(self) -> CacheStats:
        total = CacheStats()
        for rep in self.repetitions:
            total = total.merged(rep.stats)
        return total

    @property
    def heatmap(self) -> np.ndarray:
        return self.repetitions[0].heatmap

    def timings(self) -> dict:
        return {"repetitions": [dict(r.timings, seed=r.seed) for r in self.repetitions]}

    def metrics(self) -> dict:
        return {
            "config": {"model": self.model, "engine": self.engine, "policy": self.policy,
                       "workload": self.workload},
            "mean_recall": self.mean_recall,
            "cache_stats": self.cache_stats.to_dict(),
            "repetitions": [r.metrics() for r in self.repetitions],
        }


def recall_from_trace(trace, ground_truth_block: int | None) -> float | None:
    """Fraction of decode (step, layer) lookups whose selection holds the planted block."""
    if ground_truth_block is None:
        return None
    decode = [r for r in trace if r.phase == "decode"]
    if not decode:
        return 0.0
    return sum(ground_truth_block in r.selected for r in decode) / len(decode)


def selection_heatmap(trace, n_blocks: int) -> np.ndarray:
    """[decode steps x blocks] selection counts summed over layers."""
    decode = [r for r in trace if r.phase == "decode"]
    steps = 1 + max((r.step for r in decode), default=-1)
    out = np.zeros((steps, n_blocks), dtype=np.int64)
    for r in decode:
        for b in r.selected:
            out[r.step, b] += 1
    return out


def run_workload(workload: Workload, policy: PolicySpec, engine_config: EngineConfig,
                 model: ToyModel) -> RepetitionResult:
    """Run one generated workload end to end."""
    cfg = policy.apply(engine_config)
    seed = workload.spec.seed
    try:
        t0 = time.perf_counter()
        session = start_session(model, cfg, workload.prompt)
        t1 = time.perf_counter()
        session.prefill(workload.prompt.stream_tokens)
        t2 = time.perf_counter()
        result = session.decode(workload.spec.decode_tokens)
        t3 = time.perf_counter()
    except QueryCacheError as exc:
        raise type(exc)(f"workload seed {seed}: {exc}") from exc
    trace = session.trace
    return RepetitionResult(
        seed=seed,
        ground_truth_block=workload.ground_truth_block,
        alignment=workload.alignment,
        recall=recall_from_trace(trace, workload.ground_truth_block),
        generated=result.tokens,
        blocks_finalized=session.num_blocks_finalized,
        peak_cache_tokens=session.peak_cache_tokens,
        stats=session.cache_stats(),
        heatmap=selection_heatmap(trace, session.num_blocks_finalized),
        trace=trace,
        timings={"pinned_seconds": t1 - t0, "prefill_seconds": t2 - t1, "decode_seconds": t3 - t2},
    )


def run_experiment(workload_spec: WorkloadSpec, policy: PolicySpec, engine_config: EngineConfig,
                   model: ToyModel) -> RunReport:
    """``workload_spec.repetitions`` runs with seeds ``seed, seed + 1, ...``."""
    reps = []
    for i in range(workload_spec.repetitions):
        spec = workload_spec.with_seed(workload_spec.seed + i)
        try:
            workload = generate_workload(spec, model, engine_config)
        except GenerationError as exc:
            raise GenerationError(f"workload seed {spec.seed}: {exc}") from exc
        reps.append(run_workload(workload, policy, engine_config, model))
    return RunReport(model.config.to_dict(), policy.apply(engine_config).to_dict(), policy.to_dict(),
                     workload_spec.to_dict(), reps)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

@dataclass
class SweepRow:
    parameter: str
    value: object
    mean_recall: float | None
    recalls: list
    skipped: bool = False
    warning: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value"] = list(self.value) if isinstance(self.value, tuple) else self.value
        return d


def _grid_config(base: EngineConfig, parameter: str, value) -> EngineConfig:
    if parameter == "block_size_x_num_blocks":
        l_b, n_b = value
        budget = base.block_size * base.num_blocks
        if l_b * n_b != budget:
            raise ConfigurationError(
                f"{l_b}x{n_b} = {l_b * n_b} retrieved tokens, the fixed window allows {budget}")
        return base.with_(block_size=int(l_b), num_blocks=int(n_b))
    if parameter == "beta":
        return base.with_(beta=float(value))
    if parameter in ("num_repr", "block_size", "num_blocks"):
        changes = {parameter: int(value)}
        if parameter == "num_blocks":
            changes["hot_capacity"] = max(base.hot_capacity, int(value))
        return base.with_(**changes)
    raise ConfigurationError(f"cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def sweep(parameter: str, values, base_config: EngineConfig, workload_spec: WorkloadSpec,
          model: ToyModel, policy: PolicySpec | None = None) -> list[SweepRow]:
    """One :func:`run_experiment` per grid value; infeasible points become warning rows.

    For ``beta`` the value overrides the policy's own beta (a qllm policy is
    assumed). ``block_size_x_num_blocks`` takes ``(l_b, n_b)`` pairs whose
    product must equal the base configuration's, which keeps the attended
    window fixed.
    """
    values = list(values)
    if not values:
        raise ConfigurationError("sweep grid is empty")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigurationError(f"cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    policy = policy or PolicySpec("qllm", base_config.beta)
    rows = []
    for value in values:
        if isinstance(value, list):
            value = tuple(value)
        try:
            cfg = _grid_config(base_config, parameter, value)
            point_policy = PolicySpec(policy.name, cfg.beta) if parameter == "beta" else policy
            report = run_experiment(workload_spec, point_policy, cfg, model)
        except (ConfigurationError, GenerationError) as exc:
            warnings.warn(f"skipping {parameter}={value}: {exc}", stacklevel=2)
            rows.append(SweepRow(parameter, value, None, [], True, str(exc)))
            continue
        rows.append(SweepRow(parameter, value, report.mean_recall, report.recalls))
    return rows


def needle_grid(lengths, depths, base_spec: WorkloadSpec, policy: PolicySpec,
                engine_config: EngineConfig, model: ToyModel) -> list[dict]:
    """Mean recall over a context-length x needle-depth grid."""
    rows = []
    for length in lengths:
        for depth in depths:
            spec = WorkloadSpec(**{**base_spec.to_dict(), "kind": "planted-needle",
                                   "context_length": int(length), "needle_depth": float(depth),
                                   "needle_alignment": base_spec.needle_alignment
                                   if base_spec.needle_alignment is not None else 0.9})
            try:
                report = run_experiment(spec, policy, engine_config, model)
            except (ConfigurationError, GenerationError) as exc:
                warnings.warn(f"skipping length={length} depth={depth}: {exc}", stacklevel=2)
                rows.append({"context_length": int(length), "needle_depth": float(depth),
                             "mean_recall": None, "skipped": True, "warning": str(exc)})
                continue
            rows.append({"context_length": int(length), "needle_depth": float(depth),
                         "mean_recall": report.mean_recall, "skipped": False, "warning": ""})
    return rows
