"""Run configuration file.

A JSON object with up to four sections, each optional and each a flat
object of field overrides::

    {
      "model":    {"n_layers": 4, "n_heads": 4, "d_head": 16, "d_model": 64,
                   "vocab_size": 512, "rope_base": 10000.0, "seed": 0, "qk_tied": true},
      "engine":   {"local_window": 256, "block_size": 64, "num_blocks": 4, "num_repr": 4,
                   "beta": 1.0, "chunk_size": 64, "n_init": 128, "hot_capacity": 32,
                   "max_query_tokens": 128, "pin_query": true, "reuse_interval": 1},
      "policy":   {"name": "qllm", "beta": 1.0},
      "workload": {"kind": "planted-needle", "context_length": 4096, "needle_depth": 0.5,
                   "needle_alignment": 0.9, "seed": 0, "repetitions": 1, "query_length": 8,
                   "global_length": 16, "continuation_length": 0, "decode_tokens": 8,
                   "needle_in_query": true}
    }

``"engine": {"preset": 512}`` starts from one of the context-window presets
before applying the remaining engine fields. Unknown sections or fields are
configuration errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from ..engine import EngineConfig
from ..errors import ConfigurationError
from ..model import ModelConfig
from .experiment import PolicySpec
from .workload import WorkloadSpec

__all__ = ["RunConfig", "load_config", "parse_config"]

SECTIONS = ("model", "engine", "policy", "workload")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    engine: EngineConfig
    policy: PolicySpec
    workload: WorkloadSpec

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "engine": self.engine.to_dict(),
                "policy": self.policy.to_dict(), "workload": self.workload.to_dict()}


def _build(cls, section: str, values: dict):
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown {section} field(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"bad {section} section: {exc}") from exc


def parse_config(obj: dict | None) -> RunConfig:
    obj = dict(obj or {})
    unknown = sorted(set(obj) - set(SECTIONS))
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {', '.join(unknown)}")
    for name in SECTIONS:
        if not isinstance(obj.get(name, {}), dict):
            raise ConfigurationError(f"config section {name!r} must be an object")
    engine_fields = dict(obj.get("engine", {}))
    preset = engine_fields.pop("preset", None)
    if preset is not None:
        engine = EngineConfig.preset(int(preset), **engine_fields)
    else:
        engine = _build(EngineConfig, "engine", engine_fields)
    workload = dict(obj.get("workload", {}))
    if workload.get("kind", "planted-needle") == "planted-needle":
        workload.setdefault("needle_depth", 0.5)
        workload.setdefault("needle_alignment", 0.9)
    return RunConfig(
        model=_build(ModelConfig, "model", obj.get("model", {})),
        engine=engine,
        policy=_build(PolicySpec, "policy", obj.get("policy", {})),
        workload=_build(WorkloadSpec, "workload", workload),
    )


def load_config(path) -> dict:
    """Read a config file into a plain dict (validated later by :func:`parse_config`)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return obj
