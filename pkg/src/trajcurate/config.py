"""Strict JSON pipeline configuration.

One file configures every subcommand; sections map onto the per-stage
config dataclasses. Unknown keys are rejected rather than ignored, so a
typo cannot silently fall back to a default. Command-line flags override
file values.

Schema (all keys optional; defaults in docs/config.md):

    {
      "data": "path", "out": "path", "seed": 0,
      "subopt": {"window_seconds", "stride_frames", "gamma", "mix_weight",
                  "epsilon_s", "discount_direction", "progress_mode"},
      "dedup":  {"chunk_seconds", "n_subsample", "target_cluster_size", "k",
                  "action_weight", "epsilon_d", "seed", "max_iters",
                  "drop_all_over_threshold"},
      "train":  {"learning_rate", "epochs", "batch_size", "seed", "l2",
                  "pairs_per_traj", "dt_cap", "hidden_sizes"},
      "synth":  {"num_traj", "frames_per_traj", "fps", "obs_dim", "action_dim",
                  "anomaly_rates", "duplicate_rate", "noise_sigma", "seed",
                  "chunk_seconds", "phase_gain", "context_dim"}
    }

A top-level ``seed`` fills in any section seed that the file leaves unset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dedup import DedupConfig
from .errors import ConfigError
from .nn import TrainConfig
from .progress import SamplingConfig
from .subopt import SuboptConfig
from .synthgen import SynthConfig

_TRAIN_KEYS = {"learning_rate", "epochs", "batch_size", "seed", "l2"}
_SAMPLING_KEYS = {"pairs_per_traj", "dt_cap"}
_TRAIN_EXTRA = {"hidden_sizes"}


@dataclass
class PipelineConfig:
    data: str | None = None
    out: str | None = None
    seed: int = 0
    subopt: SuboptConfig = field(default_factory=SuboptConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    hidden_sizes: tuple[int, ...] = (64, 64)


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return dict(sec)


def _build(cls, kwargs: dict, name: str):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid '{name}' config: {exc}") from exc


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    allowed_top = {"data", "out", "seed", "subopt", "dedup", "train", "synth"}
    unknown = set(raw) - allowed_top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'seed' must be an integer")

    subopt_kw = _section(raw, "subopt", {
        "window_seconds", "stride_frames", "gamma", "mix_weight",
        "epsilon_s", "discount_direction", "progress_mode",
    })
    dedup_kw = _section(raw, "dedup", {
        "chunk_seconds", "n_subsample", "target_cluster_size", "k",
        "action_weight", "epsilon_d", "seed", "max_iters",
        "drop_all_over_threshold",
    })
    train_kw = _section(raw, "train", _TRAIN_KEYS | _SAMPLING_KEYS | _TRAIN_EXTRA)
    synth_kw = _section(raw, "synth", {
        "num_traj", "frames_per_traj", "fps", "obs_dim", "action_dim",
        "anomaly_rates", "duplicate_rate", "noise_sigma", "seed",
        "chunk_seconds", "phase_gain", "context_dim",
    })

    dedup_kw.setdefault("seed", seed)
    train_kw.setdefault("seed", seed)
    synth_kw.setdefault("seed", seed)

    hidden = train_kw.pop("hidden_sizes", [64, 64])
    if not (isinstance(hidden, (list, tuple)) and hidden
            and all(isinstance(h, int) and h > 0 for h in hidden)):
        raise ConfigError("'train.hidden_sizes' must be a list of positive integers")
    sampling_kw = {k: train_kw.pop(k) for k in list(_SAMPLING_KEYS) if k in train_kw}
    sampling_kw["seed"] = train_kw.get("seed", seed)

    data = raw.get("data")
    out = raw.get("out")
    for key, value in (("data", data), ("out", out)):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string path")

    return PipelineConfig(
        data=data,
        out=out,
        seed=seed,
        subopt=_build(SuboptConfig, subopt_kw, "subopt"),
        dedup=_build(DedupConfig, dedup_kw, "dedup"),
        train=_build(TrainConfig, train_kw, "train"),
        sampling=_build(SamplingConfig, sampling_kw, "train"),
        synth=_build(SynthConfig, synth_kw, "synth"),
        hidden_sizes=tuple(hidden),
    )


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a config file, or produce all-defaults when no path is given."""
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
