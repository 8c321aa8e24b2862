"""Experiment configuration: profiles, JSON round-trip, canonical hashing.

A config file is JSON with sections for the world, the split, SMOTE,
the gap detector, selection/fusion, and model seeds. Unknown keys are
rejected so typos fail loudly. The config hash is the SHA-256 of the
canonical (sorted-key, compact) JSON encoding and names a report bundle
reproducibly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .simnet import SimConfig, config_from_dict, config_to_dict


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    train_ratio: float = 0.7
    smote_k: int = 3
    smote_ratio: float = 1.0
    gap_confidence: float = 0.99
    knn_k: int = 7
    dsel_fraction: float = 0.33
    des_pool_size: int = 10
    rf_seed: int = 1

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("split.train_ratio must be in (0, 1)")
        if self.smote_k < 1:
            raise ConfigError("smote.k_neighbors must be >= 1")
        if not self.smote_ratio > 0:
            raise ConfigError("smote.target_ratio must be positive")
        if not 0.0 < self.gap_confidence < 1.0:
            raise ConfigError("gap.confidence must be in (0, 1)")
        if self.knn_k < 1:
            raise ConfigError("fusion.k_neighbors must be >= 1")
        if not 0.0 < self.dsel_fraction < 1.0:
            raise ConfigError("fusion.dsel_fraction must be in (0, 1)")
        if self.des_pool_size < 2:
            raise ConfigError("fusion.des_pool_size must be >= 2")


def to_dict(config: ExperimentConfig) -> dict:
    return {
        "sim": config_to_dict(config.sim),
        "split": {"train_ratio": config.train_ratio},
        "smote": {"k_neighbors": config.smote_k, "target_ratio": config.smote_ratio},
        "gap": {"confidence": config.gap_confidence},
        "fusion": {
            "k_neighbors": config.knn_k,
            "dsel_fraction": config.dsel_fraction,
            "des_pool_size": config.des_pool_size,
        },
        "models": {"rf_seed": config.rf_seed},
    }


def _section(d: dict, name: str, allowed: set[str]) -> dict:
    sec = d.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return sec


def from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be an object")
    unknown = set(d) - {"sim", "split", "smote", "gap", "fusion", "models"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        sim = config_from_dict(d["sim"]) if "sim" in d else SimConfig()
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid sim section: {exc}") from exc
    split = _section(d, "split", {"train_ratio"})
    smote = _section(d, "smote", {"k_neighbors", "target_ratio"})
    gap = _section(d, "gap", {"confidence"})
    fusion = _section(d, "fusion", {"k_neighbors", "dsel_fraction", "des_pool_size"})
    models = _section(d, "models", {"rf_seed"})
    try:
        return ExperimentConfig(
            sim=sim,
            train_ratio=float(split.get("train_ratio", 0.7)),
            smote_k=int(smote.get("k_neighbors", 3)),
            smote_ratio=float(smote.get("target_ratio", 1.0)),
            gap_confidence=float(gap.get("confidence", 0.99)),
            knn_k=int(fusion.get("k_neighbors", 7)),
            dsel_fraction=float(fusion.get("dsel_fraction", 0.33)),
            des_pool_size=int(fusion.get("des_pool_size", 10)),
            rf_seed=int(models.get("rf_seed", 1)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(payload)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(config), indent=2, sort_keys=True) + "\n")


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(to_dict(config)).encode()).hexdigest()


def profile(name: str) -> ExperimentConfig:
    """Named presets: 'default' (full world) and 'ci' (reduced world)."""
    if name == "default":
        return ExperimentConfig()
    if name == "ci":
        return ExperimentConfig(
            sim=dataclasses.replace(SimConfig(), n_atms=20, horizon_days=14)
        )
    raise ConfigError(f"unknown profile {name!r} (expected 'default' or 'ci')")
