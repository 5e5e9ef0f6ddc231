"""Run configuration: a flat key=value file plus command-line overrides.

Validation aggregates every problem instead of stopping at the first, so a
bad config surfaces as one complete report.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; message carries the aggregated report."""


@dataclass
class RunConfig:
    # paths (commands validate the ones they actually use)
    images: str = ""
    masks: str = ""
    patients: str = ""
    kb_dir: str = ""
    fixtures: str = ""
    out_dir: str = "out"
    checkpoint: str = ""
    features: str = ""

    # hyperparameters
    top_s: int = 8               # regions/nodes kept per level
    slic_segments: int = 150     # superpixel count target
    slic_compactness: float = 10.0
    topics: int = 8              # LDA topic count
    alpha: float = 0.1
    beta: float = 0.01
    topic_threshold: float = 0.2
    top_c: int = 10              # knowledge matrix rows
    text_dim: int = 768
    fusion_dim: int = 400
    rank: int = 16
    lr: float = 1e-3
    epochs: int = 100
    batch: int = 32
    seed: int = 0
    folds: int = 5
    max_hops: int = 2
    jobs: int = 1

    # synthetic generation
    patients_n: int = 24
    images_per_patient: int = 25
    positive_fraction: float = 0.305
    signal_texture: float = 1.0
    signal_regions: float = 1.0
    signal_asymmetry: float = 1.0
    signal_clinical: float = 1.0

    # flags
    levels: str = "cmf"          # subset of c, m, f
    numeric: bool = True
    rag: bool = True
    lora: bool = True
    gate: str = "hard"           # hard | soft
    offline: bool = True
    falls_rule: bool = False
    grid: str = "trend"          # ablation grid: trend | full

    def level_tuple(self) -> tuple:
        return tuple(self.levels)

    def validate(self, required_paths=()) -> list:
        """Returns a list of problems; empty means valid."""
        errors = []
        positive_ints = ["top_s", "slic_segments", "topics", "top_c",
                         "text_dim", "fusion_dim", "rank", "epochs", "batch",
                         "patients_n", "images_per_patient", "jobs"]
        for name in positive_ints:
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if self.folds < 2:
            errors.append("folds must be >= 2")
        if self.max_hops < 1:
            errors.append("max_hops must be >= 1")
        for name in ("alpha", "beta", "slic_compactness"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if self.lr < 0:
            errors.append("lr must be >= 0")
        if not 0.0 < self.positive_fraction < 1.0:
            errors.append("positive_fraction must be in (0, 1)")
        for name in ("signal_texture", "signal_regions", "signal_asymmetry",
                     "signal_clinical"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.rank >= self.fusion_dim:
            errors.append("rank must be smaller than fusion_dim")
        if not self.levels or any(c not in "cmf" for c in self.levels) \
                or len(set(self.levels)) != len(self.levels):
            errors.append("levels must be a non-repeating subset of 'cmf'")
        if self.gate not in ("hard", "soft"):
            errors.append("gate must be 'hard' or 'soft'")
        if self.grid not in ("trend", "full"):
            errors.append("grid must be 'trend' or 'full'")
        for name in required_paths:
            value = getattr(self, name)
            if not value:
                errors.append(f"{name} path is required for this command")
            elif not Path(value).exists():
                errors.append(f"{name} path does not exist: {value}")
        return errors


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    target = _FIELD_TYPES[key]
    raw = raw.strip()
    if raw and raw[0] in "\"'" and raw[-1:] == raw[0]:
        raw = raw[1:-1]
    if target == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if target == "int":
        return int(raw)
    if target == "float":
        return float(raw)
    return raw


def parse_config(path=None, overrides=None) -> RunConfig:
    """Read key=value lines (comments with #), then apply overrides on top."""
    config = RunConfig()
    problems = []

    def apply(key: str, value: str, where: str):
        key = key.strip()
        if key not in _FIELD_TYPES:
            problems.append(f"{where}: unknown key {key!r}")
            return
        try:
            setattr(config, key, _coerce(key, value))
        except ValueError as exc:
            problems.append(f"{where}: {exc}")

    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                problems.append(f"{path}:{lineno}: expected key=value")
                continue
            key, _, value = stripped.partition("=")
            apply(key, value.split("#", 1)[0], f"{path}:{lineno}")

    for key, value in (overrides or {}).items():
        apply(key, value, "command line")

    if problems:
        raise ConfigError("configuration errors:\n  " + "\n  ".join(problems))
    return config


def config_snapshot(config: RunConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(RunConfig)}
