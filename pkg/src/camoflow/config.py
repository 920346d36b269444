"""Layered configuration for the CLI and pipeline front ends.

A :class:`PipelineConfig` bundles the per-stage configs.  YAML files map
onto it section by section; unknown keys anywhere are rejected so typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from os import PathLike
from pathlib import Path

import yaml

from .errors import ConfigError
from .evaluation import AGGREGATION_RULES
from .registration import RegistrationConfig
from .segmentation import SegmentationConfig
from .synthgen import SynthConfig, config_from_dict as synth_config_from_dict

#: Environment variable providing the default output root directory.
OUTPUT_ENV_VAR = "CAMOFLOW_OUTPUT"


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation-stage knobs."""

    contour_tolerance: float | None = None
    aggregation: str = "pooled"

    def __post_init__(self):
        if self.contour_tolerance is not None and self.contour_tolerance < 0:
            raise ConfigError("contour_tolerance must be non-negative")
        if self.aggregation not in AGGREGATION_RULES:
            raise ConfigError(
                f"aggregation must be one of {AGGREGATION_RULES}, got {self.aggregation!r}"
            )


@dataclass(frozen=True)
class IOConfig:
    """Filesystem defaults; ``output_root`` of ``None`` defers to the
    ``CAMOFLOW_OUTPUT`` environment variable, then the working directory."""

    output_root: str | None = None


@dataclass
class PipelineConfig:
    """Everything the pipeline and CLI can be told."""

    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IOConfig = field(default_factory=IOConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def output_root(self) -> Path:
        root = self.io.output_root or os.environ.get(OUTPUT_ENV_VAR) or "."
        return Path(root)


def _section_from_dict(cls, payload: dict, section: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    return cls(**payload)


def config_from_dict(payload: dict | None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from nested plain dictionaries."""
    if payload is None:
        return PipelineConfig()
    if not isinstance(payload, dict):
        raise ConfigError("top-level config must be a mapping")
    known = {"registration", "segmentation", "synth", "eval", "io", "seed"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    kwargs: dict = {}
    if "registration" in payload:
        kwargs["registration"] = _section_from_dict(
            RegistrationConfig, payload["registration"], "registration"
        )
    if "segmentation" in payload:
        kwargs["segmentation"] = _section_from_dict(
            SegmentationConfig, payload["segmentation"], "segmentation"
        )
    if "synth" in payload:
        if not isinstance(payload["synth"], dict):
            raise ConfigError("config section 'synth' must be a mapping")
        kwargs["synth"] = synth_config_from_dict(payload["synth"])
    if "eval" in payload:
        kwargs["eval"] = _section_from_dict(EvalConfig, payload["eval"], "eval")
    if "io" in payload:
        kwargs["io"] = _section_from_dict(IOConfig, payload["io"], "io")
    if "seed" in payload:
        seed = payload["seed"]
        if not isinstance(seed, int):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        kwargs["seed"] = seed
    return PipelineConfig(**kwargs)


def load_config(path: str | PathLike) -> PipelineConfig:
    """Load and validate a YAML config file."""
    with open(path) as fh:
        try:
            payload = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    try:
        return config_from_dict(payload)
    except TypeError as exc:
        # Dataclass constructors raise TypeError for wrongly typed values.
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(config: PipelineConfig) -> str:
    """YAML rendering of a config, suitable for ``--print-config``."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
