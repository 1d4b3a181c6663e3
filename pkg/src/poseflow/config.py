"""Configuration: TOML file plus flat flag overrides (flags win).

``dump_config`` emits the fully resolved TOML; feeding that back in as the
config file reproduces identical behavior, which keeps benchmark runs
reproducible from a single artifact.  No environment variables are
consulted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .paf import ParserParams
from .synth import SynthParams


@dataclass
class PipelineConfig:
    """Every knob of one pipeline run."""

    input_w: int = 640
    input_h: int = 368
    channel_capacity: int = 16
    frames: int = 100
    source_latency_us: int = 0
    seed: int = 0
    backend: str = "synth"  # "synth" | "synth:<corpus.toml>" | "file:<dir>"
    topology: str = "coco18"
    scheduler_enabled: bool = True
    batch_max: int = 8
    batch_linger_us: int = 0
    parser: ParserParams = field(default_factory=ParserParams)
    synth: SynthParams = field(default_factory=SynthParams)

    def validate(self) -> None:
        if self.channel_capacity < 1:
            raise ConfigError("channel_capacity must be >= 1")
        if self.batch_max < 1:
            raise ConfigError("batch_max must be >= 1")
        if self.batch_linger_us < 0:
            raise ConfigError("batch_linger_us must be >= 0")
        if self.frames < 0:
            raise ConfigError("frames must be >= 0")
        if self.source_latency_us < 0:
            raise ConfigError("source_latency_us must be >= 0")
        if self.input_w < 1 or self.input_h < 1:
            raise ConfigError("input extents must be >= 1")
        self.synth.validate()
        if self.input_w % self.synth.stride or self.input_h % self.synth.stride:
            raise ConfigError(
                f"input extents {self.input_w}x{self.input_h} must be divisible "
                f"by stride {self.synth.stride}"
            )
        self.parser.validate()
        kind = self.backend.split(":", 1)[0]
        if kind not in ("synth", "file"):
            raise ConfigError(f"unknown backend kind {kind!r}")
        if kind == "file" and ":" not in self.backend:
            raise ConfigError("file backend needs a directory: file:<dir>")

    def backend_spec(self) -> Tuple[str, Optional[str]]:
        if ":" in self.backend:
            kind, arg = self.backend.split(":", 1)
            return kind, arg
        return self.backend, None


_SECTIONS = {
    "pipeline": (
        "input_w", "input_h", "channel_capacity", "frames",
        "source_latency_us", "seed", "backend", "topology",
    ),
    "scheduler": ("enabled", "batch_max", "linger_us"),
    "parser": (
        "conf_threshold", "nms_window", "n_samples", "sample_dot_threshold",
        "good_fraction_min", "min_parts", "min_human_score",
    ),
    "synth": (
        "sigma_conf", "paf_halfwidth", "stride", "service_delay_us",
        "batch_overhead_us", "per_item_us", "max_batch",
    ),
}

_SCHEDULER_ALIAS = {
    "enabled": "scheduler_enabled",
    "batch_max": "batch_max",
    "linger_us": "batch_linger_us",
}


def config_to_dict(cfg: PipelineConfig) -> Dict[str, Dict[str, Any]]:
    doc: Dict[str, Dict[str, Any]] = {}
    doc["pipeline"] = {k: getattr(cfg, k) for k in _SECTIONS["pipeline"]}
    doc["scheduler"] = {k: getattr(cfg, _SCHEDULER_ALIAS[k]) for k in _SECTIONS["scheduler"]}
    doc["parser"] = {k: getattr(cfg.parser, k) for k in _SECTIONS["parser"]}
    doc["synth"] = {k: getattr(cfg.synth, k) for k in _SECTIONS["synth"]}
    return doc


def config_from_dict(doc: Dict[str, Any]) -> PipelineConfig:
    cfg = PipelineConfig()
    for section, keys in _SECTIONS.items():
        got = doc.get(section, {})
        if not isinstance(got, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        for key in got:
            if key not in keys:
                raise ConfigError(f"unknown config key {section}.{key}")
        for key in keys:
            if key not in got:
                continue
            value = got[key]
            if section == "pipeline":
                target, attr = cfg, key
            elif section == "scheduler":
                target, attr = cfg, _SCHEDULER_ALIAS[key]
            elif section == "parser":
                target, attr = cfg.parser, key
            else:
                target, attr = cfg.synth, key
            current = getattr(target, attr)
            setattr(target, attr, _coerce(value, current, f"{section}.{key}"))
    return cfg


def _coerce(value: Any, template: Any, where: str) -> Any:
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(template, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(template, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    raise ConfigError(f"{where}: unsupported config value type")


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        # JSON string escaping is valid for TOML basic strings
        return json.dumps(v)
    raise ConfigError(f"cannot serialize config value {v!r}")


def dump_config(cfg: PipelineConfig) -> str:
    doc = config_to_dict(cfg)
    lines = []
    for section, values in doc.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config TOML: {exc}") from exc
    return config_from_dict(doc)
