"""JSON pipeline configuration.

Every section is optional and every missing field takes its default, so
``{}`` is a complete config. Unknown keys are rejected so a typo such as
``"lamda1"`` fails loudly instead of being ignored. Errors name the offending
JSON path (``$.am.p``) or, for syntax errors, the byte offset.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .denoise import NlmConfig
from .errors import ConfigError, Lf2hfError
from .physics import AcquisitionParams, ScaleMapConfig, T1Table
from .solver import AMConfig


@dataclass(frozen=True)
class ScaleMapSection:
    n_bins: int = 256
    background_scale: float = 1.0

    def __post_init__(self):
        if self.n_bins < 2:
            raise ConfigError("invalid-value", "n_bins must be >= 2")


@dataclass(frozen=True)
class NlmSection:
    enabled: bool = False
    patch_radius: int = 1
    search_radius: int = 5
    strength: float = 0.05
    noise_sd: float = 0.0

    def __post_init__(self):
        self.params()  # validates the NLM fields

    def params(self) -> NlmConfig:
        return NlmConfig(self.patch_radius, self.search_radius, self.strength, self.noise_sd)


@dataclass(frozen=True)
class NormalizationSection:
    q_hi: float = 0.999
    background_tau: float = 0.02

    def __post_init__(self):
        if not 0 < self.q_hi <= 1:
            raise ConfigError("invalid-value", "q_hi must lie in (0, 1]")
        if not 0 <= self.background_tau < 1:
            raise ConfigError("invalid-value", "background_tau must lie in [0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    acq_l: AcquisitionParams = AcquisitionParams(field_strength=1.5)
    acq_h: AcquisitionParams = AcquisitionParams(field_strength=3.0)
    t1: T1Table = T1Table()
    scale_map: ScaleMapSection = ScaleMapSection()
    am: AMConfig = AMConfig()
    nlm: NlmSection = NlmSection()
    normalization: NormalizationSection = NormalizationSection()

    def scale_map_config(self) -> ScaleMapConfig:
        return ScaleMapConfig(
            acq_l=self.acq_l,
            acq_h=self.acq_h,
            t1=self.t1,
            n_bins=self.scale_map.n_bins,
            background_scale=self.scale_map.background_scale,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_type(value, default, path):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError("invalid-type", f"{path}: expected {type(default).__name__}, got {value!r}")
    return float(value) if isinstance(default, float) else value


def _build(default, data, path):
    """Instantiate ``type(default)`` from ``data``; missing keys keep ``default``'s values."""
    cls = type(default)
    if not isinstance(data, dict):
        raise ConfigError("invalid-type", f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError("unknown-key", f"{path}.{key}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        current = getattr(default, f.name)
        if f.name not in data:
            kwargs[f.name] = current
        elif dataclasses.is_dataclass(current):
            kwargs[f.name] = _build(current, data[f.name], f"{path}.{f.name}")
        else:
            kwargs[f.name] = _check_type(data[f.name], current, f"{path}.{f.name}")
    return _construct(cls, kwargs, path)


def _construct(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except Lf2hfError as exc:
        raise ConfigError("invalid-value", f"{path}: {exc.message}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("invalid-value", f"{path}: {exc}") from exc


def parse_config(data) -> PipelineConfig:
    return _build(PipelineConfig(), data, "$")


def loads_config(text: str) -> PipelineConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            "malformed-json", f"byte {exc.pos} (line {exc.lineno}, col {exc.colno}): {exc.msg}"
        ) from exc
    return parse_config(data)


def load_config(path) -> PipelineConfig:
    """Read and validate a JSON pipeline config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("unreadable", f"{path}: {exc.strerror}") from exc
    return loads_config(text)


def dumps_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
