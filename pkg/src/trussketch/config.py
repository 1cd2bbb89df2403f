"""Pipeline settings: a flat JSON object whose keys override the defaults."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

ENV_VAR = "TRUSSKETCH_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    threshold: Any = "auto"  # "auto" or a fixed 0-255 cut
    small_region_area: int = 160  # blobs smaller than this are treated as text
    joint_se_radius: Any = "auto"  # "auto" or pixels
    joint_se_factor: float = 1.5
    member_coverage_min: float = 0.90
    arrow_line_similarity_min: float = 0.95
    arrow_centroid_shift_min: float = 0.01
    support_band: tuple = (0.65, 0.75)
    support_centroid_shift_min: float = 0.01
    roller_dilation_fraction: float = 0.20
    roller_line_similarity_min: float = 0.95
    residual_min_area: int = 12
    ocr_area_band: tuple = (0.5, 1.4)
    flip_thresholds: tuple = (0.5, 0.3)
    word_dilation_radius: float = 8.0
    member_EA: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_UNIT = {
    "member_coverage_min",
    "arrow_line_similarity_min",
    "arrow_centroid_shift_min",
    "support_centroid_shift_min",
    "roller_line_similarity_min",
}
_BANDS = {"support_band", "ocr_area_band"}


def _check(key: str, value):
    if key == "threshold":
        if value == "auto":
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool) and 0 <= value <= 256:
            return value
        raise ConfigError(f"{key}: expected 'auto' or a number in [0, 256]")
    if key == "joint_se_radius":
        if value == "auto":
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value >= 1:
            return float(value)
        raise ConfigError(f"{key}: expected 'auto' or a radius >= 1")
    if key in _BANDS:
        if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value)):
            raise ConfigError(f"{key}: expected [low, high]")
        lo, hi = float(value[0]), float(value[1])
        if lo > hi:
            raise ConfigError(f"{key}: band not ordered")
        if lo < 0:
            raise ConfigError(f"{key}: band must be non-negative")
        return (lo, hi)
    if key == "flip_thresholds":
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            raise ConfigError(f"{key}: expected [mean, min]")
        mean, low = float(value[0]), float(value[1])
        if not (0 <= low <= 1 and 0 <= mean <= 1):
            raise ConfigError(f"{key}: thresholds must lie in [0, 1]")
        return (mean, low)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number")
    if key in _UNIT and not 0 <= value <= 1:
        raise ConfigError(f"{key}: must lie in [0, 1]")
    if key in ("small_region_area", "residual_min_area"):
        if value < 1 or int(value) != value:
            raise ConfigError(f"{key}: must be a positive integer")
        return int(value)
    if key == "roller_dilation_fraction" and not 0 < value <= 1:
        raise ConfigError(f"{key}: must lie in (0, 1]")
    if key in ("word_dilation_radius", "joint_se_factor", "member_EA") and not value > 0:
        raise ConfigError(f"{key}: must be > 0")
    return value


def config_from_dict(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    names = {f.name for f in fields(Config)}
    values = {}
    for key, value in doc.items():
        if key not in names:
            raise ConfigError(f"{key}: unknown setting")
        values[key] = _check(key, value)
    return Config(**values)


def load_config(path: str | Path | None = None) -> Config:
    """Defaults, overridden by ``path`` or else by the file named in
    $TRUSSKETCH_CONFIG."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return Config()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    return config_from_dict(doc)
