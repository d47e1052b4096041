"""Flat dotted-key configuration with TOML file loading and environment
overrides (``hevc.encoder_path`` -> ``HEVC_ENCODER_PATH``).
"""

from __future__ import annotations

import os
from typing import Any, Mapping

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib


def _flatten(obj: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in obj.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


class Config:
    """Layered lookup: explicit overrides > environment > file > defaults."""

    def __init__(self, values: Mapping[str, Any] | None = None, env: Mapping[str, str] | None = None):
        self._values = dict(values or {})
        self._env = env if env is not None else os.environ

    @staticmethod
    def from_toml(path: str, env: Mapping[str, str] | None = None) -> "Config":
        with open(path, "rb") as fh:
            return Config(_flatten(tomllib.load(fh)), env=env)

    def get(self, key: str, default: Any = None) -> Any:
        env_key = key.upper().replace(".", "_")
        if env_key in self._env:
            return self._env[env_key]
        return self._values.get(key, default)

    def get_int(self, key: str, default: int) -> int:
        value = self.get(key, default)
        return int(value)

    def get_float(self, key: str, default: float) -> float:
        value = self.get(key, default)
        return float(value)

    def get_bool(self, key: str, default: bool) -> bool:
        value = self.get(key, default)
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)

    def with_overrides(self, **overrides: Any) -> "Config":
        merged = dict(self._values)
        merged.update({k.replace("__", "."): v for k, v in overrides.items()})
        return Config(merged, env=self._env)

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)
