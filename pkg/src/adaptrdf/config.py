"""Flat ``key = value`` configuration files with typed fields."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from .adaptivity import AdaptivityConfig, read_pin_file


class ConfigError(ValueError):
    pass


@dataclass
class ClusterConfig:
    workers: int = 2
    transport: str = "inproc"  # inproc | tcp
    role: str = "master"  # master | worker
    host: str = "127.0.0.1"  # master address
    listen_host: str = ""  # interface this node binds; defaults to host
    port: int = 7400
    worker_id: int = 0
    seed: int = 0
    timeout: float = 60.0
    freq_threshold: int = 3
    proactivity_threshold: int = 10
    rho_max: float = float("inf")
    hash_pin_file: str = ""
    pins: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.transport not in ("inproc", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.role not in ("master", "worker"):
            raise ConfigError(f"unknown role {self.role!r}")
        if self.hash_pin_file and not self.pins:
            self.pins = read_pin_file(self.hash_pin_file)

    @property
    def adaptivity(self) -> AdaptivityConfig:
        return AdaptivityConfig(self.freq_threshold, self.proactivity_threshold, self.rho_max)


_TYPES = {f.name: f.type for f in fields(ClusterConfig) if f.name != "pins"}


def parse_config(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, value) -> object:
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> ClusterConfig:
    """Read ``path`` (if given) and apply non-None ``overrides`` on top."""
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config(Path(path).read_text(encoding="utf-8")))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return replace(ClusterConfig(), **{k: _coerce(k, v) for k, v in values.items()})
