"""Plain ``key=value`` run configuration with flag overrides.

Blank lines and ``#`` comments are ignored.  Keys match :class:`FlowConfig`
fields plus ``threads``; ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .sde import FlowConfig

__all__ = ["ConfigError", "VALID_KEYS", "parse_config_text", "load_config", "resolve_config", "format_config"]


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


_CASTS = {
    "x_in": float,
    "y_in": float,
    "x_fin": float,
    "sigma": float,
    "dt": float,
    "n_paths": int,
    "seed": int,
    "t_max": float,
    "tube_h0": float,
    "threads": int,
}
_OPTIONAL = {"t_max", "tube_h0", "threads"}
VALID_KEYS = tuple(_CASTS)


def _cast(key, raw, where):
    if raw.lower() == "none" and key in _OPTIONAL:
        return None
    try:
        if _CASTS[key] is int:
            return int(raw, 0)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot read {raw!r} as {_CASTS[key].__name__} for '{key}'") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into a dict of typed values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected key=value, got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _CASTS:
            raise ConfigError(f"{where}: unknown key '{key}'; valid keys are {', '.join(VALID_KEYS)}")
        if not raw:
            raise ConfigError(f"{where}: missing value for '{key}'")
        out[key] = _cast(key, raw, where)
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config_text(text, source=str(path))


def resolve_config(file_values: dict | None = None, overrides: dict | None = None, base: FlowConfig | None = None):
    """Merge defaults, file values and flags (flags win).

    Returns ``(FlowConfig, threads)``.
    """
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    threads = merged.pop("threads", None)
    cfg = base or FlowConfig()
    fields = {f.name for f in dataclasses.fields(FlowConfig)}
    changes = {k: v for k, v in merged.items() if k in fields}
    if "sigma" in changes and "t_max" not in changes:
        changes["t_max"] = None
    return dataclasses.replace(cfg, **changes), threads


def format_config(cfg: FlowConfig, threads=None) -> str:
    """Deterministic ``key=value`` rendering of an effective configuration."""
    lines = [f"{f.name}={getattr(cfg, f.name)!r}" for f in dataclasses.fields(FlowConfig)]
    lines.append(f"threads={threads!r}")
    return "\n".join(lines) + "\n"
