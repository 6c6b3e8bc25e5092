"""Run configuration: defaults, config file, environment, CLI flags.

Config files are line-oriented `key = value` text; `[section]` headers
are allowed and ignored for lookup (keys are globally unique).  Values
from the file are overridden by QDCCA_* environment variables, which are
overridden by explicit command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

ENV_PREFIX = "QDCCA_"


class ConfigError(ValueError):
    """Bad configuration key or value."""


@dataclass(frozen=True)
class RunConfig:
    # dataset source: either a CSV path or generator parameters
    dataset: str | None = None
    p: int = 1
    q: int = 1
    classes: str = "2,2"
    value_range: float = 2.0
    separation: float = 1.0
    grid_bits: int = 1
    m0_mode: str = "satisfy"
    m0_target: float = 0.5
    center_rows: bool = False
    # tolerances
    eps1: float = 0.05
    eps2: float = 0.05
    eps3: float = 0.05
    eps4: float = 0.05
    delta1: float = 0.05
    delta2: float = 0.05
    # simulator caps and knobs
    max_qubits: int = 24
    t_bits: int = 7
    d: int | None = None
    infidelity_target: float = 1e-4
    mean_frac_bits: int = 4
    trace_ratio_samples: int = 10000
    # mode flags
    exact_trace_ratio: bool = True
    inject_exact_means: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3", "eps4", "delta1", "delta2", "infidelity_target"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.seed is None:
            raise ConfigError("seed is mandatory for stochastic runs")

    @property
    def class_sizes(self) -> tuple:
        try:
            sizes = tuple(int(x) for x in str(self.classes).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad class list {self.classes!r}") from exc
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"class sizes must be positive: {self.classes!r}")
        return sizes


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {name!r}")
    raw = raw.strip()
    ftype = _FIELD_TYPES[name]
    if ftype in ("bool",):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if ftype in ("int",):
        return int(raw)
    if ftype in ("int | None",):
        return None if raw.lower() in ("none", "") else int(raw)
    if ftype in ("float",):
        return float(raw)
    return raw if raw.lower() != "none" else None


def parse_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith(("#", ";")):
                continue
            if stripped.startswith("[") and stripped.endswith("]"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip().replace("-", "_")
            values[key] = _coerce(key, raw)
    return values


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    values = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name in _FIELD_TYPES:
            values[name] = _coerce(name, raw)
    return values


def resolve_config(
    file_path: str | None = None,
    flag_values: dict | None = None,
    environ=None,
) -> RunConfig:
    """defaults < config file < environment < explicit flags."""
    merged = {}
    if file_path:
        merged.update(parse_config_file(file_path))
    merged.update(env_overrides(environ))
    if flag_values:
        merged.update({k: v for k, v in flag_values.items() if v is not None})
    return RunConfig(**merged)
