"""TOML run configuration.

Every key is optional; missing keys take the defaults of
:class:`bbma.experiments.ExperimentConfig`. Layout::

    seed = 1
    profile = "desk"            # "desk" (16x16) or "paper" (64x64)
    solver = "orthogonal_factorization"
    condition_ceiling = 1e12
    refine = false
    allocation_gain = "mean"    # or "shadowed"

    [cell]    # CellConfig fields
    [array]   # nx, ny, spacing_wavelengths (overrides the profile)
    [fig3]    # n_values, trials
    [fig4]    # n_values, trials, condition_ceiling, stress_*
    [fig5]    # n_bits_values, bits_per_point, es_joules, es_n0, ...
"""

from __future__ import annotations

import dataclasses
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ArrayGeometry, CellConfig
from .experiments import PROFILES, ExperimentConfig, Fig3Config, Fig4Config, Fig5Config

__all__ = ["ConfigError", "parse_config", "build_config"]

_SECTIONS = {
    "cell": CellConfig,
    "array": ArrayGeometry,
    "fig3": Fig3Config,
    "fig4": Fig4Config,
    "fig5": Fig5Config,
}
_TOP = {"seed", "profile", "solver", "condition_ceiling", "refine", "allocation_gain", "check_n", "check_seeds"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value, default):
    """Check ``value`` against the type of ``default``."""
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")
    return value


def _section(name: str, cls, table) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"{name}: expected a table")
    defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}
    out = {}
    for key, value in table.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {name}.{key}")
        out[key] = _coerce(f"{name}.{key}", value, defaults[key])
    return out


def build_config(data: dict, profile: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Turn parsed TOML into a validated config; ``profile``/``seed`` override the file."""
    base = ExperimentConfig()
    for key in data:
        if key not in _TOP and key not in _SECTIONS:
            raise ConfigError(f"unknown key {key}")
    top = {}
    for key in _TOP & set(data):
        top[key] = _coerce(key, data[key], getattr(base, key))
    if profile is not None:
        top["profile"] = profile
    if seed is not None:
        top["seed"] = seed
    prof = top.get("profile", base.profile)
    if prof not in PROFILES:
        raise ConfigError(f"profile: must be one of {sorted(PROFILES)}, got {prof!r}")

    parts = {}
    for name, cls in _SECTIONS.items():
        fields = _section(name, cls, data.get(name, {}))
        try:
            if name == "array":
                parts[name] = dataclasses.replace(PROFILES[prof], **fields)
            else:
                parts[name] = cls(**fields)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    try:
        return ExperimentConfig(**top, **parts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path: str | os.PathLike | None, profile: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Read a TOML config file; ``None`` gives the defaults."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(data, profile, seed)
