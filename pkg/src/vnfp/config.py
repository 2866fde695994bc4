"""Flat sectioned ``key = value`` configuration files.

::

    # comment
    dt = 5e-4            # keys before any section are matched by name

    [grid]
    n = 4000

Every key has a home section; a key given at root level is routed to the
first section in :data:`SCHEMA` order that defines it (``dt`` and ``q_max``
mean the simulation values, not the ``[mc]`` or ``[ultra]`` ones).

Unknown keys, duplicates and out-of-range values are errors that name the
key and line. The resolved configuration, with every default filled in,
hashes to a digest that ignores key order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .coupled import PRESETS, SimConfig
from .sde_mc import PathConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "SCHEMA",
    "parse_config",
    "parse_config_text",
    "reference_run_config",
    "REFERENCE_TEXT",
]


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


@dataclass(frozen=True)
class _Key:
    kind: type
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


SCHEMA: dict[str, dict[str, _Key]] = {
    "initial": {
        "f_in": _Key(str, "exponential", lambda v: v in PRESETS, f"one of {sorted(PRESETS)}"),
        "phi_in": _Key(float, 0.0, math.isfinite, "finite"),
        "psi_in": _Key(float, 0.0, math.isfinite, "finite"),
    },
    "run": {
        "t_end": _Key(float, 20.0, _pos, "> 0"),
        "dt": _Key(float, 1e-3, _pos, "> 0"),
        "mode": _Key(str, "relativistic", lambda v: v in ("relativistic", "ultra"),
                     "relativistic or ultra"),
        "theta": _Key(float, 0.5, lambda v: 0.0 <= v <= 1.0, "in [0, 1]"),
        "sigma": _Key(float, 1.0, _pos, "> 0"),
        "flux": _Key(str, "consistent", lambda v: v in ("consistent", "pointwise"),
                     "consistent or pointwise"),
    },
    "grid": {
        "q_max": _Key(float, 40.0, _pos, "> 0"),
        "n": _Key(int, 2000, lambda v: v >= 2, ">= 2"),
        "stretch": _Key(float, 1.0, _pos, "> 0"),
    },
    "diagnostics": {
        "every": _Key(int, 10, lambda v: v >= 1, ">= 1"),
        "snapshot_every": _Key(int, 1000, lambda v: v >= 1, ">= 1"),
        "nonvanish_eps": _Key(float, 0.05, _pos, "> 0"),
    },
    "iterate": {
        "n_iter": _Key(int, 6, lambda v: v >= 1, ">= 1"),
        "horizon": _Key(float, 1.0, _pos, "> 0"),
        "seed_field": _Key(str, "constant", lambda v: v in ("constant", "free"),
                           "constant or free"),
    },
    "ultra": {
        "times": _Key(tuple, (0.1, 0.2, 0.3, 0.4, 0.5),
                      lambda v: len(v) > 0 and all(t > 0 for t in v), "positive list"),
        "q_min": _Key(float, 0.01, _nonneg, ">= 0"),
        "q_max": _Key(float, 10.0, _pos, "> 0"),
        "n_q": _Key(int, 200, lambda v: v >= 2, ">= 2"),
    },
    "mc": {
        "n_paths": _Key(int, 200_000, lambda v: v >= 1, ">= 1"),
        "dt": _Key(float, 1e-3, _pos, "> 0"),
        "seed": _Key(int, 20240601, lambda v: 0 <= v < 2**64, "in [0, 2^64)"),
        "antithetic": _Key(bool, False),
        "t": _Key(float, 0.2, _pos, "> 0"),
        "q": _Key(float, 1.0, _nonneg, ">= 0"),
        "mode": _Key(str, "relativistic", lambda v: v in ("relativistic", "ultra"),
                     "relativistic or ultra"),
        "threads": _Key(int, 1, lambda v: v >= 1, ">= 1"),
    },
    "field": {
        "source": _Key(str, "frozen", lambda v: v in ("zero", "frozen"), "zero or frozen"),
    },
}

_OWNER: dict[str, list[str]] = {}
for _sec, _keys in SCHEMA.items():
    for _k in _keys:
        _OWNER.setdefault(_k, []).append(_sec)


def _convert(kind: type, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        val = float(raw) if any(c in raw for c in ".eE") else int(raw, 0)
        if isinstance(val, float):
            if not val.is_integer():
                raise ValueError(f"expected an integer, got {raw!r}")
            val = int(val)
        return val
    if kind is float:
        return float(raw)
    if kind is tuple:
        return _float_list(raw)
    return raw


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration: ``values[section][key]`` with defaults applied."""

    values: dict[str, dict[str, Any]]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def canonical(self) -> dict[str, dict[str, Any]]:
        return {
            sec: {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(keys.items())}
            for sec, keys in sorted(self.values.items())
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def override(self, section: str, key: str, value) -> "RunConfig":
        spec = SCHEMA[section][key]
        _validate(section, key, spec, value, None)
        vals = {s: dict(k) for s, k in self.values.items()}
        vals[section][key] = value
        return RunConfig(vals)

    def sim_config(self) -> SimConfig:
        v = self.values
        return SimConfig(
            f_in=v["initial"]["f_in"],
            phi_in=v["initial"]["phi_in"],
            psi_in=v["initial"]["psi_in"],
            t_end=v["run"]["t_end"],
            dt=v["run"]["dt"],
            q_max=v["grid"]["q_max"],
            n=v["grid"]["n"],
            stretch=v["grid"]["stretch"],
            mode=v["run"]["mode"],
            theta=v["run"]["theta"],
            sigma=v["run"]["sigma"],
            flux=v["run"]["flux"],
            diagnostics_every=v["diagnostics"]["every"],
            snapshot_every=v["diagnostics"]["snapshot_every"],
            nonvanish_eps=v["diagnostics"]["nonvanish_eps"],
        )

    def path_config(self) -> PathConfig:
        m = self.values["mc"]
        return PathConfig(
            n_paths=m["n_paths"],
            dt=m["dt"],
            seed=m["seed"],
            antithetic=m["antithetic"],
            mode=m["mode"],
            threads=m["threads"],
        )


def _validate(section, key, spec: _Key, value, lineno):
    where = f" (line {lineno})" if lineno else ""
    if spec.check is not None and not spec.check(value):
        raise ConfigError(f"{section}.{key}{where}: value {value!r} out of range, must be {spec.rule}")


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text; see the module docstring for the format."""
    given: dict[tuple[str, str], Any] = {}
    section: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw_line.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key or not raw:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if section is None:
            owners = _OWNER.get(key, [])
            if not owners:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            sec = owners[0]
        else:
            sec = section
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{sec}]")
        spec = SCHEMA[sec][key]
        try:
            value = _convert(spec.kind, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {sec}.{key}: {exc}") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{source}:{lineno}: {sec}.{key}: value must be finite")
        _validate(sec, key, spec, value, lineno)
        if (sec, key) in given:
            raise ConfigError(f"{source}:{lineno}: duplicate key {sec}.{key}")
        given[(sec, key)] = value

    values = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    for (sec, key), value in given.items():
        values[sec][key] = value
    cfg = RunConfig(values)
    if cfg.values["run"]["dt"] > cfg.values["run"]["t_end"]:
        raise ConfigError("run.dt: must not exceed run.t_end")
    if cfg.values["ultra"]["q_min"] >= cfg.values["ultra"]["q_max"]:
        raise ConfigError("ultra.q_min: must be below ultra.q_max")
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config_text(text, str(path))


REFERENCE_TEXT = """\
# Reference preset
[initial]
f_in = exponential
phi_in = 0
psi_in = 0

[run]
t_end = 20
dt = 1e-3
mode = relativistic
theta = 0.5

[grid]
q_max = 40
n = 2000
"""


def reference_run_config() -> RunConfig:
    return parse_config_text(REFERENCE_TEXT, "<reference>")
