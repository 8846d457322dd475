"""Run configuration: one YAML document per run, plus ``key=value`` overrides.

Schema (version 1)::

    schema: 1
    variant: no-decoy | decoy-3 | eb-squash | eb-2click
    security: {eps_total, eps_EC, f_EC}
    channel:  {t, eta, p_d, Q or V}          # design, sweep, budget
    design:   {N, mu_II, q_empty_zero, point: {...}}
    grid:     {N: [...], t: [...]}           # sweep
    observables: {...}                       # rate, budget
    output:   {path, record}
    workers: 1

PyYAML reads ``1e-5`` (no decimal point) as a string, so every numeric field
is coerced explicitly.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .channel import ChannelParams
from .errors import ConfigError, DomainError
from .optimize import DEFAULT_MU_II, VARIANTS, SecurityTargets

SCHEMA_VERSION = 1

# default hardware and security profile; for the pair source V = 0.99 <=> Q = 0.5 %
DEFAULT_PROFILE: dict[str, Any] = {
    "schema": SCHEMA_VERSION,
    "variant": "no-decoy",
    "security": {"eps_total": 1e-5, "eps_EC": 1e-10, "f_EC": 1.05},
    "channel": {"t": 0.1, "eta": 0.1, "p_d": 1e-5, "Q": 0.005},
    "design": {"N": 1e9, "mu_II": DEFAULT_MU_II},
    "grid": {"N": [1e6, 1e8, 1e10, 1e15], "t": [1.0, 10**-0.5, 0.1, 10**-1.5, 0.01]},
    "output": {},
    "workers": 1,
}

_TOP_KEYS = {"schema", "variant", "security", "channel", "design", "grid", "observables", "output", "workers"}


def _number(value: Any, path: str, *, lo: float = -math.inf, hi: float = math.inf) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if not (math.isfinite(out) and lo <= out <= hi):
        raise ConfigError(f"{path}: {out!r} outside [{lo}, {hi}]")
    return out


def _numbers(value: Any, path: str, **bounds) -> list[float]:
    if not isinstance(value, Sequence) or isinstance(value, str):
        raise ConfigError(f"{path}: expected a list of numbers")
    if not value:
        raise ConfigError(f"{path}: must not be empty")
    return [_number(v, f"{path}[{i}]", **bounds) for i, v in enumerate(value)]


def _block(raw: Mapping[str, Any], key: str) -> dict[str, Any] | None:
    value = raw.get(key)
    if value is None:
        return None
    if not isinstance(value, Mapping):
        raise ConfigError(f"{key}: expected a mapping, got {type(value).__name__}")
    return dict(value)


def _require(block: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in block or block[key] is None:
        raise ConfigError(f"{where}.{key}: required field missing")
    return block[key]


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=value`` -> (["a", "b"], parsed value); values use YAML syntax."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--param expects key=value, got {text!r}")
    try:
        parsed = yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"--param {key}: cannot parse value {value!r}: {exc}") from None
    return key.strip().split("."), parsed


def apply_overrides(raw: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    out = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"--param {'.'.join(path)}: {part} is not a mapping")
            node = child
        node[path[-1]] = value
    return out


def load_raw(path: str | Path | None, overrides: Sequence[str] = ()) -> dict[str, Any]:
    """Read a config file (or the default profile when ``path`` is None)."""
    if path is None:
        raw = copy.deepcopy(DEFAULT_PROFILE)
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path}: top level must be a mapping")
    return apply_overrides(raw, overrides)


@dataclass(frozen=True)
class RunConfig:
    variant: str
    targets: SecurityTargets
    channel: ChannelParams | None
    N: float | None
    options: Mapping[str, Any]
    point: Mapping[str, float] | None
    grid_N: tuple[float, ...] | None
    grid_t: tuple[float, ...] | None
    observables: Mapping[str, Any] | None
    output_path: str | None
    record_path: str | None
    workers: int
    raw: Mapping[str, Any] = field(repr=False)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved document."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _channel(block: Mapping[str, Any], need_t: bool) -> ChannelParams:
    where = "channel"
    unknown = set(block) - {"t", "eta", "p_d", "Q", "V"}
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    eta = _number(_require(block, "eta", where), f"{where}.eta", lo=0.0, hi=1.0)
    p_d = _number(_require(block, "p_d", where), f"{where}.p_d", lo=0.0, hi=0.5)
    Q = None if block.get("Q") is None else _number(block["Q"], f"{where}.Q", lo=0.0, hi=0.5)
    V = None if block.get("V") is None else _number(block["V"], f"{where}.V", lo=0.0, hi=1.0)
    if Q is None and V is None:
        raise ConfigError(f"{where}.Q: required field missing (or give {where}.V)")
    if need_t:
        t = _number(_require(block, "t", where), f"{where}.t", lo=0.0, hi=1.0)
    else:
        t = 1.0 if block.get("t") is None else _number(block["t"], f"{where}.t", lo=0.0, hi=1.0)
    try:
        return ChannelParams(t=t, eta=eta, p_d=p_d, Q=Q, V=V)
    except DomainError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def resolve(raw: Mapping[str, Any], command: str) -> RunConfig:
    """Validate a raw document against the contract of one subcommand."""
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    variant = raw.get("variant")
    if variant not in VARIANTS:
        raise ConfigError(f"variant: expected one of {VARIANTS}, got {variant!r}")

    sec = _block(raw, "security")
    if sec is None:
        raise ConfigError("security: required block missing")
    eps_total = _number(_require(sec, "eps_total", "security"), "security.eps_total", lo=0.0, hi=1.0)
    eps_EC = _number(_require(sec, "eps_EC", "security"), "security.eps_EC", lo=0.0, hi=1.0)
    f_EC = _number(_require(sec, "f_EC", "security"), "security.f_EC", lo=1.0)
    if not 0.0 < eps_EC < eps_total < 1.0:
        raise ConfigError("security: need 0 < eps_EC < eps_total < 1")
    targets = SecurityTargets(eps_total=eps_total, eps_EC=eps_EC, f_EC=f_EC)

    ch_block, obs_block = _block(raw, "channel"), _block(raw, "observables")
    design = _block(raw, "design") or {}
    grid = _block(raw, "grid")
    output = _block(raw, "output") or {}

    if command in ("design", "sweep"):
        if ch_block is None:
            raise ConfigError(f"channel: required block missing for {command}")
        if obs_block is not None:
            raise ConfigError(f"observables: not allowed for {command} (a-priori mode uses the channel block)")
    elif command == "rate":
        if obs_block is None:
            raise ConfigError("observables: required block missing for rate")
        ch_block = None
    elif command == "budget":
        if (ch_block is None) == (obs_block is None):
            raise ConfigError("budget: give exactly one of the channel or observables blocks")

    channel = None if ch_block is None else _channel(ch_block, need_t=command != "sweep")

    N = None
    if command == "design" or (command == "budget" and channel is not None):
        N = _number(_require(design, "N", "design"), "design.N", lo=1e3)

    options: dict[str, Any] = {}
    if variant == "decoy-3":
        if "mu_II" in design:
            options["mu_II"] = None if design["mu_II"] is None else _number(
                design["mu_II"], "design.mu_II", lo=0.0, hi=1.0)
        else:
            options["mu_II"] = DEFAULT_MU_II
        if design.get("q_empty_zero") is not None:
            options["q_empty_zero"] = bool(design["q_empty_zero"])
    point = None
    if isinstance(design.get("point"), Mapping):
        point = {k: _number(v, f"design.point.{k}") for k, v in design["point"].items()}

    grid_N = grid_t = None
    if command == "sweep":
        if grid is None:
            raise ConfigError("grid: required block missing for sweep")
        grid_N = tuple(_numbers(_require(grid, "N", "grid"), "grid.N", lo=1e3))
        grid_t = tuple(_numbers(_require(grid, "t", "grid"), "grid.t", lo=1e-12, hi=1.0))

    workers = raw.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers: expected a positive integer, got {workers!r}")

    return RunConfig(
        variant=variant,
        targets=targets,
        channel=channel,
        N=N,
        options=options,
        point=point,
        grid_N=grid_N,
        grid_t=grid_t,
        observables=obs_block,
        output_path=output.get("path"),
        record_path=output.get("record"),
        workers=workers,
        raw=dict(raw),
    )
