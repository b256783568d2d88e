"""Run configuration: YAML documents, bundled presets and CLI overrides.

Schema (``schema_version: 1``)::

    schema_version: 1
    scheme: 2                 # 1, 2 or 3
    h: 1.0e-3                 # time step [s]
    steps: 100000             # rows written / windows integrated
    seed: 0
    output: run.csv           # optional
    mass_spring: {m: 5.0, k: 5.0, lambda: 0.2}
    gas: {N0: 1.0, T0: 300.0, V0: 2.494e-2, c: 1.5, R: 8.314462618}
    init: {x0: 0.3, x1: 0.3, S0: 0.0}
    external_force: {constant: 0.0, stiffness: 0.0, damping: 0.0}   # optional
    verify: {N: 10, trials: 20}                                    # optional

The initial entropy ``init.S0`` is also the reference entropy at which the gas
has temperature ``T0``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .errors import ConfigError, ThermoError
from .integrators import SchemeKind
from .models import GAS_CONSTANT, MONATOMIC_C, ExternalForce, IdealGasParams, MassSpringParams

SCHEMA_VERSION = 1

PRESETS: dict[str, dict[str, Any]] = {
    "case1": {
        "schema_version": SCHEMA_VERSION,
        "scheme": 1,
        "h": 1e-3,
        "steps": 100000,
        "seed": 0,
        "mass_spring": {"m": 5.0, "k": 5.0, "lambda": 0.2},
        "gas": {"N0": 1.0, "T0": 300.0, "V0": 2.494e-2, "c": MONATOMIC_C, "R": GAS_CONSTANT},
        "init": {"x0": 0.3, "x1": 0.3, "S0": 0.0},
    },
    "case2": {
        "schema_version": SCHEMA_VERSION,
        "scheme": 1,
        "h": 1e-3,
        "steps": 100000,
        "seed": 0,
        "mass_spring": {"m": 10.0, "k": 20.0, "lambda": 0.2},
        "gas": {"N0": 2.0, "T0": 300.0, "V0": 9.9775e-2, "c": MONATOMIC_C, "R": GAS_CONSTANT},
        "init": {"x0": 0.1, "x1": 0.1, "S0": 0.0},
    },
}

PRESET_LAMBDAS = (0.0, 0.2, 5.0, 10.0)

_TOP_KEYS = {"schema_version", "scheme", "h", "steps", "seed", "output", "mass_spring", "gas", "init", "external_force", "verify"}


@dataclass(frozen=True)
class RunConfig:
    scheme: SchemeKind
    h: float
    steps: int
    mass_spring: MassSpringParams
    gas: IdealGasParams
    x0: float
    x1: float
    S0: float
    external_force: Optional[ExternalForce] = None
    seed: int = 0
    output: Optional[Path] = None
    verify_N: int = 10
    verify_trials: int = 20

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ConfigError(f"h must be positive, got {self.h!r}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps!r}")
        if self.verify_N < 1 or self.verify_trials < 1:
            raise ConfigError("verify.N and verify.trials must be >= 1")
        for name in ("x0", "x1", "S0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"init.{name} must be finite")

    @property
    def lam(self) -> float:
        return self.mass_spring.lam

    def with_overrides(self, *, scheme=None, lam=None, steps=None, output=None, seed=None) -> "RunConfig":
        cfg = self
        try:
            if scheme is not None:
                cfg = replace(cfg, scheme=SchemeKind.parse(scheme))
            if lam is not None:
                cfg = replace(cfg, mass_spring=replace(cfg.mass_spring, lam=float(lam)))
            if steps is not None:
                cfg = replace(cfg, steps=int(steps))
            if output is not None:
                cfg = replace(cfg, output=Path(output))
            if seed is not None:
                cfg = replace(cfg, seed=int(seed))
        except ConfigError:
            raise
        except (ThermoError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def _section(doc: Mapping, key: str, required: bool = True) -> Mapping:
    sec = doc.get(key)
    if sec is None:
        if required:
            raise ConfigError(f"missing section {key!r}")
        return {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"section {key!r} must be a mapping")
    return sec


def _num(sec: Mapping, key: str, where: str, default=None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing {where}.{key}")
        return float(default)
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {val!r}")
    return float(val)


def from_mapping(doc: Mapping) -> RunConfig:
    """Validate a parsed document and build a :class:`RunConfig`."""
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    try:
        ms = _section(doc, "mass_spring")
        gas = _section(doc, "gas")
        init = _section(doc, "init")
        S0 = _num(init, "S0", "init", 0.0)
        mp = MassSpringParams(_num(ms, "m", "mass_spring"), _num(ms, "k", "mass_spring"), _num(ms, "lambda", "mass_spring"))
        gp = IdealGasParams.from_temperature(
            _num(gas, "T0", "gas"),
            _num(gas, "N0", "gas"),
            _num(gas, "V0", "gas", 1.0),
            c=_num(gas, "c", "gas", MONATOMIC_C),
            R=_num(gas, "R", "gas", GAS_CONSTANT),
            S0=S0,
        )
        fext = None
        if doc.get("external_force") is not None:
            ef = _section(doc, "external_force")
            fext = ExternalForce(
                _num(ef, "constant", "external_force", 0.0),
                _num(ef, "stiffness", "external_force", 0.0),
                _num(ef, "damping", "external_force", 0.0),
            )
        verify = _section(doc, "verify", required=False)
        steps, seed = doc.get("steps"), doc.get("seed", 0)
        if not isinstance(steps, int) or isinstance(steps, bool):
            raise ConfigError(f"steps must be an integer, got {steps!r}")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        out = doc.get("output")
        return RunConfig(
            scheme=SchemeKind.parse(doc.get("scheme", 1)),
            h=_num(doc, "h", "config"),
            steps=steps,
            mass_spring=mp,
            gas=gp,
            x0=_num(init, "x0", "init"),
            x1=_num(init, "x1", "init"),
            S0=S0,
            external_force=fext,
            seed=seed,
            output=Path(out) if out is not None else None,
            verify_N=int(verify.get("N", 10)),
            verify_trials=int(verify.get("trials", 20)),
        )
    except ConfigError:
        raise
    except (ThermoError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def preset_mapping(name: str) -> dict[str, Any]:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset(name: str) -> RunConfig:
    return from_mapping(preset_mapping(name))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return from_mapping(doc)


def to_mapping(cfg: RunConfig) -> dict[str, Any]:
    """Inverse of :func:`from_mapping` (used to dump a resolved configuration)."""
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "scheme": cfg.scheme.value,
        "h": cfg.h,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "mass_spring": {"m": cfg.mass_spring.m, "k": cfg.mass_spring.k, "lambda": cfg.mass_spring.lam},
        "gas": {"N0": cfg.gas.N0, "T0": cfg.gas.T0, "V0": cfg.gas.V0, "c": cfg.gas.c, "R": cfg.gas.R},
        "init": {"x0": cfg.x0, "x1": cfg.x1, "S0": cfg.S0},
        "verify": {"N": cfg.verify_N, "trials": cfg.verify_trials},
    }
    if cfg.output is not None:
        doc["output"] = str(cfg.output)
    if cfg.external_force is not None:
        ef = cfg.external_force
        doc["external_force"] = {"constant": ef.constant, "stiffness": ef.stiffness, "damping": ef.damping}
    return doc


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_mapping(cfg), sort_keys=False)
