"""YAML run configuration: schema, line-precise validation, and conversion to model objects.

All frequencies at this boundary are in Hz and carry a ``_hz`` suffix; times are
in seconds (``_s``). Conversion to angular units happens here and nowhere else.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import yaml

from .errors import ConfigError
from .physics import TWO_PI, HeatingReference, PhysicalConstants, TrapConfig, distance_for_gradient

GRADIENT_ANCHOR = (150.0, 150e-6)     # (T/m, m)

_STATES = ("psi1", "psi2", "psi3", "psi4", "psi5")


@dataclass(frozen=True)
class Field:
    kind: type | tuple
    default: Any
    check: Callable[[Any], str | None] | None = None
    nullable: bool = False


def _pos(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def _int_pos(v):
    return None if v >= 1 else "must be at least 1"


def _bounds(v):
    if len(v) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return "must be a list of two numbers"
    return None if 0 <= v[0] < v[1] <= 0.5 else "must satisfy 0 <= lo < hi <= 0.5"


def _r_list(v):
    if not v or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in v):
        return "must be a non-empty list of positive integers"
    return None


def _num_list(v):
    if not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return "must be a non-empty list of numbers"
    return None


def _states(v):
    if not v or any(x not in _STATES for x in v):
        return f"must be a non-empty list drawn from {list(_STATES)}"
    return None


def _choice(*opts):
    return lambda v: None if v in opts else f"must be one of {list(opts)}"


NUM = (int, float)

SCHEMA: dict[str, dict[str, Field]] = {
    "run": {
        "seed": Field(int, 0, _nonneg),
        "threads": Field(int, 1, _int_pos),
    },
    "constants": {
        "gamma_e": Field(str, "rounded", _choice("rounded", "codata")),
    },
    "trap": {
        "nu_axial_hz": Field(NUM, 150e3, _pos),
        "grad_b_t_per_m": Field(NUM, 150.0, _nonneg),
        "temperature_k": Field(NUM, 50.0, _pos),
        # null: scale from the 150 T/m at 150 um anchor assuming g_B ~ 1/d^2
        "electrode_distance_m": Field(NUM, None, _pos, nullable=True),
        "ion_separation_m": Field(NUM, None, _pos, nullable=True),
    },
    "heating_reference": {
        "ndot_com_quanta_per_s": Field(NUM, 41.0, _nonneg),
        "nu_com_hz": Field(NUM, 427e3, _pos),
        "ndot_bre_quanta_per_s": Field(NUM, 7.0, _nonneg),
        "nu_bre_hz": Field(NUM, 459e3, _pos),
        "distance_m": Field(NUM, 310e-6, _pos),
        "temperature_k": Field(NUM, 300.0, _pos),
        "temperature_exponent": Field(NUM, 2.13),
    },
    "gate": {
        "target_phase_rad": Field(NUM, float(np.pi / 4)),
        "r": Field(int, 3, _int_pos),
        "k": Field(int, 2, _int_pos),
        "n_blocks": Field(int, 4, _int_pos),
        "selection": Field(str, "robust", _choice("robust", "gap")),
        "grid": Field(int, 201, lambda v: None if v >= 2 else "must be at least 2"),
        "design_file": Field(str, None, nullable=True),
    },
    "scan": {
        "r_list": Field(list, [1, 2, 3], _r_list),
        "n_blocks": Field(int, 4, _int_pos),
        "grid": Field(int, 201, lambda v: None if v >= 2 else "must be at least 2"),
        "tau_bounds": Field(list, [0.0, 0.5], _bounds),
    },
    "simulate": {
        "states": Field(list, list(_STATES), _states),
        "init_thermal": Field(NUM, 0.2, _nonneg),
        "dissipation": Field(bool, True),
        "rabi_rel_error": Field(NUM, 0.01),
        "trap_rel_shift": Field(NUM, 1e-3),
        "qubit_shift_hz": Field(NUM, 20e3),
        "pulses": Field(str, "finite", _choice("finite", "instantaneous")),
        "crosstalk": Field(bool, True),
        "method": Field(str, "exact", _choice("exact", "rk4")),
        "fock_b": Field(int, None, _int_pos, nullable=True),
        "fock_c": Field(int, None, _int_pos, nullable=True),
        "truncation_tol": Field(NUM, 1e-8, _pos),
        "truncation_check": Field(bool, False),
        # per-pulse trace, populations and occupations of the first state
        "timeseries": Field(bool, False),
    },
    "noise_ou": {
        "correlation_time_s": Field(NUM, 50e-6, _pos),
        "t2_s": Field(NUM, 3e-3, _pos),
        "trajectories": Field(int, 100, _int_pos),
    },
    "noise_leakage": {
        "rabi_hz": Field(NUM, 20e6, _pos),
        "field_gauss": Field(NUM, 100.0, _nonneg),
        "leakage_values": Field(list, [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3], _num_list),
        "trajectories": Field(int, 100, _int_pos),
        "counter_rotating": Field(bool, True),
    },
    "noise_radial": {
        "beta_values": Field(list, [0.0, 0.1, 0.2, 0.3, 0.4], _num_list),
        "nu_radial_hz": Field(NUM, 2.5e6, _pos),
        "thermal_n": Field(NUM, 2.0, _nonneg),
        "state": Field(str, "psi4", _choice(*_STATES)),
    },
}


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(f.default) for k, f in fields.items()} for sec, fields in SCHEMA.items()}


def _err(node, msg, source):
    line = node.start_mark.line + 1 if node is not None else 0
    return ConfigError(f"{source}:{line}: {msg}")


def _as_float(v):
    """Numbers and numeric strings (YAML 1.1 reads '150e3' as text) become floats."""
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def _type_ok(value, f: Field) -> bool:
    if value is None:
        return f.nullable
    if isinstance(value, bool) and f.kind is not bool:
        return False
    return isinstance(value, f.kind)


def parse_text(text: str, source: str = "<config>") -> dict:
    """Validate YAML text against the schema and return a fully populated dict.

    Errors name the file and line of the offending key or value.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    cfg = defaults()
    if root is None:
        return cfg
    if not isinstance(root, yaml.MappingNode):
        raise _err(root, "top level must be a mapping of sections", source)
    loader = yaml.SafeLoader("")
    seen = set()
    for knode, vnode in root.value:
        sec = knode.value
        if sec not in SCHEMA:
            raise _err(knode, f"unknown section '{sec}' (expected one of {list(SCHEMA)})", source)
        if sec in seen:
            raise _err(knode, f"duplicate section '{sec}'", source)
        seen.add(sec)
        if not isinstance(vnode, yaml.MappingNode):
            raise _err(vnode, f"section '{sec}' must be a mapping", source)
        keys = set()
        for kn, vn in vnode.value:
            key = kn.value
            if key not in SCHEMA[sec]:
                raise _err(kn, f"unknown key '{sec}.{key}'", source)
            if key in keys:
                raise _err(kn, f"duplicate key '{sec}.{key}'", source)
            keys.add(key)
            f = SCHEMA[sec][key]
            value = loader.construct_object(vn, deep=True)
            if f.kind == NUM:
                value = _as_float(value)
            elif f.kind is list and f.check in (_num_list, _bounds) and isinstance(value, list):
                value = [_as_float(x) for x in value]
            if not _type_ok(value, f):
                raise _err(vn, f"'{sec}.{key}' has the wrong type ({type(value).__name__})", source)
            if value is not None and f.check is not None:
                problem = f.check(value)
                if problem:
                    raise _err(vn, f"'{sec}.{key}' {problem}", source)
            cfg[sec][key] = value
    return cfg


def load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_text(text, source=str(path))


def dump(cfg: dict) -> str:
    """Serialise a parsed config; ``parse_text(dump(c)) == c``."""
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


def digest(cfg: dict, extra: dict | None = None) -> str:
    """SHA-256 of the canonical JSON form of the config plus any run metadata."""
    payload = {"config": cfg, **(extra or {})}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# -- conversion to model objects --------------------------------------------------------

def constants_from(cfg: dict) -> PhysicalConstants:
    return PhysicalConstants.codata() if cfg["constants"]["gamma_e"] == "codata" else PhysicalConstants()


def trap_from(cfg: dict) -> TrapConfig:
    t = cfg["trap"]
    dist = t["electrode_distance_m"]
    if dist is None:
        dist = distance_for_gradient(t["grad_b_t_per_m"], GRADIENT_ANCHOR) if t["grad_b_t_per_m"] > 0 else 150e-6
    return TrapConfig(nuAxial=TWO_PI * t["nu_axial_hz"], gradB=t["grad_b_t_per_m"],
                      temperature=t["temperature_k"], electrodeDistance=float(dist),
                      ionSeparation=t["ion_separation_m"])


def heating_reference_from(cfg: dict) -> HeatingReference:
    h = cfg["heating_reference"]
    return HeatingReference(nDotComRef=h["ndot_com_quanta_per_s"], nuComRef=TWO_PI * h["nu_com_hz"],
                            nDotBreRef=h["ndot_bre_quanta_per_s"], nuBreRef=TWO_PI * h["nu_bre_hz"],
                            distRef=h["distance_m"], tempRef=h["temperature_k"],
                            tempExponent=h["temperature_exponent"])
