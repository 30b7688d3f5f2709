"""
Run configuration: TOML loading, schema validation with key paths, and
construction of the module-level model objects.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .atomic import AtomicConstants, Polarization
from .benchmarking import ErrorModel, Timing
from .ramsey import DRIFT_KINDS, NoiseModel
from .readout import DetectionModel
from .spam import SHELVING_PRESETS, PumpingModel, ShelvingModel, SpamConfig, TransferModel

CONFIG_ENV = "IONQUBIT_CONFIG"


class ConfigError(ValueError):
    """Parse failure or invariant violations; ``violations`` lists (path, message)."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


def default_config_text() -> str:
    return resources.files("ionqubit").joinpath("data/default.toml").read_text()


def default_config() -> dict:
    return tomllib.loads(default_config_text())


def parse_toml(text: str, source: str = "<config>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomli messages carry "(at line L, column C)"
        raise ConfigError([(source, f"parse error: {exc}")]) from exc


def load_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([(str(p), "file not found")])
    return parse_toml(p.read_text(), str(p))


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ---------------------------------------------------------------- schema

class _Rule:
    def check(self, value) -> str | None:
        raise NotImplementedError


@dataclass
class Num(_Rule):
    lo: float | None = None
    hi: float | None = None
    lo_open: bool = False
    integer: bool = False

    def check(self, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return f"expected a number, got {type(v).__name__}"
        if self.integer and not isinstance(v, int):
            return "expected an integer"
        if not math.isfinite(v):
            return "must be finite"
        if self.lo is not None and (v <= self.lo if self.lo_open else v < self.lo):
            return f"must be {'>' if self.lo_open else '>='} {self.lo}"
        if self.hi is not None and v > self.hi:
            return f"must be <= {self.hi}"
        return None


def Int(lo=None, hi=None):
    return Num(lo, hi, integer=True)


@dataclass
class Bool(_Rule):
    def check(self, v):
        return None if isinstance(v, bool) else "expected true or false"


@dataclass
class Str(_Rule):
    choices: tuple | None = None

    def check(self, v):
        if not isinstance(v, str):
            return "expected a string"
        if self.choices is not None and v not in self.choices:
            return f"must be one of {list(self.choices)}"
        return None


@dataclass
class List(_Rule):
    item: _Rule
    min_len: int = 1
    length: int | None = None

    def check(self, v):
        if not isinstance(v, list):
            return "expected a list"
        if self.length is not None and len(v) != self.length:
            return f"expected {self.length} entries"
        if len(v) < self.min_len:
            return f"expected at least {self.min_len} entries"
        for i, x in enumerate(v):
            msg = self.item.check(x)
            if msg:
                return f"entry {i}: {msg}"
        return None


POS = Num(0.0, lo_open=True)
NONNEG = Num(0.0)
PROB = Num(0.0, 1.0)

SCHEMA: dict[str, Any] = {
    "seed": Int(0, 2**64 - 1),
    "output_dir": Str(),
    "constants": {"zero_field_splitting": Num(), "nuclear_moment": Num(),
                  "electron_g_factor": POS},
    "detection": {"bright_rate": NONNEG, "dark_rate": NONNEG, "shelf_decay_lifetime": POS,
                  "detection_duration": POS, "bin_width": POS, "shots": Int(1)},
    "benchmark": {"lengths": List(Int(1)), "sequences_per_length": Int(1),
                  "shots_per_sequence": Int(1), "pi2_duration": POS, "dead_time": NONNEG,
                  "detuning": Num(), "rabi_offset": Num(-1.0, lo_open=True), "ac_zeeman": Num(),
                  "depolarizing": Num(0.0, 0.49), "spam_error": Num(0.0, 0.5),
                  "polarization": List(NONNEG, length=3),
                  "scan_length": Int(1), "scan_sequences": Int(1),
                  "scan_detunings": List(Num()), "scan_rabi_offsets": List(Num(-1.0, lo_open=True)),
                  "sampling_sets": Int(1), "sampling_set_size": Int(1), "sampling_length": Int(1)},
    "spam": {"polarization_leakage": Num(0.0, 0.999), "repetitions": Int(0),
             "pump_pi_error": PROB, "transfer_pulse_error": PROB, "detailed_transfer": Bool(),
             "transfer_rabi": POS, "field_noise": NONNEG,
             "shelving_preset": Str(tuple(SHELVING_PRESETS)), "shots_per_state": Int(1),
             "stretch_only": Bool()},
    "ramsey": {"delays": List(NONNEG), "phase_points": Int(4), "shots_per_point": Int(1),
               "field_offset_drift": Str(DRIFT_KINDS), "field_sigma": NONNEG,
               "lo_fractional_instability": NONNEG, "contrast_floor": PROB, "detuning": Num()},
    "clock_scan": {"half_width": POS, "step": POS},
    "levels": {"fields": List(NONNEG)},
}


def _walk(data, schema, prefix, out):
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            out.append((path, "unknown key"))
        elif isinstance(schema[key], dict):
            if not isinstance(value, dict):
                out.append((path, "expected a table"))
            else:
                _walk(value, schema[key], path, out)
        else:
            msg = schema[key].check(value)
            if msg:
                out.append((path, msg))


def _cross_checks(cfg: dict, out):
    d = cfg.get("detection", {})
    T, w = d.get("detection_duration"), d.get("bin_width")
    if isinstance(T, (int, float)) and isinstance(w, (int, float)) and T > 0 and w > 0:
        r = T / w
        if abs(r - round(r)) > 1e-9 * max(r, 1.0) or round(r) < 1:
            out.append(("detection.bin_width", "must divide detection.detection_duration"))
    pol = cfg.get("benchmark", {}).get("polarization")
    if isinstance(pol, list) and len(pol) == 3 and all(isinstance(x, (int, float)) for x in pol):
        if pol[2] <= 0:
            out.append(("benchmark.polarization", "sigma+ weight must be positive to drive the qubit"))


def validate_dict(cfg: dict) -> list[tuple[str, str]]:
    """All violated invariants as (key path, message) pairs."""
    out: list = []
    _walk(cfg, SCHEMA, "", out)
    _cross_checks(cfg, out)
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- models

@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    constants: AtomicConstants
    detection: DetectionModel
    benchmark: ErrorModel
    spam: SpamConfig
    ramsey: NoiseModel
    seed: int
    output_dir: Path

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def section(self, name: str) -> dict:
        return self.raw[name]


def build(cfg: dict) -> RunConfig:
    bad = validate_dict(cfg)
    if bad:
        raise ConfigError(bad)
    c, d, b, s, r = (cfg[k] for k in ("constants", "detection", "benchmark", "spam", "ramsey"))
    constants = AtomicConstants(c["zero_field_splitting"], c["nuclear_moment"], c["electron_g_factor"])
    detection = DetectionModel(d["bright_rate"], d["dark_rate"], d["shelf_decay_lifetime"],
                               d["detection_duration"], d["bin_width"])
    model = ErrorModel(detuning=b["detuning"], rabi_offset=b["rabi_offset"], ac_zeeman=b["ac_zeeman"],
                       depolarizing=b["depolarizing"], polarization=Polarization.from_sequence(b["polarization"]),
                       timing=Timing(b["pi2_duration"], b["dead_time"]))
    spam = SpamConfig(
        PumpingModel(s["polarization_leakage"], s["repetitions"], s["pump_pi_error"]),
        TransferModel(per_pulse_error=s["transfer_pulse_error"], detailed=s["detailed_transfer"],
                      transfer_rabi=s["transfer_rabi"], field_noise=s["field_noise"],
                      polarization=model.polarization),
        ShelvingModel.preset(s["shelving_preset"]), detection, s["stretch_only"])
    noise = NoiseModel(r["field_offset_drift"], r["field_sigma"], r["lo_fractional_instability"],
                       r["contrast_floor"])
    return RunConfig(cfg, constants, detection, model, spam, noise, int(cfg["seed"]), Path(cfg["output_dir"]))


def resolve_path(path=None):
    """Explicit path, else the environment variable, else None (shipped defaults)."""
    if path:
        return Path(path)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else None


def load(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file (if any), then ``overrides``, validated and built."""
    cfg = default_config()
    p = resolve_path(path)
    if p is not None:
        cfg = deep_merge(cfg, load_file(p))
    if overrides:
        cfg = deep_merge(cfg, overrides)
    return build(cfg)


def validate_file(path) -> list[tuple[str, str]]:
    """Violations of the file merged over the defaults (unknown keys included)."""
    user = load_file(path)
    bad = []
    _walk(user, SCHEMA, "", bad)
    merged = deep_merge(default_config(), user)
    rest = [v for v in validate_dict(merged) if v not in bad]
    return bad + rest
