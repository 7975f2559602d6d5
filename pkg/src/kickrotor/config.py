"""Experiment configuration: YAML files with unit-suffixed keys, presets, validation."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .errors import ConfigError
from .rotor import RotorSpec

DEFAULTS = {
    "spec": {
        "revival_time_ps": 11.67,
        "parity": "odd",
        "centrifugal_const_cm": 0.0,
        "j_max": 41,
        "polarizability_anisotropy_A3": None,
    },
    "protocol": {
        "preset": None,
        "design": None,
        "n_pulses": 13,
        "kick_strength": None,
        "fwhm_fs": 130.0,
        "count": 10,
        "period_lo_Trev": None,
        "period_hi_Trev": None,
        "mean_period_Trev": None,
        "sigma_frac": None,
        "avoid_J": None,
        "avoid_min_fs": None,
        "amplitude_noise_frac": 0.0,
    },
    "simulation": {
        "mode": "finite",
        "n_sub": 64,
        "temperature_K": 25.0,
        "thermal_cutoff": 0.999,
        "workers": 1,
    },
    "analysis": {
        "model": "auto",
        "noise_floor_mask": False,
    },
    "output": {
        "directory": None,
        "formats": ["csv", "json"],
    },
    "seed": 0,
}

_PROTOCOL_EXPLICIT = [k for k in DEFAULTS["protocol"] if k not in ("preset", "amplitude_noise_frac")]


def _periodic(lo, hi, P, label):
    return {
        "name": label,
        "design": "periodic-interval",
        "kick_strength": P,
        "period_lo_Trev": lo,
        "period_hi_Trev": hi,
        "expected_shape": "exponential",
    }


def _jitter(mean, sigma, avoid, P, label):
    proto = {
        "name": label,
        "design": "jitter-avoiding" if avoid else "jitter",
        "kick_strength": P,
        "mean_period_Trev": mean,
        "sigma_frac": sigma,
        "expected_shape": "gaussian",
    }
    if avoid:
        proto.update(avoid_J=[1, 3, 5], avoid_min_fs=150.0)
    return proto


def _build_presets():
    out = {}
    for letter, P in zip("abc", (4.0, 6.0, 8.0)):
        out[f"fig3-1{letter}"] = [_periodic(0.26, 0.29, P, f"fig3-1{letter}")]
        out[f"fig3-2{letter}"] = [_periodic(0.315, 0.325, P, f"fig3-2{letter}")]
        out[f"fig4-1{letter}"] = [_jitter(0.34, 0.35, True, P, f"fig4-1{letter}")]
        out[f"fig4-2{letter}"] = [_jitter(0.32, 0.43, False, P, f"fig4-2{letter}")]
    out["fig5"] = [
        run[0]
        for set_ in ("fig3-1", "fig3-2", "fig4-1", "fig4-2")
        for letter in "abc"
        for run in [out[f"{set_}{letter}"]]
    ]
    return out


PRESETS = _build_presets()


def _merge(base, override, path, problems):
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            problems.append(f"unknown key '{where}'")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append(f"'{where}' must be a mapping")
            else:
                _merge(base[key], value, where, problems)
        else:
            base[key] = value


def _coerce(text: str):
    return yaml.safe_load(text)


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    raw = copy.deepcopy(raw)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form section.key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{item}' addresses a non-section")
        node[parts[-1]] = _coerce(value)
    return raw


def load_config_file(path) -> dict:
    """Read a YAML config, or the embedded config of a previous result.json."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if "metadata" in doc and isinstance(doc["metadata"], dict) and "config" in doc["metadata"]:
        doc = doc["metadata"]["config"]
    return doc


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and validate; lists every problem found."""
    cfg = copy.deepcopy(DEFAULTS)
    problems: list = []
    _merge(cfg, raw or {}, "", problems)
    validate(cfg, problems)
    if problems:
        raise ConfigError("invalid configuration", problems)
    return cfg


def _num(cfg, section, key, problems, *, positive=False, nonneg=False, integer=False, optional=False):
    v = cfg[section][key]
    where = f"{section}.{key}"
    if v is None:
        if not optional:
            problems.append(f"'{where}' is required")
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"'{where}' must be a number, got {v!r}")
        return
    if integer and int(v) != v:
        problems.append(f"'{where}' must be an integer")
    if positive and not v > 0:
        problems.append(f"'{where}' must be > 0")
    if nonneg and v < 0:
        problems.append(f"'{where}' must be >= 0")


def validate(cfg: dict, problems: list) -> None:
    s = cfg["spec"]
    _num(cfg, "spec", "revival_time_ps", problems, positive=True)
    _num(cfg, "spec", "j_max", problems, positive=True, integer=True)
    _num(cfg, "spec", "centrifugal_const_cm", problems, nonneg=True)
    _num(cfg, "spec", "polarizability_anisotropy_A3", problems, positive=True, optional=True)
    if s["parity"] not in ("odd", "even", "both"):
        problems.append("'spec.parity' must be odd, even or both")

    p = cfg["protocol"]
    if p["preset"] is not None and p["preset"] not in PRESETS:
        problems.append(f"'protocol.preset' unknown: {p['preset']!r} (known: {', '.join(PRESETS)})")
    explicit = [k for k in _PROTOCOL_EXPLICIT if p[k] != DEFAULTS["protocol"][k]]
    if p["preset"] is None and p["design"] is None:
        problems.append("protocol needs exactly one of 'preset' or an explicit 'design'")
    elif p["preset"] is not None and explicit:
        problems.append(
            "protocol sets both 'preset' and explicit keys: " + ", ".join(sorted(explicit))
        )
    if p["preset"] is None and p["design"] is not None:
        _validate_explicit(cfg, problems)
    _num(cfg, "protocol", "amplitude_noise_frac", problems, nonneg=True)

    sim = cfg["simulation"]
    if sim["mode"] not in ("finite", "delta"):
        problems.append("'simulation.mode' must be 'finite' or 'delta'")
    _num(cfg, "simulation", "n_sub", problems, positive=True, integer=True)
    _num(cfg, "simulation", "temperature_K", problems, positive=True)
    _num(cfg, "simulation", "workers", problems, positive=True, integer=True)
    c = sim["thermal_cutoff"]
    if not isinstance(c, (int, float)) or not 0 < c < 1:
        problems.append("'simulation.thermal_cutoff' must lie in (0, 1)")

    if cfg["analysis"]["model"] not in ("auto", "exponential", "gaussian"):
        problems.append("'analysis.model' must be auto, exponential or gaussian")
    if not isinstance(cfg["analysis"]["noise_floor_mask"], bool):
        problems.append("'analysis.noise_floor_mask' must be true or false")
    fmts = cfg["output"]["formats"]
    if not isinstance(fmts, list) or not set(fmts) <= {"csv", "json"}:
        problems.append("'output.formats' must be a list drawn from csv, json")
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append("'seed' must be a non-negative integer")


def _validate_explicit(cfg, problems):
    p = cfg["protocol"]
    design = p["design"]
    if design not in ("periodic-interval", "jitter", "jitter-avoiding"):
        problems.append("'protocol.design' must be periodic-interval, jitter or jitter-avoiding")
        return
    _num(cfg, "protocol", "n_pulses", problems, positive=True, integer=True)
    _num(cfg, "protocol", "kick_strength", problems, nonneg=True)
    _num(cfg, "protocol", "fwhm_fs", problems, nonneg=True)
    _num(cfg, "protocol", "count", problems, positive=True, integer=True)
    if design == "periodic-interval":
        _num(cfg, "protocol", "period_lo_Trev", problems, positive=True)
        _num(cfg, "protocol", "period_hi_Trev", problems, positive=True)
        lo, hi = p["period_lo_Trev"], p["period_hi_Trev"]
        if isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and hi < lo:
            problems.append("'protocol.period_hi_Trev' must be >= 'protocol.period_lo_Trev'")
        if isinstance(p["count"], int) and p["count"] < 2:
            problems.append("'protocol.count' must be >= 2 for periodic-interval")
    else:
        _num(cfg, "protocol", "mean_period_Trev", problems, positive=True)
        _num(cfg, "protocol", "sigma_frac", problems, nonneg=True)
    if design == "jitter-avoiding":
        if not isinstance(p["avoid_J"], list) or not p["avoid_J"]:
            problems.append("'protocol.avoid_J' must be a nonempty list for jitter-avoiding")
        _num(cfg, "protocol", "avoid_min_fs", problems, positive=True)


def rotor_spec(cfg: dict) -> RotorSpec:
    s = cfg["spec"]
    return RotorSpec(
        revival_time_ps=float(s["revival_time_ps"]),
        parity=s["parity"],
        centrifugal_const=float(s["centrifugal_const_cm"]),
        j_max=int(s["j_max"]),
        polarizability_anisotropy=s["polarizability_anisotropy_A3"],
    )


def protocols(cfg: dict) -> list:
    """Explicit protocol dicts to run (one, or several for multi-run presets)."""
    p = cfg["protocol"]
    if p["preset"] is not None:
        runs = []
        for proto in PRESETS[p["preset"]]:
            full = {k: v for k, v in DEFAULTS["protocol"].items() if k != "preset"}
            full.update(proto)
            full["amplitude_noise_frac"] = p["amplitude_noise_frac"]
            runs.append(full)
        return runs
    full = {k: v for k, v in p.items() if k != "preset"}
    full["name"] = p["design"]
    full["expected_shape"] = None
    return [full]


def dump_yaml(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def canonical(cfg: dict) -> dict:
    """Config without the output section (does not influence results)."""
    return {k: v for k, v in cfg.items() if k != "output"}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(canonical(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
