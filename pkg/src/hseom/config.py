"""JSON experiment configuration: schema validation, defaults, cross-field checks, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .bath import BathSpec
from .simulate import Integration, record_stride
from .spin_model import CouplingKind, SpinSystemSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_schema", "config_hash"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def config_schema() -> dict:
    text = resources.files("hseom").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


_DEFAULTS = {
    "system": {"delta": 1.0, "j_coupling": 1.0, "epsilon0": 1.0, "omega0": 1.0, "coupling_kind": "Diagonal"},
    "hierarchy": {"depth": 2, "max_size": 2_000_000},
    "integration": {"dt": 0.002, "record_interval": 0.05},
    "initial": {"retention": 0.99},
    "output": {"formats": ["csv", "json"]},
    "resources": {"memory_budget_gb": 2.0, "checkpoint_interval": 0},
}

# sections that do not change the physics and stay out of the hash
_UNHASHED = ("output", "resources")


def _beta(v) -> float:
    return math.inf if v == "inf" else float(v)


def config_hash(raw: dict) -> str:
    physics = {k: v for k, v in raw.items() if k not in _UNHASHED}
    blob = json.dumps(physics, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _on_grid(value: float, step: float) -> bool:
    n = value / step
    return abs(n - round(n)) < 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict  # normalized, defaults filled in
    system: SpinSystemSpec
    bath: BathSpec
    K: int
    depth: int
    integration: Integration
    initial_beta: float
    retention: float
    tls_state: np.ndarray

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def observables(self) -> list[dict]:
        return self.raw.get("observables", [])

    @property
    def output_dir(self) -> str | None:
        return self.raw.get("output", {}).get("directory")

    @property
    def resources(self) -> dict:
        return self.raw["resources"]

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def _fill_defaults(raw: dict) -> dict:
    out = copy.deepcopy(raw)
    for section, defaults in _DEFAULTS.items():
        sec = out.setdefault(section, {})
        for k, v in defaults.items():
            sec.setdefault(k, copy.deepcopy(v))
    sysd = out["system"]
    if "coupled_sites" not in sysd:
        kind = sysd["coupling_kind"]
        n = sysd["n_spins"]
        sysd["coupled_sites"] = [(n + 1) // 2] if kind in ("Diagonal", "OffDiagonal") and n >= 1 else []
    out["initial"].setdefault("beta", out["bath"]["beta"])
    out.setdefault("observables", [{"kind": "loschmidt"}, {"kind": "population"}])
    for obs in out["observables"]:
        if obs["kind"] == "three_time":
            obs.setdefault("insertion_interval", 0.5)
        if obs["kind"] == "correlator" and "spectrum" in obs:
            spec = obs["spectrum"]
            spec.setdefault("t_max", out["integration"]["t_max"])
            spec.setdefault("omega_max", 3.0)
            spec.setdefault("n_omega", 301)
            spec.setdefault("fdt_omega_min", 0.2)
    return out


def _cross_checks(cfg: dict, system: SpinSystemSpec, integ: Integration):
    n = system.n_spins
    K = cfg["bath"]["K"]
    if K % 2:
        raise ConfigError(f"bath.K must be even, got {K}")
    rec = integ.stride * integ.dt
    for idx, obs in enumerate(cfg["observables"]):
        where = f"observables[{idx}]"
        for key in ("i", "j", "k"):
            if key in obs and not 1 <= obs[key] <= n:
                raise ConfigError(f"{where}.{key} = {obs[key]} is not a chain site in 1..{n}")
        if obs["kind"] == "three_time":
            tp = obs["t_prime"]
            if tp > integ.t_max:
                raise ConfigError(f"{where}.t_prime = {tp} exceeds integration.t_max = {integ.t_max}")
            if not _on_grid(tp, rec):
                raise ConfigError(f"{where}.t_prime = {tp} is not a multiple of the record interval {rec}")
            if not _on_grid(obs["insertion_interval"], rec):
                raise ConfigError(f"{where}.insertion_interval is not a multiple of the record interval {rec}")
        if obs["kind"] == "correlator" and "spectrum" in obs:
            if obs["spectrum"]["t_max"] > integ.t_max + 1e-12:
                raise ConfigError(f"{where}.spectrum.t_max exceeds integration.t_max")
    if cfg["observables"] and any(o["kind"] in ("correlator", "three_time") for o in cfg["observables"]) and n < 1:
        raise ConfigError("correlator observables need a chain (system.n_spins >= 1)")


def load_config(source) -> ExperimentConfig:
    """Parse a path, JSON string or dict into a validated ExperimentConfig."""
    if isinstance(source, dict):
        raw = source
    else:
        try:
            text = str(source)
            if not text.lstrip().startswith("{"):
                text = Path(source).read_text()
            raw = json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    cfg = _fill_defaults(raw)
    s = cfg["system"]
    try:
        system = SpinSystemSpec(n_spins=s["n_spins"], delta=s["delta"], j_coupling=s["j_coupling"],
                                epsilon0=s["epsilon0"], coupling_kind=CouplingKind(s["coupling_kind"]),
                                coupled_sites=tuple(s["coupled_sites"]), omega0=s["omega0"])
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from None
    b = cfg["bath"]
    bath = BathSpec(b["zeta"], b["nu"], _beta(b["beta"]))
    it = cfg["integration"]
    try:
        integ = Integration(it["dt"], it["t_max"], record_stride(it["dt"], it["record_interval"]))
    except ValueError as exc:
        raise ConfigError(f"integration: {exc}") from None
    _cross_checks(cfg, system, integ)
    tls = cfg["initial"].get("tls_state")
    if tls is None:
        tls_state = np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0)
    else:
        tls_state = np.array([complex(*a) for a in tls], dtype=np.complex128)
        if abs(np.linalg.norm(tls_state) - 1.0) > 1e-10:
            raise ConfigError("initial.tls_state is not normalized")
    return ExperimentConfig(cfg, system, bath, b["K"], cfg["hierarchy"]["depth"], integ,
                            _beta(cfg["initial"]["beta"]), float(cfg["initial"]["retention"]), tls_state)
