"""Run configuration: schema-validated YAML with explicit units.

Physical quantities carry their unit in the key name (``sigma_t_MPa``,
``size_mm``); unknown keys are rejected.  Defaults exist only for
tolerances and output cadence, never for physical parameters.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import yaml

from .errors import ConfigurationError
from .ldpm_solver import LdpmParams
from .mesostructure import MixDesign

CODE_VERSION = "0.1.0"


def _require(d, key, kind, where):
    if key not in d:
        raise ConfigurationError(f"{where}: missing required key '{key}'")
    val = d[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigurationError(
            f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _reject_unknown(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"{where}: unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


_MIX_KEYS = ("d_min_mm", "d_max_mm", "cement_content_kg_m3",
             "water_cement_ratio", "aggregate_cement_ratio",
             "fuller_exponent", "density_tonne_mm3")

_LDPM_KEYS = ("E0_MPa", "alpha", "sigma_t_MPa", "r_st", "l_t_mm", "n_t", "k_t",
              "sigma_c0_MPa", "H_c0_MPa", "H_c1_MPa", "kappa_c0", "kappa_c1",
              "kappa_c2", "kappa_c3", "E_d_MPa", "mu_0", "mu_inf",
              "sigma_N0_MPa")


def parse_mix(d, where="mix") -> MixDesign:
    _reject_unknown(d, _MIX_KEYS, where)
    return MixDesign(
        d_min=_require(d, "d_min_mm", float, where),
        d_max=_require(d, "d_max_mm", float, where),
        cement_content=_require(d, "cement_content_kg_m3", float, where),
        water_cement_ratio=_require(d, "water_cement_ratio", float, where),
        aggregate_cement_ratio=_require(d, "aggregate_cement_ratio", float, where),
        fuller_exponent=_require(d, "fuller_exponent", float, where),
        density=_require(d, "density_tonne_mm3", float, where),
    )


def parse_ldpm(d, where="ldpm") -> LdpmParams:
    _reject_unknown(d, _LDPM_KEYS, where)
    return LdpmParams(
        E0=_require(d, "E0_MPa", float, where),
        alpha=_require(d, "alpha", float, where),
        sigma_t=_require(d, "sigma_t_MPa", float, where),
        r_st=_require(d, "r_st", float, where),
        l_t=_require(d, "l_t_mm", float, where),
        n_t=_require(d, "n_t", float, where),
        k_t=_require(d, "k_t", float, where),
        sigma_c0=_require(d, "sigma_c0_MPa", float, where),
        H_c0=_require(d, "H_c0_MPa", float, where),
        H_c1=_require(d, "H_c1_MPa", float, where),
        kappa_c0=_require(d, "kappa_c0", float, where),
        kappa_c1=_require(d, "kappa_c1", float, where),
        kappa_c2=_require(d, "kappa_c2", float, where),
        kappa_c3=_require(d, "kappa_c3", float, where),
        E_d=_require(d, "E_d_MPa", float, where),
        mu_0=_require(d, "mu_0", float, where),
        mu_inf=_require(d, "mu_inf", float, where),
        sigma_N0=_require(d, "sigma_N0_MPa", float, where),
    )


@dataclass
class RunConfig:
    """Everything needed to reproduce a run bit-identically."""

    mix: MixDesign
    ldpm: LdpmParams
    rve_size: float
    macro_lengths: tuple | None
    macro_element_size: float | None
    loading_case: str | None
    platen_velocity: float | None
    total_time: float | None
    seeds: tuple
    surface_spacing: float | None = None
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.seeds[0]


_TOP_KEYS = ("mix", "ldpm", "rve", "macro", "loading", "seeds",
             "tolerances", "output")

_TOL_DEFAULTS = {
    "relax_tolerance": 1e-6,
    "relax_increments_per_1e4": 10,
    "handoff_warn": 0.05,
    "handoff_abort": 0.20,
}

_OUTPUT_DEFAULTS = {
    "interval_steps": 200,
    "field_every": 0,
}


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    _reject_unknown(data, _TOP_KEYS, "config")
    if "mix" not in data or "ldpm" not in data:
        raise ConfigurationError("config: 'mix' and 'ldpm' sections are required")
    mix = parse_mix(data["mix"])
    ldpm = parse_ldpm(data["ldpm"])

    if "rve" not in data:
        raise ConfigurationError("config: 'rve' section is required")
    rve = data["rve"]
    _reject_unknown(rve, ("size_mm", "surface_spacing_mm"), "rve")
    rve_size = float(_require(rve, "size_mm", (int, float), "rve"))
    surface_spacing = rve.get("surface_spacing_mm")
    if surface_spacing is not None:
        surface_spacing = float(surface_spacing)

    macro_lengths = macro_h = None
    if "macro" in data:
        macro = data["macro"]
        _reject_unknown(macro, ("lengths_mm", "element_size_mm"), "macro")
        lengths = _require(macro, "lengths_mm", list, "macro")
        if len(lengths) != 3:
            raise ConfigurationError("macro.lengths_mm must have 3 entries")
        macro_lengths = tuple(float(v) for v in lengths)
        macro_h = float(_require(macro, "element_size_mm", (int, float), "macro"))

    loading_case = velocity = total_time = None
    if "loading" in data:
        loading = data["loading"]
        _reject_unknown(loading, ("case", "platen_velocity_mm_s", "total_time_s"),
                        "loading")
        loading_case = _require(loading, "case", str, "loading")
        velocity = float(_require(loading, "platen_velocity_mm_s", (int, float),
                                  "loading"))
        total_time = float(_require(loading, "total_time_s", (int, float),
                                    "loading"))

    seeds = data.get("seeds", [1])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigurationError("seeds must be an int or a list of ints")

    tolerances = dict(_TOL_DEFAULTS)
    user_tol = data.get("tolerances", {})
    _reject_unknown(user_tol, _TOL_DEFAULTS, "tolerances")
    tolerances.update(user_tol)
    output = dict(_OUTPUT_DEFAULTS)
    user_out = data.get("output", {})
    _reject_unknown(user_out, _OUTPUT_DEFAULTS, "output")
    output.update(user_out)

    return RunConfig(mix=mix, ldpm=ldpm, rve_size=rve_size,
                     macro_lengths=macro_lengths, macro_element_size=macro_h,
                     loading_case=loading_case, platen_velocity=velocity,
                     total_time=total_time, seeds=tuple(seeds),
                     surface_spacing=surface_spacing,
                     tolerances=tolerances, output=output, raw=data)


def config_hash(config: RunConfig) -> str:
    canon = json.dumps(config.raw, sort_keys=True, default=float)
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record emitted next to every run's outputs."""

    command: str
    config_sha256: str
    code_version: str
    seeds: list
    wall_times_s: dict
    enriched_elements: int | None = None
    enriched_fraction: float | None = None
    outputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    created: str = ""

    def to_json(self):
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=float)

    @classmethod
    def create(cls, command, config: RunConfig, wall_times, **kw):
        return cls(command=command, config_sha256=config_hash(config),
                   code_version=CODE_VERSION, seeds=list(config.seeds),
                   wall_times_s={k: float(v) for k, v in wall_times.items()},
                   config=config.raw,
                   created=time.strftime("%Y-%m-%dT%H:%M:%S"), **kw)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @staticmethod
    def read(path) -> dict:
        with open(path) as fh:
            return json.load(fh)

    @staticmethod
    def equivalent(a: dict, b: dict) -> bool:
        """Same run up to wall times and creation stamp."""
        keys = set(a) | set(b)
        keys -= {"wall_times_s", "created"}
        return all(a.get(k) == b.get(k) for k in keys)
