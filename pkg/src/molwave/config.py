"""Scenario configuration: YAML with unit-suffixed keys and strict validation."""
from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, Optional, Tuple

import yaml

KINDS = ("farfield", "tl_scan", "visibility_velocity", "decoherence_pressure",
         "decoherence_thermal", "dephasing", "deflect", "kdtl_power", "deposit_image")

PARSE_ERROR = "parse_error"
UNKNOWN_KEY = "unknown_key"
UNIT_MISMATCH = "unit_mismatch"
CONSTRAINT_VIOLATION = "constraint_violation"


class ConfigError(Exception):
    def __init__(self, code: str, message: str, key: str = "", line: Optional[int] = None,
                 column: Optional[int] = None):
        self.code, self.key, self.line, self.column = code, key, line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{code}: {key + ': ' if key else ''}{message}{where}")


@dataclass(frozen=True)
class Field:
    kind: str = "float"  # float | int | str | bool
    default: Any = None
    required: bool = False
    check: Optional[str] = None  # positive | nonneg | fraction | unit | int>=1
    choices: Tuple[str, ...] = ()


def F(default=None, check=None, required=False):
    return Field("float", default, required, check)


def I(default=None, check="int>=1", required=False):
    return Field("int", default, required, check)


def S(default=None, choices=(), required=False):
    return Field("str", default, required, None, tuple(choices))


def B(default=False):
    return Field("bool", default)


PARTICLE = {
    "name": S(""),
    "mass_amu": F(check="positive", required=True),
    "alpha_static_A3": F(0.0, "nonneg"),
    "alpha_optical_re_A3": F(0.0),
    "alpha_optical_im_A3": F(0.0, "nonneg"),
    "sigma_abs_laser_m2": F(0.0, "nonneg"),
    "C3_meV_nm3": F(0.0, "nonneg"),
    "internal_temperature_K": F(0.0, "nonneg"),
    "caloric_slope_K_per_eV": F(None, "nonneg"),
}
EMISSION = {
    "model": S("powerlaw_with_gap", ("powerlaw_with_gap", "table")),
    "sigma0_m2": F(1.5e-21, "nonneg"),
    "lambda_ref_nm": F(400.0, "positive"),
    "exponent": F(2.0),
    "gap_eV": F(1.5, "positive"),
    "table_file": S(None),
}
VELOCITY = {
    "shape": S("gaussian", ("gaussian", "effusive_flux")),
    "mean_mps": F(None, "positive"),
    "spread_rel": F(0.0, "nonneg"),
    "source_temperature_K": F(None, "positive"),
    "v_min_mps": F(None, "nonneg"),
    "v_max_mps": F(None, "positive"),
}
MATERIAL = {
    "type": S("material", ("material", "optical")),
    "period_nm": F(None, "positive"),
    "open_fraction": F(None, "fraction"),
    "thickness_nm": F(0.0, "nonneg"),
    "C3_meV_nm3": F(None, "nonneg"),
    "laser_wavelength_nm": F(None, "positive"),
    "phi0": F(0.0, "nonneg"),
    "n0": F(0.0, "nonneg"),
    "power_W": F(0.0, "nonneg"),
    "waist_y_um": F(0.0, "nonneg"),
    "waist_z_um": F(0.0, "nonneg"),
    "reference_velocity_mps": F(None, "positive"),
}
GRATING3 = {"period_nm": F(None, "positive"), "open_fraction": F(None, "fraction")}
GEOMETRY = {
    "L12_m": F(None, "positive"),
    "L23_m": F(None, "positive"),
    "tilt_deg": F(0.0),
    "orientation_deg": F(0.0),
    "collimation_urad": F(0.0, "nonneg"),
}
GAS = {
    "gas_mass_amu": F(check="positive", required=True),
    "temperature_K": F(check="positive", required=True),
    "C6_Jm6": F(check="positive", required=True),
}
INERTIAL = {
    "source": S("gravity", ("direct", "gravity", "coriolis")),
    "acceleration_mps2": F(0.0),
    "tilt_deg": F(None),
    "latitude_deg": F(None),
}
VIBRATION = {
    "model": S("gaussian_jitter", ("gaussian_jitter", "sinusoidal")),
    "amplitude_nm": F(0.0, "nonneg"),
    "frequency_Hz": F(None, "nonneg"),
}
ELECTRODE = {
    "gradient_coeff_per_m3": F(check="nonneg", required=True),
    "length_m": F(check="positive", required=True),
    "position_m": F(check="nonneg", required=True),
}
NOISE = {
    "enabled": B(True),
    "counts_per_point": F(5e6, "positive"),
    "visibility0": F(0.3, "unit"),
}
IMAGING = {
    "magnification": F(check="positive", required=True),
    "flight_length_m": F(check="positive", required=True),
    "total_counts": F(6.4e6, "positive"),
    "n_bins": I(64),
    "count_floor": F(1e3, "nonneg"),
}


def _range(unit, extra=None):
    d = {f"start_{unit}": F(required=True), f"stop_{unit}": F(required=True), "n": I(required=True)}
    d.update(extra or {})
    return d


SWEEPS = {
    "farfield": {"min_urad": F(required=True), "max_urad": F(required=True), "n": I(2048)},
    "tl_scan": _range("nm"),
    "visibility_velocity": _range("mps", {"spread_rel_start": F(0.0, "nonneg"),
                                          "spread_rel_stop": F(None, "nonneg")}),
    "decoherence_pressure": _range("mbar"),
    "decoherence_thermal": _range("K"),
    "dephasing": _range("mps"),
    "deflect": _range("V"),
    "kdtl_power": _range("W"),
    "deposit_image": {"start_nm": F(0.0), "step_nm": F(check="positive", required=True),
                      "n": I(required=True)},
}
NUMERICS = {
    "n_nodes": I(48),
    "n_harmonics": I(8),
    "cutoff_phase": F(20.0, "positive"),
    "n_slits": I(100),
    "absorption": B(True),
    "recoil": S("symmetric", ("symmetric", "plus")),
    "statistics": S("poisson", ("poisson", "fixed")),
}

COMMON = {"particle": PARTICLE, "velocity": VELOCITY, "numerics": NUMERICS}
NEAR = {"grating1": MATERIAL, "grating2": MATERIAL, "grating3": GRATING3, "geometry": GEOMETRY}
SECTIONS: Dict[str, Dict[str, Dict[str, Field]]] = {
    "farfield": {**COMMON, "grating": MATERIAL, "geometry": GEOMETRY},
    "tl_scan": {**COMMON, **NEAR},
    "visibility_velocity": {**COMMON, **NEAR},
    "decoherence_pressure": {**COMMON, "gas": GAS, "geometry": GEOMETRY},
    "decoherence_thermal": {**COMMON, "emission": EMISSION, **NEAR},
    "dephasing": {**COMMON, **NEAR, "inertial": INERTIAL, "vibration": VIBRATION},
    "deflect": {**COMMON, **NEAR, "electrode": ELECTRODE, "noise": NOISE},
    "kdtl_power": {**COMMON, **NEAR},
    "deposit_image": {**COMMON, **NEAR, "imaging": IMAGING},
}
REQUIRED_SECTIONS = {
    "farfield": ("particle", "velocity", "grating"),
    "tl_scan": ("particle", "velocity", "grating1", "grating2", "geometry"),
    "visibility_velocity": ("particle", "grating1", "grating2", "geometry"),
    "decoherence_pressure": ("particle", "velocity", "gas", "geometry"),
    "decoherence_thermal": ("particle", "velocity", "grating2", "geometry"),
    "dephasing": ("velocity", "grating2", "geometry"),
    "deflect": ("particle", "velocity", "grating2", "geometry", "electrode"),
    "kdtl_power": ("particle", "velocity", "grating1", "grating2", "geometry"),
    "deposit_image": ("particle", "velocity", "grating1", "grating2", "geometry", "imaging"),
}
TOP = {"kind", "seed", "name", "output", "sweep"}
# optional sections that are filled with defaults when absent
DEFAULTED = {"numerics", "grating3", "noise", "vibration", "inertial"}


@dataclass
class Scenario:
    kind: str
    config: Dict[str, Any]  # resolved, defaults applied
    seed: int = 0
    name: str = ""
    output: Dict[str, Any] = field(default_factory=dict)

    def resolved(self) -> Dict[str, Any]:
        out = {"kind": self.kind, "name": self.name, "seed": self.seed}
        out.update(copy.deepcopy(self.config))
        if self.output:
            out["output"] = dict(self.output)
        return out


# ----------------------------------------------------------------- parsing

def _marks(node, path=(), out=None):
    """Map key paths to (line, column), 1-based."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = (k.start_mark.line + 1, k.start_mark.column + 1)
            _marks(v, p, out)
    return out


UNITS = ("amu", "kg", "A3", "m2", "meV_nm3", "K_per_eV", "K", "mps2", "mps", "nm", "um", "mm", "m",
         "W", "mW", "deg", "rad", "urad", "Jm6", "Hz", "per_m3", "mbar", "Pa", "V", "eV", "J", "s")


def _unit_base(key: str) -> Optional[str]:
    for u in UNITS:
        if key.endswith("_" + u):
            return key[: -len(u) - 1]
    return None


def _coerce(section: str, key: str, spec: Field, value, mark):
    name = f"{section}.{key}"
    line, col = mark if mark else (None, None)
    if value is None:
        return None
    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(CONSTRAINT_VIOLATION, "expected true/false", name, line, col)
        return value
    if spec.kind == "str":
        if not isinstance(value, str):
            raise ConfigError(CONSTRAINT_VIOLATION, "expected a string", name, line, col)
        if spec.choices and value not in spec.choices:
            raise ConfigError(CONSTRAINT_VIOLATION, f"must be one of {', '.join(spec.choices)}",
                              name, line, col)
        return value
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a dot (2.5e4) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str):
            raise ConfigError(UNIT_MISMATCH, f"numeric value expected, got {value!r}; units belong "
                              "in the key name", name, line, col)
        raise ConfigError(CONSTRAINT_VIOLATION, "expected a number", name, line, col)
    if spec.kind == "int":
        if float(value) != int(value):
            raise ConfigError(CONSTRAINT_VIOLATION, "expected an integer", name, line, col)
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(CONSTRAINT_VIOLATION, "must be finite", name, line, col)
    c = spec.check
    bad = ((c == "positive" and not value > 0) or (c == "nonneg" and value < 0)
           or (c == "fraction" and not 0 < value <= 1) or (c == "unit" and not 0 <= value <= 1)
           or (c == "int>=1" and value < 1))
    if bad:
        text = {"positive": "must be > 0", "nonneg": "must be >= 0", "fraction": "must be in (0, 1]",
                "unit": "must be in [0, 1]", "int>=1": "must be >= 1"}[c]
        raise ConfigError(CONSTRAINT_VIOLATION, text, name, line, col)
    return value


def _unknown(section: str, key: str, schema: Dict[str, Field], mark, strict: bool):
    line, col = mark if mark else (None, None)
    name = f"{section}.{key}" if section else key
    for known in schema:
        base = _unit_base(known)
        if base and key != known and key.startswith(base + "_"):
            raise ConfigError(UNIT_MISMATCH, f"expected key {known!r}", name, line, col)
    if strict:
        raise ConfigError(UNKNOWN_KEY, "not a recognized key", name, line, col)
    warnings.warn(f"ignoring unknown key {name}", stacklevel=3)


def _section(section: str, data, schema: Dict[str, Field], marks, strict: bool):
    mark = marks.get((section,))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        line, col = mark if mark else (None, None)
        raise ConfigError(PARSE_ERROR, "expected a mapping", section, line, col)
    out = {}
    for key, value in data.items():
        key = str(key)
        if key not in schema:
            _unknown(section, key, schema, marks.get((section, key)), strict)
            continue
        out[key] = _coerce(section, key, schema[key], value, marks.get((section, key)))
    for key, spec in schema.items():
        if key not in out or out[key] is None:
            if spec.required:
                line, col = mark if mark else (None, None)
                raise ConfigError(CONSTRAINT_VIOLATION, "required key missing",
                                  f"{section}.{key}", line, col)
            out[key] = spec.default
    return out


def parse_config(text: str, strict: bool = False) -> Scenario:
    """Parse and validate a scenario; raises :class:`ConfigError`."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(PARSE_ERROR, str(getattr(exc, "problem", exc)), "",
                          mark.line + 1 if mark else None, mark.column + 1 if mark else None)
    if not isinstance(data, dict):
        raise ConfigError(PARSE_ERROR, "top level must be a mapping")
    marks = _marks(root)
    kind = data.get("kind")
    if kind not in KINDS:
        line, col = marks.get(("kind",), (None, None))
        raise ConfigError(CONSTRAINT_VIOLATION, f"kind must be one of {', '.join(KINDS)}", "kind",
                          line, col)
    sections = SECTIONS[kind]
    cfg: Dict[str, Any] = {}
    for key, value in data.items():
        key = str(key)
        if key in TOP:
            continue
        if key not in sections:
            _unknown("", key, {s: Field() for s in sections}, marks.get((key,)), strict)
            continue
        cfg[key] = _section(key, value, sections[key], marks, strict)
    for sec in REQUIRED_SECTIONS[kind]:
        if sec not in cfg:
            raise ConfigError(CONSTRAINT_VIOLATION, "required section missing", sec)
    for sec, schema in sections.items():
        if sec not in cfg and sec in DEFAULTED:
            cfg[sec] = _section(sec, {}, schema, marks, strict)
    if "sweep" not in data:
        raise ConfigError(CONSTRAINT_VIOLATION, "required section missing", "sweep")
    cfg["sweep"] = _section("sweep", data["sweep"], SWEEPS[kind], marks, strict)
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        line, col = marks.get(("seed",), (None, None))
        raise ConfigError(CONSTRAINT_VIOLATION, "seed must be a non-negative integer", "seed", line, col)
    output = data.get("output") or {}
    if not isinstance(output, dict):
        raise ConfigError(PARSE_ERROR, "expected a mapping", "output")
    for k in output:
        if k != "basename":
            _unknown("output", str(k), {"basename": Field("str")}, marks.get(("output", k)), strict)
    name = data.get("name") or ""
    s = Scenario(kind, cfg, seed, str(name), {"basename": output.get("basename") or (name or kind)})
    _cross_checks(s, marks)
    return s


def _cross_checks(s: Scenario, marks) -> None:
    c = s.config

    def fail(key, msg):
        sec, _, k = key.partition(".")
        line, col = marks.get((sec, k), marks.get((sec,), (None, None)))
        raise ConfigError(CONSTRAINT_VIOLATION, msg, key, line, col)

    v = c.get("velocity")
    if v is not None:
        if v["mean_mps"] is None and not (v["shape"] == "effusive_flux" and v["source_temperature_K"]):
            fail("velocity.mean_mps", "required (or an effusive source temperature)")
        if v["v_min_mps"] is not None and v["v_max_mps"] is not None and v["v_min_mps"] >= v["v_max_mps"]:
            fail("velocity.v_min_mps", "must be below v_max_mps")
    for g in ("grating", "grating1", "grating2"):
        gg = c.get(g)
        if not gg:
            continue
        if gg["type"] == "material":
            if gg["period_nm"] is None:
                fail(f"{g}.period_nm", "required for a material grating")
            if gg["open_fraction"] is None:
                fail(f"{g}.open_fraction", "required for a material grating")
        elif gg["laser_wavelength_nm"] is None:
            fail(f"{g}.laser_wavelength_nm", "required for an optical grating")
    geo = c.get("geometry")
    if geo is not None and s.kind != "farfield" and geo["L12_m"] is None:
        fail("geometry.L12_m", "required")
    sw = c["sweep"]
    if "start_mps" in sw and min(sw["start_mps"], sw["stop_mps"]) <= 0:
        fail("sweep.start_mps", "velocities must be positive")
    if "start_K" in sw and min(sw["start_K"], sw["stop_K"]) < 0:
        fail("sweep.start_K", "temperatures must be >= 0")
    for key in ("start_mbar", "start_W"):
        if key in sw and min(sw[key], sw["stop" + key[5:]]) < 0:
            fail(f"sweep.{key}", "must be >= 0")
    if s.kind == "farfield" and not sw["max_urad"] > sw["min_urad"]:
        fail("sweep.max_urad", "must exceed min_urad")


# ------------------------------------------------------------------ presets

def preset_names():
    base = resources.files("molwave") / "presets"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    path = resources.files("molwave") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(PARSE_ERROR, f"no preset named {name!r}")
    return path.read_text(encoding="utf-8")


HEADER_BEGIN = "# --- config ---"
HEADER_END = "# --- end config ---"


def config_from_header(text: str) -> Optional[str]:
    """Extract the embedded configuration from an output file header."""
    lines = text.splitlines()
    if HEADER_BEGIN not in lines:
        return None
    i = lines.index(HEADER_BEGIN)
    body = []
    for line in lines[i + 1:]:
        if line == HEADER_END:
            return "\n".join(body) + "\n"
        body.append(line[2:] if line.startswith("# ") else line.lstrip("#"))
    raise ConfigError(PARSE_ERROR, "unterminated config header")
