"""Command-line scenario runner.

    molwave run <config.yaml | preset | previous-output.csv> [--seed N] [--out DIR] [--threads N] [--strict]
    molwave presets list
    molwave presets show <name>
"""
from __future__ import annotations

import argparse
import io
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .config import (HEADER_BEGIN, HEADER_END, ConfigError, Scenario, config_from_header,
                     parse_config, preset_names, preset_text)
from .core import (AMU, MEV_NM3, DomainError, InterferometerGeometry, MaterialGrating,
                   OpticalGrating, Particle, VelocityDistribution, alpha_from_volume,
                   alpha_to_volume, visibility_of_pattern)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# ---------------------------------------------------------------- builders

def build_emission(c):
    from .decoherence import EmissionSpectrum, load_sigma_table, EV
    if c is None:
        return None
    if c["model"] == "table":
        if not c["table_file"]:
            raise ConfigError("constraint_violation", "table model needs table_file", "emission.table_file")
        spec = load_sigma_table(c["table_file"])
        return EmissionSpectrum("table", gap_energy=c["gap_eV"] * EV, sigma_abs_table=spec.sigma_abs_table)
    return EmissionSpectrum("powerlaw_with_gap", gap_energy=c["gap_eV"] * EV, sigma0=c["sigma0_m2"],
                            lambda_ref=c["lambda_ref_nm"] * 1e-9, exponent=c["exponent"])


def build_particle(cfg) -> Particle:
    c = cfg["particle"]
    kw = dict(
        mass=c["mass_amu"] * AMU,
        alpha_static=alpha_from_volume(c["alpha_static_A3"]).real,
        alpha_optical=alpha_from_volume(complex(c["alpha_optical_re_A3"], c["alpha_optical_im_A3"])),
        sigma_abs_laser=c["sigma_abs_laser_m2"],
        C3_wall=c["C3_meV_nm3"] * MEV_NM3,
        internal_temperature=c["internal_temperature_K"],
        emission_model=build_emission(cfg.get("emission")),
        name=c["name"],
    )
    if c["caloric_slope_K_per_eV"] is not None:
        kw["caloric_slope"] = c["caloric_slope_K_per_eV"]
    return Particle(**kw)


def build_velocity(cfg, p: Optional[Particle] = None) -> VelocityDistribution:
    c = cfg["velocity"]
    if c["shape"] == "effusive_flux":
        if c["source_temperature_K"]:
            return VelocityDistribution.effusive(c["source_temperature_K"], p.mass,
                                                 c["v_min_mps"], c["v_max_mps"])
        return VelocityDistribution(c["mean_mps"], shape="effusive_flux", v_min=c["v_min_mps"],
                                    v_max=c["v_max_mps"])
    return VelocityDistribution(c["mean_mps"], c["spread_rel"] * c["mean_mps"],
                                v_min=c["v_min_mps"], v_max=c["v_max_mps"])


def build_grating(c):
    if c["type"] == "optical":
        return OpticalGrating(c["laser_wavelength_nm"] * 1e-9, c["phi0"], c["n0"], c["power_W"],
                              c["waist_y_um"] * 1e-6, c["waist_z_um"] * 1e-6,
                              c["reference_velocity_mps"])
    C3 = None if c["C3_meV_nm3"] is None else c["C3_meV_nm3"] * MEV_NM3
    return MaterialGrating(c["period_nm"] * 1e-9, c["open_fraction"], c["thickness_nm"] * 1e-9, C3)


def build_geometry(c) -> InterferometerGeometry:
    L12 = c["L12_m"] if c["L12_m"] is not None else 1.0
    return InterferometerGeometry(L12, c["L23_m"] or L12, math.radians(c["tilt_deg"]),
                                  math.radians(c["orientation_deg"]), c["collimation_urad"] * 1e-6)


def build_setup(cfg):
    from .nearfield import TalbotSetup
    g1 = build_grating(cfg["grating1"]) if "grating1" in cfg else None
    g2 = build_grating(cfg["grating2"])
    g3 = cfg.get("grating3") or {}
    if g3.get("period_nm"):
        d3 = g3["period_nm"] * 1e-9
    elif g1 is not None:
        d3 = g1.period_d
    else:
        d3 = g2.period_d
    return TalbotSetup(g1, g2, d3, build_geometry(cfg["geometry"]), "quantum", g3.get("open_fraction"))


def _grid(sw, unit):
    return np.linspace(sw[f"start_{unit}"], sw[f"stop_{unit}"], sw["n"])


# ----------------------------------------------------------------- output

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def header(s: Scenario, extra: Optional[List[str]] = None) -> str:
    body = yaml.safe_dump(s.resolved(), sort_keys=True, default_flow_style=False)
    lines = [f"# molwave {__version__}", f"# kind: {s.kind}", HEADER_BEGIN]
    lines += ["# " + ln for ln in body.splitlines()]
    lines.append(HEADER_END)
    lines += ["# " + e for e in (extra or [])]
    return "\n".join(lines) + "\n"


def csv_text(s: Scenario, columns: List[str], rows, extra=None) -> str:
    buf = io.StringIO()
    buf.write(header(s, extra))
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(x) for x in row) + "\n")
    return buf.getvalue()


class Outputs:
    """Stages files as temporaries and renames them into place together."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.staged: Dict[Path, Path] = {}

    def add(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        final = self.dir / name
        tmp = self.dir / f".{name}.tmp{os.getpid()}"
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.staged[final] = tmp

    def commit(self) -> List[Path]:
        for final, tmp in self.staged.items():
            os.replace(tmp, final)
        return list(self.staged)

    def discard(self) -> None:
        for tmp in self.staged.values():
            try:
                tmp.unlink()
            except FileNotFoundError:
                pass


# ------------------------------------------------------------------ runners

def run_farfield(s: Scenario, out: Outputs, threads: int):
    from .farfield import farfield_material, farfield_optical
    from dataclasses import replace
    cfg = s.config
    num = cfg["numerics"]
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    g = build_grating(cfg["grating"])
    geo = cfg.get("geometry")
    coll = geo["collimation_urad"] * 1e-6 if geo else 0.0
    sw = cfg["sweep"]
    ang = np.linspace(sw["min_urad"], sw["max_urad"], sw["n"]) * 1e-6
    if isinstance(g, OpticalGrating):
        pat = farfield_optical(g, p, vd, coll, ang, n_nodes=num["n_nodes"], absorption=num["absorption"])
        cols, rows = ["angle_urad", "intensity"], zip(ang * 1e6, pat.intensity)
    else:
        pat = farfield_material(g, p, vd, coll, num["n_slits"], ang, cutoff_phase=num["cutoff_phase"],
                                n_nodes=num["n_nodes"])
        pt = farfield_material(replace(g, C3=0.0), replace(p, C3_wall=0.0), vd, coll, num["n_slits"], ang,
                               n_nodes=num["n_nodes"])
        cols = ["angle_urad", "intensity_vdw", "intensity_point"]
        rows = zip(ang * 1e6, pat.intensity, pt.intensity)
    out.add(f"{s.output['basename']}.csv", csv_text(s, cols, rows))


def run_tl_scan(s, out, threads):
    from .nearfield import averaged_pattern
    cfg = s.config
    num = cfg["numerics"]
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    setup = build_setup(cfg)
    x = _grid(cfg["sweep"], "nm") * 1e-9
    q = averaged_pattern(setup, p, vd, num["n_nodes"], num["n_harmonics"], "quantum", num["cutoff_phase"])
    c = averaged_pattern(setup, p, vd, num["n_nodes"], num["n_harmonics"], "classical", num["cutoff_phase"])
    extra = [f"V_quantum: {fmt(visibility_of_pattern(q, 'harmonic'))}",
             f"V_classical: {fmt(visibility_of_pattern(c, 'harmonic'))}"]
    rows = zip(x * 1e9, q.signal(x), c.signal(x))
    out.add(f"{s.output['basename']}.csv", csv_text(s, ["x_nm", "S_quantum", "S_classical"], rows, extra))


def run_visibility_velocity(s, out, threads):
    from .nearfield import CURVE_KEYS, visibility_vs_velocity
    cfg = s.config
    num = cfg["numerics"]
    sw = cfg["sweep"]
    p = build_particle(cfg)
    setup = build_setup(cfg)
    v = _grid(sw, "mps")
    stop = sw["spread_rel_stop"] if sw["spread_rel_stop"] is not None else sw["spread_rel_start"]
    spread = np.linspace(sw["spread_rel_start"], stop, v.size)
    curves = visibility_vs_velocity(setup, p, v, spread, num["n_nodes"], CURVE_KEYS,
                                    num["cutoff_phase"], threads)
    rows = zip(v, spread, *(curves[k].visibilities for k in CURVE_KEYS))
    out.add(f"{s.output['basename']}.csv", csv_text(s, ["v_mps", "spread_rel", *CURVE_KEYS], rows))


def run_decoherence_pressure(s, out, threads):
    from .decoherence import GasEnvironment, collisional_visibility, effective_cross_section
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    gc = cfg["gas"]
    gas = GasEnvironment(gc["gas_mass_amu"] * AMU, gc["temperature_K"], 0.0, gc["C6_Jm6"])
    sigma = effective_cross_section(vd.mean_v, gas)
    L = cfg["geometry"]["L12_m"]
    p_mbar = _grid(cfg["sweep"], "mbar")
    V = np.atleast_1d(collisional_visibility(p_mbar * 100.0, L, gas.temperature, sigma))
    out.add(f"{s.output['basename']}.csv",
            csv_text(s, ["p_mbar", "V_over_V0"], zip(p_mbar, V), [f"sigma_eff_m2: {fmt(sigma)}"]))


def run_decoherence_thermal(s, out, threads):
    from .decoherence import c70_emission, thermal_visibility
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    setup = build_setup(cfg)
    spec = p.emission_model or c70_emission()
    T = _grid(cfg["sweep"], "K")
    V = [thermal_visibility(t, setup, p, vd.mean_v, spec) for t in T]
    out.add(f"{s.output['basename']}.csv", csv_text(s, ["T_K", "V_over_V0"], zip(T, V)))


def run_dephasing(s, out, threads):
    from .dephasing import (InertialSpec, VibrationSpec, acceleration_visibility,
                            fringe_shift_from_acceleration, inertial_acceleration, vibration_visibility)
    cfg = s.config
    geo = cfg["geometry"]
    ic, vc = cfg["inertial"], cfg["vibration"]
    d = build_grating(cfg["grating2"]).period_d
    L = geo["L12_m"]
    rel = cfg["velocity"]["spread_rel"]
    tilt = ic["tilt_deg"] if ic["tilt_deg"] is not None else geo["tilt_deg"]
    lat = ic["latitude_deg"] if ic["latitude_deg"] is not None else geo["orientation_deg"]
    vib = vibration_visibility(VibrationSpec(vc["model"], vc["amplitude_nm"] * 1e-9, vc["frequency_Hz"]), d)
    rows = []
    for v in _grid(cfg["sweep"], "mps"):
        a = inertial_acceleration(InertialSpec(ic["source"], ic["acceleration_mps2"], math.radians(tilt),
                                               v, math.radians(lat)))
        Va = acceleration_visibility(a, L, d, v, rel * v)
        rows.append((v, a, fringe_shift_from_acceleration(a, L, d, v), Va, vib, Va * vib))
    out.add(f"{s.output['basename']}.csv",
            csv_text(s, ["v_mps", "a_mps2", "shift_rad", "V_accel", "V_vibration", "V_total"], rows))


def run_deflect(s, out, threads):
    from .metrology import DeflectionElectrode, fit_static_polarizability, scan_fringe_vs_voltage
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    setup = build_setup(cfg)
    ec, nc = cfg["electrode"], cfg["noise"]
    el = DeflectionElectrode(ec["gradient_coeff_per_m3"], ec["length_m"], ec["position_m"])
    U = _grid(cfg["sweep"], "V")
    data = scan_fringe_vs_voltage(setup, p, el, U, vd, s.seed if nc["enabled"] else None,
                                  nc["counts_per_point"], nc["visibility0"])
    fit = fit_static_polarizability(data, el, p.mass, vd, setup.geometry, setup.g3_period)
    extra = [f"alpha_fit_A3: {fmt(alpha_to_volume(fit.value).real)}",
             f"alpha_err_A3: {fmt(alpha_to_volume(fit.std_error).real)}",
             f"chi2: {fmt(fit.chi2)}", f"dof: {fit.dof}",
             f"max_shift_nm: {fmt(float(np.max(np.abs(data.shift_m))) * 1e9)}",
             f"resolvable: {str(data.resolvable).lower()}"]
    rows = zip(U, data.phase, data.sigma_phase)
    out.add(f"{s.output['basename']}.csv",
            csv_text(s, ["U_volt", "phase_rad", "sigma_phase_rad"], rows, extra))


def run_kdtl_power(s, out, threads):
    from .nearfield import kdtl_visibility_vs_power
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    setup = build_setup(cfg)
    P = _grid(cfg["sweep"], "W")
    cur = kdtl_visibility_vs_power(setup, p, P, vd, cfg["numerics"]["n_nodes"], threads)
    out.add(f"{s.output['basename']}.csv", csv_text(s, ["power_W", "V"], zip(P, cur.visibilities)))


def run_deposit_image(s, out, threads):
    from .imaging import extract_row_visibility, row_velocities, simulate_deposit
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p)
    setup = build_setup(cfg)
    ic, sw = cfg["imaging"], cfg["sweep"]
    xs = (sw["start_nm"] + sw["step_nm"] * np.arange(sw["n"])) * 1e-9
    img = simulate_deposit(setup, p, vd, xs, ic["magnification"], ic["flight_length_m"], s.seed,
                           ic["total_counts"], ic["n_bins"], cfg["numerics"]["n_harmonics"], threads)
    cur = extract_row_visibility(img, ic["flight_length_m"], count_floor=ic["count_floor"])
    v_rows = row_velocities(img, ic["flight_length_m"])
    by_v = {float(v): (V, e) for v, V, e in zip(cur.sweep_values, cur.visibilities, cur.uncertainties)}
    rows = [(i, y, v, *by_v[float(v)]) for i, (y, v) in enumerate(zip(img.y_axis, v_rows))]
    base = s.output["basename"]
    extra = [f"plate_step_m: {fmt(img.plate_step)}", f"image: {base}.pgm"]
    out.add(f"{base}_rows.csv", csv_text(s, ["row_index", "y_m", "v_mps", "V", "sigma_V"], rows, extra))
    out.add(f"{base}.pgm", img.pgm_text(f"molwave {__version__} {base}"))


RUNNERS = {
    "farfield": run_farfield,
    "tl_scan": run_tl_scan,
    "visibility_velocity": run_visibility_velocity,
    "decoherence_pressure": run_decoherence_pressure,
    "decoherence_thermal": run_decoherence_thermal,
    "dephasing": run_dephasing,
    "deflect": run_deflect,
    "kdtl_power": run_kdtl_power,
    "deposit_image": run_deposit_image,
}


def run_scenario(s: Scenario, out_dir=".", threads: int = 1) -> List[Path]:
    """Run a parsed scenario; files appear only if every output succeeded."""
    out = Outputs(Path(out_dir))
    try:
        RUNNERS[s.kind](s, out, max(int(threads), 1))
    except BaseException:
        out.discard()
        raise
    return out.commit()


def load_scenario(source: str, strict: bool = False) -> Scenario:
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        embedded = config_from_header(text)
        return parse_config(embedded if embedded is not None else text, strict)
    if source in preset_names():
        return parse_config(preset_text(source), strict)
    raise ConfigError("parse_error", f"no such file or preset: {source}")


# ---------------------------------------------------------------------- main

def _parser():
    ap = argparse.ArgumentParser(prog="molwave", description="Molecule interferometry scenarios")
    ap.add_argument("--version", action="version", version=f"molwave {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a config file or preset")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=".")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--strict", action="store_true", help="reject unknown keys")
    pr = sub.add_parser("presets", help="list or show shipped presets")
    psub = pr.add_subparsers(dest="action", required=True)
    psub.add_parser("list")
    sh = psub.add_parser("show")
    sh.add_argument("name")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "presets":
        if args.action == "list":
            for name in preset_names():
                kind = yaml.safe_load(preset_text(name)).get("kind", "?")
                print(f"{name}\t{kind}")
            return EXIT_OK
        try:
            sys.stdout.write(preset_text(args.name))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            s = load_scenario(args.config, args.strict)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("constraint_violation", "seed must be >= 0", "--seed")
            s.seed = args.seed
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = run_scenario(s, args.out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical error in {s.kind}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
