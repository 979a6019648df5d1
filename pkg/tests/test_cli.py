import subprocess
import sys

import pytest

from molwave.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from molwave.config import preset_names, preset_text

TL = """\
kind: tl_scan
particle: {mass_amu: 840.0, C3_meV_nm3: 20.0}
velocity: {mean_mps: 130.0, spread_rel: 0.1}
grating1: {type: material, period_nm: 990.0, open_fraction: 0.48}
grating2: {type: material, period_nm: 990.0, open_fraction: 0.56, thickness_nm: 400.0}
geometry: {L12_m: 0.22, L23_m: 0.22}
sweep: {start_nm: 0.0, stop_nm: 1980.0, n: 5}
numerics: {n_nodes: 8}
"""

DEFLECT = """\
kind: deflect
particle: {mass_amu: 840.0, alpha_static_A3: 102.0}
velocity: {mean_mps: 130.0, spread_rel: 0.15}
grating1: {type: material, period_nm: 990.0, open_fraction: 0.48}
grating2: {type: material, period_nm: 990.0, open_fraction: 0.56}
geometry: {L12_m: 0.22, L23_m: 0.22}
electrode: {gradient_coeff_per_m3: 2.5e4, length_m: 0.05, position_m: 0.22}
noise: {enabled: true, counts_per_point: 5.0e6, visibility0: 0.3}
sweep: {start_V: 0.0, stop_V: 10000.0, n: 6}
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def data_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_presets_list(capsys):
    assert main(["presets", "list"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert [ln.split("\t")[0] for ln in out] == preset_names()
    assert "c70_tl_fig4\tvisibility_velocity" in out


def test_presets_show(capsys):
    assert main(["presets", "show", "c70_tl_scan"]) == EXIT_OK
    assert capsys.readouterr().out == preset_text("c70_tl_scan")
    assert main(["presets", "show", "nope"]) == EXIT_CONFIG


def test_run_and_rerun_from_output(tmp_path, capsys):
    cfg = write(tmp_path, TL)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    first = tmp_path / "a" / "tl_scan.csv"
    assert capsys.readouterr().out.strip() == str(first)
    rows = data_lines(first)
    assert rows[0] == "x_nm,S_quantum,S_classical"
    assert len(rows) == 6
    assert main(["run", str(first), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "b" / "tl_scan.csv").read_bytes() == first.read_bytes()


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write(tmp_path, TL)
    assert main(["run", cfg, "--out", str(tmp_path / "one")]) == EXIT_OK
    assert main(["run", cfg, "--out", str(tmp_path / "two"), "--threads", "2"]) == EXIT_OK
    assert (tmp_path / "one" / "tl_scan.csv").read_bytes() == (tmp_path / "two" / "tl_scan.csv").read_bytes()


def test_bad_config_exits_2_and_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, TL.replace("L12_m: 0.22", "L12_mm: 220"))
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == EXIT_CONFIG
    assert "unit_mismatch" in capsys.readouterr().err
    assert not out.exists()
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_strict_flag(tmp_path):
    cfg = write(tmp_path, TL.replace("n_nodes: 8", "n_nodes: 8, flavour: 1"))
    assert main(["run", cfg, "--strict", "--out", str(tmp_path / "s")]) == EXIT_CONFIG
    with pytest.warns(UserWarning):
        assert main(["run", cfg, "--out", str(tmp_path / "l")]) == EXIT_OK


def test_domain_error_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, TL.replace("grating2: {type: material, period_nm: 990.0",
                                     "grating2: {type: material, period_nm: 800.0"))
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == EXIT_NUMERIC
    assert "resonant" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_seed_override(tmp_path):
    cfg = write(tmp_path, DEFLECT)
    runs = {}
    for tag, extra in (("a", []), ("b", []), ("c", ["--seed", "7"])):
        assert main(["run", cfg, "--out", str(tmp_path / tag)] + extra) == EXIT_OK
        runs[tag] = (tmp_path / tag / "deflect.csv").read_text()
    assert runs["a"] == runs["b"]
    assert data_lines(tmp_path / "a" / "deflect.csv") != data_lines(tmp_path / "c" / "deflect.csv")
    assert "# seed: 7" in runs["c"]
    assert main(["run", cfg, "--seed", "-1"]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "molwave.cli", "presets", "list"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "methane_collisional" in res.stdout
