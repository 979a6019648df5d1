import pytest

from molwave.cli import build_particle, build_setup, build_velocity
from molwave.config import parse_config, preset_text

_results = {}


def load_preset(name):
    """(scenario, particle, velocity distribution or None, setup or None)."""
    s = parse_config(preset_text(name))
    cfg = s.config
    p = build_particle(cfg)
    vd = build_velocity(cfg, p) if "velocity" in cfg else None
    setup = build_setup(cfg) if "grating2" in cfg else None
    return s, p, vd, setup


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _results[mark.args[0]] = ("PASS" if rep.passed else "FAIL", item.name, detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, name, detail, dur = _results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {name} ({dur:.1f} s)  {detail}")
