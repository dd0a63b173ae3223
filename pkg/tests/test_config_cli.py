import csv
import json
from pathlib import Path

import numpy as np
import pytest

from clicktime import cli
from clicktime.checks import InvariantResult
from clicktime.config import load_config, parse_config
from clicktime.exceptions import ConfigError
from clicktime.report import ResultTable, atomic_write

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "grid": {"e_min": 0.5, "e_max": 4.5, "n_points": 401},
    "potential": {"kind": "hard_sphere", "radius": 1.0},
    "radial": {"r_max": 40.0, "dr": 0.01},
    "detector": {"R": 10.0},
    "packet": {"k0": 2.0, "sigma_k": 0.04},
    "time": {"t_min": -60.0, "t_max": 70.0, "n_t": 4000},
}


def toml_text(cfg):
    lines = []
    for sec, body in cfg.items():
        lines.append(f"[{sec}]")
        for k, v in body.items():
            lines.append(f"{k} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def variant(**changes):
    cfg = {sec: dict(body) for sec, body in BASE.items()}
    for dotted, value in changes.items():
        sec, key = dotted.split("__")
        cfg.setdefault(sec, {})
        if value is None:
            cfg[sec].pop(key, None)
        else:
            cfg[sec][key] = value
    return cfg


def write_config(tmp_path, cfg, name="run.toml"):
    cfg = dict(cfg)
    cfg.setdefault("output", {"directory": "out"})
    path = tmp_path / name
    path.write_text(toml_text(cfg))
    return path


def run(tmp_path, command, cfg, *extra):
    path = write_config(tmp_path, cfg)
    return cli.main([command, "--config", str(path), *extra])


# --- configuration ---------------------------------------------------------------------

def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.grid.n_points == 401
        assert cfg.times.shape == (cfg.t_grid[2],)


@pytest.mark.parametrize("changes, key", [
    ({"potential__kind": "coulomb"}, "potential.kind"),
    ({"potential__radius": None}, "potential.radius"),
    ({"grid__n_points": 4}, "grid.n_points"),
    ({"grid__e_max": 0.1}, "grid.e_max"),
    ({"grid__e_min": "low"}, "grid.e_min"),
    ({"radial__dr": 0.1}, "radial.dr"),
    ({"radial__r_match": 0.5}, "radial.r_match"),
    ({"detector__R": 0.5}, "detector.R"),
    ({"detector__rho": -1.0}, "detector.rho"),
    ({"packet__k0": 0.9}, "packet.k0"),
    ({"packet__sigma_k": 0}, "packet.sigma_k"),
    ({"time__t_max": 1e6}, "time.t_max"),
    ({"time__n_t": 2}, "time.n_t"),
    ({"grid__colour": 1}, "grid.colour"),
    ({"povm__seed": -3}, "povm.seed"),
    ({"output__formats": ["xml"]}, "output.formats"),
])
def test_config_errors_name_the_key(tmp_path, changes, key):
    cfg = variant(**changes)
    with pytest.raises(ConfigError) as err:
        parse_config(cfg, tmp_path)
    assert err.value.key == key
    assert key in str(err.value)


def test_missing_section_and_bad_toml(tmp_path):
    cfg = variant()
    del cfg["packet"]
    with pytest.raises(ConfigError, match="packet"):
        parse_config(cfg)
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\n")
    with pytest.raises(ConfigError, match="TOML"):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_tabulated_path_is_relative_to_config(tmp_path):
    r = np.linspace(0, 2, 21)
    np.savetxt(tmp_path / "v.txt", np.column_stack([r, np.where(r < 1, 2.0, 0.0)]))
    cfg = load_config(write_config(tmp_path, variant(potential__kind="tabulated", potential__radius=None,
                                                     potential__file="v.txt")))
    assert cfg.potential.kind == "tabulated"
    cfg2 = variant(potential__kind="tabulated", potential__radius=None, potential__file="nope.txt")
    with pytest.raises(ConfigError, match="potential.file"):
        parse_config(cfg2, tmp_path)


# --- report helpers ---------------------------------------------------------------------

def test_csv_has_units_row():
    t = ResultTable("x", ["t", "p"], ["time", "1/time"])
    t.add(0.1, 2.0)
    rows = list(csv.reader(t.to_csv().splitlines()))
    assert rows[0] == ["t", "p"] and rows[1] == ["time", "1/time"] and rows[2] == ["0.1", "2.0"]
    with pytest.raises(ValueError):
        t.add(1.0)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "a" / "f.txt", "hello")
    atomic_write(tmp_path / "a" / "f.txt", b"bye")
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["f.txt"]
    assert (tmp_path / "a" / "f.txt").read_bytes() == b"bye"


# --- commands ------------------------------------------------------------------------------

def _value(x):
    try:
        return float(x)
    except ValueError:
        return x


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1], [[_value(x) for x in r] for r in rows[2:]]


def test_phase_shifts_hard_sphere(tmp_path):
    assert run(tmp_path, "phase-shifts", variant()) == 0
    head, units, rows = read_csv(tmp_path / "out" / "phase_shifts.csv")
    assert head == ["k", "E", "delta_std", "delta_paper", "dDelta_dE"]
    assert units[0] == "1/length" and units[1] == "energy"
    k = np.array([r[0] for r in rows])
    d = np.array([r[2] for r in rows])
    assert np.abs(np.unwrap(2 * d) / 2 - np.unwrap(2 * -k) / 2 - (d[0] + k[0])).max() < 1e-8
    assert (tmp_path / "out" / "phase_shifts.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_phase_shifts_free_json(tmp_path):
    cfg = variant(potential__kind="free", potential__radius=None)
    assert run(tmp_path, "phase-shifts", cfg, "--format", "json") == 0
    data = json.loads((tmp_path / "out" / "phase_shifts.json").read_text())
    col = data["columns"].index("delta_std")
    assert max(abs(r[col]) for r in data["rows"]) < 1e-10
    assert data["units"][data["columns"].index("E")] == "energy"
    assert not (tmp_path / "out" / "phase_shifts.csv").exists()


def test_bad_kind_exits_2(tmp_path, capsys):
    assert run(tmp_path, "phase-shifts", variant(potential__kind="coulomb")) == 2
    assert "potential.kind" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_negative_seed_exits_2(tmp_path):
    assert run(tmp_path, "povm-check", variant(), "--seed", "-1") == 2


def small_povm_config():
    return variant(grid__n_points=101, time__n_t=500)


def test_povm_check_passes_and_uses_seed(tmp_path):
    assert run(tmp_path, "povm-check", small_povm_config(), "--seed", "7") == 0
    head, units, rows = read_csv(tmp_path / "out" / "povm_check.csv")
    assert head == ["invariant", "deviation", "threshold", "passed"]
    assert all(r[3] == "true" for r in rows)
    summary = json.loads((tmp_path / "out" / "povm_check_summary.json").read_text())
    assert summary["seed"] == 7 and summary["all_passed"]


def test_failed_invariant_exits_4_with_report(tmp_path, monkeypatch):
    real = cli.povm_invariant_suite

    def broken(*a, **kw):
        return real(*a, **kw) + [InvariantResult("injected", 1.0, 1e-12)]
    monkeypatch.setattr(cli, "povm_invariant_suite", broken)
    assert run(tmp_path, "povm-check", small_povm_config()) == 4
    assert (tmp_path / "out" / "povm_check.csv").exists()


def test_density_free(tmp_path):
    cfg = variant(potential__kind="free", potential__radius=None)
    assert run(tmp_path, "density", cfg) == 0
    _, units, rows = read_csv(tmp_path / "out" / "density.csv")
    assert units == ["time", "1/time", "1/time"]
    a = np.array(rows)
    dt = a[1, 0] - a[0, 0]
    assert a[:, 1:].min() >= 0
    assert np.sum(a[:, 1]) * dt == pytest.approx(1.0, abs=1e-6)
    summary = json.loads((tmp_path / "out" / "density_summary.json").read_text())
    assert summary["peak_free"] == pytest.approx(5.0, rel=0.02)


def test_short_window_exits_3_without_files(tmp_path, capsys):
    assert run(tmp_path, "density", variant(time__t_min=-5.0, time__t_max=5.0)) == 3
    assert "0.99" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_numerical_failure_exits_3(tmp_path):
    cfg = variant(potential__kind="square_barrier", potential__radius=None,
                  potential__height=20000.0, potential__width=5.0, detector__R=10.0)
    assert run(tmp_path, "phase-shifts", cfg) == 3


def test_delay_hard_sphere(tmp_path):
    assert run(tmp_path, "delay", variant()) == 0
    _, _, rows = read_csv(tmp_path / "out" / "delay.csv")
    vals = dict(rows)
    assert vals["wigner_delay_at_k0"] == pytest.approx(-1.0, abs=1e-3)
    assert vals["shift_mean"] == pytest.approx(-1.0, rel=0.05)


def test_disagreeing_routes_exit_4(tmp_path, monkeypatch):
    real = cli.compare_delay_routes

    def skewed(*a, **kw):
        rep = real(*a, **kw)
        rep.agreement["density_shift~operator"]["ok"] = False
        return rep
    monkeypatch.setattr(cli, "compare_delay_routes", skewed)
    assert run(tmp_path, "delay", variant()) == 4
    assert (tmp_path / "out" / "delay.csv").exists()


def test_out_flag_overrides_directory(tmp_path):
    target = tmp_path / "elsewhere"
    assert run(tmp_path, "phase-shifts", variant(), "--out", str(target)) == 0
    assert (target / "phase_shifts.csv").exists()


def test_help_echoes_schema(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    assert "[potential]" in out and "exit codes" in out


def test_runs_are_bit_identical(tmp_path):
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        assert run(d, "density", variant()) == 0
        assert run(d, "phase-shifts", variant(), "--format", "json") == 0
    files = sorted(p.name for p in (tmp_path / "a" / "out").iterdir())
    assert "density.png" in files
    for f in files:
        assert (tmp_path / "a" / "out" / f).read_bytes() == (tmp_path / "b" / "out" / f).read_bytes()
