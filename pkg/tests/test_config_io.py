import numpy as np
import pytest

from sirsb.config import (
    OUTPUT_ENV,
    ConfigError,
    InitialSpec,
    format_config,
    parse_config,
    parse_initial,
)
from sirsb.io import (
    build_initial,
    norms_from_fields,
    read_norms_csv,
    read_sweep_csv,
    read_trajectory_csv,
    write_norms_csv,
    write_report,
    write_sweep_csv,
    write_trajectory_csv,
)
from sirsb.model import ParameterError, default_parameters
from sirsb.operators import make_grid
from sirsb.presets import PRESET_NAMES, load_preset, preset_text
from sirsb.solver import SolverConfig, simulate
from sirsb.spectral import r0_pde
from sirsb.verify import ExperimentReport

BASE = "\n".join(f"{k} = {v!r}" for k, v in default_parameters().as_dict().items()) + "\n"


def test_parse_full_file():
    cfg = parse_config(BASE)
    assert cfg.parameters.m_star == 1.0
    assert cfg.grid_cells == 128 and cfg.dt is None and cfg.warnings == ()


def test_comments_blank_lines_and_crlf():
    text = "# header\n\n" + BASE.replace("\n", "  # trailing\r\n") + "grid_cells = 16\r\n"
    cfg = parse_config(text)
    assert cfg.grid_cells == 16


def test_unknown_key_line_number():
    with pytest.raises(ConfigError, match=r"unknown key 'beta3' at line 2"):
        parse_config("b = 1\nbeta3 = 1\n" + BASE.split("\n", 1)[1])


def test_duplicate_and_nonnumeric_and_missing():
    with pytest.raises(ConfigError, match="duplicate key 'b'.*at line 17"):
        parse_config(BASE + "b = 2\n")
    with pytest.raises(ConfigError, match="nonnumeric.*at line 1"):
        parse_config(BASE.replace("b = 1.0", "b = one", 1))
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config("b = 1\n")
    with pytest.raises(ConfigError, match="at line 17"):
        parse_config(BASE + "no equals sign\n")


def test_validation_error_from_model():
    with pytest.raises(ParameterError, match="d"):
        parse_config(BASE.replace("d = 1.0", "d = -1.0", 1))


def test_hypothesis_warnings_carried():
    cfg = parse_config(BASE.replace("g = 0.5", "g = 2.0"))
    assert cfg.warnings == ("persistence hypothesis g < delta violated",)


def test_initial_specs():
    assert parse_initial("dfe_perturbed(0.2, 7)") == InitialSpec("dfe_perturbed", (0.2, 7))
    assert parse_initial("constant(1, 0.1, 0, 0.2)").args == (1.0, 0.1, 0.0, 0.2)
    assert parse_initial("file(out/trajectory.csv)").args == ("out/trajectory.csv",)
    for bad in ("random(1)", "constant(1, 2)", "dfe_perturbed(x, 1)"):
        with pytest.raises(ConfigError):
            parse_initial(bad)


def test_ranges_and_metadata_keys():
    cfg = parse_config(BASE + "range.beta1 = 0.1, 2\nrange.D = 0.01 0.5\n")
    assert cfg.ranges == {"beta1": (0.1, 2.0), "D": (0.01, 0.5)}
    with pytest.raises(ConfigError):
        parse_config(BASE + "range.zeta = 0, 1\n")
    with pytest.raises(ConfigError, match="unknown key 'steps'"):
        parse_config(BASE + "steps = 4\n")
    assert parse_config(BASE + "steps = 4\n", allow_meta=True).meta == {"steps": "4"}


def test_format_round_trip():
    cfg = parse_config(BASE + "dt = 0.01\nt_end = 3.5\nrange.g = 0.1, 0.2\nscalar_source = 2.0\n")
    again = parse_config(format_config(cfg))
    assert again.parameters == cfg.parameters
    for k in ("dt", "t_end", "ranges", "scalar_source", "initial_spec", "grid_cells"):
        assert getattr(again, k) == getattr(cfg, k)
    meta = parse_config(format_config(cfg, {"dt_used": 0.01, "code_version": "0.1.0"}), allow_meta=True)
    assert meta.meta["dt_used"] == "0.01"


def test_output_dir_env(monkeypatch, tmp_path):
    cfg = parse_config(BASE)
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert cfg.output_dir() == tmp_path
    assert parse_config(BASE + "outputs = here\n").output_dir().name == "here"
    monkeypatch.delenv(OUTPUT_ENV)
    assert cfg.output_dir().name == "sirsb-out"


def test_trajectory_csv_lossless(tmp_path):
    p = default_parameters()
    grid = make_grid(12)
    ini = build_initial(InitialSpec("dfe_perturbed", (0.3, 4)), p, grid)
    traj = simulate(ini, p, SolverConfig(t_end=2.0, grid=grid, snapshot_every=7, stop_at_steady=False))
    write_trajectory_csv(tmp_path / "t.csv", traj, grid)
    write_norms_csv(tmp_path / "n.csv", traj)
    times, x, fields = read_trajectory_csv(tmp_path / "t.csv")
    assert np.array_equal(times, traj.times)
    assert np.array_equal(x, grid.centers)
    assert np.array_equal(fields, traj.fields())
    # norms are recomputable from the trajectory file alone
    norms = norms_from_fields(fields, p.m_star)
    stored = read_norms_csv(tmp_path / "n.csv")
    for k, v in traj.norms.items():
        assert np.array_equal(norms[k], v) and np.array_equal(stored[k], v)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,x,S,I,R,B"


def test_initial_from_file(tmp_path):
    p = default_parameters()
    grid = make_grid(10)
    ini = build_initial(InitialSpec("constant", (1.0, 0.2, 0.1, 0.3)), p, grid)
    traj = simulate(ini, p, SolverConfig(t_end=1.0, grid=grid, stop_at_steady=False))
    write_trajectory_csv(tmp_path / "t.csv", traj, grid)
    back = build_initial(InitialSpec("file", (str(tmp_path / "t.csv"),)), p, grid)
    assert np.array_equal(back.as_array(), traj.final.as_array())
    with pytest.raises(ValueError):
        build_initial(InitialSpec("file", (str(tmp_path / "t.csv"),)), p, make_grid(11))


def test_dfe_perturbed_definition():
    p = default_parameters(b=2.0)
    s = build_initial(InitialSpec("dfe_perturbed", (0.1, 0)), p, make_grid(50))
    assert np.all(s.S == 2.0) and np.all(s.R == 0)
    assert 0 < s.I.max() <= 0.2 and 0 < s.B.max() <= 0.2


def test_sweep_csv_and_report(tmp_path):
    rows = [
        {"sample": 0, "r0_ode": 0.5, "r0_pde": 0.4999999999999999, "s_theta": -0.1, "outcome": "extinct"},
        {"sample": 1, "r0_ode": float("nan"), "r0_pde": float("nan"), "s_theta": float("nan"), "outcome": "error: X"},
    ]
    write_sweep_csv(tmp_path / "s.csv", rows)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "sample,r0_ode,r0_pde,s_theta,outcome"
    back = read_sweep_csv(tmp_path / "s.csv")
    assert back[0] == rows[0] and np.isnan(back[1]["r0_pde"])
    rep = ExperimentReport("demo", {"b": 1.0}, 0.3, "pass", {"m": 1e-9}, {"ok": True}, 0.1, ["note"])
    write_report(tmp_path / "r.txt", rep)
    text = (tmp_path / "r.txt").read_text()
    assert "verdict = pass" in text and "criterion.ok = pass" in text and "metric.m = 1.0000000000000001e-09" in text


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_record_their_r0(name):
    cfg = load_preset(name)
    header = [l for l in preset_text(name).splitlines() if l.startswith("# r0_pde")][0]
    recorded = float(header.split("=")[-1])
    assert r0_pde(make_grid(128), cfg.parameters).value == pytest.approx(recorded, rel=1e-9)


def test_preset_targets():
    grid = make_grid(128)
    assert r0_pde(grid, load_preset("extinction").parameters).value == pytest.approx(0.3, rel=1e-9)
    per = load_preset("persistence").parameters
    assert r0_pde(grid, per).value == pytest.approx(3.0, rel=1e-9) and per.g < per.delta
    assert load_preset("u0").parameters.U == 0.0
    with pytest.raises(KeyError):
        load_preset("nope")
