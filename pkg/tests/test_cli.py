"""Scenario configs, the runner's file outputs and the CLI commands."""
import csv
import json
from pathlib import Path

import pytest

from porofrac.cli import main
from porofrac.runner import SUMMARY_COLUMNS, run_scenario
from porofrac.scenarios import ConfigError, builtin_scenario_names, load_scenario

QUICK_CONFIG = """
name = "quick"
background_pressure = 2.0e7

[mesh]
domain = [0.0, 0.0, 2000.0, 1000.0]
h = 250.0
fractures = [[500.0, 500.0, 1500.0, 500.0]]

[bc.flow]
left = {{ type = "pressure", value = 2.0e7 }}
right = {{ type = "pressure", value = 2.0e7 }}
top = {{ type = "pressure", value = 2.0e7 }}
bottom = {{ type = "pressure", value = 2.0e7 }}

[bc.mechanics]
bottom = {{ type = "fixed" }}
left = {{ type = "traction", value = [3.0e7, 1.2e7] }}
right = {{ type = "traction", value = [-3.0e7, -1.2e7] }}
top = {{ type = "traction", value = [-1.2e7, -5.0e7] }}

[injection]
fracture = 0
overpressure = 1.0e6

[time]
dt_days = 0.1
num_steps = 1

[sweep]
solvers = ["gnm"]
c = [{c_list}]
"""


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "quick.toml"
    path.write_text(QUICK_CONFIG.format(c_list="1.0e-2, 1.0, 1.0e2"))
    return path


def test_builtin_scenarios_exist_and_validate():
    names = builtin_scenario_names()
    assert "single_fracture_2d" in names
    assert "network_2d" in names
    for name in names:
        scenario = load_scenario(name)
        assert scenario.validate() == []


def test_run_writes_matching_files(quick_config, tmp_path):
    scenario = load_scenario(quick_config)
    outdir = tmp_path / "out"
    records = run_scenario(scenario, outdir)
    with open(outdir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3  # one row per c value
    assert tuple(rows[0].keys()) == SUMMARY_COLUMNS
    # The c axis is exactly the configured list, in order.
    assert [float(r["c"]) for r in rows] == [1.0e-2, 1.0, 1.0e2]
    for row in rows:
        rid = row["run_id"]
        res_file = outdir / "residuals" / f"{rid}.csv"
        st_file = outdir / "states" / f"{rid}.csv"
        assert res_file.exists() and st_file.exists()
        with open(res_file) as fh:
            res_rows = list(csv.DictReader(fh))
        if row["status"] == "Converged":
            assert float(res_rows[-1]["residual_norm"]) < 1e-8
        # states file aligns with the residuals file row-for-row
        with open(st_file) as fh:
            st_rows = list(csv.DictReader(fh))
        assert len(st_rows) == len(res_rows)
        census = [int(st_rows[-1][k]) for k in ("n_open", "n_stick", "n_slip")]
        assert sum(census) == 4  # fracture cells on the coarse mesh
    assert json.loads((outdir / "run.json").read_text())["scenario"] == "quick"


def test_rerun_is_byte_identical(quick_config, tmp_path):
    scenario = load_scenario(quick_config)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_scenario(scenario, out1)
    run_scenario(scenario, out2)
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_cli_run_exit_code_zero_even_when_not_converged(quick_config, tmp_path, capsys):
    # A single inner iteration cannot converge; the run is still a result.
    bad = tmp_path / "nc.toml"
    bad.write_text(
        QUICK_CONFIG.format(c_list="1.0e-2").replace(
            'solvers = ["gnm"]', 'solvers = ["irm"]'
        ).replace("overpressure = 1.0e6", "overpressure = 9.5e6")
    )
    out = tmp_path / "ncout"
    code = main(["run", str(bad), "-o", str(out)])
    assert code == 0
    assert (out / "summary.csv").exists()


def test_cli_validate_reports_all_errors(tmp_path, capsys):
    broken = tmp_path / "broken.toml"
    broken.write_text(
        """
name = "broken"
[mesh]
domain = [0.0, 0.0, 1.0, 1.0]
h = 0.25
fractures = [[0.25, 0.5, 0.75, 0.5]]
[bc.flow]
left = { type = "pressure", value = 2.0e7 }
[bc.mechanics]
left = { type = "fixed" }
[sweep]
solvers = ["gnm", "mystery"]
c = [-1.0]
"""
    )
    code = main(["validate", str(broken)])
    out = capsys.readouterr().out
    assert code == 2
    assert "right" in out and "top" in out and "bottom" in out
    assert "mystery" in out
    assert "positive" in out


def test_cli_validate_ok(quick_config, capsys):
    code = main(["validate", str(quick_config)])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("OK, 3 runs")


def test_cli_mesh_info(quick_config, capsys):
    code = main(["mesh-info", str(quick_config)])
    out = capsys.readouterr().out
    assert code == 0
    assert "matrix_cells: 64" in out


def test_cli_unknown_config_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "no_such_config_anywhere"])
    assert exc.value.code == 2


def test_jitter_seed_changes_mesh_but_stays_valid(quick_config):
    scenario = load_scenario(quick_config)
    plain = scenario.build_mesh()
    jittered = scenario.build_mesh(seed=7)
    assert plain.matrix.num_cells == jittered.matrix.num_cells
    assert not (plain.nodes == jittered.nodes).all()
    # Fracture and boundary geometry is untouched.
    assert (plain.nodes[jittered.fractures[0].chain_nodes]
            == jittered.nodes[jittered.fractures[0].chain_nodes]).all()


def test_malformed_toml_raises_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("name = [unclosed")
    with pytest.raises(ConfigError, match="parse"):
        load_scenario(bad)


def test_parallel_jobs_match_serial(quick_config, tmp_path):
    scenario = load_scenario(quick_config)
    serial, parallel = tmp_path / "s", tmp_path / "p"
    run_scenario(scenario, serial, jobs=1)
    run_scenario(scenario, parallel, jobs=2)
    assert (serial / "summary.csv").read_bytes() == (parallel / "summary.csv").read_bytes()


def test_materials_overrides_flow_into_runs(tmp_path):
    cfg = QUICK_CONFIG.format(c_list="1.0e-1") + (
        "\n[materials]\nfriction_coefficient = 0.9\ndilation_angle_deg = 3.0\n"
    )
    # Remove the duplicate empty sweep stanza artifacts by writing whole file.
    path = tmp_path / "mat.toml"
    path.write_text(cfg)
    scenario = load_scenario(path)
    params = scenario.material_params()
    assert params.friction_coefficient == 0.9
    assert params.dilation_angle_deg == 3.0
    # The sweep default dilation angle picks up the materials value.
    assert scenario.sweep_dilation == [3.0]
