import json
import os
import subprocess
import sys

import pytest

from config import Config
from exceptions import ConfigError
from models import CouplingMatrix
from services import pipeline_service as pipeline
from utils import complex_matrix_to_json

SMALL_GRID = {'grid.nr': 16, 'grid.ntheta': 64, 'grid.boundary_samples': 128}
REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SMALL_DNLS = {'dnls.half_window': 4, 'dnls.t_final': 0.2, 'dnls.dt': 1e-2, 'dnls.sample_every': 5}


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


# --- configuration ---

def test_defaults_cover_the_schema(tmp_path):
    config = pipeline.resolve_config("dnls", output_dir=str(tmp_path))
    assert set(config.values) == set(pipeline.CONFIG_SCHEMA)
    assert config.seed == Config.DEFAULT_SEED
    assert config.values['grid.nr'] == Config.GRID_NR
    assert config.section("grid") == {'nr': Config.GRID_NR, 'ntheta': Config.GRID_NTHETA,
                                      'boundary_samples': Config.BOUNDARY_SAMPLES}


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError) as err:
        pipeline.resolve_config("dnls", {'grid.nx': 3, 'bogus.key': 1, 'grid.nr': 8})
    assert err.value.keys == ['bogus.key', 'grid.nx']


def test_unknown_kind_is_rejected():
    with pytest.raises(ConfigError):
        pipeline.resolve_config("solve-everything")


def test_values_are_coerced():
    config = pipeline.resolve_config("dnls", {'grid.nr': '24', 'dnls.dt': '5e-3', 'report.include_timing': 'yes'})
    assert config.values['grid.nr'] == 24
    assert config.values['dnls.dt'] == 5e-3
    assert config.values['report.include_timing'] is True


def test_bad_values_are_listed():
    with pytest.raises(ConfigError) as err:
        pipeline.resolve_config("solve-disc", {'grid.nr': 'many', 'disc.structure': 'wavy', 'dnls.checks': 'norm,vibes'})
    assert sorted(err.value.keys) == ['disc.structure', 'dnls.checks', 'grid.nr']


def test_overrides_win_over_file_values():
    config = pipeline.resolve_config("dnls", {'dnls.dt': 0.1, 'seed': 1}, {'dnls.dt': 0.05})
    assert config.values['dnls.dt'] == 0.05
    assert config.seed == 1


def test_output_dir_is_not_part_of_the_values(tmp_path):
    config = pipeline.resolve_config("dnls", {'output_dir': str(tmp_path), 'kind': 'dnls'})
    assert config.output_dir == str(tmp_path)
    assert 'output_dir' not in config.values


def test_load_key_value_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# small disc\ngrid.nr=24\ndisc.a=0.1\ndisc.z0=0.4j\n")
    values = pipeline.load_config_file(str(path))
    config = pipeline.resolve_config("solve-disc", values)
    assert config.values['grid.nr'] == 24
    assert config.values['disc.a'] == 0.1
    assert config.values['disc.z0'] == "0.4j"


def test_load_nested_json_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({'grid': {'nr': 20, 'ntheta': 80}, 'dnls.half_window': 6}))
    config = pipeline.resolve_config("dnls", pipeline.load_config_file(str(path)))
    assert config.values['grid.ntheta'] == 80
    assert config.values['dnls.half_window'] == 6


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.load_config_file(str(tmp_path / "absent.env"))


# --- runs ---

def test_dnls_run_writes_report(tmp_path):
    values = {**SMALL_DNLS, 'dnls.checks': 'norm,explicit'}
    config = pipeline.resolve_config("dnls", values, output_dir=str(tmp_path))
    report = pipeline.run(config)
    assert report.passed, [c.to_dict() for c in report.checks]
    assert [c.name for c in report.checks] == ['dnls.norm_drift', 'dnls.explicit_solution']
    assert sorted(os.listdir(tmp_path)) == ['config.json', 'report.json', 'timeseries.csv']

    data = json.loads((tmp_path / "report.json").read_text())
    assert data['schema_version'] == 1
    assert data['passed'] is True
    assert 'elapsed_seconds' not in data
    assert data['provenance']['config_hash'] == report.provenance['config_hash']
    lines = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "time,norm,hamiltonian,energy_error,max_abs"
    assert len(lines) == 2 + 5


def test_timing_is_opt_in(tmp_path):
    values = {**SMALL_DNLS, 'dnls.checks': 'norm', 'report.include_timing': True}
    pipeline.run(pipeline.resolve_config("dnls", values, output_dir=str(tmp_path)))
    assert 'elapsed_seconds' in json.loads((tmp_path / "report.json").read_text())


def test_zero_structure_disc_run(tmp_path):
    values = {**SMALL_GRID, 'grid.boundary_samples': 256, 'disc.structure': 'zero', 'disc.z0': '0.4j'}
    report = pipeline.run(pipeline.resolve_config("solve-disc", values, output_dir=str(tmp_path)))
    checks = {c.name: c for c in report.checks}
    assert checks['area'].passed and checks['degree'].value == 1
    assert checks['outer_convergence'].passed
    assert report.passed
    assert {'disc_field.csv', 'boundary_trace.csv'} <= set(os.listdir(tmp_path))


def test_stage_failure_is_recorded(tmp_path):
    values = {**SMALL_GRID, 'disc.max_iter': 1, 'disc.tol': 1e-14}
    report = pipeline.run(pipeline.resolve_config("solve-disc", values, output_dir=str(tmp_path)))
    assert not report.passed
    failed = [c for c in report.checks if c.name == 'outer_convergence']
    assert failed and "ConvergenceError" in failed[0].detail
    data = json.loads((tmp_path / "report.json").read_text())
    assert data['summary']['failed'] == ['outer_convergence']


def test_runs_are_byte_identical(tmp_path):
    values = {**SMALL_DNLS, 'dnls.checks': 'norm,energy,jacobian', 'seed': 7}
    first, second = tmp_path / "a", tmp_path / "b"
    pipeline.run(pipeline.resolve_config("dnls", values, output_dir=str(first)))
    pipeline.run(pipeline.resolve_config("dnls", values, output_dir=str(second)))
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    assert 'jacobian_norms.csv' in names
    for name in names:
        assert _read(first / name) == _read(second / name), name


def _run_app(args, cwd):
    return subprocess.run([sys.executable, os.path.join(REPO_ROOT, "app.py"), *args], cwd=cwd,
                          capture_output=True, text=True, timeout=900)


def test_nonsqueeze_pipeline_is_deterministic(tmp_path):
    args = ["nonsqueeze-pipeline", "--nr", "16", "--ntheta", "64", "--boundary-samples", "128",
            "--pipeline-half-window", "3"]
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        done = _run_app([*args, "--out", str(out)], cwd=REPO_ROOT)
        assert done.returncode in (0, 1), done.stderr
    names = sorted(os.listdir(first))
    assert names and names == sorted(os.listdir(second))
    for name in names:
        assert _read(first / name) == _read(second / name), name

    values = {**SMALL_GRID, 'pipeline.half_window': 3}
    report = pipeline.run(pipeline.resolve_config("nonsqueeze-pipeline", values, output_dir=str(tmp_path / "c")))
    checks = {c.name: c for c in report.checks}
    assert checks['jacobian.A_norm'].passed
    assert checks['structure.frozen'].passed
    for name in names:
        assert _read(tmp_path / "c" / name) == _read(first / name), name


def test_validate_ops_run(tmp_path):
    values = {**SMALL_GRID, 'ops.symplectic_samples': 20, 'ops.symplectic_max_dim': 4}
    report = pipeline.run(pipeline.resolve_config("validate-ops", values, output_dir=str(tmp_path)))
    checks = {c.name: c for c in report.checks}
    for name in ('closed_form.T_inside', 'closed_form.T_outside', 'closed_form.T1', 'symplectic.identities',
                 'symplectic.inverse_composition', 'symplectic.A_norm_below_one', 'symplectic.scalar_tanh_law'):
        assert checks[name].passed, checks[name]
    assert {'dbar.T.one', 'dbar.T2.one', 'dbar.T2.bump', 'isometry.S1', 'isometry.S2', 'isometry.S1_refined',
            'isometry.S2_refined', 'boundary.T2_gamma3'} <= set(checks)
    lines = (tmp_path / "operators.csv").read_text().splitlines()
    assert lines[1] == "check,value,tolerance,passed"
    assert len(lines) - 2 == sum(1 for name in checks if not name.startswith("symplectic"))


def test_dnls_coupling_from_file(tmp_path):
    path = tmp_path / "coupling.json"
    path.write_text(json.dumps(complex_matrix_to_json(CouplingMatrix.nearest_neighbor(4, strength=0.5).matrix)))
    values = {**SMALL_DNLS, 'dnls.checks': 'norm', 'dnls.coupling_file': str(path)}
    report = pipeline.run(pipeline.resolve_config("dnls", values, output_dir=str(tmp_path / "out")))
    assert report.passed

    values['dnls.half_window'] = 5
    report = pipeline.run(pipeline.resolve_config("dnls", values, output_dir=str(tmp_path / "bad")))
    assert not report.passed
    assert "AlignmentError" in report.checks[0].detail


def test_w0_must_match_d_w(tmp_path):
    values = {**SMALL_GRID, 'disc.structure': 'zero', 'disc.d_w': 2, 'disc.w0': '0.1'}
    report = pipeline.run(pipeline.resolve_config("solve-disc", values, output_dir=str(tmp_path)))
    assert not report.passed
    assert "ConfigError" in report.checks[0].detail
