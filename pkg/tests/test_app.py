import json

import pytest

import app


def test_parser_maps_flags_to_config_keys():
    args = app.build_parser().parse_args(["solve-disc", "--a", "0.1", "--d-w", "1", "--nr", "20", "--set", "disc.tol=1e-8"])
    overrides = app._overrides(args)
    assert overrides == {'disc.a': 0.1, 'disc.d_w': 1, 'grid.nr': 20, 'disc.tol': '1e-8'}


def test_repeated_checks_are_joined():
    args = app.build_parser().parse_args(["dnls", "--check", "norm", "--check", "energy"])
    assert app._overrides(args)['dnls.checks'] == "norm,energy"


def test_kind_is_required():
    with pytest.raises(SystemExit):
        app.build_parser().parse_args([])


def test_passing_run_exits_zero(tmp_path):
    code = app.main(["dnls", "--out", str(tmp_path), "--half-window", "4", "--t-final", "0.1", "--dt", "0.01",
                     "--check", "norm", "--check", "explicit", "--seed", "3"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report['passed'] is True
    config = json.loads((tmp_path / "config.json").read_text())
    assert config['values']['seed'] == 3
    assert config['values']['dnls.half_window'] == 4


def test_failing_run_exits_one(tmp_path):
    code = app.main(["solve-disc", "--out", str(tmp_path), "--nr", "16", "--ntheta", "64",
                     "--set", "disc.max_iter=1", "--set", "disc.tol=1e-14"])
    assert code == 1
    assert json.loads((tmp_path / "report.json").read_text())['passed'] is False


def test_config_file_and_unknown_key(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("grid.nr=16\ngrid.colour=blue\n")
    assert app.main(["validate-ops", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert not (tmp_path / "out").exists()


def test_malformed_set_is_a_config_error(tmp_path):
    assert app.main(["dnls", "--out", str(tmp_path), "--set", "grid.nr"]) == 2
