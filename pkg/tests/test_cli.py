"""Config loading, CLI exit codes, and artifact determinism."""

import io
import json
from contextlib import redirect_stdout, redirect_stderr

import numpy as np
import pytest

from shadowsense.cli import (
    ExperimentConfig,
    load_config,
    main,
    system_dimension,
    validate_config,
)
from shadowsense.errors import ConfigError

BASE = """\
system: expanding_circle
s: 0.0
K: 3000
fd_K: 8000
fd_seeds: 4
"""


def write_cfg(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_main(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            code = main(argv)
        except SystemExit as e:  # argparse rejects bad flags this way
            code = e.code
    return code, out.getvalue(), err.getvalue()


def test_load_config_defaults_and_overrides(tmp_path):
    path = write_cfg(tmp_path, BASE)
    cfg = load_config(path, ["K=500", "system_params.num_unstable=1"])
    assert cfg.K == 500
    assert cfg.system == "expanding_circle"
    assert cfg.system_params == {"num_unstable": 1}
    assert cfg.out_json == "report.json"


def test_load_config_rejects_unknown_keys(tmp_path):
    path = write_cfg(tmp_path, BASE + "frobnicate: 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_validate_config_catches_bad_ranges():
    cfg = ExperimentConfig(system="expanding_circle", K=1)
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = ExperimentConfig(system="expanding_circle", m=2)
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = ExperimentConfig(system="nosuch")
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_system_dimension_block_params():
    cfg = ExperimentConfig(system="block_hyperbolic_linear",
                           system_params={"unstable_mults": [2.0, 4.0],
                                          "stable_mults": [0.5, 0.5, 0.5]})
    assert system_dimension(cfg) == 5


def test_run_writes_artifacts(tmp_path):
    path = write_cfg(tmp_path, BASE)
    oj = str(tmp_path / "r.json")
    oc = str(tmp_path / "r.csv")
    code, out, err = run_main(["run", "--config", path,
                               "--set", f"out_json={oj}",
                               "--set", f"out_csv={oc}"])
    assert code == 0, err
    assert "corrected_total" in out
    rep = json.loads(open(oj).read())
    assert rep["schema_version"] == 1
    assert rep["system"]["system"] == "ExpandingCircle"
    assert rep["config"]["system"] == "expanding_circle"
    assert "out_json" not in rep["config"]
    assert rep["corrected_total"] == rep["shadowing"] + rep["correction"]
    header = open(oc).readline().strip()
    assert header == "section,key,value"


def test_run_artifacts_are_byte_deterministic(tmp_path):
    path = write_cfg(tmp_path, BASE)
    blobs = []
    for tag in ("a", "b"):
        oj = str(tmp_path / f"{tag}.json")
        oc = str(tmp_path / f"{tag}.csv")
        code, _, _ = run_main(["run", "--config", path,
                               "--set", f"out_json={oj}",
                               "--set", f"out_csv={oc}"])
        assert code == 0
        blobs.append((open(oj, "rb").read(), open(oc, "rb").read()))
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]


def test_missing_config_file_exits_2():
    code, _, err = run_main(["run", "--config", "/nonexistent/x.yaml"])
    assert code == 2


def test_unknown_key_exits_2(tmp_path):
    path = write_cfg(tmp_path, BASE + "bogus: 1\n")
    code, _, err = run_main(["run", "--config", path])
    assert code == 2
    assert "config error" in err


def test_malformed_yaml_exits_2(tmp_path):
    path = write_cfg(tmp_path, "system: [unclosed\n")
    code, _, _ = run_main(["run", "--config", path])
    assert code == 2


def test_overdeclared_m_exits_2(tmp_path):
    path = write_cfg(tmp_path, BASE + "m: 2\n")
    code, _, err = run_main(["run", "--config", path])
    assert code == 2
    assert "m=2" in err


def test_validate_passes_builtins(tmp_path):
    path = write_cfg(tmp_path, BASE)
    code, out, _ = run_main(["validate", "--config", path])
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 8
    assert all(l.startswith("PASS") for l in lines)
    assert "8/8 checks passed" in out


def test_validate_catches_wrong_unstable_count(tmp_path):
    # declaring m=2 on the cat map: the exponent count and the solver
    # interface recursion both call it out, run exits 1 (not 2: the config
    # is well formed, the numbers are wrong)
    text = BASE.replace("expanding_circle", "perturbed_cat_map") + "m: 2\n"
    path = write_cfg(tmp_path, text)
    code, out, _ = run_main(["validate", "--config", path])
    assert code == 1
    lines = [l for l in out.splitlines() if l.startswith("FAIL")]
    assert lines, out
    assert any("lyapunov" in l or "exponent" in l for l in lines)


def test_sweep_one_row_per_value(tmp_path):
    path = write_cfg(tmp_path, BASE + "include_fd: false\n")
    oc = str(tmp_path / "sweep.csv")
    code, out, _ = run_main(["sweep", "--config", path, "--axis", "K",
                             "--values", "1000", "2000",
                             "--set", f"out_csv={oc}"])
    assert code == 0
    rows = open(oc).read().strip().splitlines()
    assert len(rows) == 3
    assert rows[0].startswith("axis,value")
    assert rows[1].split(",")[1] == "1000"
    assert rows[2].split(",")[1] == "2000"


def test_sweep_unknown_axis_exits_2(tmp_path):
    path = write_cfg(tmp_path, BASE)
    code, _, _ = run_main(["sweep", "--config", path, "--axis", "nope",
                           "--values", "1"])
    assert code == 2
