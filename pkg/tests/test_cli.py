import json
import subprocess
import sys

import pytest

from cgolab import __version__
from cgolab.cli import main
from cgolab.config import ConfigError, json_lines, load_config

SMALL = {
    "grid": {"n": 3, "N": 32, "L": 4.0, "R": 1.0},
    "recover": {"k_index": [[1, 0, 0]], "taus": [20, 40]},
    "estimates": {"quotient": {"counts": [20, 21, 21]}},
}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=1))
    return str(p)


def test_json_lines():
    text = '{\n "a": 1,\n "b": {\n  "c": [1,\n   2]\n }\n}\n'
    lines = json_lines(text)
    assert lines[("a",)] == 2 and lines[("b",)] == 3 and lines[("b", "c")] == 4
    assert lines[("b", "c", 1)] == 5


def test_gate_violation_exit_2_with_line(tmp_path, capsys):
    text = '{\n  "cgo": {\n    "taus": [20,\n             0.5]\n  }\n}\n'
    code = main(["cgo", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 2
    assert "cfg.json:4:" in err and "cgo.taus[1]" in err and "tau>|k|" in err


def test_config_error_attrs(tmp_path):
    text = '{"estimates": {"theorem2": {"calibrate": {"M": 16, "tau": 100}}}}'
    cfg = load_config(_write(tmp_path, text))
    with pytest.raises(ConfigError) as e:
        cfg.check("verify", ["theorem2"])
    assert e.value.gate == "tau>8MR" and e.value.line == 1


def test_schema_error_line(tmp_path, capsys):
    text = '{\n  "grid": {\n    "N": "big"\n  }\n}\n'
    assert main(["verify", "--config", _write(tmp_path, text)]) == 2
    assert "cfg.json:3:" in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path, capsys):
    assert main(["cgo", "--config", _write(tmp_path, '{\n  "seed": 1,\n}\n')]) == 2
    assert "cfg.json:3:" in capsys.readouterr().err
    assert main(["cgo", "--config", str(tmp_path / "nope.json")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_bad_seed_and_workers(capsys):
    assert main(["cgo", "--seed", "-1"]) == 2
    assert main(["cgo", "--workers", "0"]) == 2


def test_unknown_estimate_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["verify", "--estimate", "nope"])


def test_verify_single_estimate(tmp_path):
    out = tmp_path / "o"
    code = main(["verify", "--config", _write(tmp_path, SMALL), "--estimate", "quotient", "--out", str(out)])
    assert code == 0
    man = json.loads((out / "run_manifest.json").read_text())
    assert list(man["tasks"]) == ["quotient"] and man["passed"]
    rows = (out / "summary.csv").read_text().splitlines()
    assert rows[0].startswith("task,index,estimate")
    assert {r.split(",")[0] for r in rows[1:]} == {"quotient"}
    for f in ("config.json", "reports.json", "summary.csv", "run_manifest.json"):
        assert f in man["files"]


def test_recover_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["recover", "--config", cfg, "--out", str(a), "--seed", "7"]) == 0
    assert main(["recover", "--config", cfg, "--out", str(b), "--seed", "7", "--workers", "2"]) == 0
    # config.json records the output directory and worker count, so it differs
    for f in ("recover.csv", "reports.json", "series/error_k1_0_0.dat"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    ma = json.loads((a / "run_manifest.json").read_text())
    mb = json.loads((b / "run_manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"] and ma["seed"] == 7
    header = (a / "recover.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["k0", "k1", "k2", "tau"] and "closure" in header


def test_seed_changes_hash(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL))
    other = load_config(_write(tmp_path, SMALL), {"seed": 5})
    moved = load_config(_write(tmp_path, SMALL), {"output": "elsewhere", "workers": 3})
    assert cfg.digest() != other.digest()
    assert cfg.digest() == moved.digest()


def test_constant_model_recover(tmp_path):
    blk = dict(SMALL, recover={"model": {"kind": "constant"}, "k_index": [[1, 0, 0]], "taus": [20, 40]})
    out = tmp_path / "o"
    assert main(["recover", "--config", _write(tmp_path, blk), "--out", str(out)]) == 0
    rows = (out / "recover.csv").read_text().splitlines()[1:]
    header = (out / "recover.csv").read_text().splitlines()[0].split(",")
    j = header.index("error")
    assert all(float(r.split(",")[j]) == 0 for r in rows)


def test_failed_assertion_exit_1(tmp_path, capsys):
    blk = dict(SMALL, recover=dict(SMALL["recover"], decay_factor=1e-6))
    assert main(["recover", "--config", _write(tmp_path, blk), "--out", str(tmp_path / "o")]) == 1
    assert "recover: fail" in capsys.readouterr().out


def test_average_outputs(tmp_path):
    blk = dict(SMALL, average={"models": [{"kind": "gaussian-log", "epsilon": 0.1}, {"kind": "constant"}],
                               "lambdas": [8, 16]})
    out = tmp_path / "o"
    assert main(["average", "--config", _write(tmp_path, blk), "--out", str(out)]) == 0
    for f in ("average.csv", "average_compare.csv", "records.json", "series/average_constant.dat"):
        assert (out / f).exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cgolab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
