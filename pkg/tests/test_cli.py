import json
import os
import subprocess
import sys

import pytest

from thermfront import __version__
from thermfront.cli import main
from thermfront.config import OUTPUT_DIR_ENV, default_spec, load_spec, parse_spec

MINIMAL = """
[chain]
L = 6
W = 5.0
Delta = 1.0
gamma = 1.0

[ensemble]
backend = "ed"
N_r = 50
master_seed = 7
t_final = 20.0
points_per_decade = 20
"""


def _write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_template_parses_to_defaults(capsys):
    assert main(["template"]) == 0
    text = capsys.readouterr().out
    spec = parse_spec(__import__("tomli").loads(text) if sys.version_info < (3, 11)
                      else __import__("tomllib").loads(text))
    assert spec.points == default_spec().points
    assert spec.points[0].ensemble.N_r == 500


@pytest.mark.parametrize("body", [
    "[chain]\nL = 5\n",
    "[chain]\nW = -1.0\n",
    "[chain]\nL = [8, \"x\"]\n",
    "[ensemble]\nbackend = \"qmc\"\n",
    "[ensemble]\nN_r = 1\n",
    "[bogus]\nx = 1\n",
    "[chain]\nwidth = 3\n",
    "[analysis]\nfit_window = [10.0]\n",
    "not toml = = 3\n",
])
def test_config_errors_exit_with_config_code(tmp_path, body, capsys):
    assert main(["run", "--config", _write(tmp_path, body), "--output-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2


def test_bad_seed_and_workers(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", "--config", cfg, "--seed", "-1", "--output-dir", str(tmp_path)]) == 2
    assert main(["run", "--config", cfg, "--workers", "0", "--output-dir", str(tmp_path)]) == 2


def test_minimal_run_and_rerun_are_identical(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--output-dir", str(a)]) == 0
    assert main(["run", "--config", cfg, "--output-dir", str(b)]) == 0
    files = sorted(os.listdir(a))
    assert sorted(os.listdir(b)) == files
    assert "manifest.json" in files
    assert sum(f.endswith(".csv") for f in files) == 3
    assert sum(f.endswith(".json") for f in files) == 2
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    entry = man["points"][0]
    assert entry["master_seed"] == 7 and entry["code_version"] == __version__
    meta = json.loads((a / entry["files"]["metadata"]).read_text())
    assert meta["config_hash"] == entry["config_hash"]


def test_resume_skips_finished_points(tmp_path, caplog):
    cfg = _write(tmp_path, MINIMAL)
    out = tmp_path / "r"
    assert main(["run", "--config", cfg, "--output-dir", str(out)]) == 0
    before = (out / "manifest.json").read_bytes()
    caplog.set_level("INFO")
    assert main(["-v", "run", "--config", cfg, "--output-dir", str(out), "--resume"]) == 0
    assert "already done" in caplog.text
    assert (out / "manifest.json").read_bytes() == before


def test_seed_flag_changes_outputs(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    main(["run", "--config", cfg, "--output-dir", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--output-dir", str(tmp_path / "b"), "--seed", "8"])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert mb["master_seed"] == 8
    assert ma["points"][0]["config_hash"] != mb["points"][0]["config_hash"]


def test_oracle_above_cap_is_a_resource_error(tmp_path, capsys):
    cfg = _write(tmp_path, "[chain]\nL = 14\n[ensemble]\nbackend = \"oracle\"\nN_r = 2\n")
    assert main(["run", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 3
    assert "oracle refused" in capsys.readouterr().err


def test_analyze_single_point(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    out = tmp_path / "s"
    main(["run", "--config", cfg, "--output-dir", str(out)])
    capsys.readouterr()
    assert main(["analyze", str(out / "manifest.json")]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["thresholds"]) == 1 and len(report["slopes"]) == 1
    assert report["alpha"] is None
    assert any("alpha" in m and ">= 3 points" in m for m in report["failures"])
    for name in ("summary.txt", "thresholds.csv", "slopes.csv", "collapse.csv"):
        assert (out / name).exists()
    # stored verdicts recompute to the same values
    assert main(["analyze", "--verify", str(out / "report.json")]) == 0
    assert "verify: ok" in capsys.readouterr().out


def test_verify_flags_tampering(tmp_path, capsys):
    rep = {"robustness": [{"label": "x", "A": 0.2, "one_over_A": 5.0, "criterion_log": False,
                           "log_margin": 0.0, "t_star_exponent": 2.5, "kappa": 1.0,
                           "W_tilde": None, "verdict": "robust"}]}
    p = tmp_path / "r.json"
    p.write_text(json.dumps(rep))
    assert main(["analyze", "--verify", str(p)]) == 5
    assert "MISMATCH" in capsys.readouterr().out


def test_analyze_reports_missing_points_and_mixed_versions(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("W = 5.0", "W = [4.0, 5.0]"))
    out = tmp_path / "m"
    main(["run", "--config", cfg, "--output-dir", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    os.remove(out / man["points"][0]["files"]["metadata"])
    assert main(["analyze", str(out / "manifest.json")]) == 0
    report = json.loads((out / "report.json").read_text())
    assert any("missing sweep point" in m for m in report["failures"])
    assert len(report["thresholds"]) == 1
    man["points"][1]["code_version"] = "0.0.0"
    (out / "manifest.json").write_text(json.dumps(man))
    assert main(["analyze", str(out / "manifest.json")]) == 2
    assert main(["analyze", str(out / "manifest.json"), "--force"]) == 0


def test_output_dir_environment_override(tmp_path, monkeypatch):
    cfg = _write(tmp_path, MINIMAL.replace("N_r = 50", "N_r = 2"))
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()
    assert main(["run", "--config", cfg, "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "manifest.json").exists()


def test_sweep_expansion_order(tmp_path):
    spec = load_spec(_write(tmp_path, "[chain]\nL = [8, 10]\nW = [4.0, 6.0]\n"))
    assert [(p.chain.L, p.chain.W) for p in spec.points] == [(8, 4.0), (8, 6.0), (10, 4.0), (10, 6.0)]
    assert [p.ensemble.N_r for p in spec.points] == [500, 500, 400, 400]


def test_console_script_runs(tmp_path):
    res = subprocess.run([sys.executable, "-m", "thermfront.cli", "template"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.startswith("# thermfront experiment file")
