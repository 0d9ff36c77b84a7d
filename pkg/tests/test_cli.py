import json
import subprocess
import sys

import pytest

from nlvc.cli import Outcome, emit_report, load_config, ConfigError, main


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


ID_CFG = "[geometry]\nh = 0.2\n[kernel]\ndelta = 0.4\n"


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_identities_pass(tmp_path):
    cfg = write(tmp_path, "c.ini", ID_CFG)
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    s = summary(tmp_path / "o")
    assert s["status"] == "pass" and s["checks"] and all(c["passed"] for c in s["checks"])
    assert s["config"]["kernel"]["delta"] == 0.4 and s["config"]["solver"]["tol"] == 1e-10
    assert set(s["versions"]) == {"nlvc", "numpy", "scipy", "python"}


def test_tolerance_failure_exit_two(tmp_path):
    cfg = write(tmp_path, "c.ini", ID_CFG + "[tolerances]\ngauss = 1e-30\n")
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert summary(tmp_path / "o")["status"] == "fail"


def test_missing_delta(tmp_path, capsys):
    cfg = write(tmp_path, "c.ini", "[geometry]\nh = 0.2\n")
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    s = summary(tmp_path / "o")
    assert s["status"] == "error" and "kernel.delta" in s["error"]
    assert "kernel.delta" in capsys.readouterr().err


def test_strict_rejects_unknown(tmp_path):
    cfg = write(tmp_path, "c.ini", ID_CFG + "colour = red\n")
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path / "p"), "--strict"]) == 1
    assert "kernel.colour" in summary(tmp_path / "p")["error"]


def test_parse_error_has_line(tmp_path):
    cfg = write(tmp_path, "c.ini", "[kernel]\ndelta = 0.4\nthis line is broken\n")
    with pytest.raises(ConfigError, match=r"line\s+3"):
        load_config(cfg, "identities")


@pytest.mark.parametrize("text,key", [("[kernel]\ndelta = -1\n", "kernel.delta"),
                                      ("[kernel]\ndelta = abc\n", "kernel.delta"),
                                      ("[kernel]\ndelta = 1\nfamily = bogus\n", "kernel.family"),
                                      ("[kernel]\ndelta = 1\n[geometry]\nbounds = 0,1\n", "geometry.bounds")])
def test_invalid_values(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(write(tmp_path, "c.ini", text), "identities")


def test_missing_config_file(tmp_path):
    assert main(["moments", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 1


def test_empty_report(tmp_path):
    s = emit_report(tmp_path / "e", "moments", {}, Outcome([], {}))
    assert s["checks"] == [] and s["status"] == "pass"
    assert json.loads((tmp_path / "e" / "summary.json").read_text())["checks"] == []


def test_moments_and_converge(tmp_path):
    cfg = write(tmp_path, "c.ini", "[moments]\nresolution = 32\nratio_tol = 0.02\n")
    assert main(["moments", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "moments.csv").read_text().startswith("name,computed,analytic,ratio")
    assert main(["converge", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    lines = (tmp_path / "c" / "convergence.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[-1].startswith("slope,")


def test_decompose_roundtrip(tmp_path):
    cfg = write(tmp_path, "c.ini", ID_CFG + "[input]\nfield = harmonic_exp\nlift = weighted\nweight = gaussian\n")
    assert main(["decompose", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    a = summary(tmp_path / "a")
    assert main(["decompose", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--input", str(tmp_path / "a" / "u.csv")]) == 0
    b = summary(tmp_path / "b")
    assert a["diagnostics"] == b["diagnostics"]
    for name in ("phi.csv", "w.csv", "gphi.csv", "cw.csv", "h.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_decompose_missing_input_file(tmp_path):
    cfg = write(tmp_path, "c.ini", ID_CFG)
    rc = main(["decompose", "--config", str(cfg), "--out", str(tmp_path / "o"), "--input", str(tmp_path / "x.csv")])
    assert rc == 1 and "not found" in summary(tmp_path / "o")["error"]


def test_example32_command(tmp_path):
    cfg = write(tmp_path, "c.ini", "[example32]\nlevels = 0.125, 0.0625\n")
    assert main(["example32", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    s = summary(tmp_path / "o")
    assert s["diagnostics"]["levels"][0]["reconstruction_defect"] == 0.0
    assert s["diagnostics"]["levels"][1]["error_gphi"] < s["diagnostics"]["levels"][0]["error_gphi"]


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "c.ini", "[moments]\nresolution = 16\nratio_tol = 0.5\nodd_tol = 1\n")
    r = subprocess.run([sys.executable, "-m", "nlvc.cli", "moments", "--config", str(cfg), "--out",
                        str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
