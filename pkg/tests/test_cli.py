import csv
import json
import math
import subprocess
import sys

import pytest

from kljn.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    return list(csv.DictReader(path.open()))


class TestSimulate:
    def test_default_rows(self, tmp_path):
        out = tmp_path / "t.csv"
        assert run("simulate", "--state", "LH", "--noise", "gaussian", "--scaling", "johnson", "--out", out) == 0
        rows = read_csv(out)
        assert len(rows) == 8192 and list(rows[0]) == ["index", "v_volts", "i_amps"]
        manifest = json.loads((tmp_path / "t.csv.manifest.json").read_text())
        assert manifest["parameters"]["seed"] == 0 and manifest["version"]

    def test_zero_n(self, tmp_path, capsys):
        assert run("simulate", "--n", 0, "--out", tmp_path / "t.csv") == 1
        assert "--n" in capsys.readouterr().err

    def test_byte_identical(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert run("simulate", "--noise", "stable", "--alpha", 1.5, "--n", 500, "--seed", 9, "--out", tmp_path / name) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_stable_needs_alpha(self, tmp_path):
        assert run("simulate", "--noise", "stable", "--out", tmp_path / "t.csv") == 1

    def test_explicit_needs_low(self, tmp_path):
        assert run("simulate", "--scaling", "explicit", "--out", tmp_path / "t.csv") == 1

    def test_io_error(self, tmp_path):
        assert run("simulate", "--n", 5, "--out", tmp_path / "missing" / "t.csv") == 2

    def test_bad_seed(self, tmp_path):
        assert run("simulate", "--seed", -1, "--out", tmp_path / "t.csv") == 1

    def test_config_file_and_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nn = 50\nstate=HL\nseed=4\n")
        assert run("simulate", "--config", cfg, "--n", 20, "--out", tmp_path / "t.csv") == 0
        assert len(read_csv(tmp_path / "t.csv")) == 20
        params = json.loads((tmp_path / "t.csv.manifest.json").read_text())["parameters"]
        assert params["state"] == "HL" and params["seed"] == 4

    def test_config_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus=1\n")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "t.csv") == 1


class TestFigure:
    def test_fig2(self, tmp_path):
        assert run("figure", "--id", 2, "--out-dir", tmp_path) == 0
        m = json.loads((tmp_path / "fig2_manifest.json").read_text())
        assert [d["file"] for d in m["datasets"]] == ["fig2_LH.csv", "fig2_HL.csv"]
        asg = m["datasets"][0]["assignment"]
        assert asg["high_magnitude"] / asg["low_magnitude"] == 1.5
        assert m["datasets"][0]["pair"] == {"r_low": 1000.0, "r_high": 10000.0}
        assert len(read_csv(tmp_path / "fig2_HL.csv")) == 8192

    def test_fig3(self, tmp_path):
        assert run("figure", "--id", 3, "--out-dir", tmp_path) == 0
        m = json.loads((tmp_path / "fig3_manifest.json").read_text())
        alphas = [d["assignment"]["alpha"] for d in m["datasets"]]
        assert alphas == [0.5, 1.0, 1.5, 2.0]
        asg = m["datasets"][0]["assignment"]
        assert asg["high_magnitude"] / asg["low_magnitude"] == pytest.approx(math.sqrt(10), rel=1e-14)
        assert {d["state"] for d in m["datasets"]} == {"HL"}

    def test_fig4(self, tmp_path):
        assert run("figure", "--id", 4, "--out-dir", tmp_path) == 0
        m = json.loads((tmp_path / "fig4_manifest.json").read_text())
        assert len(m["datasets"]) == 2 and m["datasets"][0]["assignment"]["family"] == "uniform"

    def test_unknown_id(self, tmp_path):
        assert run("figure", "--id", 5, "--out-dir", tmp_path) == 1


class TestAttack:
    def test_secure(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert run("attack", "--distinguisher", "corr_sign", "--episodes", 100, "--n", 1024, "--out", out) == 0
        rep = json.loads(out.read_text())
        assert rep["ci_lo"] <= 0.5 <= rep["ci_hi"]
        assert "advantage" in capsys.readouterr().out
        assert out.read_text().count("\n") == 1

    def test_fig2(self, tmp_path):
        out = tmp_path / "r.json"
        argv = ["attack", "--distinguisher", "corr_sign", "--scaling", "explicit", "--low-magnitude", 1.0,
                "--magnitude", 1.5, "--episodes", 100, "--n", 8192, "--out", out]
        assert run(*argv) == 0
        assert json.loads(out.read_text())["advantage"] >= 0.95

    def test_invalid_distinguisher(self, tmp_path, capsys):
        assert run("attack", "--distinguisher", "magic", "--out", tmp_path / "r.json") == 1
        assert "corr_sign" in capsys.readouterr().err


class TestKeyExchange:
    def test_secure(self, tmp_path):
        out, periods = tmp_path / "k.json", tmp_path / "p.csv"
        assert run("keyexchange", "--bits", 128, "--out", out, "--periods-out", periods) == 0
        rep = json.loads(out.read_text())
        assert rep["agreement_rate"] == 1.0 and rep["key_bits"] == 128
        assert rep["alice_key_hex"] == rep["bob_key_hex"]
        assert len(read_csv(periods)) == rep["total_periods"]

    def test_misscaled(self, tmp_path):
        out = tmp_path / "k.json"
        argv = ["keyexchange", "--scaling", "explicit", "--low-magnitude", 1.0, "--magnitude", 1.5, "--out", out]
        assert run(*argv) == 0
        assert json.loads(out.read_text())["eve_accuracy"] >= 0.95

    def test_zero_bits(self, tmp_path):
        assert run("keyexchange", "--bits", 0, "--out", tmp_path / "k.json") == 1


class TestCfCheck:
    def test_stable_alpha2(self, tmp_path):
        out = tmp_path / "cf.csv"
        assert run("cf-check", "--noise", "stable", "--alpha", 2, "--n", 2**16, "--out", out) == 0
        rows = read_csv(out)
        assert len(rows) == 30
        assert max(float(r["abs_error"]) for r in rows) <= 3 / math.sqrt(2**16)

    def test_zero_in_grid(self, tmp_path):
        out = tmp_path / "cf.csv"
        assert run("cf-check", "--t", "0,0.5,1", "--n", 100, "--out", out) == 0
        assert float(read_csv(out)[0]["exact"]) == 1.0

    def test_gaussian_vs_alpha2_exact(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("cf-check", "--noise", "gaussian", "--magnitude", 1, "--n", 10, "--out", a) == 0
        assert run("cf-check", "--noise", "stable", "--alpha", 2, "--magnitude", 2**-0.5, "--n", 10, "--out", b) == 0
        for ra, rb in zip(read_csv(a), read_csv(b)):
            assert float(ra["exact"]) == pytest.approx(float(rb["exact"]), abs=1e-12)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "kljn", "figure", "--id", "9", "--out-dir", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 1 and "invalid choice" in res.stderr
