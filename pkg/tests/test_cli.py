import json
import math

import numpy as np
import pytest

from penalab.cli import main
from penalab.report import ks_test
from penalab.samplers import RngStream


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestKsTest:
    def test_calibration_on_its_own_law(self):
        passes = 0
        for seed in range(40):
            u = np.sort(RngStream(seed).generator().random(2000))
            passes += ks_test(u, lambda z: np.clip(z, 0, 1), level=0.01).passed
        assert passes >= 37  # ~99% pass rate at level 0.01

    def test_power_against_shifted_law(self):
        u = np.sort(RngStream(1).generator().random(2000))
        v = ks_test(u, lambda z: np.clip(z - 0.1, 0, 1), level=0.01)
        assert not v.passed

    def test_input_validation(self):
        with pytest.raises(ValueError):
            ks_test(np.array([3.0, 1.0] * 60), lambda z: z)
        with pytest.raises(ValueError):
            ks_test(np.sort(np.random.default_rng(0).random(50)), lambda z: z)


class TestSubcommands:
    def test_classify(self, capsys):
        code, out = run_cli(capsys, "classify", "--lambda", "1", "--mu", "1")
        assert code == 0
        assert json.loads(out) == {"region": "R2"}

    def test_density(self, capsys):
        code, out = run_cli(capsys, "density", "--law", "max", "--r", "1", "--z", "1")
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(
            math.sqrt(2 / math.pi) * math.exp(-0.5), abs=1e-12)

    def test_martingale_check_verdict(self, capsys):
        code, out = run_cli(capsys, "martingale-check", "--family", "phi:uniform:1",
                            "--u", "1", "--n", "20000", "--seed", "7")
        rec = json.loads(out)
        assert code == 0 and rec["pass"]
        assert rec["target"] == 1.0

    def test_limit_subcommand(self, capsys):
        code, out = run_cli(capsys, "limit", "--y", "1", "--event", "u=1,b=0,c=0.5",
                            "--n", "4000", "--seed", "3")
        assert code == 0
        assert json.loads(out)["pass"]

    def test_deterministic_output(self, capsys):
        args = ("limit", "--y", "1", "--event", "u=1,b=0,c=0.5", "--n", "2000", "--seed", "11")
        _, out1 = run_cli(capsys, *args)
        _, out2 = run_cli(capsys, *args)
        assert out1 == out2

    def test_converge_writes_csv(self, capsys, tmp_path):
        code, out = run_cli(capsys, "converge", "--y", "1", "--event", "u=1,b=0,c=0.5",
                            "--t", "32,64,128,256", "--out", str(tmp_path))
        assert code == 0
        lines = out.strip().splitlines()
        assert json.loads(lines[0])["fit"]["q_limit"] > 0
        assert json.loads(lines[1])["pass"]
        csvs = list(tmp_path.glob("*.csv"))
        assert csvs and csvs[0].read_text().startswith("t,")

    def test_expansion_subcommand(self, capsys):
        code, out = run_cli(capsys, "expansion", "--mode", "poly")
        assert code == 0
        assert json.loads(out)["pass"]

    def test_bessel_subcommand(self, capsys):
        code, out = run_cli(capsys, "bessel", "--lambda", "-1", "--mu", "-1",
                            "--t", "16", "--n", "8000", "--seed", "5")
        assert code == 0
        for line in out.strip().splitlines():
            assert json.loads(line)["pass"]

    def test_verify_subset(self, capsys):
        code, out = run_cli(capsys, "verify", "--only", "5,8", "--seed", "1")
        assert code == 0
        recs = [json.loads(line) for line in out.strip().splitlines()]
        assert len(recs) == 4 and all(r["pass"] for r in recs)

    def test_config_file_defaults(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n=2000\nseed=3\n")
        code, out = run_cli(capsys, "--config", str(cfg), "limit", "--y", "1",
                            "--event", "u=1,b=0,c=0.5")
        assert code == 0
        assert json.loads(out)["pass"]

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("PENALAB_SEED", "777")
        # rebuild the parser so the env default is picked up
        code, out = run_cli(capsys, "classify", "--lambda", "0", "--mu", "-1")
        assert code == 0 and json.loads(out)["region"] == "R3"

    def test_unknown_config_key_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_knob=3\n")
        with pytest.raises(SystemExit):
            main(["--config", str(cfg), "classify", "--lambda", "0", "--mu", "0"])
        assert "bogus_knob" in capsys.readouterr().err

    def test_exit_code_reflects_failing_verdict(self, capsys):
        # at t = 2 the penalized Bessel law is still far from its limit, so
        # the check legitimately fails and the exit status must say so
        code, out = run_cli(capsys, "bessel", "--lambda", "-1", "--mu", "-1",
                            "--t", "2", "--n", "60000", "--seed", "5")
        recs = [json.loads(line) for line in out.strip().splitlines()]
        assert any(not r["pass"] for r in recs)
        assert code == 1
