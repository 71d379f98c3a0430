import json
import math
import os
import subprocess
import sys

import pytest

from exit_spectrum import parse_config, render_text, run
from exit_spectrum.cli import main
from exit_spectrum.errors import ConfigParseError, NotPositiveDefinite

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg_path(name):
    return os.path.join(CONFIGS, name)


def inline(model, **analysis):
    return {"model": model, "analysis": analysis}


BD_CHAIN = {"mu": [1, 1, 1], "L": [[-1, 1, 0], [1, -2, 1], [0, 1, -1]]}


class TestParseConfig:
    def test_bundled(self):
        cfg = parse_config(cfg_path("birthdeath.json"))
        assert cfg.model_kind == "chain"
        assert cfg.omega == [0, 1]
        assert cfg.K == 20
        assert os.path.isabs(cfg.base_dir)

    @pytest.mark.parametrize(
        "doc",
        [
            {},
            {"model": {}},
            {"model": {"chain": BD_CHAIN, "diffusion": {"a": 0, "b": 1, "n": 3}}},
            {"model": {"spline": {}}},
            {"model": {"diffusion": {"a": 0, "b": 1}}},
            {"model": {"diffusion": {"a": 0, "b": 1, "n": "many"}}},
            {"model": {"chain": {"mu": [1]}}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"K": 0}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"beta_fractions": [1.5]}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"beta": [-1]}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"mc": {"scheme": "leapfrog"}}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"unknown": 1}},
            {"model": {"chain": BD_CHAIN}, "omega": "some"},
            {"model": {"chain": BD_CHAIN}, "output": {"format": "xml"}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"quadrature": {"method": "gauss"}}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"quadrature": {"abs_tol": -1}}},
            {"model": {"chain": BD_CHAIN}, "analysis": {"quadrature": {"order": 3}}},
        ],
    )
    def test_rejected(self, doc):
        with pytest.raises(ConfigParseError) as err:
            parse_config(doc)
        assert err.value.module == "cli_report"

    def test_quadrature_settings(self):
        cfg = parse_config({"model": {"chain": BD_CHAIN}, "analysis": {"quadrature": {"rel_tol": 1e-8, "max_depth": 30}}})
        assert cfg.quadrature.rel_tol == 1e-8 and cfg.quadrature.max_depth == 30
        assert parse_config({"model": {"chain": BD_CHAIN}}).quadrature.method == "adaptive-simpson"

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigParseError):
            parse_config(str(p))

    def test_missing_file(self):
        with pytest.raises(ConfigParseError):
            parse_config("/nonexistent/config.json")


class TestRun:
    def test_birth_death(self):
        rep = run(parse_config(cfg_path("birthdeath.json")))
        assert rep.spectrum["lambda0"] == pytest.approx(0.381966, abs=1e-6)
        assert rep.passed and rep.exit_code == 0
        assert set(rep.timings) >= {"build", "moments", "spectrum", "bounds"}

    def test_brownian(self):
        rep = run(parse_config(cfg_path("brownian01.json")))
        assert abs(rep.spectrum["lambda0"] - math.pi**2) / math.pi**2 < 1e-4
        assert rep.exit_code == 0

    def test_conservative_chain(self):
        with pytest.raises(NotPositiveDefinite) as err:
            run(parse_config(cfg_path("conservative.json")))
        assert err.value.module == "killed_solver"

    def test_normalized_variant(self):
        rep = run(parse_config({"model": {"chain": BD_CHAIN}, "omega": [0, 1], "analysis": {"K": 6}}))
        n = rep.normalized
        assert n["mu_E"] == 3.0
        assert n["T"][1] == pytest.approx(5 / 3)
        assert n["mass0_sq"] == pytest.approx(rep.spectrum["mass0_sq"] / 3)

    def test_normalize_flag(self):
        doc = {"model": {"chain": BD_CHAIN}, "omega": [0, 1], "analysis": {"K": 6, "normalize": True}}
        rep = run(parse_config(doc))
        assert rep.moments["T"][0] == pytest.approx(2 / 3)
        assert rep.passed

    def test_failed_checks_are_listed(self):
        rep = run(parse_config({"model": {"chain": BD_CHAIN}, "omega": [0, 1], "analysis": {"K": 6}}))
        rep.checks[0]["passed"] = False
        d = rep.to_dict()
        assert d["failures"] == [rep.checks[0]["name"]]
        assert rep.exit_code == 1
        assert "FAIL" in render_text(d)

    def test_fractional_blm(self):
        doc = inline({"fractional": {"a": -1, "b": 1, "n": 400, "alpha": 1.0}}, K=10)
        rep = run(parse_config(doc))
        assert rep.extras["blm"]["lower"] == pytest.approx(1.0)
        assert 1.0 <= rep.spectrum["lambda0"] <= math.pi / 2
        assert rep.passed

    def test_timechanged_small(self):
        doc = inline({"timechanged": {"R": 20, "n": 200, "alpha": 1.5, "sigma": "sqrt(1+x^2)", "check_doubling": True}}, K=10)
        rep = run(parse_config(doc))
        assert rep.extras["delta_plus"]["delta_plus"] == pytest.approx(2.0, rel=0.01)
        assert rep.extras["truncation"]["R_doubled"] == 40
        assert rep.passed

    def test_timechanged_rejects_subdomain(self):
        doc = {"model": {"timechanged": {"R": 5, "n": 20, "alpha": 1.5, "sigma": "1"}}, "omega": [0, 1]}
        with pytest.raises(ConfigParseError):
            run(parse_config(doc))

    def test_monte_carlo_block(self):
        doc = {
            "model": {"chain": BD_CHAIN},
            "omega": [0, 1],
            "analysis": {"K": 6, "mc": {"paths": 50_000, "seed": 3, "kmax": 2}},
        }
        rep = run(parse_config(doc))
        assert len(rep.mc["z_table"]) == 2
        assert "mc" in rep.timings

    def test_delta_r_block(self):
        doc = inline({"diffusion": {"a": 0, "b": 1, "n": 50, "V": "0"}}, K=6, delta_r={"gamma": "0", "D": 1, "r": 0})
        rep = run(parse_config(doc))
        assert rep.extras["delta_r"]["delta_r"] == pytest.approx(0.25)

    def test_round_trip(self, tmp_path):
        rep = run(parse_config(cfg_path("birthdeath.json")))
        text = rep.to_text()
        reloaded = json.loads(rep.to_json())
        assert render_text(reloaded) == text

    def test_every_number_finite(self):
        rep = run(parse_config(cfg_path("birthdeath.json")))
        json.dumps(rep.to_dict(), allow_nan=False)
        assert rep.nonfinite == []


class TestMain:
    def test_run_text(self, capsys):
        assert main(["run", cfg_path("birthdeath.json")]) == 0
        out = capsys.readouterr().out
        assert "lambda0 = 0.381966" in out

    def test_run_json_out(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        assert main(["run", cfg_path("birthdeath.json"), "--format", "json", "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        assert d["passed"] is True
        assert d["spectrum"]["lambda0"] == pytest.approx(0.381966, abs=1e-6)

    def test_run_csv(self, capsys):
        assert main(["run", cfg_path("birthdeath.json"), "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "k,T_k,upper_odd,upper_ratio,lower_moment"
        assert len(lines) == 21

    def test_conservative_exit_code(self, capsys):
        assert main(["run", cfg_path("conservative.json")]) != 0
        assert "[killed_solver] NotPositiveDefinite" in capsys.readouterr().err

    def test_mc(self, capsys):
        assert main(["mc", cfg_path("birthdeath.json"), "--paths", "50000", "--seed", "1"]) == 0
        assert "Monte Carlo: 50000 paths" in capsys.readouterr().out

    def test_bounds_beta(self, capsys):
        assert main(["bounds", cfg_path("birthdeath.json"), "-K", "12", "--beta", "0.2", "--format", "json"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d["bounds"]["K"] == 12
        assert [e["beta"] for e in d["bounds"]["exp_rows"]] == [0.2]

    def test_bounds_beta_too_large(self, capsys):
        assert main(["bounds", cfg_path("birthdeath.json"), "--beta", "0.5"]) == 2
        assert "BetaAtOrAboveLambda0" in capsys.readouterr().err

    def test_console_script(self):
        r = subprocess.run(
            [sys.executable, "-m", "exit_spectrum.cli", "run", cfg_path("birthdeath.json"), "--format", "json"],
            capture_output=True,
            text=True,
        )
        assert r.returncode == 0
        assert json.loads(r.stdout)["passed"]
