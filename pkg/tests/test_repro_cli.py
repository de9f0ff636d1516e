from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

import oracles
from lebex import repro_cli
from lebex.repro_cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_INTERNAL, EXIT_OK, EXIT_REPRO, run

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"

EXPO = {"kind": "quantile", "family": "exponential", "rate": 1.0, "label": "exp1"}


def _cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _json(argv):
    code, text = run(argv + ["--format", "json"])
    assert code == EXIT_OK, text
    return json.loads(text)


class TestEval:
    def test_entropic_constant(self):
        res = _json(["eval", "--config", str(CONFIGS / "entropic_constant.json")])["results"][0]
        assert res["value"] == pytest.approx(1.0, abs=1e-12)

    def test_avar_exponential(self):
        res = _json(["eval", "--config", str(CONFIGS / "avar_exp.json")])["results"][0]
        assert res["value"] == pytest.approx(1.0 - math.log(0.5), abs=1e-6)

    def test_kusuoka_exponential(self):
        res = _json(["eval", "--config", str(CONFIGS / "kusuoka_exp.json")])["results"][0]
        assert res["value"] == pytest.approx(oracles.EX65_HAT, abs=1e-4)

    def test_strict_divergence(self):
        code, _ = run(["eval", "--config", str(CONFIGS / "modular.json"), "--strict"])
        assert code == EXIT_DIVERGENCE
        code, _ = run(["eval", "--config", str(CONFIGS / "modular.json")])
        assert code == EXIT_OK


class TestNorm:
    def test_constant_entropic(self, tmp_path):
        data = {"model": {"uniform": 3}, "functional": {"variant": "entropic"}, "variable": {"kind": "atomic", "values": [2.5, 2.5, 2.5]}}
        res = _json(["norm", "--config", _cfg(tmp_path, data)])["results"][0]
        assert res["norm"] == pytest.approx(2.5, rel=1e-8)

    def test_avar_one_and_zero(self):
        res = _json(["norm", "--config", str(CONFIGS / "norm_avar1.json")])["results"]
        assert res[0]["norm"] == pytest.approx(1.0, rel=1e-7)
        assert res[1]["norm"] == 0.0


class TestClassify:
    def test_spike(self):
        res = _json(["classify", "--config", str(CONFIGS / "spike.json")])["results"]
        assert res[0]["class"] == "In_M_not_Mu" and res[0]["certifying"]
        assert res[1]["class"] == "In_Mu"

    def test_modular(self):
        res = _json(["classify", "--config", str(CONFIGS / "modular.json")])["results"][0]
        assert res["class"] == "In_L_not_M"


class TestDiagnose:
    def test_jst_examples(self, tmp_path):
        data = {
            "functional": {"variant": "avar", "level": 0.5},
            "variables": [EXPO, {"kind": "quantile", "family": "pareto", "a": 3.0, "label": "pareto3"}],
            "params": {"checks": ["jst"], "budget": 8},
        }
        res = _json(["diagnose", "--config", _cfg(tmp_path, data), "--seed", "0"])["results"]
        jst = res[-1]["jst"]
        assert jst["consistent"] and jst["certifying_consistent"]
        for inst in jst["instances"]:
            assert all(c["pass"] is True for c in inst["conditions"].values())

    def test_spike_fails_all(self, tmp_path):
        data = json.loads((CONFIGS / "spike.json").read_text())
        data["variables"] = data["variables"][:1]
        data["params"] = {"checks": ["jst"], "budget": 16}
        res = _json(["diagnose", "--config", _cfg(tmp_path, data)])["results"]
        inst = res[-1]["jst"]["instances"][0]
        assert all(c["pass"] is False for c in inst["conditions"].values())

    def test_seed_required(self, tmp_path):
        data = {"functional": {"variant": "avar", "level": 0.5}, "variable": EXPO}
        code, text = run(["diagnose", "--config", _cfg(tmp_path, data)])
        assert code == EXIT_CONFIG and "seed" in text


class TestExitCodes:
    def test_missing_config(self):
        assert run(["eval"])[0] == EXIT_CONFIG

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run(["eval", "--config", str(p)])[0] == EXIT_CONFIG

    @pytest.mark.parametrize(
        "data",
        [
            {"functional": {"variant": "nope"}, "variable": EXPO},
            {"functional": {"variant": "avar", "level": 0.5}},
            {"functional": {"variant": "avar", "level": 0.5}, "variable": {"kind": "quantile", "family": "cauchy"}},
            {"functional": {"variant": "avar", "level": 0.5}, "variable": EXPO, "params": {"rtol": -1}},
        ],
    )
    def test_unresolved_descriptors(self, tmp_path, data):
        assert run(["eval", "--config", _cfg(tmp_path, data)])[0] == EXIT_CONFIG

    def test_internal_error(self, monkeypatch):
        def boom(cfg):
            raise RuntimeError("engine bug")

        monkeypatch.setitem(repro_cli.HANDLERS, "eval", boom)
        code, text = run(["eval", "--config", str(CONFIGS / "avar_exp.json")])
        assert code == EXIT_INTERNAL and "engine bug" in text

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "lebex", "eval", "--config", str(CONFIGS / "entropic_constant.json")], capture_output=True, text=True)
        assert proc.returncode == EXIT_OK and proc.stdout.startswith("# eval")


class TestReports:
    def test_csv_is_byte_identical(self, tmp_path):
        data = json.loads((CONFIGS / "spike.json").read_text())
        path = _cfg(tmp_path, data)
        outs = []
        for k in range(2):
            out = tmp_path / f"tail{k}.csv"
            assert run(["tail", "--config", path, "--format", "csv", "--out", str(out)])[0] == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_sampled_csv_is_byte_identical(self, tmp_path):
        data = {"model": {"uniform": 5}, "functional": {"variant": "entropic"}, "params": {"samples": 8}}
        path = _cfg(tmp_path, data)
        a = run(["support", "--config", path, "--seed", "4", "--format", "csv"])
        b = run(["support", "--config", path, "--seed", "4", "--format", "csv"])
        assert a[0] == EXIT_OK and a[1] == b[1]

    @pytest.mark.parametrize("cmd", ["eval", "norm", "tail", "classify"])
    def test_policy_embedded(self, cmd):
        rep = _json([cmd, "--config", str(CONFIGS / "avar_exp.json")])
        for key in ("ladder_tol", "divergence_cap", "eps_tail", "probe_tol", "duality_slack"):
            assert key in rep["policy"]
        assert rep["schema_version"]

    def test_grades_reported(self):
        rep = _json(["eval", "--config", str(CONFIGS / "spike.json")])
        assert rep["results"][0]["grade"] == "certifying"

    def test_text_carries_policy(self):
        code, text = run(["eval", "--config", str(CONFIGS / "avar_exp.json")])
        assert code == EXIT_OK and text.rstrip().splitlines()[-1].startswith("# policy:")


@pytest.fixture(scope="module")
def report():
    return run(["reproduce-paper", "--format", "json"])


class TestReproducePaper:
    def test_exit_code_reflects_failures(self, report):
        code, text = report
        records = json.loads(text)["results"]
        failed = [r["case"] for r in records if not r["pass"]]
        assert code == (EXIT_REPRO if failed else EXIT_OK)
        # the tail formula misses the finite members n = N + 1 for N >= 3
        assert failed == ["ex6.5-tail"]

    def test_cases_and_order(self, report):
        records = json.loads(report[1])["results"]
        ids = [r["case"] for r in records]
        assert ids[:3] == ["ex3.3-mean", "ex3.3-hat", "ex3.3-tail"]
        assert "shortfall-exp-equals-entropic" in ids
        by_id = {r["case"]: r for r in records}
        assert by_id["ex3.3-mean"]["abs_error"] == 0
        assert by_id["shortfall-exp-equals-entropic"]["abs_error"] <= 1e-6

    def test_pass_matches_tolerance(self, report):
        for r in json.loads(report[1])["results"]:
            assert r["pass"] == (r["abs_error"] <= r["tol"]), r["case"]
