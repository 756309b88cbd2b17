"""CLI driver: exit codes, artifacts, determinism, config validation."""
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from sptlab.cli import main

VSM_MODEL = {"kind": "vsm", "n": 4, "alpha": 0.5}
GRID = {"horizon": 0.25, "steps": 50}


def write_cfg(tmp_path, payload, name="cfg.json"):
    f = tmp_path / name
    f.write_text(json.dumps(payload))
    return str(f)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestSimulate:
    def test_writes_paths_and_manifest(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "model": VSM_MODEL, "grid": GRID, "n_paths": 2, "seed": 3,
        })
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        manifest = read_json(out / "manifest.json")
        assert manifest["files"] == ["path_0000.csv", "path_0001.csv"]
        assert manifest["seed"] == 3 and manifest["n_paths"] == 2
        assert manifest["scheme"] == "euler-log"
        for name in manifest["files"]:
            assert (out / name).exists()
            sidecar = read_json((out / name).with_suffix(".json"))
            assert sidecar["n"] == 4 and sidecar["seed"] == 3

    def test_is_byte_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, {"model": VSM_MODEL, "grid": GRID, "seed": 11})
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
        for name in ("manifest.json", "path_0000.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_runtime_blowup_exits_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {
            "model": {"kind": "gbm", "gammas": [1e308, 0.0],
                      "sigma": [[0.01, 0.0], [0.0, 0.01]]},
            "grid": {"horizon": 2.0, "steps": 2},
            "seed": 1,
        })
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "aborted" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "payload,fragment",
        [
            ({"model": VSM_MODEL, "grid": GRID, "seed": 1, "label": "x"}, "unknown keys"),
            ({"model": VSM_MODEL, "grid": GRID}, "missing required key 'seed'"),
            ({"model": {"kind": "heston", "n": 4}, "grid": GRID, "seed": 1},
             "unknown model kind"),
            ({"model": VSM_MODEL, "grid": GRID, "seed": 1, "n_paths": 0},
             "n_paths must be >= 1"),
            ({"model": VSM_MODEL,
              "grid": {"horizon": 1.0, "steps": 5, "scheme": "exact-log-gbm"},
              "seed": 1}, "constant coefficients"),
            ({"model": VSM_MODEL, "grid": {"horizon": 1.0, "steps": 5,
                                           "scheme": "milstein"}, "seed": 1},
             "unknown scheme"),
        ],
    )
    def test_config_errors_exit_2(self, tmp_path, capsys, payload, fragment):
        cfg = write_cfg(tmp_path, payload)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert fragment in capsys.readouterr().err

    def test_bad_config_files_exit_2(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path)]) == 2
        assert "not found" in capsys.readouterr().err

        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        assert main(["simulate", "--config", str(broken), "--out", str(tmp_path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

        listy = tmp_path / "list.json"
        listy.write_text("[1, 2]")
        assert main(["simulate", "--config", str(listy), "--out", str(tmp_path)]) == 2
        assert "must be a JSON object" in capsys.readouterr().err


class TestDecompose:
    def _simulated(self, seed=5):
        return {"model": VSM_MODEL, "grid": GRID, "seed": seed}

    def test_generator_ledger_from_inline_simulation(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "path": self._simulated(),
            "generator": {"generator": "entropy", "c": 1.0},
        })
        out = tmp_path / "dec"
        assert main(["decompose", "--config", cfg, "--out", str(out)]) == 0
        terminal = read_json(out / "terminal.json")
        assert set(terminal) == {"lhs", "gterm", "drift_integral", "lt_term", "residual"}
        assert abs(terminal["residual"]) < 1e-2
        assert math.isfinite(terminal["lhs"])
        header = (out / "decomposition.csv").read_text().splitlines()[0]
        assert header == "t,lhs,gterm,drift_integral,lt_term,residual"

    def test_generator_ledger_from_a_saved_path(self, tmp_path):
        sim_cfg = write_cfg(tmp_path, {
            "model": VSM_MODEL, "grid": GRID, "seed": 5}, "sim.json")
        sim_out = tmp_path / "sim"
        assert main(["simulate", "--config", sim_cfg, "--out", str(sim_out)]) == 0

        dec_cfg = write_cfg(tmp_path, {
            "path": str(sim_out / "path_0000.csv"),
            "generator": {"generator": "entropy", "c": 1.0},
        }, "dec.json")
        out_file = tmp_path / "dec_file"
        assert main(["decompose", "--config", dec_cfg, "--out", str(out_file)]) == 0

        inline_cfg = write_cfg(tmp_path, {
            "path": self._simulated(),
            "generator": {"generator": "entropy", "c": 1.0},
        }, "dec2.json")
        out_inline = tmp_path / "dec_inline"
        assert main(["decompose", "--config", inline_cfg, "--out", str(out_inline)]) == 0
        assert (out_file / "terminal.json").read_bytes() == \
            (out_inline / "terminal.json").read_bytes()

    def test_rule_ledger(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "path": self._simulated(),
            "rule": {"rule": "dwp", "p": 0.5},
        })
        out = tmp_path / "pw"
        assert main(["decompose", "--config", cfg, "--out", str(out)]) == 0
        terminal = read_json(out / "terminal.json")
        assert terminal["free_energy_total"] >= 0.0
        assert abs(terminal["residual"]) < 1e-10
        header = (out / "palwong.csv").read_text().splitlines()[0]
        assert header == "t,lhs,free_energy_cum,cross_cum"

    def test_ranked_generator_routes_to_the_rank_ledger(self, tmp_path):
        # distinct initial caps: a rank generator refuses exactly tied ranks
        skewed = dict(VSM_MODEL, x0=[4.0, 3.0, 2.0, 1.0])
        cfg = write_cfg(tmp_path, {
            "path": {"model": skewed, "grid": GRID, "seed": 5},
            "generator": {"generator": "rank_power", "r": 0.5, "m": 2},
            "lt_method": "tanaka",
        })
        out = tmp_path / "rk"
        assert main(["decompose", "--config", cfg, "--out", str(out)]) == 0
        assert math.isfinite(read_json(out / "terminal.json")["lt_term"])

    def test_validation(self, tmp_path, capsys):
        both = write_cfg(tmp_path, {
            "path": self._simulated(),
            "generator": {"generator": "entropy", "c": 1.0},
            "rule": {"rule": "market"},
        }, "both.json")
        assert main(["decompose", "--config", both, "--out", str(tmp_path)]) == 2
        assert "exactly one" in capsys.readouterr().err

        neither = write_cfg(tmp_path, {"path": self._simulated()}, "neither.json")
        assert main(["decompose", "--config", neither, "--out", str(tmp_path)]) == 2

        missing = write_cfg(tmp_path, {
            "path": str(tmp_path / "ghost.csv"),
            "generator": {"generator": "entropy", "c": 1.0},
        }, "missing.json")
        assert main(["decompose", "--config", missing, "--out", str(tmp_path)]) == 2
        assert "input file not found" in capsys.readouterr().err

        stray = tmp_path / "stray.csv"
        stray.write_text("value,other\n1.0,2.0\n")
        bad_head = write_cfg(tmp_path, {
            "path": str(stray),
            "generator": {"generator": "entropy", "c": 1.0},
        }, "badhead.json")
        assert main(["decompose", "--config", bad_head, "--out", str(tmp_path)]) == 2
        assert "'date' or 't'" in capsys.readouterr().err


class TestBounds:
    def test_evaluates_a_list(self, tmp_path):
        cfg = write_cfg(tmp_path, {"bounds": [
            {"kind": "vsm_dwp_half", "n": 10},
            {"kind": "diverse_dwp", "n": 100, "p": 0.5, "eps": 1.0, "delta": 0.1},
            {"kind": "dwp_vs_dwp", "n": 4, "delta": 0.1, "eps": 1.0, "kappa": 50.0,
             "p_minus": -0.5, "p_plus": 0.5},
            {"kind": "rank_dwp_case2", "n": 8, "m": 4, "r": -0.5, "eps": 1.0,
             "kappa": 0.1},
        ]})
        out = tmp_path / "b"
        assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
        results = read_json(out / "bounds.json")
        assert results[0]["value"] == pytest.approx(8 * math.log(10) / 9, rel=1e-12)
        assert results[0]["sound"] is True
        assert results[1]["value"] == pytest.approx(
            2 * math.log(100) / (0.5 * 1.0 * 0.1), rel=1e-12)
        assert results[2]["value"] is None  # positivity condition fails
        assert results[3]["sound"] is False
        assert results[3]["params"] == {"n": 8, "m": 4, "r": -0.5, "eps": 1.0,
                                        "kappa": 0.1}

    def test_validation(self, tmp_path, capsys):
        not_list = write_cfg(tmp_path, {"bounds": {}}, "nl.json")
        assert main(["bounds", "--config", not_list, "--out", str(tmp_path)]) == 2

        bad_kind = write_cfg(tmp_path, {"bounds": [{"kind": "galactic"}]}, "bk.json")
        assert main(["bounds", "--config", bad_kind, "--out", str(tmp_path)]) == 2
        assert "unknown bound kind" in capsys.readouterr().err

        bad_param = write_cfg(tmp_path, {"bounds": [
            {"kind": "diverse_dwp", "n": 100, "p": 1.5, "eps": 1.0, "delta": 0.1}
        ]}, "bp.json")
        assert main(["bounds", "--config", bad_param, "--out", str(tmp_path)]) == 2
        assert "p must lie in (0, 1)" in capsys.readouterr().err

        no_kind = write_cfg(tmp_path, {"bounds": [{"n": 10}]}, "nk.json")
        assert main(["bounds", "--config", no_kind, "--out", str(tmp_path)]) == 2

        typo = write_cfg(tmp_path, {"bounds": [
            {"kind": "vsm_dwp_half", "stocks": 10}
        ]}, "typo.json")
        assert main(["bounds", "--config", typo, "--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err


class TestBacktest:
    DATA = {"model": VSM_MODEL, "grid": GRID, "seed": 7}

    def test_multiple_rules_with_labels(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "data": self.DATA,
            "rules": [{"rule": "market"},
                      {"rule": "dwp", "p": 0.5, "label": "half"}],
            "costs": {"rate": 0.001},
            "policy": {"kind": "every_k_steps", "k": 5},
        })
        out = tmp_path / "bt"
        assert main(["backtest", "--config", cfg, "--out", str(out)]) == 0
        summary = read_json(out / "summary.json")
        assert set(summary) == {"market", "half"}
        assert summary["market"]["n_trades"] == 0
        for stem in ("market", "half"):
            assert (out / f"{stem}.csv").exists() and (out / f"{stem}.json").exists()
        header = (out / "relative_wealth.csv").read_text().splitlines()[0]
        assert header == "t,market,half"

    def test_single_rule_against_csv_data(self, tmp_path):
        data = tmp_path / "caps.csv"
        data.write_text(
            "date,AAA,BBB\n2020-01-01,1.0,1.0\n2020-01-02,2.0,1.0\n"
        )
        cfg = write_cfg(tmp_path, {
            "data": str(data),
            "rule": {"rule": "equal"},
            "costs": {"rate": 0.01},
        })
        out = tmp_path / "bt1"
        assert main(["backtest", "--config", cfg, "--out", str(out)]) == 0
        summary = read_json(out / "summary.json")
        assert summary["equal"]["total_costs"] == pytest.approx(0.005, rel=1e-12)

    def test_short_crash_exits_1(self, tmp_path, capsys):
        data = tmp_path / "crash.csv"
        data.write_text(
            "date,AAA,BBB\n2020-01-01,9.0,1.0\n2020-01-02,9.0,0.01\n"
        )
        cfg = write_cfg(tmp_path, {
            "data": str(data),
            "rule": {"rule": "mirror", "q": 6.0, "of": {"rule": "equal"}},
        })
        assert main(["backtest", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "wealth wiped out" in capsys.readouterr().err

    def test_validation(self, tmp_path, capsys):
        both = write_cfg(tmp_path, {
            "data": self.DATA,
            "rule": {"rule": "market"},
            "rules": [{"rule": "market"}],
        }, "both.json")
        assert main(["backtest", "--config", both, "--out", str(tmp_path)]) == 2
        assert "not both" in capsys.readouterr().err

        empty = write_cfg(tmp_path, {"data": self.DATA, "rules": []}, "empty.json")
        assert main(["backtest", "--config", empty, "--out", str(tmp_path)]) == 2

        bad_policy = write_cfg(tmp_path, {
            "data": self.DATA,
            "rule": {"rule": "market"},
            "policy": {"kind": "lunar"},
        }, "pol.json")
        assert main(["backtest", "--config", bad_policy, "--out", str(tmp_path)]) == 2

        bad_rule = write_cfg(tmp_path, {
            "data": self.DATA,
            "rule": {"rule": "dwp", "p": 0.5, "lever": 2},
        }, "rule.json")
        assert main(["backtest", "--config", bad_rule, "--out", str(tmp_path)]) == 2
        assert "unknown parameters" in capsys.readouterr().err


class TestVerify:
    def test_ensemble_floor_report(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "model": {"kind": "vsm", "n": 4, "alpha": 2.0},
            "grid": {"horizon": 0.2, "steps": 200},
            "n_paths": 3,
            "seed": 9,
            "generator": {"generator": "entropy", "c": 1.0},
            "floor": 0.0,
        })
        out = tmp_path / "v"
        assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
        report = read_json(out / "verify.json")
        assert report["n_paths"] == 3
        assert report["n_pass"] == sum(
            1 for p in report["per_path"] if p["terminal_ok"])
        assert report["pass_rate"] == report["n_pass"] / 3
        for per in report["per_path"]:
            assert 0.0 <= per["fraction_satisfied"] <= 1.0

    def test_structured_floor_and_horizon(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "model": {"kind": "vsm", "n": 5, "alpha": 2.0},
            "grid": {"horizon": 0.3, "steps": 300},
            "n_paths": 2,
            "seed": 21,
            "generator": {"generator": "power", "p": -0.5},
            "floor": {"kind": "neg_p_nofail", "n": 5, "p": -0.5,
                      "eps": 0.8, "delta": 0.16},
            "horizon": 0.25,
        })
        out = tmp_path / "v2"
        assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
        report = read_json(out / "verify.json")
        assert report["floor"]["kind"] == "neg_p_nofail"
        assert report["horizon"] == 0.25

    def test_validation(self, tmp_path, capsys):
        too_long = write_cfg(tmp_path, {
            "model": VSM_MODEL, "grid": GRID, "seed": 1,
            "generator": {"generator": "entropy", "c": 1.0},
            "horizon": 1.0,
        }, "h.json")
        assert main(["verify", "--config", too_long, "--out", str(tmp_path)]) == 2
        assert "exceeds the grid horizon" in capsys.readouterr().err

        bad_floor = write_cfg(tmp_path, {
            "model": VSM_MODEL, "grid": GRID, "seed": 1,
            "generator": {"generator": "entropy", "c": 1.0},
            "floor": [0.0],
        }, "f.json")
        assert main(["verify", "--config", bad_floor, "--out", str(tmp_path)]) == 2
        assert "floor must be a number or an object" in capsys.readouterr().err

        bad_kind = write_cfg(tmp_path, {
            "model": VSM_MODEL, "grid": GRID, "seed": 1,
            "generator": {"generator": "entropy", "c": 1.0},
            "floor": {"kind": "martingale", "n": 4, "p": -0.5,
                      "eps": 1.0, "delta": 0.1},
        }, "fk.json")
        assert main(["verify", "--config", bad_kind, "--out", str(tmp_path)]) == 2
        assert "unknown floor kind" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"bounds": [{"kind": "vsm_dwp_half", "n": 10}]}))
    proc = subprocess.run(
        [sys.executable, "-m", "sptlab.cli", "bounds",
         "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    results = read_json(tmp_path / "o" / "bounds.json")
    assert results[0]["value"] == pytest.approx(8 * math.log(10) / 9, rel=1e-12)
