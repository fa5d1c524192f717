"""Config parsing, scenario generation, sweeps, CSV output and the CLI."""

import csv
import math
import os

import numpy as np
import pytest

from vlcrf.cli import main as cli_main
from vlcrf.dc_solver import FeasibleSet, allocation_violation
from vlcrf.experiment import (
    ConfigError,
    build_config,
    generate_scenario,
    load_config,
    parse_config_text,
    preset_config,
    run_report,
    run_solve,
    run_sweep,
)
from vlcrf.link_budget import Allocation


def read_rows(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader)


class TestConfigParsing:
    def test_comments_and_blanks(self):
        raw = parse_config_text("# hello\n\nseed = 5 # trailing\n  users.count =2\n")
        assert raw == {"seed": "5", "users.count": "2"}

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("what is this")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("seed = 1\nseed = 2\n")

    def test_seed_mandatory(self):
        with pytest.raises(ConfigError, match="seed"):
            build_config({})

    def test_defaults_from_bare_seed(self):
        cfg = build_config({"seed": "1"})
        assert cfg.room == (5.0, 5.0, 3.0)
        assert cfg.led.position.x == 2.5 and cfg.led.position.z == 3.0
        assert cfg.led.p_led == 1.0
        assert cfg.led.semi_angle_half == 60.0
        assert cfg.pd.area == 1e-4
        assert cfg.pd.responsivity == 0.54
        assert cfg.pd.fov == 60.0
        assert cfg.pd.refractive_index == 1.5
        assert cfg.eta == 0.44
        assert cfg.noise_user_dl == cfg.noise_eve_ul == 1e-14
        assert cfg.rician.k_factor == 2.0
        assert cfg.rician.los_reference_gain == 1e-3
        assert cfg.users_count == 4
        assert cfg.eve_position is None
        assert cfg.solver.epsilon == 1e-8
        assert cfg.solver.max_iterations == 500

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="led.wattage"):
            build_config({"seed": "1", "led.wattage": "3"})

    def test_fov_invariant_named(self):
        with pytest.raises(ConfigError, match="pd"):
            build_config({"seed": "1", "pd.fov": "120"})

    def test_positions_arity_mismatch(self):
        with pytest.raises(ConfigError, match="users.positions"):
            build_config({"seed": "1", "users.count": "3", "users.positions": "1,1,0; 2,2,0"})

    def test_positions_outside_room(self):
        with pytest.raises(ConfigError, match="outside the room"):
            build_config({"seed": "1", "users.positions": "9,1,0"})

    def test_rate_keys_mutually_exclusive(self):
        with pytest.raises(ConfigError, match="mutually exclusive"):
            build_config({"seed": "1", "rate.min": "2", "rate.min_fraction": "0.5"})

    def test_sweep_validation(self):
        with pytest.raises(ConfigError, match="sweep.kind"):
            build_config({"seed": "1", "sweep.points": "4"})
        with pytest.raises(ConfigError, match="sweep.kind"):
            build_config({"seed": "1", "sweep.kind": "banana"})
        with pytest.raises(ConfigError, match="sweep.values"):
            build_config({"seed": "1", "sweep.kind": "users"})
        with pytest.raises(ConfigError):
            build_config({"seed": "1", "sweep.kind": "rmin_fraction", "sweep.values": "0.2,1.5"})

    def test_users_sweep_with_positions_rejected(self):
        with pytest.raises(ConfigError):
            build_config({
                "seed": "1", "sweep.kind": "users", "sweep.values": "1,2",
                "users.positions": "1,1,0",
            })

    def test_load_config_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config("/nonexistent/config.txt")

    def test_load_config_roundtrip(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("seed = 3\nusers.count = 2\nrate.min = 1.5\n")
        cfg = load_config(str(path), overrides={"trials": "2"})
        assert cfg.seed == 3 and cfg.users_count == 2 and cfg.trials == 2
        assert cfg.r_min == 1.5

    def test_preset_unknown(self):
        with pytest.raises(ConfigError, match="preset"):
            preset_config("fig9")


class TestGenerateScenario:
    def test_deterministic_per_config_and_trial(self):
        cfg = build_config({"seed": "77", "users.count": "3"})
        s1, fs1 = generate_scenario(cfg, 4)
        s2, fs2 = generate_scenario(cfg, 4)
        assert np.array_equal(s1.g, s2.g)
        assert np.array_equal(s1.h, s2.h)
        assert np.array_equal(s1.h_e, s2.h_e)
        assert fs1.r_min == fs2.r_min

    def test_trials_differ(self):
        cfg = build_config({"seed": "77", "users.count": "3"})
        s1, _ = generate_scenario(cfg, 0)
        s2, _ = generate_scenario(cfg, 1)
        assert not np.array_equal(s1.g, s2.g)

    def test_explicit_positions_fix_geometry_not_fading(self):
        cfg = build_config({
            "seed": "77",
            "users.positions": "1.0,1.0,0.0; 3.5,2.0,0.0",
        })
        s1, _ = generate_scenario(cfg, 0)
        s2, _ = generate_scenario(cfg, 1)
        assert np.array_equal(s1.g, s2.g)          # geometry pinned
        assert not np.array_equal(s1.h, s2.h)      # fading re-drawn

    def test_center_user_matches_channel_module(self):
        cfg = build_config({"seed": "1", "users.positions": "2.5,2.5,0.0"})
        s, _ = generate_scenario(cfg, 0)
        hand = 2.0 * 1e-4 * 0.54 / (2.0 * math.pi * 9.0) * 3.0
        assert float(s.g[0]) == pytest.approx(hand, rel=1e-12)
        assert float(s.g[0]) == pytest.approx(5.7296e-6, rel=1e-4)

    def test_out_of_fov_user_warns(self):
        cfg = build_config({
            "seed": "1", "pd.fov": "20", "users.positions": "0.1,0.1,0.0",
        })
        with pytest.warns(UserWarning, match="field of view"):
            s, _ = generate_scenario(cfg, 0)
        assert float(s.g[0]) == 0.0

    def test_rate_fraction_resolved_against_bound(self):
        cfg = build_config({"seed": "5", "users.count": "2", "rate.min_fraction": "0.5"})
        s, fs = generate_scenario(cfg, 0)
        from vlcrf.link_budget import dl_rate_coefficients

        assert fs.r_min == pytest.approx(0.5 * float(dl_rate_coefficients(s).max()), rel=1e-12)

    def test_fixed_eve_position(self):
        cfg = build_config({"seed": "5", "eve.position": "1.0,1.0,1.0", "users.count": "1"})
        s1, _ = generate_scenario(cfg, 0)
        s2, _ = generate_scenario(cfg, 1)
        assert s1.h_e.shape == (1,)
        # same geometry for Eve but fading still varies by trial
        assert not np.array_equal(s1.h_e, s2.h_e)


SMALL_SWEEP = {
    "seed": "42",
    "trials": "2",
    "users.count": "1",
    "sweep.kind": "rmin_fraction",
    "sweep.start": "0.0",
    "sweep.stop": "0.8",
    "sweep.points": "4",
    "rf.los_reference_gain": "0.1",
    "runtime.workers": "1",
}


class TestRunSweep:
    def test_rows_and_aggregates(self, tmp_path):
        cfg = build_config(dict(SMALL_SWEEP))
        info = run_sweep(cfg, out_dir=str(tmp_path))
        assert info["rows"] == 8 and info["solved"] == 8
        rows = read_rows(info["rows_path"])
        assert len(rows) == 8
        for row in rows:
            assert row["status"] in ("converged", "max_iterations")
            assert float(row["dl_rate_achieved"]) >= float(row["r_min"]) - 1e-6
        # per-trial monotone objective in the sweep value
        for trial in ("0", "1"):
            objs = [float(r["objective_bits"]) for r in rows if r["trial"] == trial]
            assert all(objs[i] >= objs[i + 1] - 1e-9 for i in range(len(objs) - 1))

    def test_aggregate_means_exact(self, tmp_path):
        cfg = build_config(dict(SMALL_SWEEP))
        info = run_sweep(cfg, out_dir=str(tmp_path))
        rows = read_rows(info["rows_path"])
        agg = read_rows(info["agg_path"])
        for entry in agg:
            values = [
                float(r["objective_bits"])
                for r in rows
                if r["sweep_value"] == entry["sweep_value"] and r["status"] != "infeasible"
            ]
            assert int(entry["rows"]) == len(values)
            mean = float(np.mean(np.array(values)))
            assert abs(float(entry["objective_mean"]) - mean) <= 1e-12 * max(1.0, abs(mean))

    def test_byte_identical_reruns(self, tmp_path):
        cfg = build_config(dict(SMALL_SWEEP))
        info1 = run_sweep(cfg, out_dir=str(tmp_path / "a"))
        info2 = run_sweep(cfg, out_dir=str(tmp_path / "b"))
        for key in ("rows_path", "agg_path"):
            with open(info1[key], "rb") as fh:
                b1 = fh.read()
            with open(info2[key], "rb") as fh:
                b2 = fh.read()
            assert b1 == b2

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        serial = dict(SMALL_SWEEP)
        parallel = dict(SMALL_SWEEP)
        parallel["runtime.workers"] = "2"
        info1 = run_sweep(build_config(serial), out_dir=str(tmp_path / "s"))
        info2 = run_sweep(build_config(parallel), out_dir=str(tmp_path / "p"))
        with open(info1["rows_path"], "rb") as fh:
            b1 = fh.read()
        with open(info2["rows_path"], "rb") as fh:
            b2 = fh.read()
        assert b1 == b2

    def test_infeasible_points_recorded(self, tmp_path):
        cfg = build_config({
            "seed": "42", "trials": "1", "users.count": "1",
            "sweep.kind": "rmin", "sweep.values": "0.5,50.0",
            "runtime.workers": "1",
        })
        info = run_sweep(cfg, out_dir=str(tmp_path))
        rows = read_rows(info["rows_path"])
        statuses = [r["status"] for r in rows]
        assert "infeasible" in statuses  # 50 bits/s/Hz is beyond any bound
        assert info["solved"] == 1
        infeasible = [r for r in rows if r["status"] == "infeasible"][0]
        assert infeasible["objective_bits"] == ""

    def test_users_sweep(self, tmp_path):
        cfg = build_config({
            "seed": "42", "trials": "1",
            "sweep.kind": "users", "sweep.values": "1,2",
            "rf.los_reference_gain": "0.1",
            "runtime.workers": "1",
        })
        info = run_sweep(cfg, out_dir=str(tmp_path))
        rows = read_rows(info["rows_path"])
        assert [r["users"] for r in rows] == ["1", "2"]

    def test_emitted_allocations_revalidate(self, tmp_path):
        # round-trip audit: rows parse back into Allocations that satisfy
        # the budgets and the row's own minimum-rate column
        cfg = build_config(dict(SMALL_SWEEP))
        info = run_sweep(cfg, out_dir=str(tmp_path))
        scenario, base_fs = generate_scenario(
            build_config({k: v for k, v in SMALL_SWEEP.items() if not k.startswith("sweep")}), 0
        )
        for row in read_rows(info["rows_path"]):
            tau_dl = [float(x) for x in row["tau_dl"].split(",")]
            tau_ul = [float(x) for x in row["tau_ul"].split(",")]
            alloc = Allocation(tau_dl, tau_ul)
            fs = FeasibleSet(base_fs.rate_coeffs, float(row["r_min"]))
            if row["trial"] == "0":
                assert allocation_violation(fs, alloc) <= 1e-8

    def test_sweep_requires_kind(self, tmp_path):
        cfg = build_config({"seed": "1"})
        with pytest.raises(ConfigError, match="sweep.kind"):
            run_sweep(cfg, out_dir=str(tmp_path))


class TestReportAndSolve:
    def test_fig4_report(self, tmp_path):
        cfg = preset_config("fig4", {"output.dir": str(tmp_path)})
        info = run_report(cfg)
        rows = read_rows(info["report_path"])
        assert len(rows) == 4
        tau_dl = np.array([float(r["tau_dl"]) for r in rows])
        assert int(np.sum(tau_dl > 0.01)) == 1
        for r in rows:
            assert float(r["vlc_gain"]) > 0

    def test_solve_with_oracle(self):
        cfg = build_config({
            "seed": "3", "users.count": "1", "rate.min_fraction": "0.4",
            "rf.los_reference_gain": "0.1",
        })
        out = run_solve(cfg, oracle=True)
        assert out["oracle"].passed

    def test_solve_oracle_rejects_large_k(self):
        cfg = build_config({"seed": "3", "users.count": "3"})
        with pytest.raises(ConfigError, match="K <= 2"):
            run_solve(cfg, oracle=True)


class TestCli:
    def test_solve_exit_zero(self, tmp_path, capsys):
        code = cli_main([
            "solve", "--preset", "fig4", "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "objective_bits" in out

    def test_config_error_exit_two(self, capsys):
        code = cli_main(["solve", "--config", "/nonexistent.txt"])
        err = capsys.readouterr().err
        assert code == 2
        assert "config error" in err

    def test_missing_seed_exit_two(self, tmp_path, capsys):
        path = tmp_path / "c.txt"
        path.write_text("users.count = 2\n")
        code = cli_main(["solve", "--config", str(path)])
        assert code == 2

    def test_sweep_writes_files(self, tmp_path, capsys):
        path = tmp_path / "c.txt"
        path.write_text("\n".join(f"{k} = {v}" for k, v in SMALL_SWEEP.items()) + "\n")
        code = cli_main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "sweep_rows.csv").exists()
        assert (tmp_path / "o" / "sweep_agg.csv").exists()

    def test_infeasible_everywhere_exit_three(self, tmp_path, capsys):
        path = tmp_path / "c.txt"
        path.write_text(
            "seed = 1\ntrials = 1\nusers.count = 1\n"
            "sweep.kind = rmin\nsweep.values = 99.0\nruntime.workers = 1\n"
        )
        code = cli_main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 3

    def test_report_command(self, tmp_path, capsys):
        code = cli_main(["report", "--preset", "fig4", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "allocation_report.csv").exists()

    def test_seed_override(self, tmp_path, capsys):
        code = cli_main(["solve", "--preset", "fig4", "--seed", "5", "--out", str(tmp_path)])
        assert code == 0
