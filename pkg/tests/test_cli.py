import json

from dualpace.cli import main
from dualpace.model import (
    AllocationInstance,
    TreatmentCatalog,
    UserResponse,
    validate_instance,
    write_instance,
)
from dualpace.serialize import load_json, write_csv


SIM_CONFIG = {
    "stream": {
        "slots_per_day": 4,
        "regime": "stationary",
        "base_rate": 5.0,
        "archetypes": [
            {"rewards": [1.0, 2.0], "costs": [0.5, 1.2], "noise_scale": 0.2}
        ],
    },
    "budget": 8.0,
    "seeds": [0, 1],
    "history_days": 1,
    "policies": [
        {"kind": "ogd"},
        {"kind": "predictive", "forecaster": "oracle", "name": "oracle"},
    ],
}

EVAL_CONFIG = {
    "stream": {
        "slots_per_day": 4,
        "regime": "stationary",
        "base_rate": 4.0,
        "archetypes": [
            {"rewards": [1.0, 2.0], "costs": [0.5, 1.2], "noise_scale": 0.1}
        ],
    },
    "days": 3,
    "methods": ["naive", "seasonal_naive"],
    "horizons": [1, 2],
    "backcast": 8,
}


def write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def instance_file(tmp_path):
    users = [
        UserResponse(user_id=0, arrival_time=0.1, rewards=(1.0, 3.0), costs=(0.5, 2.0)),
        UserResponse(user_id=1, arrival_time=0.6, rewards=(0.8, 1.4), costs=(0.3, 0.9)),
    ]
    inst = validate_instance(
        AllocationInstance(
            users=tuple(users),
            catalog=TreatmentCatalog(count=2, includes_null=False),
            budget=2.0,
        )
    )
    path = tmp_path / "instance.jsonl"
    write_instance(inst, str(path))
    return str(path)


class TestSolve:
    def test_solves_and_writes(self, tmp_path, capsys):
        inst = instance_file(tmp_path)
        out = tmp_path / "out"
        code = main(["solve", "--instance", inst, "--output-dir", str(out)])
        assert code == 0
        sol = load_json(str(out / "solution.json"))
        assert sol["users"] == 2
        assert sol["lambda_star"] >= 0.0
        assert len(sol["assignments"]) == 2
        assert "lambda*" in capsys.readouterr().out
        assert (out / "config.resolved.json").exists()
        assert (out / "run_meta.json").exists()

    def test_certify_adds_bound(self, tmp_path):
        inst = instance_file(tmp_path)
        out = tmp_path / "out"
        code = main(["solve", "--instance", inst, "--certify",
                     "--output-dir", str(out)])
        assert code == 0
        sol = load_json(str(out / "solution.json"))
        cert = sol["certificate"]
        assert cert["dual_bound"] >= cert["best_value"] - 1e-9
        assert cert["gap"] >= -1e-9

    def test_missing_instance_is_io_error(self, tmp_path):
        code = main(["solve", "--instance", str(tmp_path / "nope.jsonl"),
                     "--output-dir", str(tmp_path)])
        assert code == 2

    def test_malformed_instance_is_parse_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        code = main(["solve", "--instance", str(bad),
                     "--output-dir", str(tmp_path)])
        assert code == 3


class TestSimulate:
    def test_runs_and_reports(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SIM_CONFIG)
        out = tmp_path / "out"
        code = main(["simulate", "--config", cfg, "--output-dir", str(out)])
        assert code == 0
        report = load_json(str(out / "report.json"))
        assert report["policies"] == ["ogd", "oracle"]
        assert set(report["aggregates"]) == {"ogd", "oracle"}
        assert len(report["episodes"]["ogd"]) == 2
        for name in ("ogd", "oracle"):
            for ep in report["episodes"][name]:
                assert ep["violation"] == 0.0
        table = capsys.readouterr().out
        assert "mean_reward" in table
        # per-episode CSVs with the pinned header
        csv = (out / "episode_ogd_0.csv").read_text().splitlines()
        assert csv[0] == "slot,lambda,spend,reward,users,decisions"
        assert len(csv) == 1 + SIM_CONFIG["stream"]["slots_per_day"]

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, SIM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--output-dir", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--output-dir", str(b)]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (
            (a / "episode_oracle_1.csv").read_bytes()
            == (b / "episode_oracle_1.csv").read_bytes()
        )

    def test_timestamps_only_in_meta(self, tmp_path):
        cfg = write_config(tmp_path, SIM_CONFIG)
        out = tmp_path / "out"
        main(["simulate", "--config", cfg, "--output-dir", str(out)])
        meta = load_json(str(out / "run_meta.json"))
        assert "started_at" in meta and "finished_at" in meta
        report_text = (out / "report.json").read_text()
        assert "started_at" not in report_text

    def test_unknown_key_rejected(self, tmp_path):
        bad = dict(SIM_CONFIG)
        bad["bogus"] = 1
        cfg = write_config(tmp_path, bad)
        assert main(["simulate", "--config", cfg,
                     "--output-dir", str(tmp_path)]) == 4

    def test_unknown_policy_key_rejected(self, tmp_path):
        bad = json.loads(json.dumps(SIM_CONFIG))
        bad["policies"][0]["learning_rate"] = 0.1
        cfg = write_config(tmp_path, bad)
        assert main(["simulate", "--config", cfg,
                     "--output-dir", str(tmp_path)]) == 4

    def test_bad_json_is_parse_error(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text("{broken")
        assert main(["simulate", "--config", str(cfg),
                     "--output-dir", str(tmp_path)]) == 3

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.json"),
                     "--output-dir", str(tmp_path)]) == 2

    def test_seed_range_form(self, tmp_path):
        cfg_obj = json.loads(json.dumps(SIM_CONFIG))
        cfg_obj["seeds"] = {"start": 3, "count": 2}
        cfg = write_config(tmp_path, cfg_obj)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--output-dir", str(out)]) == 0
        report = load_json(str(out / "report.json"))
        assert report["seeds"] == [3, 4]

    def test_env_output_dir(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, SIM_CONFIG)
        env_out = tmp_path / "env_out"
        monkeypatch.setenv("DUALPACE_OUTPUT_DIR", str(env_out))
        assert main(["simulate", "--config", cfg]) == 0
        assert (env_out / "report.json").exists()

    def test_remote_policy_needs_endpoint(self, tmp_path, monkeypatch):
        monkeypatch.delenv("DUALPACE_ENDPOINT", raising=False)
        cfg_obj = json.loads(json.dumps(SIM_CONFIG))
        cfg_obj["policies"].append(
            {"kind": "predictive", "forecaster": "remote", "name": "svc"}
        )
        cfg = write_config(tmp_path, cfg_obj)
        assert main(["simulate", "--config", cfg,
                     "--output-dir", str(tmp_path)]) == 4

    def test_remote_policy_falls_back_when_down(self, tmp_path):
        cfg_obj = json.loads(json.dumps(SIM_CONFIG))
        cfg_obj["policies"] = [
            {"kind": "predictive", "forecaster": "remote", "name": "svc",
             "endpoint": "stdio:/no/such/binary-xyz", "fallback": "naive"}
        ]
        cfg = write_config(tmp_path, cfg_obj)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--output-dir", str(out)]) == 0
        report = load_json(str(out / "report.json"))
        assert report["policies"] == ["svc"]
        for ep in report["episodes"]["svc"]:
            assert ep["violation"] == 0.0


class TestForecastEval:
    def test_writes_accuracy_table(self, tmp_path, capsys):
        cfg = write_config(tmp_path, EVAL_CONFIG)
        out = tmp_path / "out"
        code = main(["forecast-eval", "--config", cfg, "--output-dir", str(out)])
        assert code == 0
        lines = (out / "forecast_eval.csv").read_text().splitlines()
        assert lines[0] == "method,horizon,mse,mae"
        assert len(lines) == 1 + 2 * 2  # methods x horizons
        assert "seasonal_naive" in capsys.readouterr().out

    def test_too_short_series_rejected(self, tmp_path):
        cfg_obj = json.loads(json.dumps(EVAL_CONFIG))
        cfg_obj["backcast"] = 100
        cfg = write_config(tmp_path, cfg_obj)
        assert main(["forecast-eval", "--config", cfg,
                     "--output-dir", str(tmp_path)]) == 4

    def test_unknown_method_rejected(self, tmp_path):
        cfg_obj = json.loads(json.dumps(EVAL_CONFIG))
        cfg_obj["methods"] = ["prophet"]
        cfg = write_config(tmp_path, cfg_obj)
        assert main(["forecast-eval", "--config", cfg,
                     "--output-dir", str(tmp_path)]) == 4


class TestPace:
    def history_file(self, tmp_path, rates):
        path = tmp_path / "history.csv"
        write_csv(str(path), ["slot_index", "rate"],
                  [[i, r] for i, r in enumerate(rates)])
        return str(path)

    def test_temporal_plan_and_spectrum(self, tmp_path, capsys):
        hist = self.history_file(
            tmp_path, [1.0, 5.0, 1.0, 5.0, 1.0, 5.0, 1.0, 5.0]
        )
        out = tmp_path / "out"
        code = main(["pace", "--history", hist, "--slots-per-day", "4",
                     "--budget", "10", "--output-dir", str(out)])
        assert code == 0
        plan_lines = (out / "plan.csv").read_text().splitlines()
        assert plan_lines[0] == "slot_index,budget"
        assert len(plan_lines) == 5
        spectrum = load_json(str(out / "spectrum.json"))
        assert spectrum["dominant_period"] == 2
        assert "dominant_period=2" in capsys.readouterr().out

    def test_uniform_needs_slots(self, tmp_path):
        out = tmp_path / "out"
        code = main(["pace", "--strategy", "uniform", "--budget", "6",
                     "--slots-per-day", "3", "--output-dir", str(out)])
        assert code == 0
        plan_lines = (out / "plan.csv").read_text().splitlines()
        assert len(plan_lines) == 4
        assert main(["pace", "--strategy", "uniform", "--budget", "6",
                     "--output-dir", str(out)]) == 4

    def test_temporal_needs_history(self, tmp_path):
        assert main(["pace", "--budget", "5",
                     "--output-dir", str(tmp_path)]) == 4

    def test_malformed_history_is_parse_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("slot_index,rate\n0,abc\n")
        assert main(["pace", "--history", str(bad), "--slots-per-day", "1",
                     "--budget", "5", "--output-dir", str(tmp_path)]) == 3
