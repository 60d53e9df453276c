import hashlib
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from sagdp.cli import config_hash, run_command
from sagdp.report import read_trace_jsonl

FAST_CONFIG = {
    "gen": {"count": 2, "n_flights": 30, "peak_demand_per_quarter": 4},
    "train": {
        "n_iter": 40,
        "batch_size": 16,
        "eval_batch_size": 3,
        "eval_interval": 20,
        "expert_noise": 1,
    },
}


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(FAST_CONFIG))
    return str(path)


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def gen_scenarios(tmp_path, fast_config, name="scen", seed=7):
    out = tmp_path / name
    assert run_command(["gen", "--seed", str(seed), "--out", str(out), "--config", fast_config]) == 0
    return out


class TestGen:
    def test_deterministic_bytes(self, tmp_path, fast_config):
        a = gen_scenarios(tmp_path, fast_config, "a")
        b = gen_scenarios(tmp_path, fast_config, "b")
        assert tree_digest(a) == tree_digest(b)

    def test_seed_changes_output(self, tmp_path, fast_config):
        a = gen_scenarios(tmp_path, fast_config, "a", seed=1)
        b = gen_scenarios(tmp_path, fast_config, "b", seed=2)
        assert tree_digest(a) != tree_digest(b)

    def test_manifest_written_with_matching_hash(self, tmp_path, fast_config):
        out = gen_scenarios(tmp_path, fast_config)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["config_hash"] == config_hash(manifest["config"])
        assert manifest["seed"] == 7
        assert "scenario_0001" in manifest["outputs"]


class TestTrain:
    def test_bc_training_outputs(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        out = tmp_path / "bc"
        rc = run_command(
            ["train", "--algo", "bc", "--data", str(scen), "--out", str(out),
             "--config", fast_config, "--seed", "0"]
        )
        assert rc == 0
        for name in ("bc.ckpt", "training_log.csv", "learning_curve.csv",
                     "learning_curve.svg", "manifest.json"):
            assert (out / name).exists()
        log_lines = (out / "training_log.csv").read_text().splitlines()
        assert log_lines[0] == "iter,train_loss,td_term,conservative_term,eval_mean,eval_std"
        assert len(log_lines) == 41  # header + 40 iterations
        curve_lines = (out / "learning_curve.csv").read_text().splitlines()
        assert curve_lines[0] == "iter,mean,std"
        assert len(curve_lines) == 3  # evals at iterations 20 and 40

    def test_train_deterministic(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["train", "--algo", "bc", "--data", str(scen), "--config", fast_config]
        assert run_command(args + ["--out", str(out1)]) == 0
        assert run_command(args + ["--out", str(out2)]) == 0
        assert tree_digest(out1) == tree_digest(out2)

    def test_cql_alpha_zero_loss_equals_td(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        out = tmp_path / "cql0"
        rc = run_command(
            ["train", "--algo", "cql", "--alpha", "0", "--data", str(scen),
             "--out", str(out), "--config", fast_config, "--n-iter", "30"]
        )
        assert rc == 0
        lines = (out / "training_log.csv").read_text().splitlines()[1:]
        assert len(lines) == 30
        for line in lines:
            fields = line.split(",")
            assert fields[1] == fields[2]  # train_loss == td_term, repr-exact


class TestEvalAndReplay:
    def test_eval_baseline(self, tmp_path, fast_config):
        out = tmp_path / "eval"
        rc = run_command(
            ["eval", "--policy", "constant:12", "--out", str(out),
             "--config", fast_config, "--eval-batch-size", "4", "--seed", "3"]
        )
        assert rc == 0
        rows = (out / "eval.csv").read_text().splitlines()
        assert rows[0] == "episode,return" and len(rows) == 5
        summary = (out / "summary.csv").read_text().splitlines()
        assert summary[0] == "mean,std,n"

    def test_eval_checkpoint(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        train_out = tmp_path / "bc"
        run_command(["train", "--algo", "bc", "--data", str(scen), "--out",
                     str(train_out), "--config", fast_config])
        out = tmp_path / "eval"
        rc = run_command(
            ["eval", "--checkpoint", str(train_out / "bc.ckpt"), "--out", str(out),
             "--config", fast_config, "--eval-batch-size", "3"]
        )
        assert rc == 0

    def test_replay_reconciles_with_trace(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        out = tmp_path / "replay"
        rc = run_command(
            ["replay", "--scenario", str(scen / "scenario_0000"), "--policy", "oracle",
             "--out", str(out), "--config", fast_config]
        )
        assert rc == 0
        trace = read_trace_jsonl(out / "trace.jsonl")
        assert len(trace) == 80
        totals = dict(
            line.split(",") for line in (out / "report.csv").read_text().splitlines()[1:]
        )
        gd_hours = sum(r["gd_now"] for r in trace) * 15 / 60
        nh_hours = sum(r["nh"] for r in trace) * 15 / 60
        release = json.loads((scen / "scenario_0000" / "gdp_advisories.csv").read_text().splitlines()[1].split(",")[1])
        planned = trace[release]["gd_plan_quarters"] * 15 / 60
        assert float(totals["realized_ground_delay_hours"]) == gd_hours
        assert float(totals["realized_airborne_delay_hours"]) == nh_hours
        assert float(totals["planned_ground_delay_hours"]) == planned

    def test_replay_svg_is_wellformed_xml(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        out = tmp_path / "replay"
        run_command(["replay", "--scenario", str(scen / "scenario_0000"),
                     "--policy", "constant:8", "--out", str(out), "--config", fast_config])
        tree = ET.parse(out / "report.svg")
        assert tree.getroot().tag.endswith("svg")

    def test_replay_deterministic(self, tmp_path, fast_config):
        scen = gen_scenarios(tmp_path, fast_config)
        outs = []
        for name in ("ra", "rb"):
            out = tmp_path / name
            run_command(["replay", "--scenario", str(scen / "scenario_0000"),
                         "--policy", "oracle", "--out", str(out), "--config", fast_config])
            outs.append(tree_digest(out))
        assert outs[0] == outs[1]


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert run_command(["frobnicate"]) == 1

    def test_no_command_prints_usage(self, capsys):
        assert run_command([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_required_flag(self):
        assert run_command(["gen"]) == 1  # --out is required

    def test_validation_error_is_exit_one(self, tmp_path, fast_config):
        rc = run_command(["replay", "--scenario", str(tmp_path / "nope"),
                          "--policy", "oracle", "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_grad_check_passes(self, tmp_path):
        out = tmp_path / "gc"
        assert run_command(["grad-check", "--seed", "1", "--out", str(out)]) == 0
        payload = json.loads((out / "gradcheck.json").read_text())
        assert payload["max_relative_error"] < 1e-4


class TestBackendIndependence:
    def test_outputs_identical_across_kernel_backends(self, tmp_path, fast_config):
        """All kernels are integer arithmetic, so the fallback must produce
        byte-identical scenario files and checkpoints."""
        import os
        import subprocess
        import sys

        digests = {}
        for backend, flag in (("cython", "0"), ("python", "1")):
            out = tmp_path / backend
            script = (
                "import sys; from sagdp.cli import run_command; "
                "from sagdp.kernels import BACKEND; print(BACKEND); "
                f"sys.exit(run_command(['gen', '--seed', '5', '--out', r'{out}', "
                f"'--config', r'{fast_config}']))"
            )
            env = dict(os.environ, SAGDP_PURE_PY=flag)
            proc = subprocess.run(
                [sys.executable, "-c", script], env=env, capture_output=True, text=True
            )
            assert proc.returncode == 0, proc.stderr
            assert proc.stdout.splitlines()[0] == backend
            digests[backend] = tree_digest(out)
        assert digests["cython"] == digests["python"]
