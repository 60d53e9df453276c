"""Command-line surface: gen, train, eval, replay, grad-check.

Every run resolves its configuration (defaults < config file < flags),
writes a RunManifest to the output directory before any other output, and
is byte-reproducible from that manifest alone.  Exit codes: 0 success,
1 validation/usage error, 2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from . import __version__
from .agents import (
    CqlConfig,
    ExpertPolicy,
    TrainConfig,
    baseline_policy,
    bc_train,
    cql_train,
    episode_seed,
    evaluate,
    load_policy,
)
from .data_model import load_scenario, save_scenario
from .env import EnvConfig, RewardParams
from .errors import SagdpError, ValidationError
from .nn_core import NetSpec, grad_check
from .report import emit_gdp_report, emit_learning_curve
from .scenario_gen import GenConfig, build_dataset, gen_scenario

log = logging.getLogger("sagdp")

DEFAULT_CONFIG = {
    "gen": {
        "count": 20,
        "n_flights": 240,
        "peak_demand_per_quarter": 10,
        "regime_transition": [
            [0.92, 0.06, 0.02],
            [0.30, 0.55, 0.15],
            [0.10, 0.30, 0.60],
        ],
        "runway_count_range": [1, 2],
        "scope_mix": 0.75,
    },
    "env": {
        "paar_max": 16,
        "default_paar": 12,
        "reward": {
            "qtr": 15.0,
            "c_gnd": 1.0,
            "c_air": 2.5,
            "p": 10.0,
            "n": 8,
            "hold_benchmark": 10,
        },
    },
    "net": {"hidden": [64, 64], "activation": "relu"},
    "train": {
        "n_iter": 500,
        "batch_size": 64,
        "eval_batch_size": 100,
        "eval_interval": 100,
        "seed": 0,
        "lr": 0.001,
        "expert_noise": 1,
    },
    "cql": {"alpha": 1.0, "gamma": 0.99, "target_sync_period": 200, "reward_scale": 0.001},
}


class UsageError(SagdpError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); report as code 1
        raise UsageError(f"{message}\n{self.format_usage()}")


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(path: str | None) -> dict:
    cfg = DEFAULT_CONFIG
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}", field="config")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = _deep_merge(cfg, user)
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: dict, seed, inputs, outputs) -> None:
    """Audit record, written before any other output of the run."""
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _gen_config(cfg: dict, seed: int) -> GenConfig:
    g = cfg["gen"]
    return GenConfig(
        seed=seed,
        n_flights=int(g["n_flights"]),
        peak_demand_per_quarter=int(g["peak_demand_per_quarter"]),
        regime_transition=tuple(tuple(row) for row in g["regime_transition"]),
        runway_count_range=tuple(int(v) for v in g["runway_count_range"]),
        scope_mix=float(g["scope_mix"]),
    )


def _env_config(cfg: dict) -> EnvConfig:
    e = cfg["env"]
    return EnvConfig(
        paar_max=int(e["paar_max"]),
        default_paar=int(e["default_paar"]),
        reward=RewardParams(**e["reward"]),
    )


def _net_spec(cfg: dict, n_in: int, n_out: int) -> NetSpec:
    n = cfg["net"]
    return NetSpec.dense((n_in, *[int(h) for h in n["hidden"]], n_out), n["activation"])


def _load_scenarios(data_dir: str):
    root = Path(data_dir)
    dirs = sorted(p for p in root.glob("scenario_*") if p.is_dir())
    if not dirs:
        raise ValidationError(f"no scenario_* directories under {data_dir}", field="data")
    return [load_scenario(p) for p in dirs]


def _policy_from_args(args, cfg):
    env_config = _env_config(cfg)
    if getattr(args, "checkpoint", None):
        return load_policy(args.checkpoint), [args.checkpoint]
    spec = getattr(args, "policy", None)
    if spec is None:
        raise ValidationError("provide --checkpoint or --policy", field="policy")
    if spec == "oracle":
        return baseline_policy("ORACLE_CAPACITY", env_config=env_config), []
    if spec == "expert":
        return ExpertPolicy(env_config), []
    if spec.startswith("constant:"):
        return baseline_policy("CONSTANT", int(spec.split(":", 1)[1]), env_config=env_config), []
    raise ValidationError(
        f"unknown policy {spec!r}; use oracle, expert or constant:<rate>", field="policy"
    )


def _write_training_log(rows, path: Path) -> None:
    def fmt(v):
        return "" if v is None else repr(v)

    lines = ["iter,train_loss,td_term,conservative_term,eval_mean,eval_std"]
    for r in rows:
        lines.append(
            f"{r.iteration},{fmt(r.train_loss)},{fmt(r.td_term)},"
            f"{fmt(r.conservative_term)},{fmt(r.eval_mean)},{fmt(r.eval_std)}"
        )
    path.write_text("\n".join(lines) + "\n")


# --- sub-commands -------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else 0
    count = args.count if args.count is not None else int(cfg["gen"]["count"])
    out = Path(args.out)
    names = [f"scenario_{i:04d}" for i in range(count)]
    write_manifest(out, "gen", cfg, seed, inputs=[], outputs=names)
    for i, name in enumerate(names):
        scenario = gen_scenario(_gen_config(cfg, episode_seed(seed, i)))
        save_scenario(scenario, out / name)
    log.info("gen: wrote %d scenarios to %s", count, out)
    print(f"wrote {count} scenarios to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_iter is not None:
        overrides["n_iter"] = args.n_iter
    if args.eval_batch_size is not None:
        overrides["eval_batch_size"] = args.eval_batch_size
    cfg = _deep_merge(cfg, {"train": overrides})
    if args.alpha is not None:
        cfg = _deep_merge(cfg, {"cql": {"alpha": args.alpha}})
    tr = cfg["train"]
    train_config = TrainConfig(
        n_iter=int(tr["n_iter"]),
        batch_size=int(tr["batch_size"]),
        eval_batch_size=int(tr["eval_batch_size"]),
        eval_interval=int(tr["eval_interval"]),
        seed=int(tr["seed"]),
    )
    env_config = _env_config(cfg)
    out = Path(args.out)
    ckpt_name = f"{args.algo}.ckpt"
    outputs = [ckpt_name, "training_log.csv", "learning_curve.csv", "learning_curve.svg"]
    write_manifest(out, f"train --algo {args.algo}", cfg, train_config.seed,
                   inputs=[args.data], outputs=outputs)

    scenarios = _load_scenarios(args.data)
    log.info("train: %d scenarios from %s", len(scenarios), args.data)
    dataset = build_dataset(
        scenarios,
        ExpertPolicy(env_config),
        noise=int(tr["expert_noise"]),
        seed=train_config.seed,
        env_config=env_config,
    )
    log.info("train: dataset holds %d transitions", len(dataset))

    eval_family = _gen_config(cfg, seed=0)

    def eval_fn(policy, iteration):
        result = evaluate(
            policy,
            eval_family,
            train_config.eval_batch_size,
            seed=train_config.seed,
            env_config=env_config,
        )
        log.info("iter %d: eval mean %.2f std %.3f", iteration, result.mean, result.std)
        return result.mean, result.std

    if args.algo == "bc":
        spec = _net_spec(cfg, dataset.obs.shape[1], 8)
        policy, rows = bc_train(
            dataset,
            spec,
            train_config,
            lr=float(tr["lr"]),
            paar_max=env_config.paar_max,
            eval_fn=eval_fn,
        )
        policy.save(out / ckpt_name)
    else:
        c = cfg["cql"]
        agent_config = CqlConfig(
            alpha=float(c["alpha"]),
            gamma=float(c["gamma"]),
            target_sync_period=int(c["target_sync_period"]),
            lr=float(tr["lr"]),
            reward_scale=float(c["reward_scale"]),
        )
        spec = _net_spec(cfg, dataset.obs.shape[1], 8 * (env_config.paar_max + 1))
        agent, rows = cql_train(
            dataset,
            spec,
            agent_config,
            train_config,
            paar_max=env_config.paar_max,
            eval_fn=eval_fn,
        )
        agent.save(out / ckpt_name)
    _write_training_log(rows, out / "training_log.csv")
    emit_learning_curve(rows, out / "learning_curve.csv", out / "learning_curve.svg")
    print(f"trained {args.algo}; final loss {rows[-1].train_loss!r}; checkpoint {out / ckpt_name}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else 0
    n = args.eval_batch_size if args.eval_batch_size is not None else int(
        cfg["train"]["eval_batch_size"]
    )
    out = Path(args.out)
    policy, inputs = _policy_from_args(args, cfg)
    write_manifest(out, "eval", cfg, seed, inputs=inputs, outputs=["eval.csv", "summary.csv"])
    result = evaluate(policy, _gen_config(cfg, seed=0), n, seed, env_config=_env_config(cfg))
    lines = ["episode,return"] + [f"{i},{r!r}" for i, r in enumerate(result.returns)]
    (out / "eval.csv").write_text("\n".join(lines) + "\n")
    (out / "summary.csv").write_text(
        "mean,std,n\n" + f"{result.mean!r},{result.std!r},{n}\n"
    )
    print(f"eval over {n} episodes: mean {result.mean:.2f} std {result.std:.4f}")
    return 0


def cmd_replay(args) -> int:
    cfg = resolve_config(args.config)
    out = Path(args.out)
    policy, inputs = _policy_from_args(args, cfg)
    scenario = load_scenario(args.scenario)
    write_manifest(
        out,
        "replay",
        cfg,
        None,
        inputs=[args.scenario, *inputs],
        outputs=["trace.jsonl", "report.csv", "report_quarters.csv", "report.svg"],
    )
    totals = emit_gdp_report(scenario, policy, out, env_config=_env_config(cfg))
    for key in sorted(totals):
        print(f"{key}: {totals[key]:g}")
    return 0


def cmd_grad_check(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else 0
    worst = 0.0
    for activation in ("relu", "tanh"):
        spec = NetSpec.dense((122, 32, 32, 8), activation)
        err = grad_check(spec, seed)
        print(f"{activation}: max relative error {err:.3e}")
        worst = max(worst, err)
    if args.out is not None:
        out = Path(args.out)
        write_manifest(out, "grad-check", cfg, seed, inputs=[], outputs=["gradcheck.json"])
        (out / "gradcheck.json").write_text(
            json.dumps({"max_relative_error": worst}, sort_keys=True) + "\n"
        )
    print(f"overall max relative error {worst:.3e}")
    return 0 if worst < 1e-4 else 1


# --- entry point --------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="sagdp", description="single-airport GDP simulation and offline RL")
    sub = parser.add_subparsers(dest="command")

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=out_required, help="output directory")

    p_gen = sub.add_parser("gen", help="generate synthetic scenarios")
    common(p_gen)
    p_gen.add_argument("--count", type=int, help="number of scenarios")

    p_train = sub.add_parser("train", help="train an offline agent")
    common(p_train)
    p_train.add_argument("--algo", choices=("bc", "cql"), required=True)
    p_train.add_argument("--data", required=True, help="directory of scenario_* folders")
    p_train.add_argument("--alpha", type=float, help="CQL conservatism weight")
    p_train.add_argument("--n-iter", type=int)
    p_train.add_argument("--eval-batch-size", type=int)

    p_eval = sub.add_parser("eval", help="evaluate a policy on fresh scenarios")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="trained policy checkpoint")
    p_eval.add_argument("--policy", help="oracle, expert or constant:<rate>")
    p_eval.add_argument("--eval-batch-size", type=int)

    p_replay = sub.add_parser("replay", help="replay one scenario and emit the GDP report")
    common(p_replay)
    p_replay.add_argument("--scenario", required=True, help="scenario directory")
    p_replay.add_argument("--checkpoint")
    p_replay.add_argument("--policy")

    p_gc = sub.add_parser("grad-check", help="verify backprop against finite differences")
    common(p_gc, out_required=False)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("SAGDP_LOG_LEVEL", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run_command(argv) -> int:
    _setup_logging()
    parser = build_parser()
    handlers = {
        "gen": cmd_gen,
        "train": cmd_train,
        "eval": cmd_eval,
        "replay": cmd_replay,
        "grad-check": cmd_grad_check,
    }
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            print(parser.format_usage(), file=sys.stderr)
            return 1
        return handlers[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SagdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:  # bad input paths are a caller problem, not a crash
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - report and map to the internal-error code
        traceback.print_exc()
        return 2


def main(argv=None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
