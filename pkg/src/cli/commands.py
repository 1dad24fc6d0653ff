"""
Command-line front door.

    simulate         one episode, per-step CSV and JSONL trace
    compare          policies side by side over a seed range
    sweep            loss versus UAV count, buffer size or sensor count
    train-attention  episodes with one attention update each, checkpoint at the end
"""

import argparse
import copy
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import List, Optional

import pandas as pd
from sqlalchemy.exc import SQLAlchemyError

from ai.attention import AttentionError, AttentionRanker
from ai.llm_client import LlmError
from protocol.contact import IllegalTransitionError
from protocol.messages import CodecError
from settings import ConfigError, configure_logging, load_config
from simulation.config import POLICIES, SimConfig
from simulation.episode import run_episode
from simulation.experiment import default_jobs, run_experiment
from simulation.rng import make_stream
from storage.results_store import ResultsStore
from world.state import WorldError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

SWEEP_AXES = {
    "uavs": ("simulation", "num_uavs"),
    "buffer": ("world", "queue_cap"),
    "sensors": ("simulation", "num_sensors"),
}
DEFAULT_COMPARE = ("max_gain", "greedy", "icl")


@dataclass
class ExperimentPlan:
    command: str
    config_file: Optional[str]
    out_dir: str
    seeds: List[int]
    policies: List[str] = field(default_factory=list)
    overrides: List[str] = field(default_factory=list)
    jobs: int = 1
    axis: Optional[str] = None
    values: List[int] = field(default_factory=list)
    episodes: int = 10
    learning_rate: Optional[float] = None

    @property
    def label(self):
        if not self.config_file:
            return "default"
        return os.path.splitext(os.path.basename(self.config_file))[0]


def parse_seeds(text):
    """`N..M` (inclusive) or a comma list."""
    text = text.strip()
    try:
        if ".." in text:
            start, end = text.split("..", 1)
            start, end = int(start), int(end)
            if end < start:
                raise ConfigError(f"Seed range {text!r} is empty")
            return list(range(start, end + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"Bad seed list {text!r}, expected N..M or a comma list") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON settings file (built-in defaults when omitted)")
    common.add_argument("--seed", type=int, default=None, help="Episode seed")
    common.add_argument("--seeds", default=None, help="Seed range N..M or comma list")
    common.add_argument("--policy", action="append", default=[], choices=POLICIES, help="Policy (repeatable)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                        help="Override a setting, e.g. --set world.queue_cap=60")
    common.add_argument("--jobs", type=int, default=None, help="Parallel episodes (default: CPU count)")
    common.add_argument("--out", default=None, help="Output directory")

    parser = argparse.ArgumentParser(prog="uavsim", description="Multi-UAV data collection simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Run one episode")
    sub.add_parser("compare", parents=[common], help="Compare policies over seeds")
    sweep = sub.add_parser("sweep", parents=[common], help="Loss versus one world parameter")
    sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sweep.add_argument("--values", required=True, help="Strictly increasing comma list, e.g. 3,4,5")
    train = sub.add_parser("train-attention", parents=[common], help="Train the attention ranker")
    train.add_argument("--episodes", type=int, default=10)
    train.add_argument("--lr", type=float, default=None, help="Learning rate (default attention.learning_rate)")
    return parser


def plan_from_args(args, settings):
    if args.seeds:
        seeds = parse_seeds(args.seeds)
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [int(settings["simulation"]["seed"])]
    if not seeds:
        raise ConfigError("No seeds to run")

    values = []
    if getattr(args, "values", None):
        try:
            values = [int(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"Sweep values must be integers: {args.values!r}") from None

    return ExperimentPlan(
        command=args.command,
        config_file=args.config,
        out_dir=args.out or settings["storage"]["out_dir"],
        seeds=seeds,
        policies=list(args.policy),
        overrides=list(args.overrides),
        jobs=args.jobs if args.jobs is not None else default_jobs(),
        axis=getattr(args, "axis", None),
        values=values,
        episodes=getattr(args, "episodes", 10),
        learning_rate=getattr(args, "lr", None),
    )


def open_store(plan, settings):
    return ResultsStore(plan.out_dir, settings["storage"]["database"])


def cmd_simulate(plan, settings):
    """One episode: per-step CSV, JSONL trace, run index row."""
    policy = plan.policies[0] if plan.policies else None
    cfg = SimConfig.from_settings(settings, label=plan.label, seed=plan.seeds[0], policy=policy)
    result = run_episode(cfg)

    steps = [r for r in result.trace if r["type"] == "step"]
    table = pd.DataFrame(steps).drop(columns=["type"])
    for i in range(cfg.num_uavs):
        table[f"velocity_uav{i}"] = [row[i] for row in result.velocity_trace]

    store = open_store(plan, settings)
    stem = f"episode_{cfg.policy}_seed{cfg.seed}"
    csv_path = store.write_csv_atomic(table, stem + ".csv", seed=cfg.seed, policy=cfg.policy, config=cfg.label)
    store.write_trace(result.trace, stem + ".jsonl")
    store.add_run("simulate", cfg.label, cfg.policy, cfg.seed, result.packet_loss,
                  result.f_total, result.g_total, csv_path)

    print("=" * 80)
    print(f"🛩️  EPISODE {cfg.label} / {cfg.policy} / seed {cfg.seed}")
    print("=" * 80)
    print(f"  Packet loss: {result.packet_loss} packets ({result.total_loss} events: "
          f"f={result.f_total}, g={result.g_total})")
    print(f"  Generated: {result.ledger.generated}  Delivered: {result.ledger.delivered}  "
          f"Overflow: {result.ledger.lost_overflow}  Comm: {result.ledger.lost_comm}")
    print(f"  Contacts acked: {result.acks}  Timeouts: {result.timeouts}  Conflicts: {result.conflicts}")
    if result.fallbacks:
        print(f"  ⚠️ LLM fallbacks: {result.fallbacks} (parse failures: {result.parse_failures})")
    print(f"\n✅ Results: {csv_path}")
    return EXIT_OK


def comparison_table(summary, policies):
    """Mean/std per policy, reduction against the first policy and regret against greedy."""
    table = summary[["policy", "episodes", "mean_loss", "std_loss", "min_loss", "max_loss"]].copy()
    base = float(table["mean_loss"].iloc[0])
    table["reduction_pct"] = [0.0 if base == 0 else (base - m) / base * 100.0 for m in table["mean_loss"]]
    if "greedy" in policies:
        greedy_mean = float(table.loc[table["policy"] == "greedy", "mean_loss"].iloc[0])
        table["regret_vs_greedy"] = table["mean_loss"] - greedy_mean
    return table.reset_index(drop=True)


def cmd_compare(plan, settings):
    policies = plan.policies or list(DEFAULT_COMPARE)
    if len(policies) < 2:
        raise ConfigError("compare needs at least two --policy values")
    cfg = SimConfig.from_settings(settings, label=plan.label)
    tables = run_experiment([cfg], policies, plan.seeds, jobs=plan.jobs)
    table = comparison_table(tables.summary, policies)

    store = open_store(plan, settings)
    header = {"seeds": _seed_text(plan.seeds), "policies": ",".join(policies), "config": cfg.label}
    csv_path = store.write_csv_atomic(table, "compare.csv", **header)
    store.write_csv_atomic(tables.episodes, "compare_episodes.csv", **header)
    store.add_runs("compare", tables.episodes, csv_path)

    print("=" * 80)
    print(f"📊 POLICY COMPARISON ({cfg.label}, seeds {_seed_text(plan.seeds)})")
    print("=" * 80)
    for row in table.to_dict("records"):
        line = (f"  {row['policy']:<18} mean {row['mean_loss']:>9.2f}  std {row['std_loss']:>8.2f}  "
                f"reduction {row['reduction_pct']:>7.2f}%")
        if "regret_vs_greedy" in row:
            line += f"  regret vs greedy (proxy) {row['regret_vs_greedy']:>8.2f}"
        print(line)
    print(f"\n✅ Results: {csv_path}")
    return EXIT_OK


def sweep_settings(settings, axis, value):
    section, key = SWEEP_AXES[axis]
    swept = copy.deepcopy(settings)
    swept[section][key] = value
    if axis == "sensors":
        swept["simulation"]["top_k"] = min(int(swept["simulation"]["top_k"]), value)
        if swept["world"]["arrival_rates"] is not None or swept["world"]["sensor_positions"] is not None:
            raise ConfigError("Sensor sweeps need arrival_rate/random placement, not per-sensor lists")
    return swept


def cmd_sweep(plan, settings):
    if not plan.values:
        raise ConfigError("sweep needs at least one --values entry")
    if any(b <= a for a, b in zip(plan.values, plan.values[1:])):
        raise ConfigError(f"Sweep values must be strictly increasing: {plan.values}")
    policies = plan.policies or ["greedy"]
    configs = [
        SimConfig.from_settings(sweep_settings(settings, plan.axis, v), label=f"{plan.axis}={v}")
        for v in plan.values
    ]
    tables = run_experiment(configs, policies, plan.seeds, jobs=plan.jobs)
    table = tables.summary.copy()
    table.insert(0, "value", [int(label.split("=", 1)[1]) for label in table["config"]])
    table.insert(0, "axis", plan.axis)
    table = table.drop(columns=["config"])

    store = open_store(plan, settings)
    name = f"sweep_{plan.axis}.csv"
    csv_path = store.write_csv_atomic(table, name, seeds=_seed_text(plan.seeds), policies=",".join(policies),
                                      config=plan.label)
    store.add_runs("sweep", tables.episodes, csv_path)

    print("=" * 80)
    print(f"📈 SWEEP over {plan.axis} ({plan.label}, seeds {_seed_text(plan.seeds)})")
    print("=" * 80)
    for row in table.to_dict("records"):
        print(f"  {plan.axis}={row['value']:<4} {row['policy']:<18} mean {row['mean_loss']:>9.2f}  "
              f"std {row['std_loss']:>8.2f}")
    print(f"\n✅ Results: {csv_path}")
    return EXIT_OK


def cmd_train_attention(plan, settings):
    if plan.episodes < 1:
        raise ConfigError("train-attention needs --episodes >= 1")
    policy = plan.policies[0] if plan.policies else "icl"
    base = SimConfig.from_settings(settings, label=plan.label, policy=policy)
    lr = base.learning_rate if plan.learning_rate is None else plan.learning_rate
    ranker = AttentionRanker.from_settings(
        make_stream(base.seed, "init"), d_prime=base.d_prime, init_scale=base.init_scale,
        model_file=base.checkpoint,
    )
    if len(plan.seeds) > 1:
        seeds = [plan.seeds[n % len(plan.seeds)] for n in range(plan.episodes)]
    else:
        seeds = [plan.seeds[0] + n for n in range(plan.episodes)]

    print("=" * 80)
    print(f"📚 TRAINING ATTENTION ({plan.episodes} episodes, lr={lr})")
    print("=" * 80)
    rows = []
    for episode, seed in enumerate(seeds):
        result = run_episode(replace(base, seed=seed), attention_params=ranker.params)
        outcome = ranker.train_step(result.attention_feedback, lr)
        rows.append({
            "episode": episode,
            "seed": seed,
            "packet_loss": result.packet_loss,
            "surrogate_loss": outcome.loss,
            "aborted": outcome.aborted,
        })
        print(f"  episode {episode:>3}  seed {seed:>4}  packet loss {result.packet_loss:>6}  "
              f"surrogate {outcome.loss:.4f}{'  (aborted)' if outcome.aborted else ''}")

    store = open_store(plan, settings)
    checkpoint = ranker.save_model(store.path("attention_params.txt"))
    table = pd.DataFrame(rows, columns=["episode", "seed", "packet_loss", "surrogate_loss", "aborted"])
    csv_path = store.write_csv_atomic(table, "train_attention.csv", seeds=_seed_text(seeds), policy=policy,
                                      config=plan.label, lr=lr)
    for row in rows:
        store.add_run("train-attention", plan.label, policy, row["seed"], row["packet_loss"], csv_path=csv_path)
    print(f"\n✅ Checkpoint: {checkpoint}")
    print(f"✅ Results: {csv_path}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "train-attention": cmd_train_attention,
}


def _seed_text(seeds):
    seeds = list(seeds)
    if len(seeds) > 1 and seeds == list(range(seeds[0], seeds[0] + len(seeds))):
        return f"{seeds[0]}..{seeds[-1]}"
    return ",".join(str(s) for s in seeds)


def main(argv=None):
    """
    Parse arguments, load configuration and run one command

    Returns:
        Exit code: 0 ok, 2 config error, 3 runtime error, 4 IO error
    """
    args = build_parser().parse_args(argv)
    try:
        settings = load_config(args.config, args.overrides)
        configure_logging(settings)
        plan = plan_from_args(args, settings)
        return COMMANDS[plan.command](plan, settings)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SQLAlchemyError) as e:
        print(f"❌ IO error: {e}", file=sys.stderr)
        return EXIT_IO
    except (WorldError, AttentionError, LlmError, IllegalTransitionError, CodecError, ValueError) as e:
        print(f"❌ Runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
