"""Multi-seed, multi-policy experiment runner producing pandas tables."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import pandas as pd

from policy.evaluation import evaluate_policy
from simulation.episode import run_episode

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = [
    "config", "policy", "seed", "packet_loss", "loss_events", "f_events", "g_events",
    "generated", "delivered", "lost_overflow", "lost_comm", "fallbacks", "parse_failures",
    "conflicts", "timeouts", "acks", "mean_velocity", "llm_latency_s",
]
SUMMARY_COLUMNS = ["config", "policy", "episodes", "mean_loss", "std_loss", "min_loss", "max_loss"]


@dataclass
class ExperimentTables:
    episodes: pd.DataFrame
    summary: pd.DataFrame


def _run_job(cfg):
    return run_episode(cfg).summary_row()


def default_jobs():
    return os.cpu_count() or 1


def run_experiment(configs, policies, seeds, jobs=1):
    """
    Run every (config, policy, seed) episode

    Args:
        configs: SimConfig list, each with a distinct label
        policies: Policy names
        seeds: Seeds shared by every config and policy
        jobs: Worker processes (1 runs in-process)

    Returns:
        ExperimentTables with one row per episode and per (config, policy)
    """
    if not configs or not policies or not seeds:
        raise ValueError("Experiment needs at least one config, one policy and one seed")
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"Config labels must be unique: {labels}")

    jobs_list = [replace(cfg, policy=policy, seed=int(seed))
                 for cfg in configs for policy in policies for seed in seeds]
    logger.info("🧪 Running %d episodes (%d configs x %d policies x %d seeds, jobs=%d)",
                len(jobs_list), len(configs), len(policies), len(seeds), jobs)

    if jobs <= 1 or len(jobs_list) == 1:
        rows = [_run_job(cfg) for cfg in jobs_list]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_job, jobs_list))

    episodes = pd.DataFrame(rows, columns=EPISODE_COLUMNS)
    config_order = {label: n for n, label in enumerate(labels)}
    policy_order = {name: n for n, name in enumerate(policies)}
    episodes = episodes.assign(
        _c=episodes["config"].map(config_order), _p=episodes["policy"].map(policy_order)
    ).sort_values(["_c", "_p", "seed"], kind="mergesort").drop(columns=["_c", "_p"]).reset_index(drop=True)

    summary_rows = []
    for label in labels:
        for policy in policies:
            subset = episodes[(episodes["config"] == label) & (episodes["policy"] == policy)]
            score = evaluate_policy(sorted(subset["packet_loss"].tolist()))
            summary_rows.append({
                "config": label,
                "policy": policy,
                "episodes": len(score.per_episode),
                "mean_loss": score.mean_score,
                "std_loss": score.std,
                "min_loss": score.min_score,
                "max_loss": score.max_score,
            })
    return ExperimentTables(episodes=episodes, summary=pd.DataFrame(summary_rows, columns=SUMMARY_COLUMNS))
