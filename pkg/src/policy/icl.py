"""
Scheduling policies behind one interface.

`IclPolicy` is the in-context loop: it prompts the model with the task
description, recent demonstrations and the attention-pruned observation,
and falls back to the greedy queue-aware rule whenever the completion or
its parsing fails.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ai.llm_client import LlmClient, LlmError
from policy.baselines import greedy_queue_aware_policy, max_channel_gain_policy, random_policy
from policy.decision import DecisionParseError, parse_decision
from policy.prompt import ExampleBuffer, build_prompt, default_task_description, record_feedback

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecisionOutcome:
    decision: object
    source: str = "policy"
    error: Optional[str] = None
    shown_ids: Tuple[int, ...] = ()
    prompt_chars: int = 0


def prune_for_prompt(ranking, claimed, k):
    """
    Top-k sensor ids by importance, skipping sensors other UAVs already claimed

    Falls back to the plain top-k when every ranked sensor is claimed.
    """
    ids = np.asarray(ranking.sensor_ids)
    order = np.lexsort((ids, -np.asarray(ranking.scores)))
    ranked = [int(ids[i]) for i in order]
    taken = set(claimed)
    free = [i for i in ranked if i not in taken]
    return tuple((free or ranked)[:k])


class SchedulingPolicy:
    name = "base"

    def decide(self, obs, ranking=None):
        raise NotImplementedError

    def observe_feedback(self, realized_loss):
        """Called once per step after the step loss is known."""


class MaxGainPolicy(SchedulingPolicy):
    name = "max_gain"

    def decide(self, obs, ranking=None):
        return DecisionOutcome(max_channel_gain_policy(obs), shown_ids=obs.sensor_ids)


class GreedyPolicy(SchedulingPolicy):
    name = "greedy"

    def decide(self, obs, ranking=None):
        return DecisionOutcome(greedy_queue_aware_policy(obs), shown_ids=obs.sensor_ids)


class RandomPolicy(SchedulingPolicy):
    name = "random"

    def __init__(self, rng):
        self.rng = rng

    def decide(self, obs, ranking=None):
        return DecisionOutcome(random_policy(obs, self.rng), shown_ids=obs.sensor_ids)


class IclPolicy(SchedulingPolicy):
    """
    In-context learning policy

    Args:
        client: LlmClient used for completions
        task: TaskDescription
        buffer: ExampleBuffer owned by this episode
        use_attention: Prune the observation to the attention top-k
        top_k: Number of sensors kept in the prompt
        char_budget: Prompt length guard
    """

    def __init__(self, client, task, buffer, use_attention=True, top_k=3, char_budget=None, name="icl"):
        self.client = client
        self.task = task
        self.buffer = buffer
        self.use_attention = use_attention
        self.top_k = top_k
        self.char_budget = char_budget
        self.name = name
        self.fallbacks = 0
        self.parse_failures = 0
        self._pending = []

    def decide(self, obs, ranking=None):
        if self.use_attention and ranking is not None:
            pruned = prune_for_prompt(ranking, obs.claimed, self.top_k)
        else:
            pruned = obs.sensor_ids
        prompt = build_prompt(self.task, self.buffer, obs, pruned, self.char_budget)
        shown = obs if prompt.full_observation_fallback else obs.restricted(pruned)

        try:
            text, _ = self.client.complete(prompt.text)
            decision = parse_decision(text, obs)
            outcome = DecisionOutcome(decision, "llm", None, shown.sensor_ids, len(prompt.text))
        except (LlmError, DecisionParseError) as e:
            self.fallbacks += 1
            if isinstance(e, DecisionParseError):
                self.parse_failures += 1
            logger.warning("⚠️ UAV %d step %d: %s (%s), using greedy decision",
                           obs.uav_id, obs.step, type(e).__name__, e)
            outcome = DecisionOutcome(
                greedy_queue_aware_policy(obs), "fallback", type(e).__name__, shown.sensor_ids, len(prompt.text)
            )

        self._pending.append((shown, outcome.decision))
        return outcome

    def observe_feedback(self, realized_loss):
        for shown, decision in self._pending:
            record_feedback(self.buffer, shown, decision, realized_loss)
        self._pending = []


def make_policy(name, cfg, streams, client=None):
    """
    Policy instance for one episode

    Args:
        name: icl, icl_no_attention, max_gain, greedy or random
        cfg: SimConfig
        streams: Named random streams (random policy draws from `policy`)
        client: Optional LlmClient for the ICL policies
    """
    if name == "max_gain":
        return MaxGainPolicy()
    if name == "greedy":
        return GreedyPolicy()
    if name == "random":
        return RandomPolicy(streams["policy"])
    if name in ("icl", "icl_no_attention"):
        return IclPolicy(
            client=client or LlmClient(cfg.llm),
            task=default_task_description(cfg.queue_cap, cfg.gain_threshold, cfg.v_max),
            buffer=ExampleBuffer(cfg.buffer_capacity),
            use_attention=name == "icl" and cfg.attention_enabled,
            top_k=cfg.top_k,
            char_budget=cfg.prompt_char_budget,
            name=name,
        )
    raise ValueError(f"Unknown policy: {name}")
