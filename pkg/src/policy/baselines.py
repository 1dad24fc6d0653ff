"""Baseline scheduling policies: max channel gain, greedy queue-aware, random."""

import logging

import numpy as np

from policy.decision import Decision

logger = logging.getLogger(__name__)

MIN_VELOCITY_FRACTION = 0.5


class NoAliveSensorError(Exception):
    """Raised when an observation holds no sensor to schedule."""


def _candidates(obs):
    """Unclaimed sensors, or every observed sensor once all are claimed."""
    if not obs.sensors:
        raise NoAliveSensorError(f"UAV {obs.uav_id} observes no alive sensor at step {obs.step}")
    return obs.unclaimed() or obs.sensors


def max_channel_gain_policy(obs):
    """Highest gain wins, ties to the lowest id; always flies at v_max."""
    best = min(_candidates(obs), key=lambda s: (-s.gain_db, s.sensor_id))
    return Decision(uav_id=obs.uav_id, sensor_id=best.sensor_id, velocity=obs.v_max)


def greedy_velocity(obs):
    cap = max(obs.queue_cap, 1)
    fill = float(np.mean([s.queue_len / cap for s in obs.sensors]))
    return obs.v_max * min(1.0, max(MIN_VELOCITY_FRACTION, fill))


def greedy_queue_aware_policy(obs, gain_threshold_db=None):
    """
    Fullest buffer among sensors the UAV can actually hear

    Args:
        obs: Observation
        gain_threshold_db: Gain threshold in dB (defaults to the observation's)

    Returns:
        Decision; falls back to max channel gain when no link clears the threshold
    """
    threshold = obs.gain_threshold_db if gain_threshold_db is None else gain_threshold_db
    cap = max(obs.queue_cap, 1)
    eligible = [s for s in _candidates(obs) if s.gain_db > threshold]
    if not eligible:
        return max_channel_gain_policy(obs)
    best = min(eligible, key=lambda s: (-s.queue_len / cap, -s.gain_db, s.sensor_id))
    return Decision(uav_id=obs.uav_id, sensor_id=best.sensor_id, velocity=greedy_velocity(obs))


def random_policy(obs, rng):
    candidates = _candidates(obs)
    pick = candidates[int(rng.integers(len(candidates)))]
    # 1 - U[0, 1) lies in (0, 1]
    velocity = obs.v_max * (1.0 - float(rng.random()))
    return Decision(uav_id=obs.uav_id, sensor_id=pick.sensor_id, velocity=velocity)
