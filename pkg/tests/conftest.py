import copy
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ai.llm_client import EndpointConfig
from channel.model import ChannelParams
from policy.decision import Observation, SensorObservation, UavObservation
from settings import DEFAULT_CONFIG, merge_config
from simulation.config import SimConfig
from world.state import SensorState, UavState

REPO_ROOT = Path(__file__).resolve().parent.parent
HEAVY_LOAD = REPO_ROOT / "config" / "heavy_load.json"


def settings_with(update=None):
    """Default settings deep-merged with a nested update dict."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if update:
        merge_config(config, copy.deepcopy(update))
    return config


def sim_config(update=None, **kwargs):
    return SimConfig.from_settings(settings_with(update), **kwargs)


def channel_params(gain_threshold=100.0, **overrides):
    """Shipped channel constants with a fixed gain threshold."""
    return replace(ChannelParams.from_config(DEFAULT_CONFIG["channel"], gain_threshold), **overrides)


def endpoint_config(**overrides):
    return replace(EndpointConfig.from_config(DEFAULT_CONFIG["llm"]), **overrides)


def hover_world(positions, rates, initial_queue=0, steps=3, threshold=100.0, policy="greedy", uav_xy=(50.0, 50.0)):
    """One UAV parked over a single waypoint, explicit sensors."""
    return sim_config({
        "simulation": {"num_sensors": len(positions), "num_uavs": 1, "steps": steps,
                       "top_k": 1, "policy": policy},
        "world": {"sensor_positions": [list(p) for p in positions], "arrival_rates": list(rates),
                  "initial_queue": initial_queue},
        "uav": {"trajectory": "explicit", "waypoints": [[[uav_xy[0], uav_xy[1], 30.0]]]},
        "channel": {"gain_threshold_db": threshold},
    })


@pytest.fixture
def params():
    return channel_params()


@pytest.fixture
def uav():
    return UavState(id=0, position=(50.0, 50.0, 30.0), velocity=20.0, v_max=20.0, battery_u=5000.0)


@pytest.fixture
def make_sensor():
    def _make(id=0, position=(80.0, 50.0), queue_len=0, queue_cap=40, battery_j=50.0, arrival_rate=3.0):
        return SensorState(id=id, position=position, queue_len=queue_len, queue_cap=queue_cap,
                           battery_j=battery_j, arrival_rate=arrival_rate)
    return _make


def random_observation(rng, num_sensors=None, num_uavs=3, claimed_fraction=0.3):
    """Random but valid observation for UAV 0."""
    num_sensors = num_sensors or int(rng.integers(1, 12))
    uavs = tuple(
        UavObservation(uav_id=i, x=float(rng.uniform(0, 100)), y=float(rng.uniform(0, 100)), h=30.0,
                       waypoint_idx=int(rng.integers(0, 5)), v_max=20.0, hovering=bool(rng.integers(0, 2)))
        for i in range(num_uavs)
    )
    sensors = tuple(
        SensorObservation(sensor_id=j, queue_len=int(rng.integers(0, 41)),
                          battery_j=float(rng.uniform(0, 50)), gain_db=float(rng.uniform(90, 125)))
        for j in range(num_sensors)
    )
    claimed = tuple(j for j in range(num_sensors) if rng.random() < claimed_fraction)
    return Observation(step=int(rng.integers(0, 30)), uav_id=0, uavs=uavs, sensors=sensors,
                       claimed=claimed, queue_cap=40, gain_threshold_db=float(rng.uniform(95, 120)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
