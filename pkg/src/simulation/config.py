"""Validated, immutable episode configuration built from the settings dict."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

from ai.llm_client import EndpointConfig
from channel.model import ChannelDomainError, ChannelParams, calibrate_gain_threshold
from settings import ConfigError

logger = logging.getLogger(__name__)

POLICIES = ("icl", "icl_no_attention", "max_gain", "greedy", "random")
TRAJECTORIES = ("random", "patrol", "explicit")


@dataclass(frozen=True)
class SimConfig:
    num_sensors: int
    num_uavs: int
    steps: int
    seed: int
    policy: str
    top_k: int
    dt: float
    debug_checks: bool
    area: float
    queue_cap: int
    initial_queue: int
    arrival_rates: Tuple[float, ...]
    sensor_positions: Optional[Tuple[Tuple[float, float], ...]]
    battery_cap: float
    tx_power_mw: float
    packet_airtime_s: float
    step_budget: int
    altitude: float
    v_max: float
    uav_battery: float
    trajectory: str
    waypoint_count: int
    hover_steps: int
    patrol_side: float
    patrol_ring: float
    waypoints: Optional[tuple]
    channel: ChannelParams
    attention_enabled: bool
    d_prime: int
    init_scale: float
    learning_rate: float
    online_update: bool
    checkpoint: Optional[str]
    buffer_capacity: int
    prompt_char_budget: int
    llm: EndpointConfig
    beacon_deadline: int
    receive_deadline: int
    label: str = "default"

    @property
    def gain_threshold(self):
        return self.channel.gain_threshold

    @classmethod
    def from_settings(cls, config, label="default", seed=None, policy=None):
        """
        Build and validate a SimConfig

        Args:
            config: Settings dict from settings.load_config
            label: Name of the configuration in result tables
            seed: Overrides simulation.seed
            policy: Overrides simulation.policy

        Returns:
            SimConfig; raises ConfigError on any violated constraint
        """
        sim, world, uav = config["simulation"], config["world"], config["uav"]
        chan, att, pol = config["channel"], config["attention"], config["policy"]
        proto = config["protocol"]

        try:
            num_sensors = int(sim["num_sensors"])
            num_uavs = int(sim["num_uavs"])
            steps = int(sim["steps"])
            top_k = int(sim["top_k"])
            dt = float(sim["dt"])
            run_seed = int(sim["seed"] if seed is None else seed)
            area = float(world["area_m"])
            queue_cap = int(world["queue_cap"])
            initial_queue = int(world["initial_queue"])
            battery_cap = float(world["battery_cap_j"])
            tx_power_mw = float(world["tx_power_mw"])
            packet_airtime_s = float(world["packet_airtime_s"])
            step_budget = int(world["step_budget"])
            altitude = float(uav["altitude_m"])
            v_max = float(uav["v_max"])
            uav_battery = float(uav["battery_j"])
            waypoint_count = int(uav["waypoint_count"])
            hover_steps = int(uav["hover_steps"])
            patrol_side = float(uav["patrol_side_m"])
            patrol_ring = float(uav["patrol_ring_m"])
            d_prime = int(att["d_prime"])
            init_scale = float(att["init_scale"])
            learning_rate = float(att["learning_rate"])
            buffer_capacity = int(pol["buffer_capacity"])
            prompt_char_budget = int(pol["prompt_char_budget"])
            beacon_deadline = int(proto["beacon_deadline"])
            receive_deadline = int(proto["receive_deadline"])
            calibration_grid = int(chan["calibration_grid"])

            rates = world["arrival_rates"]
            if rates is None:
                rates = [world["arrival_rate"]] * num_sensors
            rates = tuple(float(r) for r in rates)

            positions = world["sensor_positions"]
            if positions is not None:
                positions = tuple(_point(p, 2, "world.sensor_positions") for p in positions)

            waypoints = uav["waypoints"]
            if waypoints is not None:
                waypoints = tuple(tuple(_point(wp, 3, "uav.waypoints") for wp in path) for path in waypoints)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed value in config: {e}") from e

        _require(num_sensors >= 1, "simulation.num_sensors must be >= 1")
        _require(num_uavs >= 1, "simulation.num_uavs must be >= 1")
        _require(steps >= 1, "simulation.steps must be >= 1")
        _require(1 <= top_k <= num_sensors, "simulation.top_k must lie in [1, num_sensors]")
        _require(dt > 0, "simulation.dt must be positive")
        _require(queue_cap >= 1, "world.queue_cap must be >= 1")
        _require(0 <= initial_queue <= queue_cap, "world.initial_queue must lie in [0, queue_cap]")
        _require(area > 0, "world.area_m must be positive")
        _require(battery_cap >= 0, "world.battery_cap_j must be >= 0")
        _require(step_budget >= 0, "world.step_budget must be >= 0")
        _require(altitude > 0, "uav.altitude_m must be positive")
        _require(v_max > 0, "uav.v_max must be positive")
        _require(hover_steps >= 1, "uav.hover_steps must be >= 1")
        _require(waypoint_count >= 1, "uav.waypoint_count must be >= 1")
        _require(buffer_capacity >= 0, "policy.buffer_capacity must be >= 0")
        _require(d_prime >= 1, "attention.d_prime must be >= 1")
        _require(beacon_deadline >= 1 and receive_deadline >= 1, "protocol deadlines must be >= 1 step")

        chosen_policy = policy or sim["policy"]
        _require(chosen_policy in POLICIES, f"Unknown policy {chosen_policy!r}, expected one of {POLICIES}")
        _require(uav["trajectory"] in TRAJECTORIES, f"Unknown trajectory mode {uav['trajectory']!r}")

        _require(len(rates) == num_sensors, "world.arrival_rates needs one rate per sensor")
        _require(all(r >= 0 for r in rates), "Arrival rates must be non-negative")
        if positions is not None:
            _require(len(positions) == num_sensors, "world.sensor_positions needs one position per sensor")
        if uav["trajectory"] == "explicit":
            _require(waypoints is not None and len(waypoints) >= num_uavs,
                     "uav.waypoints needs one waypoint list per UAV for explicit trajectories")
            _require(all(len(path) >= 1 for path in waypoints[:num_uavs]),
                     "uav.waypoints lists must not be empty")

        try:
            channel = ChannelParams.from_config(chan, gain_threshold=0.0)
            threshold = chan["gain_threshold_db"]
            if threshold == "median":
                threshold = median_threshold(channel, altitude, area, calibration_grid)
            elif isinstance(threshold, str):
                raise ConfigError(f"channel.gain_threshold_db must be a number or 'median', got {threshold!r}")
            channel = ChannelParams.from_config(chan, gain_threshold=float(threshold))
            llm = EndpointConfig.from_config(config["llm"])
        except (ChannelDomainError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

        return cls(
            num_sensors=num_sensors,
            num_uavs=num_uavs,
            steps=steps,
            seed=run_seed,
            policy=chosen_policy,
            top_k=top_k,
            dt=dt,
            debug_checks=bool(sim["debug_checks"]),
            area=area,
            queue_cap=queue_cap,
            initial_queue=initial_queue,
            arrival_rates=rates,
            sensor_positions=positions,
            battery_cap=battery_cap,
            tx_power_mw=tx_power_mw,
            packet_airtime_s=packet_airtime_s,
            step_budget=step_budget,
            altitude=altitude,
            v_max=v_max,
            uav_battery=uav_battery,
            trajectory=uav["trajectory"],
            waypoint_count=waypoint_count,
            hover_steps=hover_steps,
            patrol_side=patrol_side,
            patrol_ring=patrol_ring,
            waypoints=waypoints,
            channel=channel,
            attention_enabled=bool(att["enabled"]),
            d_prime=d_prime,
            init_scale=init_scale,
            learning_rate=learning_rate,
            online_update=bool(att["online_update"]),
            checkpoint=att["checkpoint"],
            buffer_capacity=buffer_capacity,
            prompt_char_budget=prompt_char_budget,
            llm=llm,
            beacon_deadline=beacon_deadline,
            receive_deadline=receive_deadline,
            label=label,
        )


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def _point(raw, size, key):
    """Coordinate tuple of exactly `size` numbers."""
    if isinstance(raw, (str, bytes)) or len(raw) != size:
        raise ValueError(f"{key} entries must be lists of {size} numbers, got {raw!r}")
    return tuple(float(c) for c in raw)


@lru_cache(maxsize=32)
def median_threshold(channel, altitude, area, grid):
    return calibrate_gain_threshold(channel, altitude, area, grid)
