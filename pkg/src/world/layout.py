"""Initial sensor placement and UAV trajectories."""

import logging
import math

from world.state import SensorState, Trajectory, UavState, WorldError

logger = logging.getLogger(__name__)


def place_sensors(cfg, rng):
    """
    Build the ground sensors

    Args:
        cfg: SimConfig
        rng: Generator for the placement stream

    Returns:
        List of SensorState, ids 0..J-1
    """
    if cfg.sensor_positions is not None:
        positions = [tuple(float(c) for c in p) for p in cfg.sensor_positions]
    else:
        points = rng.uniform(0.0, cfg.area, size=(cfg.num_sensors, 2))
        positions = [(float(x), float(y)) for x, y in points]

    return [
        SensorState(
            id=j,
            position=positions[j],
            queue_len=cfg.initial_queue,
            queue_cap=cfg.queue_cap,
            battery_j=cfg.battery_cap,
            arrival_rate=cfg.arrival_rates[j],
        )
        for j in range(cfg.num_sensors)
    ]


def patrol_trajectory(cfg, index):
    """Square patrol loop around a center placed on a ring about the area center."""
    angle = math.radians(90.0 + 360.0 * index / cfg.num_uavs)
    cx = cfg.area / 2.0 + cfg.patrol_ring * math.cos(angle)
    cy = cfg.area / 2.0 + cfg.patrol_ring * math.sin(angle)
    half = cfg.patrol_side / 2.0
    corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
    return Trajectory(
        waypoints=tuple((cx + dx, cy + dy, cfg.altitude) for dx, dy in corners),
        hover_steps=cfg.hover_steps,
    )


def random_trajectory(cfg, rng):
    points = rng.uniform(0.0, cfg.area, size=(cfg.waypoint_count, 2))
    return Trajectory(
        waypoints=tuple((float(x), float(y), cfg.altitude) for x, y in points),
        hover_steps=cfg.hover_steps,
    )


def build_trajectories(cfg, rng):
    if cfg.trajectory == "patrol":
        return [patrol_trajectory(cfg, i) for i in range(cfg.num_uavs)]
    if cfg.trajectory == "random":
        return [random_trajectory(cfg, rng) for _ in range(cfg.num_uavs)]
    if cfg.trajectory == "explicit":
        if cfg.waypoints is None or len(cfg.waypoints) < cfg.num_uavs:
            raise WorldError("Explicit trajectories need one waypoint list per UAV")
        return [
            Trajectory(
                waypoints=tuple(tuple(float(c) for c in wp) for wp in cfg.waypoints[i]),
                hover_steps=cfg.hover_steps,
            )
            for i in range(cfg.num_uavs)
        ]
    raise WorldError(f"Unknown trajectory mode: {cfg.trajectory}")


def launch_uavs(cfg, trajectories):
    """UAVs start on their first waypoint, ready to hover there."""
    return [
        UavState(
            id=i,
            position=tuple(trajectory.waypoints[0]),
            velocity=cfg.v_max,
            v_max=cfg.v_max,
            battery_u=cfg.uav_battery,
            waypoint_idx=0,
            hover_left=trajectory.hover_steps,
        )
        for i, trajectory in enumerate(trajectories)
    ]


def build_world(cfg, streams):
    """
    Sensors, trajectories and UAVs for one episode

    Args:
        cfg: SimConfig
        streams: Named random streams (placement, trajectory)

    Returns:
        (sensors, trajectories, uavs)
    """
    sensors = place_sensors(cfg, streams["placement"])
    trajectories = build_trajectories(cfg, streams["trajectory"])
    uavs = launch_uavs(cfg, trajectories)
    logger.debug("🗺️ World built: %d sensors, %d UAVs (%s trajectories)", len(sensors), len(uavs), cfg.trajectory)
    return sensors, trajectories, uavs
