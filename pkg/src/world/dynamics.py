"""Sensor queue dynamics, data service and UAV kinematics."""

import logging
from dataclasses import replace

import numpy as np

from ai.attention import FeatureMatrix
from channel.model import elevation_angle, link_from_elevation
from world.state import (
    ArrivalOutcome,
    EmptyFeatureError,
    OutOfCoverageError,
    SensorDeadError,
    ServiceOutcome,
    VelocityError,
    horizontal_distance,
)

logger = logging.getLogger(__name__)


def step_arrivals(sensors, rng, ledger=None):
    """
    Poisson packet arrivals for one step

    One draw is taken for every sensor (dead ones discard theirs) so the
    arrival stream does not depend on what the policies did.

    Args:
        sensors: List of SensorState, mutated in place
        rng: numpy Generator for the arrival stream
        ledger: Optional PacketLedger to update

    Returns:
        ArrivalOutcome with overflow events and per-sensor dropped packets
    """
    outcome = ArrivalOutcome()
    if not sensors:
        return outcome
    rates = np.array([s.arrival_rate for s in sensors], dtype=float)
    draws = rng.poisson(rates)

    for sensor, drawn in zip(sensors, draws):
        drawn = int(drawn)
        if not sensor.alive or drawn == 0:
            continue
        accepted = min(drawn, sensor.queue_cap - sensor.queue_len)
        dropped = drawn - accepted
        sensor.queue_len += accepted
        outcome.arrivals_by_sensor[sensor.id] = drawn
        if ledger is not None:
            ledger.generated += drawn
            ledger.lost_overflow += dropped
        if dropped > 0:
            outcome.overflow_events += 1
            outcome.overflow_by_sensor[sensor.id] = dropped

    return outcome


def packet_energy_j(tx_power_mw, packet_airtime_s):
    return tx_power_mw / 1000.0 * packet_airtime_s


def serve_sensor(sensor, uav, link, params, step_budget, energy_per_packet_j, ledger=None):
    """
    Collect one batch from a sensor during a hover step

    Args:
        sensor: SensorState (alive), mutated in place
        uav: UavState within coverage radius of the sensor
        link: LinkQuality of the pair
        params: ChannelParams (gain threshold, coverage radius)
        step_budget: Max packets collectable this step
        energy_per_packet_j: Sensor energy spent per transmitted packet
        ledger: Optional PacketLedger to update

    Returns:
        ServiceOutcome; at or below the gain threshold the attempted batch is lost
    """
    if not sensor.alive:
        raise SensorDeadError(f"Sensor {sensor.id} is dead and cannot be served")
    distance = horizontal_distance(uav.xy, sensor.position)
    if distance > params.coverage_radius:
        raise OutOfCoverageError(
            f"Sensor {sensor.id} is {distance:.1f} m from UAV {uav.id}, coverage {params.coverage_radius} m"
        )
    if step_budget < 0:
        raise ValueError("step_budget must be non-negative")

    batch = min(sensor.queue_len, int(step_budget))
    comm_failed = link.gain_db <= params.gain_threshold

    sensor.queue_len -= batch
    sensor.battery_j = max(0.0, sensor.battery_j - batch * energy_per_packet_j)
    if sensor.battery_j == 0.0:
        sensor.alive = False
        logger.info("🪫 Sensor %d battery exhausted", sensor.id)

    if comm_failed:
        if ledger is not None:
            ledger.lost_comm += batch
        return ServiceOutcome(delivered=0, comm_failed=True, lost=batch, attempted=batch)

    if ledger is not None:
        ledger.delivered += batch
    return ServiceOutcome(delivered=batch, comm_failed=False, lost=0, attempted=batch)


def is_hovering(uav, trajectory):
    return tuple(uav.position) == tuple(trajectory.waypoints[uav.waypoint_idx])


def advance_uav(uav, trajectory, commanded_velocity, dt=1.0):
    """
    Move a UAV along its trajectory for one step

    Hovering UAVs count down their hover steps and then head for the next
    waypoint; moving UAVs travel v·dt along the straight segment and stop
    exactly on the waypoint when they reach it.

    Returns:
        New UavState
    """
    if not 0 < commanded_velocity <= uav.v_max:
        raise VelocityError(
            f"UAV {uav.id}: commanded velocity {commanded_velocity} outside (0, {uav.v_max}]"
        )
    waypoints = trajectory.waypoints
    target = waypoints[uav.waypoint_idx]

    if uav.hover_left > 0 and is_hovering(uav, trajectory):
        hover_left = uav.hover_left - 1
        idx = uav.waypoint_idx
        if hover_left == 0 and len(waypoints) > 1:
            idx = (idx + 1) % len(waypoints)
        return replace(uav, velocity=commanded_velocity, hover_left=hover_left, waypoint_idx=idx)

    here = np.asarray(uav.position, dtype=float)
    goal = np.asarray(target, dtype=float)
    distance = float(np.linalg.norm(goal - here))
    travel = commanded_velocity * dt

    if travel >= distance:
        return replace(
            uav,
            position=tuple(float(c) for c in target),
            velocity=commanded_velocity,
            hover_left=trajectory.hover_steps,
        )

    moved = here + (goal - here) / distance * travel
    return replace(
        uav,
        position=tuple(float(c) for c in moved),
        velocity=commanded_velocity,
        hover_left=0,
    )


def observe_link(uav, sensor, params):
    """Link as seen by the simulator: elevation capped below the sec φ singularity."""
    phi = elevation_angle(uav.altitude, uav.xy, sensor.position)
    return link_from_elevation(min(phi, params.max_elevation_deg), params)


def snapshot_features(sensors, uav, params, links=None):
    """
    Raw feature rows [queue, battery, gain] for alive sensors, ascending sensor id

    Args:
        sensors: Iterable of SensorState
        uav: Observing UavState
        params: ChannelParams
        links: Optional {sensor_id: LinkQuality} already computed for this UAV

    Returns:
        FeatureMatrix (not normalized)
    """
    alive = sorted((s for s in sensors if s.alive), key=lambda s: s.id)
    if not alive:
        raise EmptyFeatureError("No alive sensors to build a feature matrix from")
    rows = []
    for sensor in alive:
        link = links[sensor.id] if links is not None else observe_link(uav, sensor, params)
        rows.append([float(sensor.queue_len), float(sensor.battery_j), float(link.gain_db)])
    return FeatureMatrix(values=np.array(rows, dtype=float), sensor_ids=tuple(s.id for s in alive))
