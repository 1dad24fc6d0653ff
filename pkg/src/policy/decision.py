"""Observations handed to policies and the DECISIONS response block."""

import logging
import re
from dataclasses import dataclass, replace
from typing import Tuple

logger = logging.getLogger(__name__)

BLOCK_START = "DECISIONS"
BLOCK_END = "END"
_LINE = re.compile(r"^uav=(-?\d+)\s+sensor=(-?\d+)\s+velocity=(\S+)$")


class DecisionParseError(Exception):
    """Base class for unusable policy responses."""


class MalformedResponseError(DecisionParseError):
    pass


class UnknownSensorError(DecisionParseError):
    pass


class VelocityBoundsError(DecisionParseError):
    pass


@dataclass(frozen=True)
class SensorObservation:
    sensor_id: int
    queue_len: int
    battery_j: float
    gain_db: float


@dataclass(frozen=True)
class UavObservation:
    uav_id: int
    x: float
    y: float
    h: float
    waypoint_idx: int
    v_max: float
    hovering: bool


@dataclass(frozen=True)
class Observation:
    """
    What one querying UAV sees at a step

    `sensors` holds alive sensors only, ascending id, with gains measured
    from the querying UAV. `claimed` lists sensors already taken by
    lower-id UAVs this step.
    """
    step: int
    uav_id: int
    uavs: Tuple[UavObservation, ...]
    sensors: Tuple[SensorObservation, ...]
    claimed: Tuple[int, ...]
    queue_cap: int
    gain_threshold_db: float

    @property
    def sensor_ids(self):
        return tuple(s.sensor_id for s in self.sensors)

    @property
    def querying_uav(self):
        for uav in self.uavs:
            if uav.uav_id == self.uav_id:
                return uav
        raise KeyError(f"UAV {self.uav_id} missing from observation")

    @property
    def v_max(self):
        return self.querying_uav.v_max

    def sensor(self, sensor_id):
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def unclaimed(self):
        claimed = set(self.claimed)
        return tuple(s for s in self.sensors if s.sensor_id not in claimed)

    def restricted(self, sensor_ids):
        keep = set(sensor_ids)
        return replace(self, sensors=tuple(s for s in self.sensors if s.sensor_id in keep))


@dataclass(frozen=True)
class Decision:
    uav_id: int
    sensor_id: int
    velocity: float


def serialize_decisions(decisions):
    lines = [BLOCK_START]
    for d in decisions:
        lines.append(f"uav={d.uav_id} sensor={d.sensor_id} velocity={float(d.velocity)!r}")
    lines.append(BLOCK_END)
    return "\n".join(lines)


def _extract_block(text):
    lines = [line.strip() for line in text.splitlines()]
    starts = [i for i, line in enumerate(lines) if line == BLOCK_START]
    if len(starts) != 1:
        raise MalformedResponseError(f"Expected exactly one {BLOCK_START} block, found {len(starts)}")
    start = starts[0]
    try:
        end = lines.index(BLOCK_END, start + 1)
    except ValueError:
        raise MalformedResponseError(f"{BLOCK_START} block is not closed by {BLOCK_END}") from None
    return [line for line in lines[start + 1:end] if line]


def parse_decisions(text):
    """All decision lines of the single block, keyed by UAV id."""
    decisions = {}
    for line in _extract_block(text):
        match = _LINE.match(line)
        if not match:
            raise MalformedResponseError(f"Unparseable decision line: {line!r}")
        uav_id, sensor_id = int(match.group(1)), int(match.group(2))
        try:
            velocity = float(match.group(3))
        except ValueError:
            raise MalformedResponseError(f"Bad velocity in line: {line!r}") from None
        if uav_id in decisions:
            raise MalformedResponseError(f"Duplicate line for uav={uav_id}")
        decisions[uav_id] = Decision(uav_id=uav_id, sensor_id=sensor_id, velocity=velocity)
    return decisions


def parse_decision(text, obs):
    """
    Decision for the querying UAV from a response

    Args:
        text: Raw response; lines outside the DECISIONS block are ignored
        obs: Observation the response answers

    Returns:
        Validated Decision
    """
    decisions = parse_decisions(text)
    if obs.uav_id not in decisions:
        raise MalformedResponseError(f"No decision line for uav={obs.uav_id}")
    decision = decisions[obs.uav_id]
    if decision.sensor_id not in obs.sensor_ids:
        raise UnknownSensorError(f"Sensor {decision.sensor_id} is not an alive sensor of this observation")
    if not 0 < decision.velocity <= obs.v_max:
        raise VelocityBoundsError(f"Velocity {decision.velocity} outside (0, {obs.v_max}]")
    return decision
