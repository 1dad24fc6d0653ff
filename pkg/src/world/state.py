"""World state types: ground sensors, UAVs, trajectories and the packet ledger."""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


class WorldError(Exception):
    """Base class for world contract violations."""


class VelocityError(WorldError):
    pass


class SensorDeadError(WorldError):
    pass


class OutOfCoverageError(WorldError):
    pass


class EmptyFeatureError(WorldError):
    pass


class LedgerError(WorldError):
    pass


@dataclass
class SensorState:
    """
    Ground sensor j

    Mutated in place by the simulator loop (queue, battery, alive).
    """
    id: int
    position: Tuple[float, float]
    queue_len: int
    queue_cap: int
    battery_j: float
    arrival_rate: float
    alive: bool = True

    def __post_init__(self):
        if self.queue_cap < 0:
            raise WorldError(f"Sensor {self.id}: negative queue capacity")
        if not 0 <= self.queue_len <= self.queue_cap:
            raise WorldError(f"Sensor {self.id}: queue {self.queue_len} outside [0, {self.queue_cap}]")
        if self.battery_j < 0:
            raise WorldError(f"Sensor {self.id}: negative battery")
        if self.arrival_rate < 0:
            raise WorldError(f"Sensor {self.id}: negative arrival rate")
        self.alive = self.battery_j > 0


@dataclass(frozen=True)
class Trajectory:
    """Cyclic waypoint list; the UAV hovers `hover_steps` steps at each waypoint."""
    waypoints: Tuple[Tuple[float, float, float], ...]
    hover_steps: int = 1

    def __post_init__(self):
        if not self.waypoints:
            raise WorldError("Trajectory needs at least one waypoint")
        if self.hover_steps < 1:
            raise WorldError("hover_steps must be >= 1")
        for wp in self.waypoints:
            if len(wp) != 3 or wp[2] <= 0:
                raise WorldError(f"Waypoint {wp} must be (x, y, h) with h > 0")
        n = len(self.waypoints)
        if n > 1:
            # the closing segment counts too, trajectories wrap around
            for i in range(n):
                if tuple(self.waypoints[i]) == tuple(self.waypoints[(i + 1) % n]):
                    raise WorldError(f"Consecutive waypoints {i} and {(i + 1) % n} coincide")

    def __len__(self):
        return len(self.waypoints)


@dataclass(frozen=True)
class UavState:
    id: int
    position: Tuple[float, float, float]
    velocity: float
    v_max: float
    battery_u: float
    waypoint_idx: int = 0
    hover_left: int = 0

    def __post_init__(self):
        if self.v_max <= 0:
            raise VelocityError(f"UAV {self.id}: v_max must be positive")
        if not 0 < self.velocity <= self.v_max:
            raise VelocityError(f"UAV {self.id}: velocity {self.velocity} outside (0, {self.v_max}]")
        if self.position[2] <= 0:
            raise WorldError(f"UAV {self.id}: altitude must be positive")

    @property
    def altitude(self):
        return self.position[2]

    @property
    def xy(self):
        return (self.position[0], self.position[1])


@dataclass
class PacketLedger:
    generated: int = 0
    delivered: int = 0
    lost_overflow: int = 0
    lost_comm: int = 0

    @property
    def lost(self):
        return self.lost_overflow + self.lost_comm

    def balance(self, sensors):
        """generated - (delivered + losses + queued); zero when packets are conserved."""
        queued = sum(s.queue_len for s in sensors)
        return self.generated - (self.delivered + self.lost_overflow + self.lost_comm + queued)

    def check(self, sensors, step: Optional[int] = None):
        diff = self.balance(sensors)
        if diff != 0:
            where = "" if step is None else f" at step {step}"
            raise LedgerError(f"Packet ledger off by {diff}{where}: {self}")

    def as_dict(self):
        return {
            "generated": self.generated,
            "delivered": self.delivered,
            "lost_overflow": self.lost_overflow,
            "lost_comm": self.lost_comm,
        }


@dataclass
class ArrivalOutcome:
    overflow_events: int = 0
    overflow_by_sensor: dict = field(default_factory=dict)
    arrivals_by_sensor: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ServiceOutcome:
    delivered: int
    comm_failed: bool
    lost: int
    attempted: int


def horizontal_distance(xy_a, xy_b):
    return float(np.hypot(xy_a[0] - xy_b[0], xy_a[1] - xy_b[1]))
