"""In-context prompt composition: task description, demonstrations, observation."""

import logging
from collections import deque
from dataclasses import dataclass

from policy.decision import (
    Observation,
    SensorObservation,
    UavObservation,
    serialize_decisions,
)

logger = logging.getLogger(__name__)

OBSERVATION_START = "[OBSERVATION]"
OBSERVATION_END = "[END OBSERVATION]"


class ObservationFormatError(ValueError):
    """Observation text that does not follow the line format."""


@dataclass(frozen=True)
class TaskDescription:
    objective_text: str
    rules_text: str
    output_schema_text: str


def default_task_description(queue_cap, gain_threshold_db, v_max):
    return TaskDescription(
        objective_text=(
            "You schedule UAV data collection from ground sensors. Minimize the total "
            "packet loss from buffer overflow and from failed transmissions."
        ),
        rules_text=(
            f"Each sensor buffer holds at most {queue_cap} packets; arrivals beyond that are lost. "
            f"A transmission fails when the channel gain is at or below {gain_threshold_db!r} dB. "
            f"Pick exactly one sensor for the querying UAV and a velocity in (0, {v_max!r}] m/s. "
            "Do not pick a sensor listed as claimed unless every sensor is claimed. "
            "Sensors with low battery stop transmitting once their energy runs out."
        ),
        output_schema_text=(
            "Answer with one block and nothing inside it but decision lines:\n"
            "DECISIONS\n"
            "uav=<id> sensor=<id> velocity=<float>\n"
            "END"
        ),
    )


@dataclass(frozen=True)
class Demonstration:
    input_x: str
    output_y: str

    def __post_init__(self):
        if not self.input_x.strip() or not self.output_y.strip():
            raise ValueError("Demonstration input and output must be non-empty")


class ExampleBuffer:
    """Bounded FIFO of demonstrations; the oldest entry leaves first."""

    def __init__(self, capacity=8):
        if capacity < 0:
            raise ValueError("Buffer capacity must be non-negative")
        self.capacity = capacity
        self._entries = deque(maxlen=capacity)

    def append(self, demonstration):
        self._entries.append(demonstration)

    @property
    def entries(self):
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(tuple(self._entries))


@dataclass(frozen=True)
class Prompt:
    text: str
    used: int
    dropped: int
    full_observation_fallback: bool


def _fmt_bool(value):
    return "true" if value else "false"


def serialize_observation(obs):
    """Fixed-order key=value lines; floats use repr so they parse back exactly."""
    lines = [
        OBSERVATION_START,
        f"step={obs.step} querying_uav={obs.uav_id} queue_cap={obs.queue_cap} "
        f"gain_threshold_db={float(obs.gain_threshold_db)!r}",
    ]
    for u in obs.uavs:
        lines.append(
            f"uav id={u.uav_id} x={float(u.x)!r} y={float(u.y)!r} h={float(u.h)!r} "
            f"waypoint={u.waypoint_idx} v_max={float(u.v_max)!r} hovering={_fmt_bool(u.hovering)}"
        )
    claimed = ",".join(str(c) for c in obs.claimed) if obs.claimed else "none"
    lines.append(f"claimed={claimed}")
    for s in obs.sensors:
        lines.append(
            f"sensor id={s.sensor_id} queue={s.queue_len} battery={float(s.battery_j)!r} "
            f"gain_db={float(s.gain_db)!r}"
        )
    lines.append(OBSERVATION_END)
    return "\n".join(lines)


def _fields(line, prefix):
    parts = line.split()
    if prefix:
        if not parts or parts[0] != prefix:
            raise ObservationFormatError(f"Expected a '{prefix}' line, got {line!r}")
        parts = parts[1:]
    out = {}
    for part in parts:
        if "=" not in part:
            raise ObservationFormatError(f"Bad field {part!r} in {line!r}")
        key, value = part.split("=", 1)
        out[key] = value
    return out


def parse_observation(text):
    """
    Read the observation section back out of a prompt

    Only an unindented section counts, so demonstrations quoted in the
    examples section are skipped.
    """
    lines = text.splitlines()
    try:
        start = lines.index(OBSERVATION_START)
        end = lines.index(OBSERVATION_END, start + 1)
    except ValueError:
        raise ObservationFormatError("Prompt has no observation section") from None
    body = lines[start + 1:end]
    if len(body) < 2:
        raise ObservationFormatError("Observation section is truncated")

    try:
        head = _fields(body[0], None)
        uavs, sensors, claimed = [], [], None
        for line in body[1:]:
            if line.startswith("uav "):
                f = _fields(line, "uav")
                uavs.append(UavObservation(
                    uav_id=int(f["id"]), x=float(f["x"]), y=float(f["y"]), h=float(f["h"]),
                    waypoint_idx=int(f["waypoint"]), v_max=float(f["v_max"]),
                    hovering=f["hovering"] == "true",
                ))
            elif line.startswith("claimed="):
                raw = line.split("=", 1)[1]
                claimed = () if raw == "none" else tuple(int(c) for c in raw.split(","))
            elif line.startswith("sensor "):
                f = _fields(line, "sensor")
                sensors.append(SensorObservation(
                    sensor_id=int(f["id"]), queue_len=int(f["queue"]),
                    battery_j=float(f["battery"]), gain_db=float(f["gain_db"]),
                ))
            else:
                raise ObservationFormatError(f"Unknown observation line: {line!r}")
        if claimed is None:
            raise ObservationFormatError("Observation has no claimed line")
        return Observation(
            step=int(head["step"]),
            uav_id=int(head["querying_uav"]),
            uavs=tuple(uavs),
            sensors=tuple(sensors),
            claimed=claimed,
            queue_cap=int(head["queue_cap"]),
            gain_threshold_db=float(head["gain_threshold_db"]),
        )
    except (KeyError, ValueError) as e:
        if isinstance(e, ObservationFormatError):
            raise
        raise ObservationFormatError(f"Malformed observation: {e}") from e


def _indent(text, prefix="    "):
    return "\n".join(prefix + line for line in text.splitlines())


def _compose(td, demonstrations, observation_text):
    parts = [
        "[TASK]",
        "Objective: " + td.objective_text,
        "Rules: " + td.rules_text,
        "Output format:",
        td.output_schema_text,
    ]
    if demonstrations:
        parts.append("")
        parts.append("[EXAMPLES]")
        for n, demo in enumerate(demonstrations, start=1):
            parts.append(f"example {n}:")
            parts.append("  input:")
            parts.append(_indent(demo.input_x))
            parts.append("  output:")
            parts.append(_indent(demo.output_y))
    parts.append("")
    parts.append(observation_text)
    return "\n".join(parts) + "\n"


def build_prompt(td, buf, obs, pruned_ids, char_budget=None):
    """
    Compose the decision prompt

    Args:
        td: TaskDescription
        buf: ExampleBuffer (oldest first)
        obs: Observation of the querying UAV
        pruned_ids: Sensor ids kept by attention; empty means full observation
        char_budget: Max prompt length; oldest demonstrations are dropped first

    Returns:
        Prompt with the text and bookkeeping flags
    """
    if not obs.sensors:
        raise ValueError("Cannot build a prompt for an observation without sensors")

    fallback = not pruned_ids
    if fallback:
        logger.warning("⚠️ Empty attention selection, prompting with the full observation")
        shown = obs
    else:
        shown = obs.restricted(pruned_ids)
    observation_text = serialize_observation(shown)

    demonstrations = list(buf)
    dropped = 0
    text = _compose(td, demonstrations, observation_text)
    while char_budget is not None and len(text) > char_budget and demonstrations:
        demonstrations.pop(0)
        dropped += 1
        text = _compose(td, demonstrations, observation_text)
    if dropped:
        logger.info("✂️ Prompt over %d chars, dropped %d oldest demonstrations", char_budget, dropped)
    if char_budget is not None and len(text) > char_budget:
        logger.warning("⚠️ Prompt still %d chars (budget %d) with no demonstrations left", len(text), char_budget)

    return Prompt(text=text, used=len(demonstrations), dropped=dropped, full_observation_fallback=fallback)


def record_feedback(buf, obs, decision, realized_loss):
    """Append the decision, annotated with the loss it produced, as a demonstration."""
    output_y = serialize_decisions([decision]) + f"\nrealized_loss={int(realized_loss)}"
    buf.append(Demonstration(input_x=serialize_observation(obs), output_y=output_y))
    return buf
