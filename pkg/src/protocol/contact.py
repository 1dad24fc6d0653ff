"""
Per-contact exchange between a UAV and one ground sensor.

    IDLE -QUERY-> QUERYING_LLM -DECISION-> EN_ROUTE -ARRIVED-> BEACONING
    -BEACON_REPLY-> RECEIVING -DATA_COMPLETE-> ACKING -ACK_SENT-> DONE -RESET-> IDLE

TICK keeps EN_ROUTE in place and counts down the deadline in BEACONING and
RECEIVING; when it hits zero the contact drops back to IDLE as a timeout.
ABORT leaves QUERYING_LLM or EN_ROUTE for IDLE.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional


class IllegalTransitionError(Exception):
    pass


class ContactPhase(Enum):
    IDLE = "idle"
    QUERYING_LLM = "querying_llm"
    EN_ROUTE = "en_route"
    BEACONING = "beaconing"
    RECEIVING = "receiving"
    ACKING = "acking"
    DONE = "done"


class ContactEvent(Enum):
    QUERY = "query"
    DECISION = "decision"
    ARRIVED = "arrived"
    BEACON_REPLY = "beacon_reply"
    DATA_COMPLETE = "data_complete"
    ACK_SENT = "ack_sent"
    RESET = "reset"
    TICK = "tick"
    ABORT = "abort"


P, E = ContactPhase, ContactEvent

TRANSITIONS = {
    (P.IDLE, E.QUERY): P.QUERYING_LLM,
    (P.QUERYING_LLM, E.DECISION): P.EN_ROUTE,
    (P.QUERYING_LLM, E.ABORT): P.IDLE,
    (P.EN_ROUTE, E.ARRIVED): P.BEACONING,
    (P.EN_ROUTE, E.TICK): P.EN_ROUTE,
    (P.EN_ROUTE, E.ABORT): P.IDLE,
    (P.BEACONING, E.BEACON_REPLY): P.RECEIVING,
    (P.BEACONING, E.TICK): P.BEACONING,
    (P.RECEIVING, E.DATA_COMPLETE): P.ACKING,
    (P.RECEIVING, E.TICK): P.RECEIVING,
    (P.ACKING, E.ACK_SENT): P.DONE,
    (P.DONE, E.RESET): P.IDLE,
}

TIMED_PHASES = (P.BEACONING, P.RECEIVING)


@dataclass(frozen=True)
class ContactState:
    phase: ContactPhase = ContactPhase.IDLE
    target_sensor: Optional[int] = None
    deadline: int = 0
    timeouts: int = 0
    acks: int = 0
    contacts_completed: int = 0
    beacon_deadline: int = 2
    receive_deadline: int = 2

    def __post_init__(self):
        if self.deadline < 0:
            raise ValueError("deadline must be >= 0")
        if self.beacon_deadline < 1 or self.receive_deadline < 1:
            raise ValueError("Protocol deadlines must be >= 1 step")


def advance(state, event, target=None):
    """
    Apply one event to a contact

    Args:
        state: ContactState
        event: ContactEvent
        target: Sensor id, required with DECISION

    Returns:
        Next ContactState
    """
    successor = TRANSITIONS.get((state.phase, event))
    if successor is None:
        raise IllegalTransitionError(f"{event.name} is not allowed in phase {state.phase.name}")

    if event is E.TICK and state.phase in TIMED_PHASES:
        remaining = state.deadline - 1
        if remaining <= 0:
            return replace(state, phase=P.IDLE, target_sensor=None, deadline=0, timeouts=state.timeouts + 1)
        return replace(state, deadline=remaining)

    if event is E.DECISION:
        if target is None:
            raise IllegalTransitionError("DECISION needs a target sensor")
        return replace(state, phase=successor, target_sensor=int(target), deadline=0)
    if event is E.ARRIVED:
        return replace(state, phase=successor, deadline=state.beacon_deadline)
    if event is E.BEACON_REPLY:
        return replace(state, phase=successor, deadline=state.receive_deadline)
    if event is E.ACK_SENT:
        return replace(
            state,
            phase=successor,
            deadline=0,
            acks=state.acks + 1,
            contacts_completed=state.contacts_completed + 1,
        )
    if successor is P.IDLE:
        return replace(state, phase=successor, target_sensor=None, deadline=0)
    return replace(state, phase=successor, deadline=0 if successor not in TIMED_PHASES else state.deadline)
