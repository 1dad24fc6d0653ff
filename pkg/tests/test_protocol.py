"""
Contact state machine and message codec.

The transition table is checked exhaustively; the codec against the
documented byte layout.
"""
import itertools
import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import channel_params
from protocol.contact import (
    TRANSITIONS,
    ContactEvent,
    ContactPhase,
    ContactState,
    IllegalTransitionError,
    advance,
)
from protocol.messages import (
    Ack,
    Beacon,
    CodecError,
    DataPacket,
    SensorStatus,
    decode,
    decode_frames,
    encode,
    make_status,
)
from world.dynamics import observe_link
from world.state import SensorDeadError, UavState

P, E = ContactPhase, ContactEvent


def in_phase(phase, deadline=1):
    return ContactState(phase=phase, target_sensor=4, deadline=deadline)


class TestContactStateMachine:
    @pytest.mark.parametrize("phase,event", list(itertools.product(P, E)))
    def test_every_pair_is_either_legal_or_rejected(self, phase, event):
        state = in_phase(phase, deadline=2)
        if (phase, event) in TRANSITIONS:
            after = advance(state, event, target=4)
            assert after.phase is TRANSITIONS[(phase, event)]
        else:
            with pytest.raises(IllegalTransitionError):
                advance(state, event, target=4)

    def test_happy_path_completes_one_contact(self):
        state = ContactState()
        for event in (E.QUERY, E.DECISION, E.TICK, E.ARRIVED, E.BEACON_REPLY, E.DATA_COMPLETE, E.ACK_SENT, E.RESET):
            state = advance(state, event, target=2 if event is E.DECISION else None)
        assert state.phase is P.IDLE
        assert state.acks == 1 and state.contacts_completed == 1 and state.timeouts == 0

    def test_decision_needs_a_target(self):
        with pytest.raises(IllegalTransitionError):
            advance(ContactState(phase=P.QUERYING_LLM), E.DECISION)

    def test_decision_records_target(self):
        state = advance(ContactState(phase=P.QUERYING_LLM), E.DECISION, target=7)
        assert state.phase is P.EN_ROUTE and state.target_sensor == 7

    @pytest.mark.parametrize("phase,deadline_field", [(P.BEACONING, "beacon_deadline"),
                                                       (P.RECEIVING, "receive_deadline")])
    def test_silence_times_out_after_the_deadline(self, phase, deadline_field):
        state = ContactState(phase=P.EN_ROUTE, target_sensor=1, beacon_deadline=3, receive_deadline=3)
        state = advance(state, E.ARRIVED)
        if phase is P.RECEIVING:
            state = advance(state, E.BEACON_REPLY)
        assert state.deadline == getattr(state, deadline_field)
        state = advance(state, E.TICK)
        state = advance(state, E.TICK)
        assert state.phase is phase and state.deadline == 1
        state = advance(state, E.TICK)
        assert state.phase is P.IDLE and state.target_sensor is None
        assert state.timeouts == 1 and state.acks == 0

    def test_abort_returns_to_idle(self):
        for phase in (P.QUERYING_LLM, P.EN_ROUTE):
            state = advance(ContactState(phase=phase, target_sensor=3), E.ABORT)
            assert state.phase is P.IDLE and state.target_sensor is None

    def test_en_route_tick_keeps_waiting(self):
        state = in_phase(P.EN_ROUTE, deadline=0)
        assert advance(state, E.TICK) == state

    @given(st.lists(st.sampled_from(list(E)), max_size=40))
    def test_random_event_sequences_keep_counters_consistent(self, events):
        state = ContactState()
        for event in events:
            try:
                state = advance(state, event, target=0)
            except IllegalTransitionError:
                continue
            assert state.phase in P
            assert state.deadline >= 0
        assert state.acks == state.contacts_completed

    def test_invalid_deadlines_rejected(self):
        with pytest.raises(ValueError):
            ContactState(beacon_deadline=0)
        with pytest.raises(ValueError):
            ContactState(deadline=-1)


class TestMessageCodec:
    def test_beacon_layout(self):
        assert encode(Beacon(sensor_id=5)) == b"\x01\x00\x04\x00\x00\x00\x05"

    def test_ack_layout(self):
        assert encode(Ack(sensor_id=1, packets=25)) == bytes([3, 0, 8, 0, 0, 0, 1, 0, 0, 0, 25])

    def test_data_layout(self):
        packet = DataPacket(sensor_id=2, readings=10, status=SensorStatus(battery_j=49.9, queue_len=3, gain_db=114.5))
        frame = encode(packet)
        assert frame[:3] == bytes([2, 0, 28])
        assert struct.unpack(">IIdId", frame[3:]) == (2, 10, 49.9, 3, 114.5)
        assert decode(frame) == packet

    def test_frames_concatenate(self):
        messages = [Beacon(1), Ack(1, 4), Beacon(2)]
        assert decode_frames(b"".join(encode(m) for m in messages)) == messages

    @pytest.mark.parametrize("data", [
        b"\x01\x00",
        b"\x01\x00\x04\x00\x00",
        b"\x09\x00\x00",
        b"\x01\x00\x02\x00\x00",
    ])
    def test_bad_frames_rejected(self, data):
        with pytest.raises(CodecError):
            decode(data)

    def test_decode_wants_exactly_one_frame(self):
        with pytest.raises(CodecError):
            decode(encode(Beacon(1)) * 2)
        with pytest.raises(CodecError):
            decode(b"")

    def test_out_of_range_fields_rejected(self):
        with pytest.raises(CodecError):
            encode(Ack(sensor_id=-1, packets=0))
        with pytest.raises(CodecError):
            encode("hello")

    def test_status_comes_from_the_sensor(self, make_sensor):
        uav = UavState(id=0, position=(50.0, 50.0, 30.0), velocity=1.0, v_max=20.0, battery_u=1.0)
        params = channel_params(gain_threshold=100.0)
        sensor = make_sensor(queue_len=12, battery_j=33.0)
        link = observe_link(uav, sensor, params)
        assert make_status(sensor, link) == SensorStatus(battery_j=33.0, queue_len=12, gain_db=link.gain_db)
        dead = make_sensor(battery_j=0.0)
        with pytest.raises(SensorDeadError):
            make_status(dead, link)
