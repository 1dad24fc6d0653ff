"""
Contact messages and their binary codec.

Every frame is `kind (uint8) | payload length (uint16) | payload`, big-endian:

    BEACON  0x01  sensor_id uint32
    DATA    0x02  sensor_id uint32, readings uint32, battery_j float64,
                  queue_len uint32, gain_db float64
    ACK     0x03  sensor_id uint32, packets uint32
"""

import struct
from dataclasses import dataclass

from world.state import SensorDeadError

HEADER = struct.Struct(">BH")
BEACON_BODY = struct.Struct(">I")
DATA_BODY = struct.Struct(">IIdId")
ACK_BODY = struct.Struct(">II")

KIND_BEACON = 0x01
KIND_DATA = 0x02
KIND_ACK = 0x03


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class SensorStatus:
    battery_j: float
    queue_len: int
    gain_db: float


@dataclass(frozen=True)
class Beacon:
    sensor_id: int


@dataclass(frozen=True)
class DataPacket:
    sensor_id: int
    readings: int
    status: SensorStatus


@dataclass(frozen=True)
class Ack:
    sensor_id: int
    packets: int


def make_status(sensor, link):
    """Battery, queue and gain read from the sensor at send time."""
    if not sensor.alive:
        raise SensorDeadError(f"Sensor {sensor.id} is dead and sends no status")
    return SensorStatus(battery_j=float(sensor.battery_j), queue_len=int(sensor.queue_len), gain_db=float(link.gain_db))


def encode(message):
    try:
        if isinstance(message, Beacon):
            kind, body = KIND_BEACON, BEACON_BODY.pack(message.sensor_id)
        elif isinstance(message, DataPacket):
            s = message.status
            kind, body = KIND_DATA, DATA_BODY.pack(
                message.sensor_id, message.readings, s.battery_j, s.queue_len, s.gain_db
            )
        elif isinstance(message, Ack):
            kind, body = KIND_ACK, ACK_BODY.pack(message.sensor_id, message.packets)
        else:
            raise CodecError(f"Cannot encode {type(message).__name__}")
    except struct.error as e:
        raise CodecError(f"Field out of range in {message}: {e}") from e
    return HEADER.pack(kind, len(body)) + body


def _decode_body(kind, body):
    try:
        if kind == KIND_BEACON:
            (sensor_id,) = BEACON_BODY.unpack(body)
            return Beacon(sensor_id)
        if kind == KIND_DATA:
            sensor_id, readings, battery, queue, gain = DATA_BODY.unpack(body)
            return DataPacket(sensor_id, readings, SensorStatus(battery, queue, gain))
        if kind == KIND_ACK:
            sensor_id, packets = ACK_BODY.unpack(body)
            return Ack(sensor_id, packets)
    except struct.error as e:
        raise CodecError(f"Bad payload for kind 0x{kind:02x}: {e}") from e
    raise CodecError(f"Unknown message kind 0x{kind:02x}")


def decode_frames(data):
    """Split a byte string into consecutive frames and decode each."""
    messages = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < HEADER.size:
            raise CodecError("Truncated frame header")
        kind, length = HEADER.unpack_from(data, offset)
        offset += HEADER.size
        if len(data) - offset < length:
            raise CodecError("Truncated frame payload")
        messages.append(_decode_body(kind, bytes(data[offset:offset + length])))
        offset += length
    return messages


def decode(data):
    messages = decode_frames(data)
    if len(messages) != 1:
        raise CodecError(f"Expected one frame, found {len(messages)}")
    return messages[0]
