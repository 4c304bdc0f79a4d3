"""MQTT 3.1/3.1.1 control packet codec.

Only the fixed header (type, flags, remaining length) and the CONNECT flags byte are decoded; that is all the
packet-level features need. Payloads are never reassembled across TCP segments, so a packet cut short by the
segment is dropped unless it is a CONNECT whose flags byte arrived.
"""
import logging
from enum import IntEnum
from typing import Callable, List, Optional, Tuple

from mqtt_ids.data import MqttMessage

logger = logging.getLogger(__name__)

MAX_REMAINING_LENGTH = 268435455
MAX_VARINT_BYTES = 4

# Protocol name, level, connect flags, keep alive.
CONNECT_VARIABLE_HEADER_LEN = 10


class MqttControlPacketType(IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    PUBREC = 5
    PUBREL = 6
    PUBCOMP = 7
    SUBSCRIBE = 8
    SUBACK = 9
    UNSUBSCRIBE = 10
    UNSUBACK = 11
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14


# Fixed-header flag nibbles mandated by the protocol; PUBLISH carries dup/qos/retain instead.
REQUIRED_FIXED_HEADER_FLAGS = {
    packet_type: 0b0010 if packet_type in (MqttControlPacketType.PUBREL, MqttControlPacketType.SUBSCRIBE,
                                           MqttControlPacketType.UNSUBSCRIBE) else 0
    for packet_type in MqttControlPacketType if packet_type != MqttControlPacketType.PUBLISH
}


class MqttDecodeException(Exception):
    def __init__(self, offset: int, reason: str) -> None:
        super().__init__(f"MQTT bytes could not be decoded at offset {offset}: {reason}")


class MqttUnderflowException(MqttDecodeException):
    pass


class MqttEncodeException(Exception):
    def __init__(self, message, reason: str) -> None:
        super().__init__(f"MQTT message {message} could not be encoded: {reason}")


def decode_varint(buf: bytes, offset: int = 0) -> Tuple[int, int]:
    """Decode a remaining-length field starting at `offset`. Returns (bytes consumed, value)."""
    value = 0
    multiplier = 1
    consumed = 0
    while True:
        try:
            b = buf[offset + consumed]
        except IndexError:
            raise MqttUnderflowException(offset + consumed, "remaining length is cut short")
        value += (b & 0x7f) * multiplier
        multiplier *= 0x80
        consumed += 1
        if b & 0x80 == 0:
            return consumed, value
        if consumed >= MAX_VARINT_BYTES:
            raise MqttDecodeException(offset, "remaining length has more than 4 bytes")


def encode_varint(value: int) -> bytes:
    if not 0 <= value <= MAX_REMAINING_LENGTH:
        raise MqttEncodeException(value, f"remaining length must be within 0..{MAX_REMAINING_LENGTH}")
    out = bytearray()
    while True:
        b = value % 0x80
        value //= 0x80
        if value > 0:
            b |= 0x80
        out.append(b)
        if value == 0:
            return bytes(out)


def _decode_connect_flags(body: bytes, offset: int) -> dict:
    if len(body) < 2:
        raise MqttDecodeException(offset, "CONNECT is too short for a protocol name")
    name_len = int.from_bytes(body[0:2], 'big')
    flags_index = 2 + name_len + 1
    if flags_index >= len(body):
        raise MqttDecodeException(offset, "CONNECT is too short for a flags byte")
    flags = body[flags_index]
    qos = (flags >> 3) & 0x03
    if qos == 3:
        raise MqttDecodeException(offset, "CONNECT will QoS is 3")
    return {
        'flag_uname': bool(flags & 0x80),
        'flag_passwd': bool(flags & 0x40),
        'flag_retain': bool(flags & 0x20),
        'flag_qos': qos,
        'flag_willflag': bool(flags & 0x04),
        'flag_clean': bool(flags & 0x02),
        'flag_reserved': bool(flags & 0x01),
    }


def decode_message(payload: bytes, offset: int = 0) -> Tuple[MqttMessage, int]:
    """Decode the control packet starting at `offset`. Returns the message and the number of bytes it spans."""
    if offset >= len(payload):
        raise MqttUnderflowException(offset, "no bytes left")
    first = payload[offset]
    packet_type = first >> 4
    flags = first & 0x0f
    if packet_type not in MqttControlPacketType._value2member_map_:
        raise MqttDecodeException(offset, f"reserved control packet type {packet_type}")
    packet_type = MqttControlPacketType(packet_type)
    required = REQUIRED_FIXED_HEADER_FLAGS.get(packet_type)
    if required is not None and flags != required:
        raise MqttDecodeException(offset, f"invalid fixed header flags {flags:#x} for {packet_type.name}")
    if packet_type == MqttControlPacketType.PUBLISH and (flags >> 1) & 0x03 == 3:
        raise MqttDecodeException(offset, "PUBLISH QoS is 3")

    varint_len, remaining_length = decode_varint(payload, offset + 1)
    body_start = offset + 1 + varint_len
    end = body_start + remaining_length
    if end > len(payload):
        underflow = MqttUnderflowException(offset, f"packet needs {end - offset} bytes, "
                                                   f"{len(payload) - offset} remain")
        if packet_type != MqttControlPacketType.CONNECT:
            raise underflow
        # A CONNECT cut off after its flags byte still carries every field we decode.
        try:
            connect_flags = _decode_connect_flags(payload[body_start:], offset)
        except MqttDecodeException:
            raise underflow
        logger.debug(f"Kept a CONNECT truncated to {len(payload) - offset} of {end - offset} bytes.")
        return (MqttMessage(message_type=int(packet_type), message_length=remaining_length, **connect_flags),
                len(payload) - offset)

    connect_flags = {}
    if packet_type == MqttControlPacketType.CONNECT:
        connect_flags = _decode_connect_flags(payload[body_start:end], offset)
    return MqttMessage(message_type=int(packet_type), message_length=remaining_length, **connect_flags), end - offset


def decode_mqtt_stream(payload: bytes) -> Tuple[List[MqttMessage], int]:
    """Decode consecutive control packets. Returns the messages and the count of trailing bytes that could not
    be decoded (a partial packet split across segments, or bytes that are not MQTT at all). A trailing CONNECT
    whose flags byte made it into the segment is kept with its declared length."""
    messages = []
    offset = 0
    while offset < len(payload):
        try:
            message, consumed = decode_message(payload, offset)
        except MqttDecodeException as e:
            logger.debug(f"Stopped decoding MQTT payload. {e}")
            break
        messages.append(message)
        offset += consumed
    return messages, len(payload) - offset


def parse_mqtt_stream(payload: bytes) -> List[MqttMessage]:
    return decode_mqtt_stream(payload)[0]


def encode_packet(packet_type: MqttControlPacketType, body: bytes, flags: Optional[int] = None) -> bytes:
    if flags is None:
        flags = REQUIRED_FIXED_HEADER_FLAGS.get(packet_type, 0)
    return bytes([(int(packet_type) << 4) | flags]) + encode_varint(len(body)) + body


def _string(value: bytes) -> bytes:
    return len(value).to_bytes(2, 'big') + value


def connect_flags_byte(message: MqttMessage) -> int:
    return ((message.flag_uname << 7) | (message.flag_passwd << 6) | (message.flag_retain << 5)
            | (message.flag_qos << 3) | (message.flag_willflag << 2) | (message.flag_clean << 1)
            | int(message.flag_reserved))


def encode_connect(client_id: bytes, username: Optional[bytes] = None, password: Optional[bytes] = None,
                   clean: bool = True, keep_alive: int = 60) -> bytes:
    flags = MqttMessage(message_type=MqttControlPacketType.CONNECT, message_length=0,
                        flag_uname=username is not None, flag_passwd=password is not None, flag_clean=clean)
    body = _string(b"MQTT") + bytes([4, connect_flags_byte(flags)]) + keep_alive.to_bytes(2, 'big')
    body += _string(client_id)
    if username is not None:
        body += _string(username)
    if password is not None:
        body += _string(password)
    return encode_packet(MqttControlPacketType.CONNECT, body)


def encode_publish(topic: bytes, message: bytes) -> bytes:
    return encode_packet(MqttControlPacketType.PUBLISH, _string(topic) + message)


def encode_mqtt_message(message: MqttMessage, filler: Optional[Callable[[int], bytes]] = None) -> bytes:
    """Encode `message` so that it decodes back to an equal MqttMessage. The body beyond the fields the decoder
    reads is produced by `filler` (zero bytes by default) so that its length equals message_length."""
    if filler is None:
        filler = bytes
    if message.message_type not in MqttControlPacketType._value2member_map_:
        raise MqttEncodeException(message, "message type must be within 1..14")
    packet_type = MqttControlPacketType(message.message_type)
    if packet_type != MqttControlPacketType.CONNECT:
        if connect_flags_byte(message) != 0:
            raise MqttEncodeException(message, "connect flags are only valid on CONNECT")
        return encode_packet(packet_type, filler(message.message_length))

    if message.message_length < CONNECT_VARIABLE_HEADER_LEN:
        raise MqttEncodeException(message, f"CONNECT needs at least {CONNECT_VARIABLE_HEADER_LEN} bytes")
    if message.flag_qos not in (0, 1, 2):
        raise MqttEncodeException(message, "will QoS must be 0, 1 or 2")
    body = _string(b"MQTT") + bytes([4, connect_flags_byte(message)]) + (60).to_bytes(2, 'big')
    return encode_packet(packet_type, body + filler(message.message_length - CONNECT_VARIABLE_HEADER_LEN))
