"""Framed codec for the motherboard <-> sensor board command set.

Every sensor board speaks the same binary protocol over the shared bus:

    SOF (0xA5) | ADDR | CMD | LEN | PAYLOAD ... | CRC8

ADDR is the board slot (0-5, one per motherboard face), LEN counts the
payload bytes (at most 32), and the CRC-8 covers ADDR through the end
of the payload.  The codec itself is pure and stateless; command
semantics and bus timing belong to the board models and the simulator.
"""

from dataclasses import dataclass, field
from enum import IntEnum

SOF = 0xA5
MAX_PAYLOAD = 32
MIN_FRAME_LEN = 5  # SOF + ADDR + CMD + LEN + CRC
ADDR_MIN = 0
ADDR_MAX = 5  # six faces on the motherboard

# Command set shared by all boards.
CMD_IDENT = 0x01
CMD_SET_POLL = 0x02
CMD_SET_THRESH = 0x03
CMD_READ_NOW = 0x04
CMD_GET_DATA = 0x05
CMD_SET_ENABLE = 0x06

KNOWN_COMMANDS = frozenset(
    (CMD_IDENT, CMD_SET_POLL, CMD_SET_THRESH, CMD_READ_NOW, CMD_GET_DATA,
     CMD_SET_ENABLE)
)


# -- Errors ------------------------------------------------------------------


class FrameError(ValueError):
    """Base class for codec failures."""


class BadSof(FrameError):
    """First byte is not the start-of-frame marker."""


class BadLength(FrameError):
    """LEN field disagrees with the actual byte count."""


class BadChecksum(FrameError):
    """CRC-8 trailer does not match the frame contents."""


class PayloadTooLong(FrameError):
    """Payload exceeds the 32-byte frame budget."""


class AddressOutOfRange(FrameError):
    """Slot address outside 0-5."""


class UnknownCommand(ValueError):
    """Opcode outside the shared command set (semantic layer, not codec)."""


class UnknownBoardType(ValueError):
    """IDENT payload names a board type this toolchain does not know."""


class MalformedDescriptor(ValueError):
    """IDENT payload is structurally inconsistent."""


# -- CRC-8 -------------------------------------------------------------------

# CRC-8/ATM: polynomial 0x07, init 0x00, no reflection, no final XOR.
# One byte of overhead and guaranteed detection of single-bit errors.
_CRC8_POLY = 0x07


def _build_crc8_table():
    table = []
    for value in range(256):
        crc = value
        for _ in range(8):
            if crc & 0x80:
                crc = ((crc << 1) ^ _CRC8_POLY) & 0xFF
            else:
                crc = (crc << 1) & 0xFF
        table.append(crc)
    return tuple(table)


_CRC8_TABLE = _build_crc8_table()


def crc8(data: bytes) -> int:
    """Compute CRC-8/ATM over a byte sequence.

    Deterministic table-driven implementation; ``crc8(b"123456789")``
    is 0xF4, the standard check value for this parameter set.
    Appending the CRC to its own input always yields 0.
    """
    crc = 0
    for byte in data:
        crc = _CRC8_TABLE[crc ^ byte]
    return crc


# -- Frames ------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """One bus message between the motherboard and a sensor board."""

    address: int
    command: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame to wire bytes.

    Emits SOF | ADDR | CMD | LEN | PAYLOAD | CRC8 with the CRC taken
    over ADDR through the end of the payload.

    Raises:
        AddressOutOfRange: if the slot is outside 0-5.
        PayloadTooLong: if the payload exceeds 32 bytes.
    """
    if not ADDR_MIN <= frame.address <= ADDR_MAX:
        raise AddressOutOfRange(
            "slot address must be 0-5, got {}".format(frame.address))
    if len(frame.payload) > MAX_PAYLOAD:
        raise PayloadTooLong(
            "payload is {} bytes, limit is {}".format(
                len(frame.payload), MAX_PAYLOAD))
    body = bytes([frame.address, frame.command & 0xFF, len(frame.payload)])
    body += bytes(frame.payload)
    return bytes([SOF]) + body + bytes([crc8(body)])


def decode_frame(data: bytes) -> Frame:
    """Parse wire bytes back into a Frame.

    Accepts arbitrary bytes and names the first violated field:
    BadSof, then BadLength, then BadChecksum.  A frame whose checksum
    verifies but whose address is out of range raises AddressOutOfRange
    (it cannot have been produced by ``encode_frame``).
    """
    if len(data) < MIN_FRAME_LEN:
        raise BadLength(
            "frame is {} bytes, minimum is {}".format(len(data), MIN_FRAME_LEN))
    if data[0] != SOF:
        raise BadSof(
            "expected SOF 0x{:02X}, got 0x{:02X}".format(SOF, data[0]))
    claimed = data[3]
    if claimed > MAX_PAYLOAD or len(data) != MIN_FRAME_LEN + claimed:
        raise BadLength(
            "LEN field says {} payload bytes, frame is {} bytes".format(
                claimed, len(data)))
    body = data[1:-1]
    if crc8(body) != data[-1]:
        raise BadChecksum(
            "CRC mismatch: received 0x{:02X}, computed 0x{:02X}".format(
                data[-1], crc8(body)))
    address = data[1]
    if not ADDR_MIN <= address <= ADDR_MAX:
        raise AddressOutOfRange(
            "slot address must be 0-5, got {}".format(address))
    return Frame(address, data[2], bytes(data[4:-1]))


# -- Boards, metrics, and wire scales ---------------------------------------


class BoardType(IntEnum):
    ENVIRONMENTAL = 0x01
    MICROPHONE = 0x02
    BUTTON = 0x03
    POWER_LIGHT = 0x04


class MetricKind(IntEnum):
    TEMPERATURE = 0x01
    PRESSURE = 0x02
    HUMIDITY = 0x03
    IAQ = 0x04
    SOUND_LEVEL = 0x05
    BUTTON_PRESS = 0x06
    BATTERY_VOLTAGE = 0x07
    LIGHT_LEVEL = 0x08


# Canonical per-kind fixed point.  A measurement travels as a signed
# 16-bit integer counting this many engineering units per LSB.  The
# inverse (integer counts per unit) is what quantization multiplies by.
SCALE_LSB = {
    MetricKind.TEMPERATURE: 0.01,     # degC
    MetricKind.PRESSURE: 0.1,         # hPa
    MetricKind.HUMIDITY: 0.01,        # %RH
    MetricKind.IAQ: 1.0,              # index 0-500
    MetricKind.SOUND_LEVEL: 0.01,     # dBSPL
    MetricKind.BUTTON_PRESS: 1.0,     # button id 1-4
    MetricKind.BATTERY_VOLTAGE: 1.0,  # mV
    MetricKind.LIGHT_LEVEL: 1.0,      # lux, clamped to 32767
}

_INV_SCALE = {
    MetricKind.TEMPERATURE: 100,
    MetricKind.PRESSURE: 10,
    MetricKind.HUMIDITY: 100,
    MetricKind.IAQ: 1,
    MetricKind.SOUND_LEVEL: 100,
    MetricKind.BUTTON_PRESS: 1,
    MetricKind.BATTERY_VOLTAGE: 1,
    MetricKind.LIGHT_LEVEL: 1,
}

UNITS = {
    MetricKind.TEMPERATURE: "degC",
    MetricKind.PRESSURE: "hPa",
    MetricKind.HUMIDITY: "pctRH",
    MetricKind.IAQ: "IAQ",
    MetricKind.SOUND_LEVEL: "dBSPL",
    MetricKind.BUTTON_PRESS: "button",
    MetricKind.BATTERY_VOLTAGE: "mV",
    MetricKind.LIGHT_LEVEL: "lux",
}

INT16_MIN = -32768
INT16_MAX = 32767


def encode_value(kind: MetricKind, value: float) -> int:
    """Quantize an engineering value to its signed 16-bit wire integer.

    Fixed-point truncation toward zero at the kind's canonical scale,
    clamped to the int16 range (the clamp is load-bearing for
    LIGHT_LEVEL, whose lux counts can exceed 32767).
    """
    # snap away float representation noise (64.21 * 100 = 6420.999...)
    # before truncating, so decode/encode round-trips are exact
    raw = int(round(value * _INV_SCALE[kind], 6))
    return max(INT16_MIN, min(INT16_MAX, raw))


def decode_value(kind: MetricKind, raw: int) -> float:
    """De-scale a wire integer back to engineering units."""
    return raw / _INV_SCALE[kind]


@dataclass(frozen=True)
class MetricDescriptor:
    """One metric a board exposes: local index, kind, and wire scale."""

    metric_id: int
    kind: MetricKind
    scale: float
    unit: str


@dataclass(frozen=True)
class BoardDescriptor:
    """What a board reports about itself in its IDENT response."""

    board_type: BoardType
    firmware_version: tuple = (1, 0)
    metrics: tuple = field(default=())


# Metric layout per board type; metric ids are the 0-based positions.
BOARD_METRICS = {
    BoardType.ENVIRONMENTAL: (
        MetricKind.TEMPERATURE, MetricKind.PRESSURE, MetricKind.HUMIDITY,
        MetricKind.IAQ),
    BoardType.MICROPHONE: (MetricKind.SOUND_LEVEL,),
    BoardType.BUTTON: (MetricKind.BUTTON_PRESS,),
    BoardType.POWER_LIGHT: (MetricKind.BATTERY_VOLTAGE,
                            MetricKind.LIGHT_LEVEL),
}


def descriptor_for(board_type: BoardType,
                   firmware_version=(1, 0)) -> BoardDescriptor:
    """Build the canonical descriptor for a board type."""
    metrics = tuple(
        MetricDescriptor(i, kind, SCALE_LSB[kind], UNITS[kind])
        for i, kind in enumerate(BOARD_METRICS[board_type])
    )
    return BoardDescriptor(board_type, tuple(firmware_version), metrics)


def build_ident_payload(descriptor: BoardDescriptor) -> bytes:
    """Serialize a board descriptor into an IDENT response payload.

    Layout: board_type | fw_major | fw_minor | metric_count | kind...
    """
    major, minor = descriptor.firmware_version
    out = bytes([descriptor.board_type, major, minor, len(descriptor.metrics)])
    out += bytes(m.kind for m in descriptor.metrics)
    return out


def parse_ident(payload: bytes) -> BoardDescriptor:
    """Parse an IDENT response payload into a BoardDescriptor.

    Raises:
        UnknownBoardType: unrecognized board type byte.
        MalformedDescriptor: truncated payload, zero metrics, or an
            unknown metric kind byte.
    """
    if len(payload) < 4:
        raise MalformedDescriptor(
            "IDENT payload is {} bytes, minimum is 4".format(len(payload)))
    try:
        board_type = BoardType(payload[0])
    except ValueError:
        raise UnknownBoardType(
            "board type byte 0x{:02X} is not known".format(payload[0]))
    count = payload[3]
    if count < 1:
        raise MalformedDescriptor("descriptor must list at least one metric")
    if len(payload) != 4 + count:
        raise MalformedDescriptor(
            "descriptor claims {} metrics but payload is {} bytes".format(
                count, len(payload)))
    metrics = []
    for i, kind_byte in enumerate(payload[4:]):
        try:
            kind = MetricKind(kind_byte)
        except ValueError:
            raise MalformedDescriptor(
                "metric {} has unknown kind byte 0x{:02X}".format(i, kind_byte))
        metrics.append(MetricDescriptor(i, kind, SCALE_LSB[kind], UNITS[kind]))
    return BoardDescriptor(board_type, (payload[1], payload[2]),
                           tuple(metrics))
