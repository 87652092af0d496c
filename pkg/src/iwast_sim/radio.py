"""LoRaWAN uplink model: payloads, time-on-air, duty-cycle gating.

The radio carries fixed-size measurement records (3 bytes each, up to
12 per packet) on port 1.  Airtime follows the standard LoRa model at
EU868 defaults (125 kHz, CR 4/5, 8 preamble symbols, explicit header,
LDRO for SF >= 11); the regulatory 1 % duty cycle is enforced as
post-transmission off-time.  There is no crypto and no downlink; the
network is a loopback queue to the collector.
"""

import math
import struct
from dataclasses import dataclass, field

from . import bus
from .bus import MetricKind

BANDWIDTH_HZ = 125000
PREAMBLE_SYMBOLS = 8
CODING_RATE = 1  # CR index: rate 4/(4+CR)
DUTY_CYCLE = 0.01
UPLINK_PORT = 1

RECORD_SIZE = 3
MAX_RECORDS_PER_PACKET = 12

# EU868 maximum application payloads per spreading factor.
PAYLOAD_CAPS = {7: 222, 8: 222, 9: 115, 10: 51, 11: 51, 12: 51}

# Transceiver overhead per uplink (receive windows + processing) for
# energy accounting, calibrated so an SF11/36-byte uplink occupies the
# motherboard for 7 s.
RADIO_OVERHEAD_S = 6.013


class PayloadTooLargeForSF(ValueError):
    """Payload exceeds the regional cap for the spreading factor."""


class BadLength(ValueError):
    """Uplink payload length is not a multiple of the record size."""


class UnknownMetricId(ValueError):
    """Record carries a metric id outside the known kinds."""


@dataclass(frozen=True)
class RadioParams:
    """Modulation parameters; EU868 defaults, SF is the free knob."""

    spreading_factor: int = 11
    bandwidth_hz: int = BANDWIDTH_HZ
    coding_rate: int = CODING_RATE
    preamble_symbols: int = PREAMBLE_SYMBOLS
    duty_cycle: float = DUTY_CYCLE

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(
                "spreading factor must be 7-12, got %r"
                % (self.spreading_factor,))
        if self.bandwidth_hz != BANDWIDTH_HZ:
            raise ValueError("only 125 kHz bandwidth is modeled")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError("duty cycle must be in (0, 1]")

    @property
    def low_data_rate_optimize(self) -> bool:
        # forced by the SF/bandwidth rule at 125 kHz
        return self.spreading_factor >= 11

    @property
    def symbol_time_s(self) -> float:
        return (2 ** self.spreading_factor) / self.bandwidth_hz

    @property
    def max_payload(self) -> int:
        return PAYLOAD_CAPS[self.spreading_factor]


def airtime(params: RadioParams, payload_len: int) -> float:
    """Time-on-air in seconds for an explicit-header uplink."""
    if not 1 <= payload_len <= params.max_payload:
        raise PayloadTooLargeForSF(
            "payload of {} bytes exceeds the SF{} cap of {} bytes".format(
                payload_len, params.spreading_factor, params.max_payload))
    sf = params.spreading_factor
    de = 1 if params.low_data_rate_optimize else 0
    tsym = params.symbol_time_s
    numerator = 8 * payload_len - 4 * sf + 28 + 16
    symbols = math.ceil(numerator / (4 * (sf - 2 * de)))
    payload_symbols = 8 + max(symbols * (params.coding_rate + 4), 0)
    preamble_time = (params.preamble_symbols + 4.25) * tsym
    return preamble_time + payload_symbols * tsym


def episode_duration_s(params: RadioParams, payload_len: int) -> float:
    """Motherboard busy time for one uplink (airtime plus overhead)."""
    return airtime(params, payload_len) + RADIO_OVERHEAD_S


# -- Duty-cycle gate ---------------------------------------------------------


@dataclass(frozen=True)
class SendNow:
    pass


@dataclass(frozen=True)
class DeferUntil:
    t: float


def duty_gate(now: float, history, duty_cycle: float = DUTY_CYCLE):
    """Gate a transmission request against the off-time rule.

    ``history`` holds (tx_time, airtime_s) pairs of previous uplinks;
    each blocks the channel until tx_time + airtime/duty_cycle.
    """
    next_allowed = 0.0
    for tx_time, tx_airtime in history:
        next_allowed = max(next_allowed, tx_time + tx_airtime / duty_cycle)
    if now >= next_allowed:
        return SendNow()
    return DeferUntil(next_allowed)


# -- Measurement records and packets -----------------------------------------


@dataclass(frozen=True)
class UplinkRecord:
    """One measurement on the wire: slot, metric kind, raw int16."""

    slot: int
    kind: MetricKind
    raw: int

    @property
    def value(self):
        """De-scaled engineering value."""
        return bus.decode_value(self.kind, self.raw)


def pack_record(record: UplinkRecord) -> bytes:
    if not 0 <= record.slot <= 15:
        raise ValueError("slot must fit a nibble, got %r" % (record.slot,))
    head = (record.slot << 4) | (int(record.kind) & 0x0F)
    return bytes([head]) + struct.pack(">h", record.raw)


def build_uplink(records) -> bytes:
    """Concatenate measurement records into an uplink payload."""
    if len(records) > MAX_RECORDS_PER_PACKET:
        raise ValueError(
            "at most {} records per packet, got {}".format(
                MAX_RECORDS_PER_PACKET, len(records)))
    return b"".join(pack_record(r) for r in records)


def decode_uplink(payload: bytes):
    """Inverse of :func:`build_uplink`.

    Returns UplinkRecord objects; engineering values are available via
    ``.value``.
    """
    if len(payload) % RECORD_SIZE != 0:
        raise BadLength(
            "payload length {} is not a multiple of {}".format(
                len(payload), RECORD_SIZE))
    records = []
    for i in range(0, len(payload), RECORD_SIZE):
        head = payload[i]
        slot, kind_id = head >> 4, head & 0x0F
        try:
            kind = MetricKind(kind_id)
        except ValueError:
            raise UnknownMetricId(
                "metric id {} at record {}".format(kind_id, i // RECORD_SIZE)
            ) from None
        (raw,) = struct.unpack(">h", payload[i + 1:i + 3])
        records.append(UplinkRecord(slot, kind, raw))
    return records


@dataclass
class UplinkPacket:
    """One transmitted packet plus its delivery metadata."""

    device_id: bytes
    fcnt: int
    payload: bytes
    tx_time_s: float
    sf: int
    airtime_s: float
    port: int = UPLINK_PORT

    def to_wire(self) -> dict:
        """Delivery format posted to the collector."""
        return {
            "device_id": self.device_id.hex(),
            "fcnt": self.fcnt,
            "port": self.port,
            "payload": self.payload.hex(),
            "tx_time_s": self.tx_time_s,
            "sf": self.sf,
            "airtime_ms": self.airtime_s * 1000.0,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "UplinkPacket":
        return cls(
            device_id=bytes.fromhex(data["device_id"]),
            fcnt=int(data["fcnt"]),
            payload=bytes.fromhex(data["payload"]),
            tx_time_s=float(data["tx_time_s"]),
            sf=int(data["sf"]),
            airtime_s=float(data["airtime_ms"]) / 1000.0,
            port=int(data.get("port", UPLINK_PORT)),
        )
