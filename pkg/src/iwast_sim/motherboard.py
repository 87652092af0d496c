"""Motherboard model: boot window, NVM config, polling, accumulation.

The motherboard wakes for three reasons: a timer poll is due, a board
raised its interrupt line, or a packet must be (re)transmitted.  Wake
episodes accumulate measurement records; the accumulator is flushed to
uplink packets when the episode ends.  Configuration is staged over a
USB session and persisted to a CRC-8 protected NVM blob.
"""

import struct
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from . import bus, radio
from .bus import BoardType, Frame, MetricKind

USB_WINDOW_S = 30.0
BUS_TXN_S = 0.002  # one framed command/response exchange
BUS_TIMEOUT_S = 0.1
SYNC_WAIT_LIMIT_S = 0.1  # wait in place if data ready this soon
BOOT_S = 0.005
MIN_POLL_INTERVAL_S = 10

NVM_MAGIC = b"IWST"
NVM_VERSION = 1
DEVICE_ID_LEN = 8
RADIO_KEYS_LEN = 36
NVM_ENTRY_LEN = 11
NVM_HEADER_LEN = len(NVM_MAGIC) + 1 + DEVICE_ID_LEN + RADIO_KEYS_LEN + 1 + 1


class NvmCorrupt(Exception):
    """NVM blob failed validation (magic, version, length, or CRC)."""


class NvmWriteFailed(Exception):
    """Simulated NVM write fault; previous contents stay intact."""


class BusTimeout(Exception):
    """Board did not answer a bus command within 100 ms."""


class UnknownMetric(KeyError):
    """(slot, metric) absent from the discovered topology."""


class InvalidConfigValue(ValueError):
    """Configuration violates a metric's constraints."""


@dataclass(frozen=True)
class MetricConfig:
    """Per-metric behavior: timer polling and/or threshold notify.

    ``low``/``high`` are scaled wire values for the metric's kind.
    """

    poll_interval_s: int = 0
    threshold_enabled: bool = False
    low: int = 0
    high: int = 0


def validate_metric_config(board_type: BoardType, kind: MetricKind,
                           cfg: MetricConfig) -> None:
    """Reject configurations that violate board or metric rules."""
    if cfg.poll_interval_s < 0:
        raise InvalidConfigValue("poll interval must be >= 0")
    if cfg.poll_interval_s != 0 and cfg.poll_interval_s < MIN_POLL_INTERVAL_S:
        raise InvalidConfigValue(
            "poll interval must be 0 (disabled) or >= {} s".format(
                MIN_POLL_INTERVAL_S))
    if cfg.threshold_enabled and cfg.low > cfg.high:
        raise InvalidConfigValue("threshold low must be <= high")
    if board_type is BoardType.BUTTON and cfg.poll_interval_s != 0:
        raise InvalidConfigValue("button board is interrupt-only")
    if kind is MetricKind.SOUND_LEVEL:
        if cfg.threshold_enabled and cfg.poll_interval_s != 0:
            raise InvalidConfigValue(
                "microphone polling and wake-on-sound are exclusive")
        if cfg.threshold_enabled:
            threshold = bus.decode_value(kind, cfg.high)
            if not 65.0 <= threshold <= 100.0:
                raise InvalidConfigValue(
                    "sound threshold must be within 65-100 dBSPL, "
                    "got %r" % (threshold,))


@dataclass
class DeviceConfig:
    """Identity, radio settings, and the per-metric configuration map."""

    device_id: bytes
    radio_keys: bytes
    spreading_factor: int = 11
    metrics: Dict[Tuple[int, int], MetricConfig] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.device_id) != DEVICE_ID_LEN:
            raise ValueError("device_id must be 8 bytes")
        if len(self.radio_keys) != RADIO_KEYS_LEN:
            raise ValueError("radio_keys must be 36 bytes")
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError("spreading factor must be 7-12")


def encode_nvm(config: DeviceConfig) -> bytes:
    """Serialize a DeviceConfig to the NVM blob format.

    Layout: magic, version, device_id, radio_keys, SF, entry count,
    one 11-byte entry per configured (slot, metric) sorted by key, and
    a CRC-8 trailer over everything before it.
    """
    body = bytearray()
    body += NVM_MAGIC
    body.append(NVM_VERSION)
    body += config.device_id
    body += config.radio_keys
    body.append(config.spreading_factor)
    entries = sorted(config.metrics.items())
    body.append(len(entries))
    for (slot, metric), cfg in entries:
        body += struct.pack(
            ">BBIBhh", slot, metric, cfg.poll_interval_s,
            1 if cfg.threshold_enabled else 0, cfg.low, cfg.high)
    body.append(bus.crc8(body))
    return bytes(body)


def decode_nvm(blob: bytes) -> DeviceConfig:
    """Parse and validate an NVM blob; raises NvmCorrupt on damage."""
    if len(blob) < NVM_HEADER_LEN + 1:
        raise NvmCorrupt("blob too short")
    if blob[:4] != NVM_MAGIC:
        raise NvmCorrupt("bad magic")
    if blob[4] != NVM_VERSION:
        raise NvmCorrupt("unsupported version %d" % blob[4])
    if bus.crc8(blob[:-1]) != blob[-1]:
        raise NvmCorrupt("checksum mismatch")
    offset = 5
    device_id = blob[offset:offset + DEVICE_ID_LEN]
    offset += DEVICE_ID_LEN
    radio_keys = blob[offset:offset + RADIO_KEYS_LEN]
    offset += RADIO_KEYS_LEN
    sf = blob[offset]
    count = blob[offset + 1]
    offset += 2
    expected = offset + count * NVM_ENTRY_LEN + 1
    if len(blob) != expected:
        raise NvmCorrupt(
            "length {} does not match entry count {}".format(
                len(blob), count))
    metrics = {}
    for _ in range(count):
        slot, metric, poll, thr, low, high = struct.unpack(
            ">BBIBhh", blob[offset:offset + NVM_ENTRY_LEN])
        metrics[(slot, metric)] = MetricConfig(
            poll_interval_s=poll, threshold_enabled=bool(thr),
            low=low, high=high)
        offset += NVM_ENTRY_LEN
    return DeviceConfig(bytes(device_id), bytes(radio_keys), sf, metrics)


@dataclass(frozen=True)
class TaggedRecord:
    """UplinkRecord plus simulation-side provenance for the logs."""

    record: radio.UplinkRecord
    t_meas: float
    cause: str


class Motherboard:
    """Single-threaded controller FSM advanced by the sim engine.

    States: boot, usb_wait, configure, sleep (wake activity is
    transient within an engine event).  The engine owns time; every
    method takes ``now`` explicitly.
    """

    def __init__(self, device_id: bytes, radio_keys: bytes,
                 boards=None, nvm_blob: Optional[bytes] = None,
                 nvm_write_hook=None):
        self.boards = dict(boards or {})  # slot -> SensorBoard
        self.nvm_blob = nvm_blob
        self.nvm_write_hook = nvm_write_hook
        self.state = "boot"
        self.config = DeviceConfig(device_id, radio_keys)
        self.staged: Dict[Tuple[int, int], MetricConfig] = {}
        self.pending_polls: Dict[Tuple[int, int], float] = {}
        self.accumulator: List[TaggedRecord] = []
        self.pending_tx: List[radio.UplinkPacket] = []
        self.fcnt = 0
        self.bus_txns = 0
        self.nvm_error: Optional[str] = None
        self.session_open = False
        self.diagnostics: List[str] = []

    # -- boot sequence ---------------------------------------------------

    def power_on(self, now: float) -> float:
        """Load NVM and enter the USB wait window; returns its deadline.

        Loading at boot (not at window expiry) lets a configurator
        session read back what is actually persisted.
        """
        self.state = "usb_wait"
        self.nvm_error = None
        if self.nvm_blob is not None:
            try:
                self.config = decode_nvm(self.nvm_blob)
            except NvmCorrupt as exc:
                self.nvm_error = str(exc)
                self.diagnostics.append(
                    "nvm corrupt ({}); waiting for USB".format(exc))
        return now + USB_WINDOW_S

    def usb_attached(self, now: float):
        if self.state not in ("usb_wait", "configure"):
            raise RuntimeError("USB attach only valid while waiting")
        self.state = "configure"

    def usb_window_elapsed(self, now: float) -> str:
        """No configurator showed up: apply the stored config and sleep.

        A corrupt blob keeps the board awake waiting for USB; the
        condition is surfaced as a diagnostic, not an abort.
        """
        if self.state != "usb_wait":
            return self.state
        if self.nvm_error is not None:
            return self.state
        self.apply_config(now)
        self.state = "sleep"
        return self.state

    # -- bus helpers -----------------------------------------------------

    def transact(self, slot: int, command: int, payload: bytes,
                 now: float) -> Frame:
        """One framed exchange with a board; raises BusTimeout when the
        board stays silent past the 100 ms budget."""
        board = self.boards.get(slot)
        self.bus_txns += 1
        reply = board.transact(Frame(slot, command, payload), now) \
            if board is not None else None
        if reply is None:
            raise BusTimeout(
                "slot {} did not answer command 0x{:02X}".format(
                    slot, command))
        return reply

    def discover(self, now: float):
        """IDENT every occupied slot; returns {slot: BoardDescriptor}."""
        topology = {}
        for slot in sorted(self.boards):
            reply = self.transact(slot, bus.CMD_IDENT, b"", now)
            topology[slot] = bus.parse_ident(reply.payload)
        return topology

    def metric_kind(self, slot: int, metric: int) -> MetricKind:
        board = self.boards.get(slot)
        if board is None or metric >= len(board.descriptor.metrics):
            raise UnknownMetric("no metric {} in slot {}".format(metric, slot))
        return board.descriptor.metrics[metric].kind

    # -- configuration ---------------------------------------------------

    def effective_config(self, slot: int, metric: int) -> MetricConfig:
        key = (slot, metric)
        if key in self.staged:
            return self.staged[key]
        return self.config.metrics.get(key, MetricConfig())

    def stage_set(self, slot: int, metric: int, **changes):
        """Stage a partial metric-config update (visible to GET,
        persisted only by SAVE)."""
        kind = self.metric_kind(slot, metric)
        cfg = replace(self.effective_config(slot, metric), **changes)
        validate_metric_config(self.boards[slot].board_type, kind, cfg)
        self.staged[(slot, metric)] = cfg
        return cfg

    def save(self, now: float) -> bytes:
        """Persist staged config to NVM; atomic under write faults."""
        merged = dict(self.config.metrics)
        merged.update(self.staged)
        candidate = replace(self.config, metrics=merged)
        blob = encode_nvm(candidate)
        if self.nvm_write_hook is not None:
            self.nvm_write_hook(blob)  # may raise NvmWriteFailed
        self.nvm_blob = blob
        self.config = candidate
        self.staged = {}
        return blob

    def reboot(self, now: float) -> float:
        """Reset to the boot sequence; staged (unsaved) changes die."""
        self.staged = {}
        self.session_open = False
        self.accumulator = []
        self.pending_tx = []
        self.pending_polls = {}
        self.state = "boot"
        return self.power_on(now)

    def apply_config(self, now: float):
        """Push the persisted config to the boards over the bus and
        anchor the poll schedule at ``now``."""
        self.pending_polls = {}
        for (slot, metric), cfg in sorted(self.config.metrics.items()):
            if slot not in self.boards:
                self.diagnostics.append(
                    "config for empty slot {} ignored".format(slot))
                continue
            board = self.boards[slot]
            if metric >= len(board.descriptor.metrics):
                self.diagnostics.append(
                    "config for unknown metric {}/{} ignored".format(
                        slot, metric))
                continue
            self.transact(
                slot, bus.CMD_SET_POLL,
                struct.pack(">BI", metric, cfg.poll_interval_s), now)
            self.transact(
                slot, bus.CMD_SET_THRESH,
                struct.pack(">BBhh", metric,
                            1 if cfg.threshold_enabled else 0,
                            cfg.low, cfg.high), now)
            if cfg.poll_interval_s > 0:
                self.pending_polls[(slot, metric)] = (
                    now + cfg.poll_interval_s)

    # -- sleep-phase duties ----------------------------------------------

    def poll_due(self, now: float):
        """All (slot, metric) due at ``now``, each rescheduled."""
        due = []
        for key, next_t in sorted(self.pending_polls.items()):
            if next_t <= now + 1e-9:
                due.append(key)
                interval = self.effective_applied(key).poll_interval_s
                self.pending_polls[key] = next_t + interval
        return due

    def effective_applied(self, key) -> MetricConfig:
        return self.config.metrics.get(key, MetricConfig())

    def next_poll_at(self) -> Optional[float]:
        if not self.pending_polls:
            return None
        return min(self.pending_polls.values())

    def service_interrupt(self, slot: int, now: float):
        """Drain a board's data queue over GET_DATA transactions."""
        board = self.boards.get(slot)
        if board is None:
            raise BusTimeout("interrupt from empty slot %d" % slot)
        records = []
        while True:
            reply = self.transact(slot, bus.CMD_GET_DATA, b"", now)
            batch = self._parse_data(slot, reply.payload, board)
            records.extend(batch)
            if not board.irq or not batch:
                break
        self.accumulator.extend(records)
        return records

    def _parse_data(self, slot, payload, board):
        count = payload[0] if payload else 0
        records = []
        meta = getattr(board, "last_drained", [])
        for i in range(count):
            base = 1 + 3 * i
            metric_id = payload[base]
            (raw,) = struct.unpack(">h", payload[base + 1:base + 3])
            kind = board.descriptor.metrics[metric_id].kind
            t_meas, cause = (meta[i][2], meta[i][3]) if i < len(meta) \
                else (0.0, "unknown")
            records.append(TaggedRecord(
                radio.UplinkRecord(slot, kind, raw), t_meas, cause))
        return records

    def poll_metric(self, slot: int, metric: int, now: float):
        """One READ_NOW round trip; returns (records, ready_delay_s).

        Data ready within the sync limit is collected in place (the
        wake episode stretches to cover it); otherwise the board will
        interrupt when done and ``records`` is empty.
        """
        board = self.boards[slot]
        if not board.enabled.get(metric, False):
            return [], 0.0
        reply = self.transact(slot, bus.CMD_READ_NOW, b"", now)
        status, delay_ms = struct.unpack(">BI", reply.payload)
        delay_s = delay_ms / 1000.0
        if status == 0 or delay_s <= SYNC_WAIT_LIMIT_S:
            records = self.service_interrupt(slot, now + delay_s)
            return records, delay_s
        return [], delay_s

    def flush(self, now: float):
        """End-of-episode packetization: accumulator to pending_tx.

        Overlong accumulations split into multiple packets of at most
        12 records each.
        """
        packets = []
        while self.accumulator:
            chunk = self.accumulator[:radio.MAX_RECORDS_PER_PACKET]
            self.accumulator = self.accumulator[len(chunk):]
            payload = radio.build_uplink([t.record for t in chunk])
            packet = radio.UplinkPacket(
                device_id=self.config.device_id,
                fcnt=self.fcnt,
                payload=payload,
                tx_time_s=now,
                sf=self.config.spreading_factor,
                airtime_s=0.0,  # engine fills at actual tx time
                )
            self.fcnt += 1
            packets.append((packet, chunk))
        self.pending_tx.extend(p for p, _ in packets)
        return packets
