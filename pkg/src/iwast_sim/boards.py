"""Behavioral models of the four sensor boards.

Each board is a small state machine advanced by the simulation engine.
Boards expose the framed bus protocol through :meth:`transact` and
signal the motherboard through a boolean interrupt line (``irq``).
Energy bookkeeping is delegated to callbacks the engine wires in, so
the models stay testable in isolation.

Pure decision rules (measurement coalescing, the air-quality
surrogate, sound level math, the wake-on-sound level mapping, and the
threshold-crossing predicate) live at module level.
"""

import math
import struct
from dataclasses import dataclass

from . import bus
from .bus import BoardType, MetricKind

# Environmental board cadence: one ultra-low-power measurement per
# 5 minutes, with requests within +-30 s coalesced onto the cycle.
ULP_PERIOD_S = 300.0
COALESCE_WINDOW_S = 30.0
HEAT_DURATION_S = 1.71
MEASURE_DURATION_S = 1.85

# Microphone: three hardware wake-on-sound levels, a 65-100 dBSPL
# software threshold range, and a fixed post-event lockout.
HARDWARE_WOS_LEVELS = (65.0, 77.0, 89.0)
SW_THRESHOLD_MIN = 65.0
SW_THRESHOLD_MAX = 100.0
WOS_LOCKOUT_S = 60.0
CLIP_SAMPLES = 400
CLIP_RATE_HZ = 20000
CLIP_DURATION_S = CLIP_SAMPLES / CLIP_RATE_HZ  # 20 ms
SOUND_FLOOR_DBSPL = 30.0
FULL_SCALE_DBSPL = 120.0  # full-scale sine calibration

# Button board LED episode.
BUTTON_ACTIVE_S = 1.7
BUTTON_COUNT = 4

# Power board light-sensor polling cadence.
LIGHT_POLL_PERIOD_S = 16.0

# Battery voltage telemetry: linear map from state of charge.
BATT_MV_FULL = 4200
BATT_MV_EMPTY = 3300

IAQ_MAX = 500
IAQ_BASELINE_WINDOW_S = 86400.0  # trailing 24 h running max


class ThresholdOutOfRange(ValueError):
    """Software sound threshold outside 65-100 dBSPL."""


class WrongClipLength(ValueError):
    """Audio clip is not exactly 400 samples."""


class NonPositiveBaseline(ValueError):
    """Air-quality baseline resistance must be positive."""


class BadButtonId(ValueError):
    """Button id outside 1-4."""


class NotAPollInstant(ValueError):
    """Light poll invoked off the 16 s schedule."""


# -- Pure decision rules -----------------------------------------------------


@dataclass(frozen=True)
class ScheduleDecision:
    """Outcome of the environmental board's request coalescing.

    ``action`` is one of "reuse", "wait", "fresh"; ``ready_at`` carries
    the upcoming cycle instant for "wait".
    """

    action: str
    ready_at: float = 0.0


def env_schedule(request_time: float, last_ulp: float,
                 window: float = COALESCE_WINDOW_S,
                 period: float = ULP_PERIOD_S) -> ScheduleDecision:
    """Decide how to satisfy a measurement request between ULP cycles.

    A request within ``window`` after the last cycle reuses that value;
    within ``window`` before the next cycle it waits for it; otherwise
    a fresh measurement is started immediately.
    """
    if last_ulp > request_time:
        raise ValueError("last_ulp must not be in the future")
    if request_time - last_ulp <= window:
        return ScheduleDecision("reuse")
    next_ulp = last_ulp + period
    if next_ulp - request_time <= window:
        return ScheduleDecision("wait", ready_at=next_ulp)
    return ScheduleDecision("fresh")


def iaq_surrogate(gas_resistance: float, baseline: float) -> int:
    """Air-quality index surrogate: linear in 1 - R/baseline, 0-500.

    The baseline is the running maximum of the gas resistance over the
    trailing 24 h (cleaner air shows higher resistance, so R at the
    baseline maps to index 0 and R near zero saturates at 500).
    """
    if baseline <= 0:
        raise NonPositiveBaseline("baseline must be > 0, got %r" % baseline)
    if gas_resistance < 0:
        raise ValueError("gas resistance must be >= 0")
    fraction = min(max(1.0 - gas_resistance / baseline, 0.0), 1.0)
    return round(IAQ_MAX * fraction)


def mic_level(samples) -> float:
    """Sound level in dBSPL from a 400-sample, 20 ms audio clip.

    Calibration: a full-scale sine (RMS 1/sqrt(2)) reads 120 dBSPL and
    the output is floored at 30 dBSPL, so the usable range comfortably
    spans the 65-100 dBSPL threshold window.
    """
    if len(samples) != CLIP_SAMPLES:
        raise WrongClipLength(
            "clip must be exactly {} samples, got {}".format(
                CLIP_SAMPLES, len(samples)))
    rms = math.sqrt(sum(s * s for s in samples) / CLIP_SAMPLES)
    if rms <= 0.0:
        return SOUND_FLOOR_DBSPL
    level = FULL_SCALE_DBSPL + 20.0 * math.log10(rms * math.sqrt(2.0))
    return max(level, SOUND_FLOOR_DBSPL)


def synth_clip(level_dbspl: float):
    """Synthesize a 1 kHz sine clip whose computed level is ``level_dbspl``.

    20 whole periods fit in the 400 samples, so the sampled RMS is
    exactly amplitude/sqrt(2) and ``mic_level`` round-trips the level.
    """
    amplitude = 10.0 ** ((level_dbspl - FULL_SCALE_DBSPL) / 20.0)
    step = 2.0 * math.pi * 20.0 / CLIP_SAMPLES
    return [amplitude * math.sin(step * i) for i in range(CLIP_SAMPLES)]


def wos_map(software_threshold: float) -> float:
    """Map a software threshold to the hardware wake-on-sound level.

    Picks the largest of 65/77/89 dBSPL that does not exceed the
    threshold; thresholds outside 65-100 dBSPL are rejected.
    """
    if not SW_THRESHOLD_MIN <= software_threshold <= SW_THRESHOLD_MAX:
        raise ThresholdOutOfRange(
            "threshold must be within 65-100 dBSPL, got %r"
            % (software_threshold,))
    return max(l for l in HARDWARE_WOS_LEVELS if l <= software_threshold)


def crossed(previous: float, current: float, low: float, high: float) -> bool:
    """Threshold-crossing predicate shared by all threshold metrics.

    Fires only on the transition from inside [low, high] to outside;
    repeated out-of-range samples stay quiet.
    """
    was_inside = low <= previous <= high
    is_outside = current < low or current > high
    return was_inside and is_outside


def battery_voltage_mv(state_of_charge: float) -> int:
    """Battery telemetry: linear 4200 mV at full down to 3300 mV empty."""
    soc = min(max(state_of_charge, 0.0), 1.0)
    return round(BATT_MV_EMPTY + (BATT_MV_FULL - BATT_MV_EMPTY) * soc)


# -- Bus plumbing shared by all boards ---------------------------------------


@dataclass
class Notification:
    """Interrupt-line payload: which board woke the motherboard and why."""

    slot: int
    kind: MetricKind
    value: float
    t: float
    cause: str


class SensorBoard:
    """Common bus behavior: IDENT, config writes, and the data queue.

    Subclasses push ``(metric_id, raw_value, t_meas, cause)`` tuples
    into ``self.pending`` and call ``self.raise_irq()``; the engine
    polls ``irq`` and services the board with GET_DATA.
    """

    board_type = None

    def __init__(self, slot: int):
        self.slot = slot
        self.descriptor = bus.descriptor_for(self.board_type)
        self.enabled = {m.metric_id: True for m in self.descriptor.metrics}
        self.poll_interval = {m.metric_id: 0 for m in self.descriptor.metrics}
        self.thresholds = {}  # metric_id -> (low_raw, high_raw)
        self.pending = []
        self.last_drained = []
        self.irq = False
        self.responsive = True

    def raise_irq(self):
        self.irq = True

    def clear_irq(self):
        self.irq = False

    def transact(self, frame: bus.Frame, now: float):
        """Execute one bus command and return the response frame.

        Returns None when the board is unresponsive (fault injection);
        the motherboard then reports a bus timeout.
        """
        if not self.responsive:
            return None
        if frame.command == bus.CMD_IDENT:
            payload = bus.build_ident_payload(self.descriptor)
        elif frame.command == bus.CMD_SET_POLL:
            metric_id, interval = struct.unpack(">BI", frame.payload)
            self._check_metric(metric_id)
            self.poll_interval[metric_id] = interval
            self.on_config_changed(now)
            payload = b""
        elif frame.command == bus.CMD_SET_THRESH:
            metric_id, enabled, low, high = struct.unpack(
                ">BBhh", frame.payload)
            self._check_metric(metric_id)
            if enabled:
                self.thresholds[metric_id] = (low, high)
            else:
                self.thresholds.pop(metric_id, None)
            self.on_config_changed(now)
            payload = b""
        elif frame.command == bus.CMD_SET_ENABLE:
            metric_id, flag = struct.unpack(">BB", frame.payload)
            self._check_metric(metric_id)
            self.enabled[metric_id] = bool(flag)
            self.on_config_changed(now)
            payload = b""
        elif frame.command == bus.CMD_READ_NOW:
            payload = self.read_now(now)
        elif frame.command == bus.CMD_GET_DATA:
            payload = self._drain_data()
        else:
            raise bus.UnknownCommand(
                "opcode 0x{:02X} is not in the command set".format(
                    frame.command))
        return bus.Frame(self.slot, frame.command, payload)

    def _check_metric(self, metric_id):
        if metric_id not in self.enabled:
            raise ValueError(
                "board in slot {} has no metric {}".format(
                    self.slot, metric_id))

    def _drain_data(self) -> bytes:
        records = self.pending[:10]  # 1 + 3*10 = 31 bytes <= payload cap
        self.last_drained = records  # provenance kept for the sim logs
        self.pending = self.pending[len(records):]
        if not self.pending:
            self.clear_irq()
        out = bytes([len(records)])
        for metric_id, raw, _t, _cause in records:
            out += bytes([metric_id]) + struct.pack(">h", raw)
        return out

    def drain_records(self):
        """Take and clear the pending records (engine-side shortcut
        that keeps measurement timestamps and causes attached)."""
        records, self.pending = self.pending, []
        self.clear_irq()
        return records

    def read_now(self, now: float) -> bytes:
        """READ_NOW response: status byte + ready-delay in ms (u32).

        Status 0 means data is already queued; 1 means the board will
        raise its interrupt after the stated delay.
        """
        delay_ms = self.request_measurement(now)
        if delay_ms <= 0:
            return struct.pack(">BI", 0, 0)
        return struct.pack(">BI", 1, delay_ms)

    # Subclass hooks -----------------------------------------------------

    def request_measurement(self, now: float) -> int:
        """Queue a measurement; return the delay in ms until ready."""
        raise NotImplementedError

    def on_config_changed(self, now: float):
        pass


# -- Environmental board -----------------------------------------------------


class EnvironmentalBoard(SensorBoard):
    """Gas/temperature/pressure/humidity sensor on a 5-minute ULP cycle.

    The engine calls :meth:`ulp_tick` at every cycle instant; the board
    runs its heater and measurement episodes, refreshes the cached
    values, and answers coalesced requests from that cache.  The
    air-quality baseline is the running maximum of the gas resistance
    over the trailing 24 h.
    """

    board_type = BoardType.ENVIRONMENTAL

    # metric ids, fixed by the descriptor layout
    M_TEMP, M_PRESS, M_HUM, M_IAQ = 0, 1, 2, 3

    def __init__(self, slot, ambient=None, on_measurement=None):
        super().__init__(slot)
        self.ambient = ambient  # callable t -> (temp, press, hum, gas_r)
        self.on_measurement = on_measurement  # energy episode hook
        self.last_ulp = None
        self.last_values = None  # raw int16 per metric id
        self._baseline_points = []  # (t, gas_resistance)
        self._deferred_request = False

    @property
    def iaq_baseline(self):
        return max((r for _t, r in self._baseline_points), default=None)

    def _prune_baseline(self, now):
        cutoff = now - IAQ_BASELINE_WINDOW_S
        self._baseline_points = [
            (t, r) for t, r in self._baseline_points if t >= cutoff]

    def measure(self, t_sample: float):
        """Run one heater+measure sequence; values carry ``t_sample``.

        Returns the raw values dict.  Energy episodes are reported to
        the ``on_measurement`` hook with the nominal start time.
        """
        temp, press, hum, gas_r = self.ambient(t_sample)
        self._prune_baseline(t_sample)
        self._baseline_points.append((t_sample, gas_r))
        index = iaq_surrogate(gas_r, self.iaq_baseline)
        self.last_values = {
            self.M_TEMP: bus.encode_value(MetricKind.TEMPERATURE, temp),
            self.M_PRESS: bus.encode_value(MetricKind.PRESSURE, press),
            self.M_HUM: bus.encode_value(MetricKind.HUMIDITY, hum),
            self.M_IAQ: bus.encode_value(MetricKind.IAQ, index),
        }
        return self.last_values

    def ulp_tick(self, now: float):
        """One autonomous ULP cycle starting at ``now``.

        Returns the instant the values become available (heat + measure
        after the nominal tick) or None when the board is disabled.
        """
        if not any(self.enabled.values()):
            return None
        ready_at = now + HEAT_DURATION_S + MEASURE_DURATION_S
        if self.on_measurement is not None:
            self.on_measurement(now)
        previous = dict(self.last_values) if self.last_values else None
        self.measure(ready_at)
        self.last_ulp = now
        self._check_thresholds(previous, ready_at)
        if self._deferred_request:
            self._deferred_request = False
            self.queue_all(ready_at, "poll-wait")
        return ready_at

    def _check_thresholds(self, previous, t):
        if previous is None:
            return
        for metric_id, (low, high) in self.thresholds.items():
            if not self.enabled.get(metric_id, False):
                continue
            if crossed(previous[metric_id], self.last_values[metric_id],
                       low, high):
                self.queue_all(t, "threshold")

    def queue_all(self, t, cause):
        for metric_id in sorted(self.last_values):
            if self.enabled.get(metric_id, False):
                self.pending.append(
                    (metric_id, self.last_values[metric_id], t, cause))
        self.raise_irq()

    def request_measurement(self, now: float) -> int:
        """Poll entry point, applying the coalescing rule."""
        if self.last_ulp is None:
            decision = ScheduleDecision("fresh")
        else:
            decision = env_schedule(now, self.last_ulp)
        if decision.action == "reuse":
            self.queue_all(now, "poll-reuse")
            return 0
        if decision.action == "wait":
            # ulp_tick will run at ready_at; the request rides along.
            self._deferred_request = True
            delay = (decision.ready_at - now
                     + HEAT_DURATION_S + MEASURE_DURATION_S)
            return int(round(delay * 1000))
        # fresh measurement, off the ULP schedule
        ready_at = now + HEAT_DURATION_S + MEASURE_DURATION_S
        if self.on_measurement is not None:
            self.on_measurement(now)
        self.measure(ready_at)
        self.queue_all(ready_at, "poll-fresh")
        return int(round((HEAT_DURATION_S + MEASURE_DURATION_S) * 1000))


# -- Microphone board --------------------------------------------------------


class MicrophoneBoard(SensorBoard):
    """20 ms clip sampler with hardware wake-on-sound or polled supply.

    In threshold (WOS) mode the analog front end stays powered at the
    inactive current and the hardware comparator wakes the board; in
    polling mode the supply is energized for exactly the 20 ms clip on
    each poll.  After a notifying WOS event the microphone is disabled
    for 60 s.
    """

    board_type = BoardType.MICROPHONE

    M_LEVEL = 0

    def __init__(self, slot, sound_level=None, on_wake=None):
        super().__init__(slot)
        self.sound_level = sound_level  # callable t -> ambient dBSPL
        self.on_wake = on_wake  # energy episode hook (t, cause)
        self.lockout_until = 0.0
        self.last_level = None
        self.supply_windows = []  # (t_on, t_off) per polled clip

    @property
    def wos_armed(self) -> bool:
        return self.M_LEVEL in self.thresholds and self.enabled[self.M_LEVEL]

    @property
    def software_threshold(self):
        if self.M_LEVEL not in self.thresholds:
            return None
        _low, high = self.thresholds[self.M_LEVEL]
        return bus.decode_value(MetricKind.SOUND_LEVEL, high)

    @property
    def hardware_wos_level(self):
        threshold = self.software_threshold
        if threshold is None:
            return None
        return wos_map(threshold)

    def on_sound(self, event_level: float, now: float):
        """Hardware comparator path for an ambient sound event.

        Wakes when the event reaches the hardware level outside the
        lockout; notifies only if the measured clip exceeds the
        software threshold.  Returns the Notification or None.
        """
        if not self.wos_armed:
            return None
        if event_level < self.hardware_wos_level:
            return None
        if now < self.lockout_until:
            return None
        if self.on_wake is not None:
            self.on_wake(now, "wos_wake")
        level = mic_level(synth_clip(event_level))
        self.last_level = level
        if level <= self.software_threshold:
            # woke and computed, but below the configured threshold
            return None
        self.lockout_until = now + WOS_LOCKOUT_S
        t_meas = now + CLIP_DURATION_S
        raw = bus.encode_value(MetricKind.SOUND_LEVEL, level)
        self.pending.append((self.M_LEVEL, raw, t_meas, "wos"))
        self.raise_irq()
        return Notification(self.slot, MetricKind.SOUND_LEVEL, level,
                            t_meas, "wos")

    def request_measurement(self, now: float) -> int:
        """Polled clip: supply on for exactly the 20 ms recording."""
        self.supply_windows.append((now, now + CLIP_DURATION_S))
        if self.on_wake is not None:
            self.on_wake(now, "mic_poll")
        level = mic_level(synth_clip(self.sound_level(now)))
        self.last_level = level
        raw = bus.encode_value(MetricKind.SOUND_LEVEL, level)
        self.pending.append(
            (self.M_LEVEL, raw, now + CLIP_DURATION_S, "poll"))
        return int(CLIP_DURATION_S * 1000)


# -- Button board ------------------------------------------------------------


class ButtonBoard(SensorBoard):
    """Four buttons, interrupt-only; a press lights the LEDs briefly.

    The active episode lasts 1.7 s; a press during a running episode
    extends it rather than queueing a second one.
    """

    board_type = BoardType.BUTTON

    M_PRESS = 0

    def __init__(self, slot, on_press=None):
        super().__init__(slot)
        self.on_press = on_press  # energy episode hook (t0, t1)
        self.active_until = None
        self.last_button = None

    def press(self, button_id: int, now: float) -> Notification:
        if not 1 <= button_id <= BUTTON_COUNT:
            raise BadButtonId(
                "button id must be 1-{}, got {}".format(
                    BUTTON_COUNT, button_id))
        if self.active_until is not None and now < self.active_until:
            self.active_until = now + BUTTON_ACTIVE_S  # extend, don't queue
        else:
            self.active_until = now + BUTTON_ACTIVE_S
        if self.on_press is not None:
            self.on_press(now, self.active_until)
        self.last_button = button_id
        raw = bus.encode_value(MetricKind.BUTTON_PRESS, button_id)
        self.pending.append((self.M_PRESS, raw, now, "press"))
        self.raise_irq()
        return Notification(self.slot, MetricKind.BUTTON_PRESS, button_id,
                            now, "press")

    def request_measurement(self, now: float) -> int:
        # Interrupt-only board: a poll just reports the last press (0
        # when nothing was ever pressed).
        raw = self.last_button if self.last_button is not None else 0
        self.pending.append((self.M_PRESS, raw, now, "poll"))
        return 0


# -- Power / light board -----------------------------------------------------


class PowerLightBoard(SensorBoard):
    """Battery gauge plus ambient light sensor with 16 s sporadic polls.

    The light sensor has no hardware threshold, so when a threshold is
    configured the board briefly wakes every 16 s and compares the
    latest reading against it.  The battery voltage is read through an
    ADC that is only enabled for the measurement itself.
    """

    board_type = BoardType.POWER_LIGHT

    M_BATT = 0
    M_LIGHT = 1

    def __init__(self, slot, lux=None, state_of_charge=None, on_read=None):
        super().__init__(slot)
        self.lux = lux  # callable t -> lux
        self.state_of_charge = state_of_charge  # callable -> 0..1
        self.on_read = on_read  # energy episode hook (t, label)
        self.start_time = 0.0
        self.last_light_poll = None
        self.last_light_value = None

    @property
    def light_threshold(self):
        return self.thresholds.get(self.M_LIGHT)

    def prime_light(self, t: float):
        """Seed the previous-value register from ambient at startup."""
        self.last_light_value = bus.encode_value(
            MetricKind.LIGHT_LEVEL, self.lux(t))

    def light_poll(self, now: float):
        """One 16 s light check; returns a Notification on a crossing.

        Raises NotAPollInstant when invoked off the 16 s grid relative
        to board start.
        """
        offset = (now - self.start_time) % LIGHT_POLL_PERIOD_S
        if min(offset, LIGHT_POLL_PERIOD_S - offset) > 1e-9:
            raise NotAPollInstant(
                "light polls run every 16 s from board start; "
                "t={!r} is off-schedule".format(now))
        if self.light_threshold is None or not self.enabled[self.M_LIGHT]:
            return None
        if self.on_read is not None:
            self.on_read(now, "light_poll")
        value = bus.encode_value(MetricKind.LIGHT_LEVEL, self.lux(now))
        previous = self.last_light_value
        self.last_light_value = value
        self.last_light_poll = now
        low, high = self.light_threshold
        if previous is None or not crossed(previous, value, low, high):
            return None
        self.pending.append((self.M_LIGHT, value, now, "threshold"))
        self.raise_irq()
        return Notification(self.slot, MetricKind.LIGHT_LEVEL,
                            bus.decode_value(MetricKind.LIGHT_LEVEL, value),
                            now, "threshold")

    def request_measurement(self, now: float) -> int:
        """Poll both gauges that are enabled; sporadic ADC reads."""
        if self.enabled[self.M_BATT]:
            if self.on_read is not None:
                self.on_read(now, "battery_read")
            mv = battery_voltage_mv(self.state_of_charge())
            raw = bus.encode_value(MetricKind.BATTERY_VOLTAGE, mv)
            self.pending.append((self.M_BATT, raw, now, "poll"))
        if self.enabled[self.M_LIGHT]:
            if self.on_read is not None:
                self.on_read(now, "light_read")
            value = bus.encode_value(MetricKind.LIGHT_LEVEL, self.lux(now))
            self.last_light_value = value
            self.pending.append((self.M_LIGHT, value, now, "poll"))
        return 0


BOARD_CLASSES = {
    "environmental": EnvironmentalBoard,
    "microphone": MicrophoneBoard,
    "button": ButtonBoard,
    "power_light": PowerLightBoard,
}
