"""Deterministic discrete-event simulator for one device.

Binds an environment trace, the sensor boards, the motherboard FSM,
the radio model, and the energy ledger into a reproducible run.  Events
are processed in (time, insertion order); identical inputs produce
byte-identical artifact files.
"""

import bisect
import heapq
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import boards as boards_mod
from . import bus, energy, motherboard as mb_mod, radio
from .bus import MetricKind
from .energy import BatteryState, BoardTimeline, EnergyLedger
from .motherboard import DeviceConfig, Motherboard

QUIET_DBSPL = 30.0  # ambient sound floor between trace events

AMBIENT_FIELDS = ("temp_c", "pressure_hpa", "humidity_pct",
                  "gas_resistance_ohm", "lux")
EVENT_KINDS = ("sound", "button", "usb_attach", "usb_detach")

# Battery accounting cadence: sweep at most this often unless the
# worst-case draw could plausibly deplete the remaining charge sooner.
ACCOUNT_INTERVAL_S = 60.0
WORST_CASE_UA = 100000.0


class ParseError(ValueError):
    """Trace line is not valid JSON or misses required fields."""

    def __init__(self, line_no: int, message: str):
        super().__init__("line {}: {}".format(line_no, message))
        self.line_no = line_no


class NonMonotonicTime(ValueError):
    """Trace timestamps went backwards."""


class QueueEmpty(Exception):
    """step() called with no events left."""


@dataclass
class TraceEvent:
    t: float
    kind: str
    params: dict


class EnvTrace:
    """Ambient samples (zero-order hold) plus discrete events."""

    def __init__(self, samples=None, events=None):
        self.samples = samples or []  # (t, {field: value})
        self.events = events or []  # TraceEvent
        self._times = [t for t, _ in self.samples]

    @property
    def horizon(self) -> float:
        last_sample = self.samples[-1][0] if self.samples else 0.0
        last_event = self.events[-1].t if self.events else 0.0
        return max(last_sample, last_event)

    def ambient_at(self, t: float) -> dict:
        """Sample in force at ``t`` (zero-order hold; first sample
        extends backwards)."""
        if not self.samples:
            return {k: 0.0 for k in AMBIENT_FIELDS}
        i = bisect.bisect_right(self._times, t) - 1
        return self.samples[max(i, 0)][1]

    def sound_level_at(self, t: float) -> float:
        """Ambient sound: quiet floor unless a sound pulse covers t."""
        level = QUIET_DBSPL
        for ev in self.events:
            if ev.kind != "sound":
                continue
            if ev.t > t:
                break
            if t < ev.t + ev.params.get("duration_ms", 0.0) / 1000.0:
                level = max(level, ev.params["level_dbspl"])
        return level


def load_trace(path_or_file) -> EnvTrace:
    """Parse a JSON-lines trace file; see the format in the README."""
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    samples = []
    events = []
    last_t = None
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, "invalid JSON: {}".format(exc.msg))
        if "t" not in obj:
            raise ParseError(line_no, "missing 't'")
        t = float(obj["t"])
        if last_t is not None and t < last_t:
            raise NonMonotonicTime(
                "t={} after t={} (line {})".format(t, last_t, line_no))
        last_t = t
        if "ambient" in obj:
            ambient = obj["ambient"]
            missing = [k for k in AMBIENT_FIELDS if k not in ambient]
            if missing:
                raise ParseError(
                    line_no, "ambient missing {}".format(missing))
            samples.append((t, {k: float(ambient[k])
                                for k in AMBIENT_FIELDS}))
        elif "event" in obj:
            event = dict(obj["event"])
            kind = event.pop("kind", None)
            if kind not in EVENT_KINDS:
                raise ParseError(line_no, "unknown event kind %r" % (kind,))
            events.append(TraceEvent(t, kind, event))
        else:
            raise ParseError(line_no, "line has neither ambient nor event")
    return EnvTrace(samples, events)


@dataclass(frozen=True)
class SimEvent:
    """One processed queue entry, as reported by step()."""

    t: float
    target: str
    kind: str


@dataclass
class RunResult:
    uplinks: List[dict]
    events: List[dict]
    ledger: EnergyLedger
    report: dict
    battery: BatteryState
    depleted: bool
    depleted_at: Optional[float]
    final_state: str
    horizon: float


class Simulator:
    """One device, one trace, one deterministic run."""

    def __init__(self, topology: Dict[int, str], config: DeviceConfig,
                 trace: EnvTrace, horizon: float,
                 battery: Optional[BatteryState] = None,
                 nvm_blob: Optional[bytes] = None,
                 fine_grained_env: bool = True,
                 seed: int = 0):
        self.trace = trace
        self.horizon = float(horizon)
        self.battery = battery if battery is not None else BatteryState()
        self.fine_grained_env = fine_grained_env
        self.seed = seed
        self.now = 0.0
        self.depleted_at: Optional[float] = None
        self._queue = []
        self._seq = 0
        self._account_t = 0.0
        self.uplinks: List[dict] = []
        self.events_log: List[dict] = []
        self.tx_history = []  # (tx_time, airtime_s)
        self.profiles = energy.TABLE1

        self.boards: Dict[int, boards_mod.SensorBoard] = {}
        self.timelines: Dict[str, BoardTimeline] = {}
        self._board_names: Dict[int, str] = {}
        self._build_boards(topology)

        blob = nvm_blob if nvm_blob is not None else mb_mod.encode_nvm(config)
        self.mb = Motherboard(config.device_id, config.radio_keys,
                              boards=self.boards, nvm_blob=blob)
        self.params = radio.RadioParams(
            spreading_factor=config.spreading_factor)
        mb_profile = self.profiles["motherboard"]
        self.mb_tl = BoardTimeline(
            "motherboard", 0.0, mb_profile.sleep_ua, "sleep")
        self.timelines["motherboard"] = self.mb_tl

    # -- construction ----------------------------------------------------

    def _build_boards(self, topology):
        for slot, type_name in sorted(topology.items()):
            if not 0 <= slot <= bus.ADDR_MAX:
                raise ValueError("slot must be 0-5, got %r" % (slot,))
            name = "{}@{}".format(type_name, slot)
            profile = self.profiles[type_name]
            if type_name == "environmental":
                tl = BoardTimeline(name, 0.0, energy.ENV_IDLE_UA, "idle")
                board = boards_mod.EnvironmentalBoard(
                    slot,
                    ambient=self._env_ambient,
                    on_measurement=self._env_hook(tl))
            elif type_name == "microphone":
                tl = BoardTimeline(name, 0.0, profile.sleep_ua, "sleep")
                board = boards_mod.MicrophoneBoard(
                    slot,
                    sound_level=self.trace.sound_level_at,
                    on_wake=self._episode_hook(tl, profile.active_ua,
                                               profile.active_s))
            elif type_name == "button":
                tl = BoardTimeline(name, 0.0, profile.sleep_ua, "sleep")
                board = boards_mod.ButtonBoard(
                    slot, on_press=self._button_hook(tl, profile.active_ua))
            elif type_name == "power_light":
                tl = BoardTimeline(name, 0.0, profile.sleep_ua, "sleep")
                board = boards_mod.PowerLightBoard(
                    slot,
                    lux=lambda t: self.trace.ambient_at(t)["lux"],
                    state_of_charge=lambda: self.battery.soc,
                    on_read=self._episode_hook(tl, profile.active_ua,
                                               profile.active_s))
            else:
                raise ValueError("unknown board type %r" % (type_name,))
            self.boards[slot] = board
            self.timelines[name] = tl
            self._board_names[slot] = name

    def _env_ambient(self, t):
        a = self.trace.ambient_at(t)
        return (a["temp_c"], a["pressure_hpa"], a["humidity_pct"],
                a["gas_resistance_ohm"])

    def _env_hook(self, tl):
        def on_measurement(t0):
            if self.fine_grained_env:
                tl.add_episode(t0, energy.ENV_HEATER_S,
                               energy.ENV_HEATER_UA, "ulp_heat")
                tl.add_episode(t0 + energy.ENV_HEATER_S,
                               energy.ENV_MEASURE_S,
                               energy.ENV_MEASURE_UA, "ulp_measure")
            else:
                profile = self.profiles["environmental"]
                tl.add_episode(t0, profile.active_s,
                               profile.active_ua, "ulp_cycle")
        return on_measurement

    def _episode_hook(self, tl, ua, duration_s):
        def on_activity(t, label):
            tl.add_episode(t, duration_s, ua, label)
        return on_activity

    def _button_hook(self, tl, ua):
        def on_press(t0, t1):
            last = tl.last_episode
            if last is not None and last[3] == "button_press" \
                    and last[1] > t0:
                tl.extend_last(t1)
            else:
                tl.add_episode(t0, t1 - t0, ua, "button_press")
        return on_press

    # -- event queue -----------------------------------------------------

    def _push(self, t, target, kind, payload=None):
        if t < self.horizon:
            heapq.heappush(self._queue, (t, self._seq, target, kind,
                                         payload))
            self._seq += 1

    def _log(self, t, kind, **fields):
        entry = {"t": t, "kind": kind}
        entry.update(fields)
        self.events_log.append(entry)

    def prime(self):
        """Boot the device and seed the event queue (idempotent)."""
        if self.mb.state != "boot":
            return
        deadline = self.mb.power_on(0.0)
        mb_profile = self.profiles["motherboard"]
        self.mb_tl.add_episode(0.0, mb_mod.BOOT_S,
                               mb_profile.active_ua, "boot")
        self.mb_tl.set_base(0.0, mb_profile.active_ua, "usb_wait")
        self._log(0.0, "boot")
        self._push(deadline, "motherboard", "usb_deadline")
        for slot, board in self.boards.items():
            if isinstance(board, boards_mod.EnvironmentalBoard):
                self._push(0.0, self._board_names[slot], "ulp", slot)
            if isinstance(board, boards_mod.PowerLightBoard):
                board.prime_light(0.0)
        for ev in self.trace.events:
            self._push(ev.t, "trace", ev.kind, ev.params)
        for t, _sample in self.trace.samples:
            self._push(t, "trace", "sample")

    def step(self) -> SimEvent:
        """Process exactly one queued event."""
        if not self._queue:
            raise QueueEmpty("no events before the horizon")
        t, _seq, target, kind, payload = heapq.heappop(self._queue)
        self.now = max(self.now, t)
        self._account(t)
        if self.depleted_at is None:
            self._dispatch(t, target, kind, payload)
        return SimEvent(t, target, kind)

    def run(self) -> RunResult:
        self.prime()
        while self._queue and self.depleted_at is None:
            self.step()
        self._queue = []
        return self._finalize()

    # -- dispatch --------------------------------------------------------

    def _dispatch(self, t, target, kind, payload):
        if kind == "sample":
            return
        handler = getattr(self, "_on_" + kind)
        handler(t, payload)

    def _on_usb_deadline(self, t, _payload):
        if self.mb.state != "usb_wait":
            return
        self._apply_and_sleep(t)

    def _on_usb_attach(self, t, _payload):
        if self.mb.state == "usb_wait":
            self.mb.usb_attached(t)
            self._log(t, "usb_attach")
        else:
            self._log(t, "diagnostic",
                      message="usb attach ignored in state %s"
                      % self.mb.state)

    def _on_usb_detach(self, t, _payload):
        if self.mb.state != "configure":
            return
        self._log(t, "usb_detach")
        self.mb.session_open = False
        self.mb.state = "usb_wait"
        self._apply_and_sleep(t)

    def _apply_and_sleep(self, t):
        """Load NVM, push config to the boards, and enter sleep; the
        config transactions extend the awake period."""
        txns_before = self.mb.bus_txns
        state = self.mb.usb_window_elapsed(t)
        for note in self.mb.diagnostics:
            self._log(t, "diagnostic", message=note)
        self.mb.diagnostics = []
        if state != "sleep":
            self._log(t, "nvm_corrupt", detail=self.mb.nvm_error)
            return
        busy_s = (self.mb.bus_txns - txns_before) * mb_mod.BUS_TXN_S
        mb_profile = self.profiles["motherboard"]
        self.mb_tl.set_base(t + busy_s, mb_profile.sleep_ua, "sleep")
        self._log(t, "config_applied",
                  metrics=len(self.mb.config.metrics))
        self._arm_board_modes(t)
        self._flush_and_send(t + busy_s)
        next_poll = self.mb.next_poll_at()
        if next_poll is not None:
            self._push(next_poll, "motherboard", "poll")

    def _arm_board_modes(self, t):
        """Per-mode base currents and sporadic schedules after apply."""
        for slot, board in self.boards.items():
            name = self._board_names[slot]
            tl = self.timelines[name]
            if isinstance(board, boards_mod.MicrophoneBoard):
                profile = self.profiles["microphone"]
                if board.wos_armed:
                    tl.set_base(t, profile.inactive_ua, "wos_idle")
                    self._log(t, "wos_armed", slot=slot,
                              hardware_level=board.hardware_wos_level)
                else:
                    tl.set_base(t, profile.sleep_ua, "sleep")
            if isinstance(board, boards_mod.PowerLightBoard):
                if board.light_threshold is not None:
                    first = t + (-t % boards_mod.LIGHT_POLL_PERIOD_S)
                    if first <= t:
                        first += boards_mod.LIGHT_POLL_PERIOD_S
                    self._push(first, name, "light_poll", slot)

    def _on_ulp(self, t, slot):
        board = self.boards[slot]
        ready_at = board.ulp_tick(t)
        if ready_at is not None:
            self._log(t, "ulp_cycle", slot=slot, ready_at=ready_at)
            if board.irq:
                self._push(ready_at, self._board_names[slot],
                           "interrupt", slot)
        self._push(t + boards_mod.ULP_PERIOD_S,
                   self._board_names[slot], "ulp", slot)

    def _on_light_poll(self, t, slot):
        board = self.boards[slot]
        note = board.light_poll(t)
        if note is not None:
            self._log(t, "notify", slot=slot, metric="LightLevel",
                      value=note.value, cause=note.cause)
            self._push(t, self._board_names[slot], "interrupt", slot)
        self._push(t + boards_mod.LIGHT_POLL_PERIOD_S,
                   self._board_names[slot], "light_poll", slot)

    def _on_sound(self, t, params):
        level = float(params["level_dbspl"])
        self._log(t, "sound", level=level,
                  duration_ms=params.get("duration_ms", 0.0))
        for slot, board in self.boards.items():
            if isinstance(board, boards_mod.MicrophoneBoard):
                note = board.on_sound(level, t)
                if note is not None:
                    self._log(t, "notify", slot=slot, metric="SoundLevel",
                              value=note.value, cause=note.cause)
                    self._push(note.t, self._board_names[slot],
                               "interrupt", slot)

    def _on_button(self, t, params):
        button_id = int(params["id"])
        for slot, board in self.boards.items():
            if isinstance(board, boards_mod.ButtonBoard):
                board.press(button_id, t)
                self._log(t, "button", slot=slot, id=button_id)
                self._push(t, self._board_names[slot], "interrupt", slot)

    def _on_interrupt(self, t, slot):
        board = self.boards[slot]
        if not board.irq:
            return
        if self.mb.state not in ("sleep", "usb_wait", "configure"):
            return
        txns_before = self.mb.bus_txns
        try:
            records = self.mb.service_interrupt(slot, t)
        except mb_mod.BusTimeout as exc:
            self._log(t, "diagnostic", message=str(exc))
            return
        busy_s = (self.mb.bus_txns - txns_before) * mb_mod.BUS_TXN_S
        for tagged in records:
            self._log_measurement(t, tagged)
        if self.mb.state == "sleep":
            mb_profile = self.profiles["motherboard"]
            self.mb_tl.add_episode(t, busy_s, mb_profile.active_ua,
                                   "wake_irq")
            self._flush_and_send(t + busy_s)

    def _on_poll(self, t, _payload):
        if self.mb.state != "sleep":
            return
        due = self.mb.poll_due(t)
        if due:
            txns_before = self.mb.bus_txns
            sync_wait = 0.0
            for slot, metric in due:
                try:
                    records, delay_s = self.mb.poll_metric(slot, metric, t)
                except mb_mod.BusTimeout as exc:
                    self._log(t, "diagnostic", message=str(exc))
                    continue
                if records:
                    sync_wait += delay_s
                    for tagged in records:
                        self._log_measurement(t, tagged)
                elif delay_s > 0:
                    # board will interrupt when its data is ready
                    self._push(t + delay_s,
                               self._board_names[slot], "interrupt", slot)
                self._log(t, "poll", slot=slot, metric=metric)
            busy_s = (self.mb.bus_txns - txns_before) * mb_mod.BUS_TXN_S \
                + sync_wait
            mb_profile = self.profiles["motherboard"]
            self.mb_tl.add_episode(t, busy_s, mb_profile.active_ua,
                                   "wake_poll")
            self._flush_and_send(t + busy_s)
        next_poll = self.mb.next_poll_at()
        if next_poll is not None:
            self._push(next_poll, "motherboard", "poll")

    def _on_tx_retry(self, t, packet):
        self._transmit(t, packet)

    # -- uplink path -----------------------------------------------------

    def _flush_and_send(self, t):
        for packet, chunk in self.mb.flush(t):
            self._transmit(t, packet)

    def _transmit(self, t, packet):
        decision = radio.duty_gate(t, self.tx_history,
                                   self.params.duty_cycle)
        if isinstance(decision, radio.DeferUntil):
            if decision.t < self.horizon:
                self._push(decision.t, "radio", "tx_retry", packet)
                self._log(t, "tx_deferred", fcnt=packet.fcnt,
                          until=decision.t)
            else:
                self._log(t, "tx_dropped", fcnt=packet.fcnt,
                          reason="deferred past horizon")
            return
        airtime_s = radio.airtime(self.params, len(packet.payload))
        mb_profile = self.profiles["motherboard"]
        t0, t1 = self.mb_tl.add_episode(
            t, airtime_s + radio.RADIO_OVERHEAD_S,
            mb_profile.active_ua, "uplink")
        packet.tx_time_s = t0
        packet.airtime_s = airtime_s
        self.tx_history.append((t0, airtime_s))
        self.mb.pending_tx = [p for p in self.mb.pending_tx
                              if p is not packet]
        wire = packet.to_wire()
        self.uplinks.append(wire)
        self._log(t0, "uplink", fcnt=packet.fcnt,
                  bytes=len(packet.payload),
                  records=len(packet.payload) // radio.RECORD_SIZE,
                  airtime_ms=airtime_s * 1000.0)

    def _log_measurement(self, t, tagged):
        record = tagged.record
        self._log(t, "measurement", slot=record.slot,
                  metric=record.kind.name, raw=record.raw,
                  value=record.value, t_meas=tagged.t_meas,
                  cause=tagged.cause)

    # -- battery ---------------------------------------------------------

    def _account(self, now):
        """Advance battery accounting to ``now`` (coarse sweeps, with a
        fine scan only when depletion is plausible)."""
        if self.depleted_at is not None or now <= self._account_t:
            return
        dt = now - self._account_t
        danger = self.battery.charge_uah <= WORST_CASE_UA * dt / 3600.0
        if dt < ACCOUNT_INTERVAL_S and not danger:
            return
        drawn = sum(
            tl.charge_uc_between(self._account_t, now)
            for tl in self.timelines.values()) / energy.UC_PER_UAH
        harvested = self._harvest_between(self._account_t, now)
        before = self.battery.charge_uah
        self.battery.account(drawn, harvested)
        if self.battery.depleted:
            self._halt_depleted(self._account_t, now, before)
        self._account_t = now

    def _has_harvester(self):
        # the solar panel rides on the power/light board
        return any(isinstance(b, boards_mod.PowerLightBoard)
                   for b in self.boards.values())

    def _harvest_between(self, t0, t1):
        if not self._has_harvester():
            return 0.0
        total = 0.0
        for a, b, lux in self._lux_steps(t0, t1):
            total += energy.harvest(lux, b - a)
        return total

    def _lux_steps(self, t0, t1):
        cuts = [t0] + [t for t, _ in self.trace.samples
                       if t0 < t < t1] + [t1]
        return [(a, b, self.trace.ambient_at(a)["lux"])
                for a, b in zip(cuts, cuts[1:]) if b > a]

    def _halt_depleted(self, t0, t1, charge_at_t0):
        """Find the depletion instant in (t0, t1] and halt the run."""
        rows = {name: tl.rows_between(t0, t1)
                for name, tl in self.timelines.items()}
        steps = energy.merged_current_steps(rows, t0, t1)
        harvest_ua = []
        if self._has_harvester():
            for a, b, lux in self._lux_steps(t0, t1):
                ua = min(energy.HARVEST_UA_PER_LUX * lux,
                         energy.HARVEST_CAP_UA) * energy.HARVEST_EFFICIENCY
                harvest_ua.append((a, b, ua))
        charge = charge_at_t0
        t_dep = t1
        for a, b, draw_ua in steps:
            net = draw_ua
            for ha, hb, ua in harvest_ua:
                if ha <= a < hb:
                    net = draw_ua - ua
                    break
            delta = net * (b - a) / 3600.0
            if charge - delta <= 0.0 and net > 0:
                t_dep = a + (charge * 3600.0 / net)
                break
            charge = min(charge - delta, self.battery.capacity_uah)
        self.depleted_at = t_dep
        for tl in self.timelines.values():
            tl.truncate(t_dep)
        self._log(t_dep, "depleted")

    # -- finalization ----------------------------------------------------

    def _finalize(self) -> RunResult:
        end = self.horizon if self.horizon > 0 else mb_mod.BOOT_S
        if self.depleted_at is None:
            self._account_final(end)
        ledger = EnergyLedger.from_timelines(
            self.timelines.values(), end)
        report = energy.power_report(
            ledger,
            config={"spreading_factor": self.mb.config.spreading_factor,
                    "metrics": len(self.mb.config.metrics),
                    "seed": self.seed},
            battery=self.battery)
        return RunResult(
            uplinks=self.uplinks,
            events=self.events_log,
            ledger=ledger,
            report=report,
            battery=self.battery,
            depleted=self.depleted_at is not None,
            depleted_at=self.depleted_at,
            final_state=self.mb.state,
            horizon=self.horizon,
        )

    def _account_final(self, end):
        if end <= self._account_t:
            return
        drawn = sum(
            tl.charge_uc_between(self._account_t, end)
            for tl in self.timelines.values()) / energy.UC_PER_UAH
        harvested = self._harvest_between(self._account_t, end)
        before = self.battery.charge_uah
        self.battery.account(drawn, harvested)
        if self.battery.depleted:
            self._halt_depleted(self._account_t, end, before)
        self._account_t = end


def run(topology, config, trace, horizon, **kwargs) -> RunResult:
    """One-call wrapper: build a Simulator and run it to the horizon."""
    sim = Simulator(topology, config, trace, horizon, **kwargs)
    return sim.run()


def write_artifacts(result: RunResult, outdir: str):
    """Write the four run artifacts; byte-identical across reruns."""
    os.makedirs(outdir, exist_ok=True)

    def dump(obj):
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    with open(os.path.join(outdir, "uplinks.jsonl"), "w",
              encoding="utf-8") as fh:
        for wire in result.uplinks:
            fh.write(dump(wire) + "\n")
    with open(os.path.join(outdir, "events.jsonl"), "w",
              encoding="utf-8") as fh:
        for entry in result.events:
            fh.write(dump(entry) + "\n")
    with open(os.path.join(outdir, "ledger.json"), "w",
              encoding="utf-8") as fh:
        fh.write(dump(result.ledger.to_dict()) + "\n")
    with open(os.path.join(outdir, "report.json"), "w",
              encoding="utf-8") as fh:
        fh.write(dump(result.report) + "\n")
