"""Board model tests: schedules, signal math, and bus behavior."""

import struct

import pytest
from hypothesis import given, strategies as st

from iwast_sim import boards, bus
from iwast_sim.boards import (ButtonBoard, EnvironmentalBoard,
                              MicrophoneBoard, PowerLightBoard)


class TestEnvSchedule:
    def test_reuse_within_window(self):
        assert boards.env_schedule(100.0, 100.0).action == "reuse"
        assert boards.env_schedule(129.9, 100.0).action == "reuse"
        assert boards.env_schedule(130.0, 100.0).action == "reuse"

    def test_wait_near_next_cycle(self):
        decision = boards.env_schedule(370.0, 100.0)
        assert decision.action == "wait"
        assert decision.ready_at == 400.0
        assert boards.env_schedule(399.0, 100.0).ready_at == 400.0

    def test_fresh_in_between(self):
        assert boards.env_schedule(130.1, 100.0).action == "fresh"
        assert boards.env_schedule(250.0, 100.0).action == "fresh"
        assert boards.env_schedule(369.9, 100.0).action == "fresh"

    def test_future_last_cycle_rejected(self):
        with pytest.raises(ValueError):
            boards.env_schedule(99.0, 100.0)

    @given(st.floats(0, 1e6), st.floats(0, 300))
    def test_always_decides(self, last, offset):
        decision = boards.env_schedule(last + offset, last)
        assert decision.action in ("reuse", "wait", "fresh")


class TestIaqSurrogate:
    def test_endpoints(self):
        assert boards.iaq_surrogate(50000.0, 50000.0) == 0
        assert boards.iaq_surrogate(0.0, 50000.0) == 500
        assert boards.iaq_surrogate(25000.0, 50000.0) == 250

    def test_clamped_above_baseline(self):
        assert boards.iaq_surrogate(80000.0, 50000.0) == 0

    def test_bad_inputs(self):
        with pytest.raises(boards.NonPositiveBaseline):
            boards.iaq_surrogate(100.0, 0.0)
        with pytest.raises(boards.NonPositiveBaseline):
            boards.iaq_surrogate(100.0, -5.0)
        with pytest.raises(ValueError):
            boards.iaq_surrogate(-1.0, 50000.0)

    @given(st.floats(0, 1e6), st.floats(1.0, 1e6))
    def test_range(self, gas, baseline):
        index = boards.iaq_surrogate(gas, baseline)
        assert 0 <= index <= 500


class TestMicLevel:
    def test_synth_round_trip(self):
        for level in (65.0, 70.5, 77.0, 89.0, 93.25, 100.0, 120.0):
            clip = boards.synth_clip(level)
            assert len(clip) == boards.CLIP_SAMPLES
            assert boards.mic_level(clip) == pytest.approx(level, abs=1e-9)

    def test_floor(self):
        assert boards.mic_level([0.0] * 400) == 30.0
        quiet = boards.synth_clip(10.0)  # would read 10, floored to 30
        assert boards.mic_level(quiet) == 30.0

    def test_full_scale(self):
        clip = boards.synth_clip(120.0)
        assert max(clip) == pytest.approx(1.0)

    def test_wrong_length(self):
        with pytest.raises(boards.WrongClipLength):
            boards.mic_level([0.0] * 399)
        with pytest.raises(boards.WrongClipLength):
            boards.mic_level([0.0] * 401)


class TestWosMap:
    def test_exhaustive_integers(self):
        for threshold in range(65, 101):
            level = boards.wos_map(threshold)
            assert level in boards.HARDWARE_WOS_LEVELS
            assert level <= threshold
            higher = [l for l in boards.HARDWARE_WOS_LEVELS
                      if level < l <= threshold]
            assert not higher, "not maximal for {}".format(threshold)

    def test_band_edges(self):
        assert boards.wos_map(65) == 65
        assert boards.wos_map(76.99) == 65
        assert boards.wos_map(77) == 77
        assert boards.wos_map(88.99) == 77
        assert boards.wos_map(89) == 89
        assert boards.wos_map(100) == 89

    def test_out_of_range(self):
        for bad in (64, 64.99, 100.01, 101, 0, -10):
            with pytest.raises(boards.ThresholdOutOfRange):
                boards.wos_map(bad)


class TestCrossed:
    def test_inside_to_outside_fires(self):
        assert boards.crossed(50, 101, 0, 100)
        assert boards.crossed(50, -1, 0, 100)

    def test_quiet_cases(self):
        assert not boards.crossed(50, 60, 0, 100)  # stays inside
        assert not boards.crossed(101, 150, 0, 100)  # stays outside
        assert not boards.crossed(101, 50, 0, 100)  # returns inside

    def test_boundaries_count_as_inside(self):
        assert not boards.crossed(50, 100, 0, 100)
        assert boards.crossed(100, 100.01, 0, 100)


class TestBatteryVoltage:
    def test_line(self):
        assert boards.battery_voltage_mv(1.0) == 4200
        assert boards.battery_voltage_mv(0.0) == 3300
        assert boards.battery_voltage_mv(0.5) == 3750

    def test_clamped(self):
        assert boards.battery_voltage_mv(1.5) == 4200
        assert boards.battery_voltage_mv(-0.2) == 3300


def make_board(cls=ButtonBoard, slot=0, **kwargs):
    return cls(slot, **kwargs)


class TestSensorBoardBus:
    def test_ident(self):
        board = make_board()
        reply = board.transact(bus.Frame(0, bus.CMD_IDENT, b""), 0.0)
        desc = bus.parse_ident(reply.payload)
        assert desc.board_type == bus.BoardType.BUTTON

    def test_unknown_opcode(self):
        board = make_board()
        with pytest.raises(bus.UnknownCommand):
            board.transact(bus.Frame(0, 0x7E, b""), 0.0)

    def test_unresponsive_returns_none(self):
        board = make_board()
        board.responsive = False
        assert board.transact(bus.Frame(0, bus.CMD_IDENT, b""), 0.0) is None

    def test_set_poll_and_enable(self):
        board = make_board()
        board.transact(bus.Frame(0, bus.CMD_SET_POLL,
                                 struct.pack(">BI", 0, 600)), 0.0)
        assert board.poll_interval[0] == 600
        board.transact(bus.Frame(0, bus.CMD_SET_ENABLE,
                                 struct.pack(">BB", 0, 0)), 0.0)
        assert board.enabled[0] is False

    def test_set_thresh_set_and_clear(self):
        board = make_board()
        board.transact(bus.Frame(0, bus.CMD_SET_THRESH,
                                 struct.pack(">BBhh", 0, 1, -5, 300)), 0.0)
        assert board.thresholds[0] == (-5, 300)
        board.transact(bus.Frame(0, bus.CMD_SET_THRESH,
                                 struct.pack(">BBhh", 0, 0, 0, 0)), 0.0)
        assert 0 not in board.thresholds

    def test_unknown_metric_id(self):
        board = make_board()
        with pytest.raises(ValueError):
            board.transact(bus.Frame(0, bus.CMD_SET_POLL,
                                     struct.pack(">BI", 9, 60)), 0.0)

    def test_get_data_drains_in_chunks(self):
        board = make_board()
        for i in range(13):
            board.pending.append((0, i, float(i), "test"))
        board.raise_irq()
        reply = board.transact(bus.Frame(0, bus.CMD_GET_DATA, b""), 0.0)
        assert reply.payload[0] == 10
        assert len(reply.payload) == 1 + 10 * 3
        assert board.irq  # three records still queued
        assert len(board.last_drained) == 10
        reply = board.transact(bus.Frame(0, bus.CMD_GET_DATA, b""), 0.0)
        assert reply.payload[0] == 3
        assert not board.irq
        reply = board.transact(bus.Frame(0, bus.CMD_GET_DATA, b""), 0.0)
        assert reply.payload == b"\x00"

    def test_record_wire_format(self):
        board = make_board()
        board.pending.append((0, -300, 1.0, "test"))
        reply = board.transact(bus.Frame(0, bus.CMD_GET_DATA, b""), 0.0)
        count = reply.payload[0]
        metric_id = reply.payload[1]
        (raw,) = struct.unpack(">h", reply.payload[2:4])
        assert (count, metric_id, raw) == (1, 0, -300)


FLAT_AMBIENT = (20.0, 1013.0, 50.0, 50000.0)


class TestEnvironmentalBoard:
    def make(self, episodes=None):
        return EnvironmentalBoard(
            0, ambient=lambda t: FLAT_AMBIENT,
            on_measurement=(episodes.append if episodes is not None
                            else None))

    def test_ulp_tick_timing(self):
        board = self.make()
        ready = board.ulp_tick(0.0)
        assert ready == pytest.approx(3.56)
        assert board.last_ulp == 0.0
        assert board.last_values is not None

    def test_ulp_tick_disabled_board(self):
        board = self.make()
        for metric_id in board.enabled:
            board.enabled[metric_id] = False
        assert board.ulp_tick(0.0) is None

    def test_first_request_is_fresh(self):
        episodes = []
        board = self.make(episodes)
        delay = board.request_measurement(10.0)
        assert delay == 3560
        assert episodes == [10.0]
        causes = {cause for _m, _r, _t, cause in board.pending}
        assert causes == {"poll-fresh"}

    def test_reuse_from_recent_cycle(self):
        episodes = []
        board = self.make(episodes)
        board.ulp_tick(0.0)
        episodes.clear()
        delay = board.request_measurement(20.0)
        assert delay == 0
        assert episodes == []  # no extra energy, cache served
        assert [c for _m, _r, _t, c in board.pending] == ["poll-reuse"] * 4

    def test_wait_rides_next_cycle(self):
        board = self.make()
        board.ulp_tick(0.0)
        board.pending.clear()
        delay = board.request_measurement(280.0)
        # next cycle at 300, ready 303.56 -> 23.56 s away
        assert delay == 23560
        assert board.pending == []
        board.ulp_tick(300.0)
        causes = {c for _m, _r, _t, c in board.pending}
        assert "poll-wait" in causes

    def test_queue_respects_enable_flags(self):
        board = self.make()
        board.enabled[EnvironmentalBoard.M_PRESS] = False
        board.ulp_tick(0.0)
        board.pending.clear()
        board.request_measurement(10.0)
        metric_ids = [m for m, _r, _t, _c in board.pending]
        assert metric_ids == [EnvironmentalBoard.M_TEMP,
                              EnvironmentalBoard.M_HUM,
                              EnvironmentalBoard.M_IAQ]

    def test_iaq_baseline_trailing_max(self):
        readings = {0.0: 60000.0, 300.0: 40000.0}
        board = EnvironmentalBoard(
            0, ambient=lambda t: (20.0, 1013.0, 50.0,
                                  readings.get(t, 30000.0)))
        board.measure(0.0)
        assert board.iaq_baseline == 60000.0
        board.measure(300.0)
        assert board.iaq_baseline == 60000.0
        # one day after the 60k reading it ages out; the 40k one stays
        board.measure(86500.0)
        assert board.iaq_baseline == 40000.0

    def test_threshold_crossing_queues(self):
        temps = iter([20.0, 35.0])
        board = EnvironmentalBoard(
            0, ambient=lambda t: (next(temps), 1013.0, 50.0, 50000.0))
        low = bus.encode_value(bus.MetricKind.TEMPERATURE, 0.0)
        high = bus.encode_value(bus.MetricKind.TEMPERATURE, 30.0)
        board.thresholds[EnvironmentalBoard.M_TEMP] = (low, high)
        board.ulp_tick(0.0)
        assert board.pending == []  # first sample has no previous
        board.ulp_tick(300.0)
        causes = {c for _m, _r, _t, c in board.pending}
        assert causes == {"threshold"}
        assert board.irq


class TestMicrophoneBoard:
    def make(self, wakes=None, threshold=None):
        board = MicrophoneBoard(
            1, sound_level=lambda t: 40.0,
            on_wake=(wakes.append if wakes is None else
                     (lambda t, cause: wakes.append((t, cause)))))
        if threshold is not None:
            high = bus.encode_value(bus.MetricKind.SOUND_LEVEL, threshold)
            board.thresholds[MicrophoneBoard.M_LEVEL] = (0, high)
        return board

    def test_unarmed_ignores_sound(self):
        wakes = []
        board = self.make(wakes)
        assert board.on_sound(95.0, 10.0) is None
        assert wakes == []

    def test_hardware_level_mapping(self):
        board = self.make([], threshold=80.0)
        assert board.software_threshold == 80.0
        assert board.hardware_wos_level == 77

    def test_below_hardware_level_no_wake(self):
        wakes = []
        board = self.make(wakes, threshold=80.0)
        assert board.on_sound(76.0, 10.0) is None
        assert wakes == []

    def test_between_hw_and_sw_wakes_without_notify(self):
        wakes = []
        board = self.make(wakes, threshold=80.0)
        assert board.on_sound(78.0, 10.0) is None
        assert wakes == [(10.0, "wos_wake")]  # energy was spent
        assert board.pending == []
        assert board.lockout_until == 0.0

    def test_notification_and_lockout(self):
        wakes = []
        board = self.make(wakes, threshold=80.0)
        note = board.on_sound(85.0, 10.0)
        assert note is not None
        assert note.value == pytest.approx(85.0, abs=0.01)
        assert note.cause == "wos"
        assert board.lockout_until == 70.0
        # 59 s later: still locked out
        assert board.on_sound(85.0, 69.0) is None
        assert wakes == [(10.0, "wos_wake")]
        # 61 s after the first: fires again
        note2 = board.on_sound(85.0, 71.0)
        assert note2 is not None
        assert len(board.pending) == 2

    def test_polled_clip(self):
        wakes = []
        board = self.make(wakes)
        delay = board.request_measurement(5.0)
        assert delay == 20
        assert board.supply_windows == [(5.0, 5.02)]
        assert wakes == [(5.0, "mic_poll")]
        metric_id, raw, t_meas, cause = board.pending[0]
        assert cause == "poll"
        assert t_meas == 5.02
        assert bus.decode_value(bus.MetricKind.SOUND_LEVEL, raw) == \
            pytest.approx(40.0, abs=0.01)


class TestButtonBoard:
    def test_bad_button_id(self):
        board = ButtonBoard(2)
        for bad in (0, 5, -1):
            with pytest.raises(boards.BadButtonId):
                board.press(bad, 0.0)

    def test_press_queues_and_raises_irq(self):
        episodes = []
        board = ButtonBoard(2, on_press=lambda t0, t1: episodes.append(
            (t0, t1)))
        note = board.press(3, 100.0)
        assert note.value == 3
        assert board.irq
        assert episodes == [(100.0, 101.7)]

    def test_overlapping_press_extends(self):
        episodes = []
        board = ButtonBoard(2, on_press=lambda t0, t1: episodes.append(
            (t0, t1)))
        board.press(1, 100.0)
        board.press(2, 101.0)
        assert board.active_until == pytest.approx(102.7)
        assert episodes[-1] == (101.0, 102.7)

    def test_poll_reports_last_press(self):
        board = ButtonBoard(2)
        board.request_measurement(1.0)
        assert board.pending[-1][1] == 0  # nothing pressed yet
        board.press(4, 2.0)
        board.pending.clear()
        board.request_measurement(3.0)
        assert board.pending[-1][1] == 4


class TestPowerLightBoard:
    def make(self, lux=1000.0, reads=None):
        return PowerLightBoard(
            3, lux=lambda t: lux if not callable(lux) else lux(t),
            state_of_charge=lambda: 0.75,
            on_read=(None if reads is None
                     else (lambda t, label: reads.append((t, label)))))

    def test_off_grid_rejected(self):
        board = self.make()
        board.prime_light(0.0)
        with pytest.raises(boards.NotAPollInstant):
            board.light_poll(15.0)
        board.light_poll(16.0)
        board.light_poll(32.0)

    def test_no_threshold_no_energy(self):
        reads = []
        board = self.make(reads=reads)
        board.prime_light(0.0)
        assert board.light_poll(16.0) is None
        assert reads == []

    def test_crossing_notifies_once(self):
        levels = {16.0: 1000.0, 32.0: 40000.0, 48.0: 40000.0}
        board = self.make(lux=lambda t: levels.get(t, 1000.0))
        board.thresholds[PowerLightBoard.M_LIGHT] = (0, 30000)
        board.prime_light(0.0)
        assert board.light_poll(16.0) is None
        note = board.light_poll(32.0)
        assert note is not None
        assert note.value == 32767  # clamped wire value
        assert board.light_poll(48.0) is None  # stays outside, quiet

    def test_poll_reads_enabled_gauges(self):
        reads = []
        board = self.make(reads=reads)
        board.request_measurement(10.0)
        labels = [label for _t, label in reads]
        assert labels == ["battery_read", "light_read"]
        values = {m: raw for m, raw, _t, _c in board.pending}
        assert values[PowerLightBoard.M_BATT] == \
            boards.battery_voltage_mv(0.75)
        assert values[PowerLightBoard.M_LIGHT] == 1000

    def test_battery_only_when_light_disabled(self):
        reads = []
        board = self.make(reads=reads)
        board.enabled[PowerLightBoard.M_LIGHT] = False
        board.request_measurement(10.0)
        assert [label for _t, label in reads] == ["battery_read"]
