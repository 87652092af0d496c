"""Energy ledger, battery, and report tests."""

import math

import pytest

from iwast_sim import energy
from iwast_sim.energy import (BatteryState, BoardTimeline, EnergyLedger,
                              LoadTerm)
from oracles import assert_rows_tile, sampled_charge_uc


class TestProfiles:
    def test_board_profiles(self):
        t = energy.TABLE1
        assert (t["motherboard"].active_ua,
                t["motherboard"].active_ms) == (25400.0, 7000.0)
        assert t["motherboard"].sleep_ua == 55.0
        assert (t["environmental"].active_ua,
                t["environmental"].active_ms) == (8430.0, 3520.0)
        assert t["environmental"].inactive_ua == 1060.0
        assert t["environmental"].sleep_ua is None
        assert (t["microphone"].active_ua,
                t["microphone"].active_ms) == (4000.0, 500.0)
        assert (t["microphone"].inactive_ua,
                t["microphone"].sleep_ua) == (25.0, 1.0)
        assert (t["button"].active_ua, t["button"].active_ms) == \
            (7300.0, 2000.0)
        assert t["button"].sleep_ua == 0.33
        assert (t["power_light"].active_ua,
                t["power_light"].active_ms) == (4000.0, 28.0)
        assert t["power_light"].sleep_ua == 3.2

    def test_env_floor_is_controller(self):
        env = energy.TABLE1["environmental"]
        assert env.floor_ua == 1060.0
        assert energy.TABLE1["microphone"].floor_ua == 1.0

    def test_env_fine_cycle_charge(self):
        heat = energy.ENV_HEATER_UA * energy.ENV_HEATER_S
        measure = energy.ENV_MEASURE_UA * energy.ENV_MEASURE_S
        assert heat + measure == pytest.approx(26844.5)
        assert energy.ENV_IDLE_UA == 1061.0


class TestBoardTimeline:
    def test_base_only(self):
        tl = BoardTimeline("b", 0.0, 100.0, "idle")
        rows = tl.render(10.0)
        assert rows == [(0.0, 10.0, 100.0, "idle")]
        assert tl.charge_uc_between(0.0, 10.0) == pytest.approx(1000.0)

    def test_episode_replaces_base(self):
        tl = BoardTimeline("b", 0.0, 100.0, "idle")
        tl.add_episode(2.0, 3.0, 5000.0, "burst")
        rows = tl.render(10.0)
        assert_rows_tile(rows, 0.0, 10.0)
        assert (2.0, 5.0, 5000.0, "burst") in rows
        # base resumes after, and the episode charge is exactly I*dt
        expected = 100.0 * 7.0 + 5000.0 * 3.0
        assert tl.charge_uc_between(0.0, 10.0) == pytest.approx(expected)

    def test_busy_episodes_serialize(self):
        tl = BoardTimeline("b", 0.0, 0.0, "sleep")
        tl.add_episode(1.0, 2.0, 10.0, "a")
        start, end = tl.add_episode(2.0, 2.0, 20.0, "b")
        assert (start, end) == (3.0, 5.0)  # pushed past the first
        rows = [r for r in tl.render(6.0) if r[3] in ("a", "b")]
        assert rows == [(1.0, 3.0, 10.0, "a"), (3.0, 5.0, 20.0, "b")]

    def test_extend_last(self):
        tl = BoardTimeline("b", 0.0, 0.33, "sleep")
        tl.add_episode(1.0, 1.7, 7300.0, "press")
        tl.extend_last(3.4)
        rows = tl.render(5.0)
        assert (1.0, 3.4, 7300.0, "press") in rows

    def test_base_change_mid_span(self):
        tl = BoardTimeline("b", 0.0, 25400.0, "awake")
        tl.set_base(30.0, 55.0, "sleep")
        rows = tl.render(60.0)
        assert rows == [(0.0, 30.0, 25400.0, "awake"),
                        (30.0, 60.0, 55.0, "sleep")]

    def test_truncate(self):
        tl = BoardTimeline("b", 0.0, 100.0, "idle")
        tl.add_episode(4.0, 4.0, 1000.0, "spanning")
        tl.add_episode(9.0, 1.0, 2000.0, "later")
        tl.truncate(5.0)
        rows = tl.render(10.0)
        assert_rows_tile(rows, 0.0, 10.0)
        assert (4.0, 5.0, 1000.0, "spanning") in rows
        assert all(r[3] != "later" for r in rows)
        assert rows[-1] == (5.0, 10.0, 0.0, "depleted")

    def test_rows_between_matches_render(self):
        tl = BoardTimeline("b", 0.0, 10.0, "idle")
        for k in range(20):
            tl.add_episode(1.0 + 2.0 * k, 0.5, 500.0 + k, "e%d" % k)
        horizon = 50.0
        render = tl.render(horizon)
        window = tl.rows_between(7.3, 21.9)
        expected = 0.0
        for a, b, ua, _label in render:
            lo, hi = max(a, 7.3), min(b, 21.9)
            if hi > lo:
                expected += (hi - lo) * ua
        got = sum((b - a) * ua for a, b, ua, _l in window)
        assert got == pytest.approx(expected)


def synthetic_ledger():
    mb = BoardTimeline("motherboard", 0.0, 55.0, "sleep")
    env = BoardTimeline("env@0", 0.0, 1061.0, "idle")
    for k in range(12):
        t = 30.0 + 75.0 * k
        mb.add_episode(t, 7.000136, 25400.0, "uplink")
        env.add_episode(t, 1.71, 14000.0, "ulp_heat")
        env.add_episode(t + 1.71, 1.85, 1570.0, "ulp_measure")
    return EnergyLedger.from_timelines([mb, env], 1000.0)


class TestEnergyLedger:
    def test_integrate_against_sampled_sum(self):
        ledger = synthetic_ledger()
        for name, rows in ledger.boards.items():
            assert_rows_tile(rows, 0.0, 1000.0)
            exact = ledger.integrate(0.0, 1000.0)["boards"][name]
            sampled = sampled_charge_uc(rows, 0.0, 1000.0)
            assert exact["charge_uah"] * energy.UC_PER_UAH == \
                pytest.approx(sampled, rel=1e-4)

    def test_partial_interval(self):
        ledger = synthetic_ledger()
        whole = ledger.integrate(0.0, 1000.0)["total"]["charge_uah"]
        first = ledger.integrate(0.0, 400.0)["total"]["charge_uah"]
        rest = ledger.integrate(400.0, 1000.0)["total"]["charge_uah"]
        assert first + rest == pytest.approx(whole)

    def test_range_checks(self):
        ledger = synthetic_ledger()
        with pytest.raises(energy.RangeOutsideLedger):
            ledger.integrate(-5.0, 10.0)
        with pytest.raises(energy.RangeOutsideLedger):
            ledger.integrate(0.0, 2000.0)
        with pytest.raises(energy.RangeOutsideLedger):
            ledger.integrate(7.0, 3.0)

    def test_breakdown_sums_to_total(self):
        ledger = synthetic_ledger()
        breakdown = ledger.breakdown()
        for name, rows in ledger.boards.items():
            total = ledger.integrate(0.0, 1000.0)["boards"][name]
            by_label = sum(v["charge_uah"]
                           for v in breakdown[name].values())
            assert by_label == pytest.approx(total["charge_uah"])
            seconds = sum(v["seconds"] for v in breakdown[name].values())
            assert seconds == pytest.approx(1000.0)

    def test_energy_is_charge_times_voltage(self):
        ledger = synthetic_ledger()
        totals = ledger.integrate(0.0, 1000.0)["total"]
        uc = totals["charge_uah"] * energy.UC_PER_UAH
        assert totals["energy_mj"] == pytest.approx(uc * 3.3 / 1000.0)

    def test_dict_round_trip(self):
        ledger = synthetic_ledger()
        clone = EnergyLedger.from_dict(ledger.to_dict())
        assert clone.span == ledger.span
        assert clone.boards == ledger.boards


class TestMergedSteps:
    def test_sums_boards(self):
        a = BoardTimeline("a", 0.0, 10.0, "idle")
        b = BoardTimeline("b", 0.0, 1.0, "idle")
        a.add_episode(2.0, 2.0, 100.0, "e")
        b.add_episode(3.0, 2.0, 1000.0, "e")
        rows = {"a": a.render(6.0), "b": b.render(6.0)}
        steps = energy.merged_current_steps(rows, 0.0, 6.0)
        # piecewise totals: 11, 101, 1101, 1010... check by sampling
        def total_at(t):
            out = 0.0
            for rs in rows.values():
                for t0, t1, ua, _l in rs:
                    if t0 <= t < t1:
                        out += ua
            return out
        for t0, t1, ua in steps:
            assert ua == pytest.approx(total_at((t0 + t1) / 2.0))
        assert steps[0][0] == 0.0
        assert steps[-1][1] == 6.0
        charge = sum((t1 - t0) * ua for t0, t1, ua in steps)
        ledger = EnergyLedger(rows, (0.0, 6.0))
        assert charge == pytest.approx(
            ledger.integrate(0.0, 6.0)["total"]["charge_uah"] * 3600.0)


class TestHarvest:
    def test_nominal(self):
        assert energy.harvest(1000.0, 3600.0) == pytest.approx(80.0)

    def test_cap(self):
        assert energy.harvest(100000.0, 3600.0) == pytest.approx(4000.0)
        assert energy.harvest(50000.0, 3600.0) == pytest.approx(4000.0)

    def test_zero_and_errors(self):
        assert energy.harvest(0.0, 3600.0) == 0.0
        with pytest.raises(ValueError):
            energy.harvest(-1.0, 10.0)
        with pytest.raises(ValueError):
            energy.harvest(10.0, -1.0)


class TestBattery:
    def test_account_and_clamp(self):
        batt = BatteryState(capacity_uah=100.0, charge_uah=100.0)
        batt.account(30.0)
        assert batt.charge_uah == 70.0
        batt.account(0.0, harvested_uah=500.0)
        assert batt.charge_uah == 100.0  # clamped at capacity
        assert batt.harvested_uah == 500.0

    def test_depleted_sticky(self):
        batt = BatteryState(capacity_uah=100.0, charge_uah=10.0)
        batt.account(20.0)
        assert batt.depleted
        assert batt.charge_uah == 0.0
        batt.account(0.0, harvested_uah=5.0)
        assert batt.depleted  # once dead, stays flagged


class TestLifetime:
    def test_load_term_average(self):
        assert LoadTerm("sleep", 55.0).average_ua == 55.0
        assert LoadTerm("uplink", 25400.0, duration_s=7.0,
                        period_s=700.0).average_ua == pytest.approx(254.0)

    def test_pure_quotient(self):
        terms = [LoadTerm("mb_sleep", 55.0), LoadTerm("power_idle", 3.2)]
        result = energy.lifetime_estimate(terms)
        assert result.outcome == energy.DEPLETES
        assert result.average_draw_ua == pytest.approx(58.2)
        assert result.hours == pytest.approx(500000.0 / 58.2, abs=1e-6)

    def test_small_exact_case(self):
        result = energy.lifetime_estimate(
            [LoadTerm("x", 100.0)],
            BatteryState(capacity_uah=1000.0, charge_uah=1000.0))
        assert result.hours == pytest.approx(10.0, abs=1e-9)

    def test_harvest_turns_never_depletes(self):
        result = energy.lifetime_estimate(
            [LoadTerm("x", 50.0)],
            BatteryState(capacity_uah=1000.0, charge_uah=1000.0),
            lux_fn=lambda t: 1000.0)  # 80 uA harvested > 50 uA drawn
        assert result.outcome == energy.NEVER_DEPLETES
        assert result.hours is None

    def test_empty_battery(self):
        result = energy.lifetime_estimate(
            [LoadTerm("x", 1.0)], BatteryState(charge_uah=0.0))
        assert result.outcome == energy.DEPLETES
        assert result.hours == 0.0


class TestReports:
    def test_report_shape(self):
        ledger = synthetic_ledger()
        report = energy.power_report(
            ledger, config={"spreading_factor": 11},
            battery=BatteryState())
        assert report["report_version"] == 1
        assert report["span_s"] == [0.0, 1000.0]
        assert set(report["boards"]) == {"motherboard", "env@0"}
        board = report["boards"]["motherboard"]
        assert {"charge_uah", "energy_mj", "average_current_ua",
                "by_label"} <= set(board)
        assert "uplink" in board["by_label"]
        assert report["projection"]["outcome"] == energy.DEPLETES

    def test_average_current(self):
        ledger = synthetic_ledger()
        report = energy.power_report(ledger)
        total = report["total"]
        assert total["average_current_ua"] == pytest.approx(
            total["charge_uah"] * 3600.0 / 1000.0)

    def test_comparison_orders_by_charge(self):
        ledger = synthetic_ledger()
        expensive = energy.power_report(ledger)
        cheap_tl = BoardTimeline("motherboard", 0.0, 55.0, "sleep")
        cheap = energy.power_report(
            EnergyLedger.from_timelines([cheap_tl], 1000.0))
        comparison = energy.build_comparison(
            {"polling": expensive, "wos": cheap})
        assert comparison["ordering"] == ["wos", "polling"]
        assert comparison["winner"] == "wos"
        assert comparison["runs"][0]["total_charge_uah"] < \
            comparison["runs"][1]["total_charge_uah"]

    def test_render_text_mentions_boards(self):
        text = energy.render_text(energy.power_report(synthetic_ledger()))
        assert "motherboard" in text
        assert "env@0" in text
