"""Named scenarios: example traces, crossover pair, oracle days.

Everything here is deterministic given the seed, so scenario files can
be regenerated bit-identically and the acceptance suite can rely on
frozen expectations.
"""

import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import Dict, Optional

from . import boards, bus, energy
from .bus import MetricKind
from .engine import EnvTrace, Simulator, TraceEvent
from .motherboard import DeviceConfig, MetricConfig

# Metric indices on their boards, fixed by the descriptor layouts.
ENV_TEMP, ENV_PRESS, ENV_HUM, ENV_IAQ = 0, 1, 2, 3
MIC_LEVEL = 0
PWR_BATT, PWR_LIGHT = 0, 1


@dataclass
class Scenario:
    """One runnable bundle; feed to :func:`build_simulator`."""

    name: str
    topology: Dict[int, str]
    config: DeviceConfig
    trace: EnvTrace
    horizon_s: float
    seed: int = 0
    battery: Optional[energy.BatteryState] = None


def default_identity(n: int = 1):
    """Deterministic device id and radio key blob for simulations."""
    device_id = b"IWST" + n.to_bytes(4, "big")
    radio_keys = bytes((i * 7 + n) % 256 for i in range(36))
    return device_id, radio_keys


def build_simulator(scenario: Scenario) -> Simulator:
    return Simulator(
        scenario.topology, scenario.config, scenario.trace,
        scenario.horizon_s, battery=scenario.battery,
        seed=scenario.seed)


def run_scenario(scenario: Scenario):
    return build_simulator(scenario).run()


# -- Trace synthesis ---------------------------------------------------------


def _ambient(t, temp_c, pressure_hpa, humidity_pct, gas_ohm, lux):
    return (t, {
        "temp_c": round(temp_c, 2),
        "pressure_hpa": round(pressure_hpa, 1),
        "humidity_pct": round(humidity_pct, 2),
        "gas_resistance_ohm": round(gas_ohm, 0),
        "lux": round(lux, 0),
    })


def make_classroom_trace(horizon_s: float = 3600.0, seed: int = 1,
                         sample_period_s: float = 60.0) -> EnvTrace:
    """Indoor morning: slow CO2/VOC buildup, a few loud moments."""
    rng = random.Random(seed)
    samples = []
    t = 0.0
    while t <= horizon_s:
        occupancy = 0.5 - 0.5 * math.cos(
            2.0 * math.pi * min(t / max(horizon_s, 1.0), 1.0))
        samples.append(_ambient(
            t,
            temp_c=21.0 + 2.0 * occupancy + rng.uniform(-0.05, 0.05),
            pressure_hpa=1013.2 + 1.5 * math.sin(t / 1800.0),
            humidity_pct=45.0 + 8.0 * occupancy + rng.uniform(-0.2, 0.2),
            gas_ohm=52000.0 * (1.0 - 0.35 * occupancy),
            lux=350.0 + 40.0 * occupancy,
        ))
        t += sample_period_s
    events = []
    for k in range(int(horizon_s // 900)):
        t_ev = 450.0 + 900.0 * k + rng.uniform(-60.0, 60.0)
        if t_ev < horizon_s:
            events.append(TraceEvent(t_ev, "sound", {
                "level_dbspl": round(rng.uniform(80.0, 93.0), 1),
                "duration_ms": 400.0}))
    events.sort(key=lambda e: e.t)
    return EnvTrace(samples, events)


def make_playground_trace(horizon_s: float = 3600.0,
                          seed: int = 2) -> EnvTrace:
    """Outdoor afternoon: shouts, button presses, fading daylight."""
    rng = random.Random(seed)
    samples = []
    t = 0.0
    while t <= horizon_s:
        frac = t / max(horizon_s, 1.0)
        lux = max(5000.0 * (1.0 - frac * frac) - 60.0, 20.0)
        samples.append(_ambient(
            t,
            temp_c=17.0 + 3.0 * (1.0 - frac),
            pressure_hpa=1009.8,
            humidity_pct=55.0 + 5.0 * frac,
            gas_ohm=80000.0,
            lux=lux,
        ))
        t += 120.0
    events = []
    for k in range(int(horizon_s // 300)):
        t_ev = 150.0 + 300.0 * k + rng.uniform(-90.0, 90.0)
        if t_ev < horizon_s:
            events.append(TraceEvent(t_ev, "sound", {
                "level_dbspl": round(rng.uniform(66.0, 96.0), 1),
                "duration_ms": 700.0}))
    for k in range(int(horizon_s // 600)):
        t_ev = 400.0 + 600.0 * k + rng.uniform(-120.0, 120.0)
        if t_ev < horizon_s:
            events.append(TraceEvent(t_ev, "button",
                                     {"id": rng.randint(1, 4)}))
    events.sort(key=lambda e: e.t)
    return EnvTrace(samples, events)


def _flat_trace(horizon_s, lux=0.0, sample_period_s=3600.0,
                sound_times=(), sound_level=85.0):
    samples = []
    t = 0.0
    while t <= horizon_s:
        samples.append(_ambient(t, 20.0, 1013.0, 50.0, 60000.0, lux))
        t += sample_period_s
    events = [TraceEvent(ts, "sound",
                         {"level_dbspl": sound_level, "duration_ms": 500.0})
              for ts in sound_times if ts < horizon_s]
    return EnvTrace(samples, sorted(events, key=lambda e: e.t))


# -- Example end-to-end scenarios --------------------------------------------


def classroom_air_quality(horizon_s: float = 3600.0,
                          seed: int = 1) -> Scenario:
    """Env board polled at 300 s plus a wake-on-sound microphone."""
    device_id, radio_keys = default_identity(1)
    config = DeviceConfig(device_id, radio_keys, spreading_factor=11, metrics={
        (0, ENV_TEMP): MetricConfig(poll_interval_s=300),
        (0, ENV_HUM): MetricConfig(poll_interval_s=300),
        (0, ENV_IAQ): MetricConfig(poll_interval_s=300),
        (1, MIC_LEVEL): MetricConfig(
            threshold_enabled=True, low=0,
            high=bus.encode_value(MetricKind.SOUND_LEVEL, 77.0)),
    })
    return Scenario(
        name="classroom_air_quality",
        topology={0: "environmental", 1: "microphone"},
        config=config,
        trace=make_classroom_trace(horizon_s, seed),
        horizon_s=horizon_s,
        seed=seed)


def playground_noise(horizon_s: float = 3600.0, seed: int = 2) -> Scenario:
    """Microphone in WOS mode, buttons, and a light threshold."""
    device_id, radio_keys = default_identity(2)
    config = DeviceConfig(device_id, radio_keys, spreading_factor=11, metrics={
        (0, MIC_LEVEL): MetricConfig(
            threshold_enabled=True, low=0,
            high=bus.encode_value(MetricKind.SOUND_LEVEL, 89.0)),
        (2, PWR_BATT): MetricConfig(poll_interval_s=900),
        (2, PWR_LIGHT): MetricConfig(
            threshold_enabled=True,
            low=bus.encode_value(MetricKind.LIGHT_LEVEL, 100),
            high=bus.encode_value(MetricKind.LIGHT_LEVEL, 30000)),
    })
    return Scenario(
        name="playground_noise",
        topology={0: "microphone", 1: "button", 2: "power_light"},
        config=config,
        trace=make_playground_trace(horizon_s, seed),
        horizon_s=horizon_s,
        seed=seed)


# -- Polling-vs-WOS crossover ------------------------------------------------


def _mic_only_config(n, mode, poll_s=60, threshold_dbspl=77.0):
    device_id, radio_keys = default_identity(n)
    if mode == "polling":
        cfg = MetricConfig(poll_interval_s=poll_s)
    else:
        cfg = MetricConfig(
            threshold_enabled=True, low=0,
            high=bus.encode_value(MetricKind.SOUND_LEVEL, threshold_dbspl))
    return DeviceConfig(device_id, radio_keys, spreading_factor=11,
                        metrics={(0, MIC_LEVEL): cfg})


def crossover_frequent_events(horizon_s: float = 3600.0):
    """Loud events every 2 min: sparse polling beats WOS.

    Every WOS wake turns into an uplink, so the radio dominates; the
    polling configuration samples rarely and transmits rarely.
    """
    sound_times = [90.0 + 120.0 * k for k in
                   range(int((horizon_s - 90.0) // 120.0) + 1)]
    return {
        "polling": Scenario(
            name="crossover_frequent_polling",
            topology={0: "microphone"},
            config=_mic_only_config(3, "polling", poll_s=1800),
            trace=_flat_trace(horizon_s, sound_times=sound_times),
            horizon_s=horizon_s),
        "wos": Scenario(
            name="crossover_frequent_wos",
            topology={0: "microphone"},
            config=_mic_only_config(4, "wos"),
            trace=_flat_trace(horizon_s, sound_times=sound_times),
            horizon_s=horizon_s),
    }


def crossover_rare_events(horizon_s: float = 86400.0):
    """Two events a day: WOS idles cheaply while polling burns the
    radio on silence."""
    sound_times = [20000.0, 60000.0]
    return {
        "polling": Scenario(
            name="crossover_rare_polling",
            topology={0: "microphone"},
            config=_mic_only_config(5, "polling", poll_s=60),
            trace=_flat_trace(horizon_s, sound_times=sound_times),
            horizon_s=horizon_s),
        "wos": Scenario(
            name="crossover_rare_wos",
            topology={0: "microphone"},
            config=_mic_only_config(6, "wos"),
            trace=_flat_trace(horizon_s, sound_times=sound_times),
            horizon_s=horizon_s),
    }


def run_comparison(pair):
    """Run a crossover pair; returns (reports, comparison stanza)."""
    reports = {}
    for mode, scenario in pair.items():
        result = run_scenario(scenario)
        reports[mode] = result.report
    return reports, energy.build_comparison(reports)


# -- Calibration scenarios ---------------------------------------------------


def table1_episode_ledger() -> energy.EnergyLedger:
    """Synthetic ledger with one standard active episode per board.

    Each board sits at its floor current except for a single episode
    at its profile's active current and duration; used to check that
    episode charges reproduce the profile table exactly.
    """
    timelines = []
    t_ep = 10.0
    horizon = 30.0
    for name, profile in energy.TABLE1.items():
        tl = energy.BoardTimeline(name, 0.0, profile.floor_ua, "sleep")
        tl.add_episode(t_ep, profile.active_s, profile.active_ua, "active")
        timelines.append(tl)
    return energy.EnergyLedger.from_timelines(timelines, horizon)


def sleep_lifetime_terms():
    """Motherboard plus power board, everything asleep, no events."""
    return [
        energy.LoadTerm("motherboard_sleep",
                        energy.TABLE1["motherboard"].sleep_ua),
        energy.LoadTerm("power_light_sleep",
                        energy.TABLE1["power_light"].sleep_ua),
    ]


def env_cycle_scenario(horizon_s: float = 3600.0) -> Scenario:
    """Environmental board alone, no config: only autonomous ULP
    cycles appear in the ledger."""
    device_id, radio_keys = default_identity(7)
    return Scenario(
        name="env_cycle",
        topology={0: "environmental"},
        config=DeviceConfig(device_id, radio_keys),
        trace=_flat_trace(horizon_s, sample_period_s=600.0),
        horizon_s=horizon_s)


# -- 24 h oracle scenarios ---------------------------------------------------


def oracle_env_power_day() -> Scenario:
    """Env polls plus a daylight-driven light threshold, 24 h."""
    horizon = 86400.0
    device_id, radio_keys = default_identity(8)
    samples = []
    t = 0.0
    while t <= horizon:
        frac = t / horizon
        lux = max(0.0, 9000.0 * math.sin(math.pi * max(
            0.0, (frac - 0.25) / 0.5)) if 0.25 <= frac <= 0.75 else 0.0)
        samples.append(_ambient(
            t, 15.0 + 8.0 * math.sin(2 * math.pi * (frac - 0.3)),
            1011.0, 60.0, 70000.0 - 15000.0 * frac, lux))
        t += 3600.0
    config = DeviceConfig(device_id, radio_keys, metrics={
        (0, ENV_TEMP): MetricConfig(poll_interval_s=600),
        (3, PWR_LIGHT): MetricConfig(
            threshold_enabled=True,
            low=bus.encode_value(MetricKind.LIGHT_LEVEL, 50),
            high=bus.encode_value(MetricKind.LIGHT_LEVEL, 32000)),
    })
    return Scenario(
        name="oracle_env_power_day",
        topology={0: "environmental", 3: "power_light"},
        config=config,
        trace=EnvTrace(samples, []),
        horizon_s=horizon)


def oracle_mic_polling_day() -> Scenario:
    """Microphone polled every 300 s for 24 h: heavy uplink schedule."""
    horizon = 86400.0
    return Scenario(
        name="oracle_mic_polling_day",
        topology={0: "microphone"},
        config=_mic_only_config(9, "polling", poll_s=300),
        trace=_flat_trace(horizon),
        horizon_s=horizon)


def oracle_mixed_day() -> Scenario:
    """All four board types with mixed modes over 24 h."""
    horizon = 86400.0
    device_id, radio_keys = default_identity(10)
    rng = random.Random(10)
    # event instants on the 1 ms grid so coarse integrators can bin them
    sound_times = sorted(round(rng.uniform(0.0, horizon), 3)
                         for _ in range(30))
    trace = _flat_trace(horizon, lux=500.0, sound_times=sound_times,
                        sound_level=90.0)
    trace.events.extend(
        TraceEvent(t, "button", {"id": 1 + (i % 4)})
        for i, t in enumerate(
            sorted(round(rng.uniform(0.0, horizon), 3)
                   for _ in range(20))))
    trace.events.sort(key=lambda e: e.t)
    config = DeviceConfig(device_id, radio_keys, metrics={
        (0, ENV_HUM): MetricConfig(poll_interval_s=1200),
        (1, MIC_LEVEL): MetricConfig(
            threshold_enabled=True, low=0,
            high=bus.encode_value(MetricKind.SOUND_LEVEL, 80.0)),
        (3, PWR_BATT): MetricConfig(poll_interval_s=3600),
        (3, PWR_LIGHT): MetricConfig(
            threshold_enabled=True,
            low=bus.encode_value(MetricKind.LIGHT_LEVEL, 100),
            high=bus.encode_value(MetricKind.LIGHT_LEVEL, 32000)),
    })
    return Scenario(
        name="oracle_mixed_day",
        topology={0: "environmental", 1: "microphone", 2: "button",
                  3: "power_light"},
        config=config,
        trace=trace,
        horizon_s=horizon)


def oracle_scenarios():
    return [oracle_env_power_day(), oracle_mic_polling_day(),
            oracle_mixed_day()]


# -- Serialization -----------------------------------------------------------


def write_trace(trace: EnvTrace, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        entries = [(t, 0, {"t": t, "ambient": sample})
                   for t, sample in trace.samples]
        entries.extend(
            (ev.t, 1, {"t": ev.t,
                       "event": dict(ev.params, kind=ev.kind)})
            for ev in trace.events)
        for _t, _k, obj in sorted(entries, key=lambda e: (e[0], e[1])):
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def config_to_json(config: DeviceConfig) -> dict:
    return {
        "device_id": config.device_id.hex(),
        "radio_keys": config.radio_keys.hex(),
        "spreading_factor": config.spreading_factor,
        "metrics": [
            {"slot": slot, "metric": metric,
             "poll_s": cfg.poll_interval_s,
             "threshold": cfg.threshold_enabled,
             "low": cfg.low, "high": cfg.high}
            for (slot, metric), cfg in sorted(config.metrics.items())
        ],
    }


def config_from_json(data: dict) -> DeviceConfig:
    metrics = {}
    for entry in data.get("metrics", []):
        metrics[(int(entry["slot"]), int(entry["metric"]))] = MetricConfig(
            poll_interval_s=int(entry.get("poll_s", 0)),
            threshold_enabled=bool(entry.get("threshold", False)),
            low=int(entry.get("low", 0)),
            high=int(entry.get("high", 0)))
    return DeviceConfig(
        device_id=bytes.fromhex(data["device_id"]),
        radio_keys=bytes.fromhex(data["radio_keys"]),
        spreading_factor=int(data.get("spreading_factor", 11)),
        metrics=metrics)


def write_scenario(scenario: Scenario, directory: str):
    """Write <name>.scenario.json plus its trace; returns the path."""
    os.makedirs(directory, exist_ok=True)
    trace_name = scenario.name + ".trace.jsonl"
    write_trace(scenario.trace, os.path.join(directory, trace_name))
    doc = {
        "name": scenario.name,
        "topology": {str(slot): kind
                     for slot, kind in sorted(scenario.topology.items())},
        "config": config_to_json(scenario.config),
        "trace_path": trace_name,
        "horizon_s": scenario.horizon_s,
        "seed": scenario.seed,
    }
    path = os.path.join(directory, scenario.name + ".scenario.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_scenario_file(path: str) -> Scenario:
    from .engine import load_trace
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    trace_path = doc["trace_path"]
    if not os.path.isabs(trace_path):
        trace_path = os.path.join(os.path.dirname(path), trace_path)
    return Scenario(
        name=doc.get("name", os.path.basename(path)),
        topology={int(slot): kind
                  for slot, kind in doc["topology"].items()},
        config=config_from_json(doc["config"]),
        trace=load_trace(trace_path),
        horizon_s=float(doc["horizon_s"]),
        seed=int(doc.get("seed", 0)))


def write_example_scenarios(directory: str):
    """The two example use-case scenario files."""
    paths = [write_scenario(classroom_air_quality(), directory),
             write_scenario(playground_noise(), directory)]
    return paths
