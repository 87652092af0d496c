"""Energy accounting: per-board current timelines, battery, reports.

Every board contributes a piecewise-constant current trace built from
a base level (sleep or idle) interrupted by labeled episodes (an
uplink, a heater pulse, an LED flash).  Episodes replace the base for
their duration, so the charge attributed to an episode label is
exactly current times duration.  Charge is tracked in microcoulombs
internally and reported in uAh and mJ at a 3.3 V supply.
"""

import bisect
from dataclasses import dataclass, field
from typing import Optional

SUPPLY_V = 3.3
UC_PER_UAH = 3600.0

BATTERY_CAPACITY_UAH = 500000.0  # 500 mAh LiPo

# Solar harvest surrogate: linear in lux with a converter cap.
HARVEST_EFFICIENCY = 0.8
HARVEST_UA_PER_LUX = 0.1
HARVEST_CAP_UA = 5000.0  # 5 mA equivalent, cap applied before efficiency


class RangeOutsideLedger(ValueError):
    """Integration range escapes the ledger span (or is inverted)."""


@dataclass(frozen=True)
class PowerProfile:
    """Current profile of one board: active episode, idle, deep sleep.

    Currents are uA at 3.3 V, durations in ms.  ``sleep_ua`` is None
    for the environmental board, whose controller stays powered; it
    never drops below its inactive level.
    """

    name: str
    active_ua: float
    active_ms: float
    inactive_ua: float
    sleep_ua: Optional[float]

    @property
    def active_s(self) -> float:
        return self.active_ms / 1000.0

    @property
    def floor_ua(self) -> float:
        """Lowest reachable current."""
        return self.inactive_ua if self.sleep_ua is None else self.sleep_ua


def table1_profiles():
    """Factory for the default per-board profiles."""
    return {
        "motherboard": PowerProfile("motherboard", 25400.0, 7000.0, 55.0, 55.0),
        "environmental": PowerProfile(
            "environmental", 8430.0, 3520.0, 1060.0, None),
        "microphone": PowerProfile("microphone", 4000.0, 500.0, 25.0, 1.0),
        "button": PowerProfile("button", 7300.0, 2000.0, 0.33, 0.33),
        "power_light": PowerProfile("power_light", 4000.0, 28.0, 3.2, 3.2),
    }


TABLE1 = table1_profiles()

# Environmental board fine-grained sub-states (default in simulation;
# the aggregate row above is the coarse alternative).
ENV_HEATER_UA = 14000.0
ENV_HEATER_S = 1.71
ENV_MEASURE_UA = 1570.0
ENV_MEASURE_S = 1.85
ENV_CONTROLLER_UA = 1060.0
ENV_SENSOR_SLEEP_UA = 1.0
ENV_IDLE_UA = ENV_CONTROLLER_UA + ENV_SENSOR_SLEEP_UA


class BoardTimeline:
    """Builder for one board's current trace.

    The engine appends base-level changes and episodes in event order;
    :meth:`render` flattens them into the non-overlapping, contiguous
    interval list the ledger stores.  Overlapping episode requests are
    serialized (a new episode starts no earlier than the previous one
    ended); a button press instead extends the running episode via
    :meth:`extend_last`.
    """

    def __init__(self, name: str, start: float = 0.0,
                 base_ua: float = 0.0, base_label: str = "sleep"):
        self.name = name
        self.start = start
        self._base = [(start, base_ua, base_label)]
        self._episodes = []  # (t0, t1, ua, label), chronological
        self._episode_ends = []  # parallel t1 list for bisection
        self.busy_until = start

    def set_base(self, t: float, ua: float, label: str):
        """Base current from ``t`` onward (the between-episode level)."""
        if t < self._base[-1][0]:
            raise ValueError("base changes must be appended in time order")
        if t == self._base[-1][0]:
            self._base[-1] = (t, ua, label)
        else:
            self._base.append((t, ua, label))

    def add_episode(self, t: float, duration_s: float, ua: float,
                    label: str):
        """Labeled episode; returns the (start, end) actually booked.

        Starts are clamped to the end of any episode still running, so
        per-board episodes never overlap.
        """
        if duration_s < 0:
            raise ValueError("episode duration must be >= 0")
        t0 = max(t, self.busy_until, self.start)
        t1 = t0 + duration_s
        self._episodes.append((t0, t1, ua, label))
        self._episode_ends.append(t1)
        self.busy_until = t1
        return t0, t1

    def extend_last(self, new_end: float):
        """Stretch the most recent episode (coalesced button presses)."""
        if not self._episodes:
            raise ValueError("no episode to extend")
        t0, t1, ua, label = self._episodes[-1]
        if new_end > t1:
            self._episodes[-1] = (t0, new_end, ua, label)
            self._episode_ends[-1] = new_end
            self.busy_until = max(self.busy_until, new_end)

    def truncate(self, t: float, label: str = "depleted"):
        """Cut all activity at ``t`` and drop to zero current (battery
        depletion halt)."""
        keep = bisect.bisect_right(self._episode_ends, t)
        episodes = self._episodes[:keep + 1]
        clipped = []
        ends = []
        for t0, t1, ua, lab in episodes:
            if t0 >= t:
                continue
            t1 = min(t1, t)
            clipped.append((t0, t1, ua, lab))
            ends.append(t1)
        self._episodes = clipped
        self._episode_ends = ends
        self._base = [seg for seg in self._base if seg[0] < t]
        self.busy_until = t
        self.set_base(t, 0.0, label)

    @property
    def last_episode(self):
        return self._episodes[-1] if self._episodes else None

    def _base_rows(self, a: float, b: float):
        """Base-level rows covering [a, b)."""
        rows = []
        for i, (t, ua, label) in enumerate(self._base):
            t_next = (self._base[i + 1][0]
                      if i + 1 < len(self._base) else float("inf"))
            lo, hi = max(a, t), min(b, t_next)
            if hi > lo:
                rows.append((lo, hi, ua, label))
        return rows

    def rows_between(self, a: float, b: float):
        """Flattened (t0, t1, ua, label) rows covering [a, b).

        Episodes clipped to the window; base fills the gaps.
        """
        if b <= a:
            return []
        rows = []
        cursor = a
        first = bisect.bisect_right(self._episode_ends, a)
        for t0, t1, ua, label in self._episodes[first:]:
            if t0 >= b:
                break
            e0, e1 = max(t0, cursor), min(t1, b)
            rows.extend(self._base_rows(cursor, e0))
            if e1 > e0:
                rows.append((e0, e1, ua, label))
            cursor = max(cursor, e1)
            if cursor >= b:
                break
        rows.extend(self._base_rows(cursor, b))
        return rows

    def render(self, horizon: float):
        return self.rows_between(self.start, horizon)

    def charge_uc_between(self, a: float, b: float) -> float:
        return sum((t1 - t0) * ua for t0, t1, ua, _ in self.rows_between(a, b))


class EnergyLedger:
    """Immutable per-board interval lists over a common span."""

    def __init__(self, boards, span):
        self.boards = boards  # name -> [(t0, t1, ua, label)]
        self.span = span  # (t0, t1)

    @classmethod
    def from_timelines(cls, timelines, horizon: float):
        start = min((tl.start for tl in timelines), default=0.0)
        boards = {tl.name: tl.render(horizon) for tl in timelines}
        return cls(boards, (start, horizon))

    def _check_range(self, t0: float, t1: float):
        if t0 > t1:
            raise RangeOutsideLedger(
                "inverted range: {!r} > {!r}".format(t0, t1))
        lo, hi = self.span
        if t0 < lo - 1e-9 or t1 > hi + 1e-9:
            raise RangeOutsideLedger(
                "[{!r}, {!r}] outside ledger span [{!r}, {!r}]".format(
                    t0, t1, lo, hi))

    def _charge_uc(self, rows, t0, t1):
        total = 0.0
        for a, b, ua, _label in rows:
            lo, hi = max(a, t0), min(b, t1)
            if hi > lo:
                total += (hi - lo) * ua
        return total

    def integrate(self, t0: float, t1: float):
        """Charge (uAh) and energy (mJ) per board and total on [t0, t1]."""
        self._check_range(t0, t1)
        per_board = {}
        total_uc = 0.0
        for name, rows in self.boards.items():
            uc = self._charge_uc(rows, t0, t1)
            total_uc += uc
            per_board[name] = {
                "charge_uah": uc / UC_PER_UAH,
                "energy_mj": uc * SUPPLY_V / 1000.0,
            }
        return {
            "boards": per_board,
            "total": {
                "charge_uah": total_uc / UC_PER_UAH,
                "energy_mj": total_uc * SUPPLY_V / 1000.0,
            },
        }

    def breakdown(self):
        """Per-board, per-label {charge_uah, energy_mj, seconds}."""
        out = {}
        for name, rows in self.boards.items():
            by_label = {}
            for t0, t1, ua, label in rows:
                acc = by_label.setdefault(
                    label, {"charge_uah": 0.0, "energy_mj": 0.0,
                            "seconds": 0.0})
                uc = (t1 - t0) * ua
                acc["charge_uah"] += uc / UC_PER_UAH
                acc["energy_mj"] += uc * SUPPLY_V / 1000.0
                acc["seconds"] += t1 - t0
            out[name] = by_label
        return out

    def to_dict(self):
        return {
            "span_s": list(self.span),
            "boards": {
                name: [[t0, t1, ua, label] for t0, t1, ua, label in rows]
                for name, rows in self.boards.items()
            },
        }

    @classmethod
    def from_dict(cls, data):
        boards = {
            name: [(r[0], r[1], r[2], r[3]) for r in rows]
            for name, rows in data["boards"].items()
        }
        return cls(boards, tuple(data["span_s"]))


def merged_current_steps(ledger_rows_by_board, t0: float, t1: float):
    """Total-current step function over [t0, t1) across boards.

    Returns [(t_start, t_end, total_ua)] with strictly increasing
    boundaries; used for battery sweeps and depletion search.
    """
    cuts = {t0, t1}
    for rows in ledger_rows_by_board.values():
        for a, b, _ua, _label in rows:
            if t0 < a < t1:
                cuts.add(a)
            if t0 < b < t1:
                cuts.add(b)
    edges = sorted(cuts)
    flat = []
    for rows in ledger_rows_by_board.values():
        flat.append((sorted(rows), [r[0] for r in sorted(rows)]))
    steps = []
    for a, b in zip(edges, edges[1:]):
        mid = (a + b) / 2.0
        total = 0.0
        for rows, starts in flat:
            i = bisect.bisect_right(starts, mid) - 1
            if i >= 0 and rows[i][0] <= mid < rows[i][1]:
                total += rows[i][2]
        steps.append((a, b, total))
    return steps


# -- Battery and harvest -----------------------------------------------------


def harvest(lux: float, dt: float) -> float:
    """Charge added in uAh by the solar path over ``dt`` seconds.

    Linear surrogate: 0.1 uA per lux, capped at the 5 mA converter
    limit, then scaled by the 80 % harvester efficiency.
    """
    if lux < 0:
        raise ValueError("lux must be >= 0")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    ua = min(HARVEST_UA_PER_LUX * lux, HARVEST_CAP_UA) * HARVEST_EFFICIENCY
    return ua * dt / 3600.0


@dataclass
class BatteryState:
    """Charge store clamped to [0, capacity]; sticky depleted flag."""

    capacity_uah: float = BATTERY_CAPACITY_UAH
    charge_uah: float = BATTERY_CAPACITY_UAH
    depleted: bool = False
    harvested_uah: float = 0.0

    @property
    def soc(self) -> float:
        return self.charge_uah / self.capacity_uah

    def account(self, drawn_uah: float, harvested_uah: float = 0.0):
        """Apply one accounting step; returns the new charge."""
        self.harvested_uah += harvested_uah
        level = self.charge_uah - drawn_uah + harvested_uah
        self.charge_uah = min(max(level, 0.0), self.capacity_uah)
        if self.charge_uah <= 0.0:
            self.depleted = True
        return self.charge_uah


# -- Lifetime estimation -----------------------------------------------------


@dataclass(frozen=True)
class LoadTerm:
    """One recurring draw: continuous when period_s is 0."""

    name: str
    ua: float
    duration_s: float = 0.0
    period_s: float = 0.0

    @property
    def average_ua(self) -> float:
        if self.period_s <= 0.0:
            return self.ua
        return self.ua * self.duration_s / self.period_s


@dataclass(frozen=True)
class LifetimeResult:
    outcome: str  # "depletes" or "never_depletes"
    hours: Optional[float]
    average_draw_ua: float


NEVER_DEPLETES = "never_depletes"
DEPLETES = "depletes"

LIFETIME_STEP_S = 60.0
LIFETIME_MAX_H = 20.0 * 365.0 * 24.0


def lifetime_estimate(terms, battery: Optional[BatteryState] = None,
                      lux_fn=None, step_s: float = LIFETIME_STEP_S,
                      max_h: float = LIFETIME_MAX_H) -> LifetimeResult:
    """Simulated hours until the battery depletes under a steady load.

    ``terms`` is an iterable of LoadTerm; ``lux_fn`` (t -> lux) enables
    harvesting.  The battery is stepped at ``step_s`` and the final
    step is interpolated, so a pure quotient case lands on the exact
    value.  A run that shows no net loss over a 24 h window (or that
    outlives ``max_h``) reports the never_depletes outcome.
    """
    avg_ua = sum(t.average_ua for t in terms)
    battery = battery or BatteryState()
    if battery.charge_uah <= 0.0:
        return LifetimeResult(DEPLETES, 0.0, avg_ua)
    if lux_fn is None and avg_ua <= 0.0:
        return LifetimeResult(NEVER_DEPLETES, None, avg_ua)

    charge = battery.charge_uah
    capacity = battery.capacity_uah
    t = 0.0
    window_start_charge = charge
    window_next = 86400.0
    max_s = max_h * 3600.0
    while t < max_s:
        drawn = avg_ua * step_s / 3600.0
        gained = harvest(lux_fn(t), step_s) if lux_fn is not None else 0.0
        level = charge - drawn + gained
        if level <= 0.0:
            # interpolate the depletion instant inside this step
            frac = charge / (charge - level)
            return LifetimeResult(
                DEPLETES, (t + frac * step_s) / 3600.0, avg_ua)
        charge = min(level, capacity)
        t += step_s
        if t >= window_next:
            if charge >= window_start_charge - 1e-9:
                return LifetimeResult(NEVER_DEPLETES, None, avg_ua)
            window_start_charge = charge
            window_next += 86400.0
    return LifetimeResult(NEVER_DEPLETES, None, avg_ua)


# -- Reports -----------------------------------------------------------------

REPORT_VERSION = 1


def power_report(ledger: EnergyLedger, config=None,
                 battery: Optional[BatteryState] = None,
                 comparison=None):
    """Structured post-run energy report (schema report_version 1).

    Per-board and per-label charge/energy, average currents, and a
    battery-based lifetime projection when a battery is supplied.
    ``comparison`` (from :func:`build_comparison`) is embedded as-is.
    """
    t0, t1 = ledger.span
    span_s = t1 - t0
    totals = ledger.integrate(t0, t1)
    labels = ledger.breakdown()
    boards = {}
    for name, sums in totals["boards"].items():
        avg = (sums["charge_uah"] * UC_PER_UAH / span_s
               if span_s > 0 else 0.0)
        boards[name] = {
            "charge_uah": sums["charge_uah"],
            "energy_mj": sums["energy_mj"],
            "average_current_ua": avg,
            "by_label": labels[name],
        }
    total_avg = (totals["total"]["charge_uah"] * UC_PER_UAH / span_s
                 if span_s > 0 else 0.0)
    report = {
        "report_version": REPORT_VERSION,
        "span_s": [t0, t1],
        "boards": boards,
        "total": {
            "charge_uah": totals["total"]["charge_uah"],
            "energy_mj": totals["total"]["energy_mj"],
            "average_current_ua": total_avg,
        },
    }
    if config is not None:
        report["config"] = config
    if battery is not None:
        avg_harvest_ua = (battery.harvested_uah * UC_PER_UAH / span_s
                          if span_s > 0 else 0.0)
        net_ua = total_avg - avg_harvest_ua
        if net_ua > 0 and battery.charge_uah > 0:
            outcome = DEPLETES
            hours = battery.charge_uah / net_ua
        elif battery.charge_uah <= 0:
            outcome, hours = DEPLETES, 0.0
        else:
            outcome, hours = NEVER_DEPLETES, None
        report["battery"] = {
            "capacity_uah": battery.capacity_uah,
            "charge_uah": battery.charge_uah,
            "harvested_uah": battery.harvested_uah,
            "depleted": battery.depleted,
        }
        report["projection"] = {"outcome": outcome, "hours": hours}
    if comparison is not None:
        report["comparison"] = comparison
    return report


def build_comparison(named_reports):
    """Comparison stanza: runs ordered by total charge, least first.

    ``named_reports`` maps a mode name (e.g. "polling", "wos") to its
    power report.  The winner is the cheapest run.
    """
    runs = []
    for name, rpt in named_reports.items():
        entry = {
            "name": name,
            "total_charge_uah": rpt["total"]["charge_uah"],
            "average_current_ua": rpt["total"]["average_current_ua"],
        }
        projection = rpt.get("projection")
        if projection is not None:
            entry["lifetime_hours"] = projection["hours"]
            entry["outcome"] = projection["outcome"]
        runs.append(entry)
    runs.sort(key=lambda e: e["total_charge_uah"])
    return {
        "runs": runs,
        "ordering": [e["name"] for e in runs],
        "winner": runs[0]["name"] if runs else None,
    }


def render_text(report) -> str:
    """Human-readable table for terminals and logs."""
    lines = []
    t0, t1 = report["span_s"]
    lines.append("Power report (span {:.3f} s)".format(t1 - t0))
    lines.append("{:<14} {:>14} {:>12} {:>12}".format(
        "board", "charge (uAh)", "energy (mJ)", "avg (uA)"))
    for name in sorted(report["boards"]):
        b = report["boards"][name]
        lines.append("{:<14} {:>14.4f} {:>12.3f} {:>12.2f}".format(
            name, b["charge_uah"], b["energy_mj"], b["average_current_ua"]))
        for label in sorted(b["by_label"]):
            sums = b["by_label"][label]
            lines.append("  - {:<20} {:>12.4f} uAh over {:.3f} s".format(
                label, sums["charge_uah"], sums["seconds"]))
    total = report["total"]
    lines.append("{:<14} {:>14.4f} {:>12.3f} {:>12.2f}".format(
        "total", total["charge_uah"], total["energy_mj"],
        total["average_current_ua"]))
    projection = report.get("projection")
    if projection is not None:
        if projection["outcome"] == NEVER_DEPLETES:
            lines.append("projected lifetime: never depletes "
                         "(harvest covers the draw)")
        else:
            lines.append("projected lifetime: {:.1f} h".format(
                projection["hours"]))
    comparison = report.get("comparison")
    if comparison is not None:
        lines.append("comparison (cheapest first):")
        for run in comparison["runs"]:
            lines.append("  {:<12} {:>12.4f} uAh".format(
                run["name"], run["total_charge_uah"]))
    return "\n".join(lines)
