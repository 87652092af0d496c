/**
 * Client-side series cache. Points are merged by timestamp and never
 * discarded, so re-queries and live pushes only ever add; widening
 * the period can therefore never shrink what a chart has to show.
 */

import type { QueryPeriod } from "./api.js";

export interface LiveRow {
  device_id: string;
  slot: number;
  metric: string;
  unit: string;
  timestamp_s: number;
  value: number;
}

// mirror of the server's windows, seconds (All = no window)
export const PERIOD_SECONDS: Record<QueryPeriod, number | null> = {
  Day: 86400,
  Week: 7 * 86400,
  Month: 30 * 86400,
  Year: 365 * 86400,
  All: null,
};

const key = (deviceId: string, metric: string) => `${deviceId}|${metric}`;

export class SeriesStore {
  private points = new Map<string, Map<number, number>>();

  private bucket(deviceId: string, metric: string): Map<number, number> {
    const k = key(deviceId, metric);
    let m = this.points.get(k);
    if (!m) {
      m = new Map();
      this.points.set(k, m);
    }
    return m;
  }

  addSeries(deviceId: string, metric: string, series: [number, number][]): void {
    const m = this.bucket(deviceId, metric);
    for (const [t, v] of series) m.set(t, v);
  }

  addRow(row: LiveRow): void {
    this.bucket(row.device_id, row.metric).set(row.timestamp_s, row.value);
  }

  /** All merged points, time-ascending. */
  series(deviceId: string, metric: string): [number, number][] {
    const m = this.points.get(key(deviceId, metric));
    if (!m) return [];
    return [...m.entries()].sort((a, b) => a[0] - b[0]);
  }

  /**
   * Points inside the selected period, anchored like the server at
   * the newest sample unless a now is given.
   */
  windowed(
    deviceId: string,
    metric: string,
    period: QueryPeriod,
    now?: number,
  ): [number, number][] {
    const all = this.series(deviceId, metric);
    const span = PERIOD_SECONDS[period];
    if (span === null || all.length === 0) return all;
    const anchor = now ?? all[all.length - 1][0];
    return all.filter(([t]) => t >= anchor - span && t <= anchor);
  }

  metricsOf(deviceId: string): string[] {
    const found = new Set<string>();
    for (const k of this.points.keys()) {
      const [device, metric] = k.split("|");
      if (device === deviceId && this.points.get(k)!.size > 0) found.add(metric);
    }
    return [...found].sort();
  }

  devices(): string[] {
    const found = new Set<string>();
    for (const k of this.points.keys()) found.add(k.split("|")[0]);
    return [...found].sort();
  }
}
