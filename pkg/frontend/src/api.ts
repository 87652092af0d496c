/**
 * Typed client for the collector service. Every displayed number on
 * the dashboard comes through here; the fetch function is injectable
 * so tests can intercept the traffic and hold the UI to that.
 */

export type QueryPeriod = "Day" | "Week" | "Month" | "Year" | "All";

export const PERIODS: QueryPeriod[] = ["Day", "Week", "Month", "Year", "All"];

export interface DeviceSummary {
  device_id: string;
  rows: number;
  last_seen_s: number;
  session: string;
  metrics: string[];
}

export interface SeriesResponse {
  device_id: string;
  metric: string;
  period: QueryPeriod;
  series: [number, number][];
}

export interface RunStatus {
  id: string;
  state: string;
  stored: number;
  device_state?: string;
  report?: any;
  uplinks?: number;
  depleted?: boolean;
}

// structural subset of window.fetch, enough for tests to fake
export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: any; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<any>; text(): Promise<string> }>;

export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
  }
}

export class CollectorApi {
  base: string;
  private fetchFn: FetchLike;

  constructor(base: string, fetchFn?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? (globalThis.fetch as unknown as FetchLike);
  }

  private async get(path: string): Promise<any> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return response.json();
  }

  private async post(path: string, body: unknown): Promise<any> {
    const response = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return response.json();
  }

  devices(): Promise<DeviceSummary[]> {
    return this.get("/api/devices");
  }

  metrics(deviceId: string): Promise<any[]> {
    return this.get(`/api/devices/${deviceId}/metrics`);
  }

  series(
    deviceId: string,
    metric: string,
    period: QueryPeriod,
    now?: number,
  ): Promise<SeriesResponse> {
    let path = `/api/devices/${deviceId}/series?metric=${metric}&period=${period}`;
    if (now !== undefined) path += `&now=${now}`;
    return this.get(path);
  }

  exportUrl(): string {
    return this.base + "/api/export.csv";
  }

  liveUrl(): string {
    return this.base.replace(/^http/, "ws") + "/api/live";
  }

  startRun(doc: unknown): Promise<{ id: string; state: string }> {
    return this.post("/api/sim/runs", doc);
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.get(`/api/sim/runs/${runId}/status`);
  }

  /** One configurator protocol line through the run proxy. */
  async configure(runId: string, line: string): Promise<string> {
    const doc = await this.post(`/api/sim/runs/${runId}/configure`, { line });
    return doc.reply;
  }
}
