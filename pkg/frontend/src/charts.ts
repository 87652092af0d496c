/**
 * Hand-rolled canvas line charts, one per metric kind. No chart
 * library; the draw routine reports every value it put on screen so
 * tests can hold the pixels to the API responses.
 */

import { colorFor } from "./colors.js";
import type { QueryPeriod } from "./api.js";

/** The slice of CanvasRenderingContext2D the charts actually use. */
export interface Ctx2D {
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface ChartSpec {
  metric: string;
  unit: string;
  devices: { device_id: string; color: string }[];
  period: QueryPeriod;
  live: boolean;
}

export interface DrawnValue {
  device_id: string;
  t: number;
  v: number;
}

export interface DrawResult {
  spec: ChartSpec;
  drawn: DrawnValue[];
  /** every number printed as text, for traceability checks */
  textValues: number[];
}

const PAD = { left: 56, right: 12, top: 10, bottom: 22 };

/** One spec per metric kind present, devices in stable order. */
export function chartSpecs(
  metricsByDevice: Map<string, string[]>,
  unitOf: (metric: string) => string,
  period: QueryPeriod,
  live: boolean,
): ChartSpec[] {
  const metrics = new Set<string>();
  for (const list of metricsByDevice.values()) {
    for (const m of list) metrics.add(m);
  }
  return [...metrics].sort().map((metric) => ({
    metric,
    unit: unitOf(metric),
    devices: [...metricsByDevice.keys()]
      .filter((d) => metricsByDevice.get(d)!.includes(metric))
      .sort()
      .map((device_id) => ({ device_id, color: colorFor(device_id) })),
    period,
    live,
  }));
}

function range(values: number[]): [number, number] {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    // flat series still needs a band to draw in
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

export function drawChart(
  ctx: Ctx2D,
  spec: ChartSpec,
  seriesOf: (deviceId: string) => [number, number][],
  width: number,
  height: number,
): DrawResult {
  ctx.clearRect(0, 0, width, height);
  const plotW = width - PAD.left - PAD.right;
  const plotH = height - PAD.top - PAD.bottom;
  ctx.strokeStyle = "#d4d4d8";
  ctx.lineWidth = 1;
  ctx.strokeRect(PAD.left, PAD.top, plotW, plotH);

  const drawn: DrawnValue[] = [];
  const textValues: number[] = [];
  const all: { device_id: string; color: string; pts: [number, number][] }[] = [];
  for (const dev of spec.devices) {
    const pts = seriesOf(dev.device_id);
    if (pts.length > 0) all.push({ ...dev, pts });
  }
  if (all.length === 0) {
    ctx.fillStyle = "#71717a";
    ctx.font = "12px sans-serif";
    ctx.fillText("no data in this period", PAD.left + 8, PAD.top + 20);
    return { spec, drawn, textValues };
  }

  const ts = all.flatMap((s) => s.pts.map((p) => p[0]));
  const vs = all.flatMap((s) => s.pts.map((p) => p[1]));
  const [t0, t1] = range(ts);
  const [v0, v1] = range(vs);
  const x = (t: number) => PAD.left + ((t - t0) / (t1 - t0)) * plotW;
  const y = (v: number) => PAD.top + plotH - ((v - v0) / (v1 - v0)) * plotH;

  // axis labels: the data's own extremes, nothing invented
  ctx.fillStyle = "#52525b";
  ctx.font = "11px sans-serif";
  const vLo = Math.min(...vs);
  const vHi = Math.max(...vs);
  ctx.fillText(`${vHi} ${spec.unit}`, 4, PAD.top + 10);
  ctx.fillText(`${vLo} ${spec.unit}`, 4, PAD.top + plotH);
  textValues.push(vHi, vLo);
  const tLo = Math.min(...ts);
  const tHi = Math.max(...ts);
  ctx.fillText(`t=${tLo}s`, PAD.left, height - 6);
  ctx.fillText(`t=${tHi}s`, PAD.left + plotW - 40, height - 6);
  textValues.push(tLo, tHi);

  for (const s of all) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.pts.forEach(([t, v], i) => {
      if (i === 0) ctx.moveTo(x(t), y(v));
      else ctx.lineTo(x(t), y(v));
    });
    ctx.stroke();
    ctx.fillStyle = s.color;
    for (const [t, v] of s.pts) {
      ctx.beginPath();
      ctx.arc(x(t), y(v), 2.5, 0, Math.PI * 2);
      ctx.fill();
      drawn.push({ device_id: s.device_id, t, v });
    }
    // latest reading, printed next to the legend
    const [lt, lv] = s.pts[s.pts.length - 1];
    ctx.fillText(`${s.device_id.slice(-4)}: ${lv} ${spec.unit}`, x(lt) > width / 2 ? PAD.left + 4 : PAD.left + plotW - 120, PAD.top + 14 + 14 * all.indexOf(s));
    textValues.push(lv);
  }
  return { spec, drawn, textValues };
}
