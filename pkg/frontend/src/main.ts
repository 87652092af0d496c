/**
 * Dashboard entry point. Single page over the collector's HTTP and
 * WebSocket APIs; charts redraw from the local store, the store only
 * ever learns values from API responses.
 */

import { CollectorApi, PERIODS, QueryPeriod } from "./api.js";
import { SeriesStore, LiveRow } from "./store.js";
import { ChartSpec, Ctx2D, chartSpecs, drawChart } from "./charts.js";
import {
  FieldModel,
  errorMessage,
  micSlider,
  modelFromList,
  saveSequence,
  validatePoll,
  validateThreshold,
} from "./config-form.js";
import { boardBreakdown, boardNames, comparisonRows, lifetimeLabel } from "./report.js";
import { colorFor } from "./colors.js";

const api = new CollectorApi(window.location.origin);
const store = new SeriesStore();

let period: QueryPeriod = "Day";
let live = false;
let socket: WebSocket | null = null;
const unitByMetric = new Map<string, string>();
const pending: LiveRow[] = [];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function banner(message: string): void {
  const host = document.getElementById("banner")!;
  host.textContent = message;
  host.style.display = message ? "block" : "none";
}

async function refreshSeries(): Promise<void> {
  const devices = await api.devices();
  for (const device of devices) {
    for (const metric of device.metrics) {
      const doc = await api.series(device.device_id, metric, period);
      store.addSeries(device.device_id, metric, doc.series);
    }
    // unit names ride on the metrics endpoint
    for (const row of await api.metrics(device.device_id)) {
      unitByMetric.set(row.metric, row.unit);
    }
  }
}

function redraw(): void {
  const host = document.getElementById("charts")!;
  host.textContent = "";
  const metricsByDevice = new Map<string, string[]>();
  for (const device of store.devices()) {
    metricsByDevice.set(device, store.metricsOf(device));
  }
  const specs = chartSpecs(
    metricsByDevice,
    (m) => unitByMetric.get(m) ?? "",
    period,
    live,
  );
  for (const spec of specs) {
    host.appendChild(renderChart(spec));
  }
  if (specs.length === 0) {
    host.appendChild(el("p", "placeholder", "no measurements yet"));
  }
}

function renderChart(spec: ChartSpec): HTMLElement {
  const box = el("div", "chart");
  box.appendChild(el("h3", undefined, spec.metric));
  const legend = el("div", "legend");
  for (const dev of spec.devices) {
    const chip = el("span", "chip", dev.device_id);
    chip.style.borderColor = dev.color;
    chip.style.color = dev.color;
    legend.appendChild(chip);
  }
  box.appendChild(legend);
  const canvas = el("canvas");
  canvas.width = 640;
  canvas.height = 240;
  box.appendChild(canvas);
  // the structural Ctx2D is a strict subset of the real 2D context
  const ctx = canvas.getContext("2d") as unknown as Ctx2D | null;
  if (ctx) {
    drawChart(
      ctx,
      spec,
      (device) => store.windowed(device, spec.metric, period),
      canvas.width,
      canvas.height,
    );
  }
  return box;
}

function setupToolbar(): void {
  const select = document.getElementById("period") as HTMLSelectElement;
  for (const p of PERIODS) {
    const option = el("option", undefined, p);
    option.value = p;
    select.appendChild(option);
  }
  select.value = period;
  select.onchange = async () => {
    period = select.value as QueryPeriod;
    try {
      await refreshSeries(); // widening re-queries; the store only grows
      banner("");
    } catch (err) {
      banner(`collector unreachable: ${err}`);
    }
    redraw();
  };

  (document.getElementById("csv") as HTMLAnchorElement).href = api.exportUrl();

  const toggle = document.getElementById("live") as HTMLInputElement;
  toggle.onchange = () => {
    live = toggle.checked;
    if (live) openLive();
    else closeLive();
  };
}

function openLive(): void {
  socket = new WebSocket(api.liveUrl());
  socket.onmessage = (event) => {
    // queued and applied in order; one redraw per message batch
    pending.push(JSON.parse(event.data) as LiveRow);
    while (pending.length > 0) store.addRow(pending.shift()!);
    redraw();
  };
  socket.onerror = () => banner("live feed error");
}

function closeLive(): void {
  socket?.close();
  socket = null;
}

// -- configuration panel ----------------------------------------------------

let fields: FieldModel[] = [];

async function discover(runId: string): Promise<void> {
  const reply = await api.configure(runId, "LIST");
  if (!reply.startsWith("OK ")) throw new Error(reply);
  fields = modelFromList(JSON.parse(reply.slice(3)));
  renderForm(runId);
}

function renderForm(runId: string): void {
  const host = document.getElementById("config-fields")!;
  host.textContent = "";
  for (const field of fields) {
    const row = el("div", "field");
    row.appendChild(
      el("label", undefined, `slot ${field.slot} ${field.kind} (${field.unit})`),
    );

    if (field.pollAllowed) {
      const poll = el("input") as HTMLInputElement;
      poll.type = "number";
      poll.value = String(field.pollS);
      poll.onchange = () => {
        const v = Number(poll.value);
        field.error = validatePoll(field, v);
        if (field.error === null) {
          field.pollS = v;
          field.dirty = true;
        }
        showError(row, field.error);
      };
      row.appendChild(el("span", "hint", "poll s"));
      row.appendChild(poll);
    } else {
      row.appendChild(el("span", "hint", "interrupt driven"));
    }

    const threshold = el("input") as HTMLInputElement;
    threshold.type = "checkbox";
    threshold.checked = field.thresholdOn;
    threshold.onchange = () => {
      field.thresholdOn = threshold.checked;
      field.dirty = true;
      field.error = field.thresholdOn
        ? validateThreshold(field, field.low, field.high)
        : null;
      showError(row, field.error);
      renderForm(runId); // slider appears or disappears
    };
    row.appendChild(el("span", "hint", "threshold"));
    row.appendChild(threshold);

    if (field.isMicLevel && field.thresholdOn) {
      const sliderModel = micSlider(field);
      const slider = el("input") as HTMLInputElement;
      slider.type = "range";
      slider.min = String(sliderModel.min);
      slider.max = String(sliderModel.max);
      slider.value = String(sliderModel.value);
      const label = el("span", "hint", sliderModel.label);
      slider.oninput = () => {
        const db = Number(slider.value);
        field.high = Math.round(db / field.scale);
        field.dirty = true;
        field.error = validateThreshold(field, field.low, field.high);
        label.textContent = micSlider(field).label;
        showError(row, field.error);
      };
      row.appendChild(slider);
      row.appendChild(label);
    } else if (field.thresholdOn) {
      for (const bound of ["low", "high"] as const) {
        const input = el("input") as HTMLInputElement;
        input.type = "number";
        input.value = String(field[bound]);
        input.onchange = () => {
          field[bound] = Number(input.value);
          field.dirty = true;
          field.error = validateThreshold(field, field.low, field.high);
          showError(row, field.error);
        };
        row.appendChild(el("span", "hint", bound));
        row.appendChild(input);
      }
    }
    host.appendChild(row);
  }
}

function showError(row: HTMLElement, message: string | null): void {
  let node = row.querySelector(".error") as HTMLElement | null;
  if (!node) {
    node = el("span", "error");
    row.appendChild(node);
  }
  node.textContent = message ?? "";
}

async function saveAll(runId: string): Promise<void> {
  for (const line of saveSequence(fields)) {
    const reply = await api.configure(runId, line);
    if (reply.startsWith("ERR ")) {
      banner(errorMessage(reply) ?? reply);
      return;
    }
  }
  await api.configure(runId, "DETACH");
  banner("");
  pollRunUntilDone(runId);
}

async function pollRunUntilDone(runId: string): Promise<void> {
  const status = await api.runStatus(runId);
  const state = document.getElementById("run-state")!;
  state.textContent = `run ${status.id}: ${status.state}` +
    (status.device_state ? `, device ${status.device_state}` : "");
  if (status.state === "completed" || status.state === "failed") {
    renderReport(status.report);
    await refreshSeries().catch(() => undefined);
    redraw();
    return;
  }
  setTimeout(() => pollRunUntilDone(runId), 500);
}

// -- power report -----------------------------------------------------------

function renderReport(report: any): void {
  const host = document.getElementById("report")!;
  host.textContent = "";
  if (!report) {
    host.appendChild(el("p", "placeholder", "no report yet"));
    return;
  }
  host.appendChild(el("h3", undefined, "power report"));
  for (const board of boardNames(report)) {
    const row = el("div", "board");
    row.appendChild(el("strong", undefined, board));
    const bar = el("div", "bar");
    for (const segment of boardBreakdown(report, board)) {
      const span = el(
        "span",
        "segment",
        `${segment.label} ${segment.chargeUah.toFixed(2)} uAh`,
      );
      span.style.flexGrow = String(Math.max(segment.fraction, 0.02));
      bar.appendChild(span);
    }
    row.appendChild(bar);
    host.appendChild(row);
  }
  host.appendChild(el("p", undefined, lifetimeLabel(report)));
  if (report.comparison) {
    const table = el("table");
    for (const row of comparisonRows(report.comparison)) {
      const tr = el("tr");
      tr.appendChild(el("td", undefined, row.winner ? `${row.name} *` : row.name));
      tr.appendChild(el("td", undefined, `${row.chargeUah.toFixed(2)} uAh`));
      tr.appendChild(el("td", undefined, `${row.lifetimeHours.toFixed(1)} h`));
      table.appendChild(tr);
    }
    host.appendChild(table);
  }
}

// -- boot -------------------------------------------------------------------

async function boot(): Promise<void> {
  setupToolbar();
  document.getElementById("discover")!.onclick = () => {
    const runId = (document.getElementById("run-id") as HTMLInputElement).value;
    discover(runId).catch((err) => banner(`discovery failed: ${err}`));
  };
  document.getElementById("save")!.onclick = () => {
    const runId = (document.getElementById("run-id") as HTMLInputElement).value;
    saveAll(runId).catch((err) => banner(`save failed: ${err}`));
  };
  try {
    await refreshSeries();
  } catch (err) {
    banner(`collector unreachable: ${err}`);
  }
  redraw();
}

// devices keep their chart color everywhere, including the device list
export { colorFor };

boot();
