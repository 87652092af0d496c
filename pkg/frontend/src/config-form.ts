/**
 * View model for the device configuration panel. Discovery (LIST)
 * drives the form; validation here is a strict subset of what the
 * device enforces, so anything the form lets through will be
 * accepted on SAVE.
 */

import { WOS_MAX, WOS_MIN, sliderLabel } from "./wos.js";

/** Metric document as LIST returns it. */
export interface MetricDoc {
  slot: number;
  metric: number;
  kind: string;
  unit: string;
  scale: number;
  poll_s: number;
  threshold: boolean;
  low: number;
  high: number;
}

export interface BoardDoc {
  slot: number;
  type: string;
  fw: string;
  metrics: MetricDoc[];
}

export interface FieldModel {
  slot: number;
  metric: number;
  kind: string;
  unit: string;
  scale: number;
  pollS: number;
  thresholdOn: boolean;
  low: number; // scaled wire values, like the protocol
  high: number;
  pollAllowed: boolean;
  thresholdAllowed: boolean;
  isMicLevel: boolean;
  dirty: boolean;
  error: string | null;
}

export const MIN_POLL_S = 10;

export function modelFromList(doc: { boards: BoardDoc[] }): FieldModel[] {
  const fields: FieldModel[] = [];
  for (const board of doc.boards) {
    for (const m of board.metrics) {
      const isButton = m.kind === "BUTTON_PRESS";
      fields.push({
        slot: m.slot,
        metric: m.metric,
        kind: m.kind,
        unit: m.unit,
        scale: m.scale,
        pollS: m.poll_s,
        thresholdOn: m.threshold,
        low: m.low,
        high: m.high,
        pollAllowed: !isButton,
        thresholdAllowed: true,
        isMicLevel: m.kind === "SOUND_LEVEL",
        dirty: false,
        error: null,
      });
    }
  }
  return fields;
}

/** 0 disables polling; anything else must clear the device minimum. */
export function validatePoll(field: FieldModel, seconds: number): string | null {
  if (!field.pollAllowed) return `${field.kind} is interrupt driven, polling is not available`;
  if (!Number.isInteger(seconds) || seconds < 0) return "poll interval must be a whole number of seconds";
  if (seconds !== 0 && seconds < MIN_POLL_S) return `poll interval must be 0 or at least ${MIN_POLL_S} s`;
  if (field.isMicLevel && seconds !== 0 && field.thresholdOn) {
    return "microphone polling and wake-on-sound are mutually exclusive";
  }
  return null;
}

export function validateThreshold(field: FieldModel, low: number, high: number): string | null {
  if (low > high) return "low must not exceed high";
  if (field.isMicLevel) {
    const db = high * field.scale;
    if (db < WOS_MIN || db > WOS_MAX) {
      return `wake-on-sound threshold must be ${WOS_MIN}..${WOS_MAX} dBSPL`;
    }
    if (field.pollS !== 0) {
      return "microphone polling and wake-on-sound are mutually exclusive";
    }
  }
  return null;
}

/** Slider helper for the mic threshold, label shows the mapped level. */
export function micSlider(field: FieldModel): { min: number; max: number; value: number; label: string } {
  const value = Math.min(WOS_MAX, Math.max(WOS_MIN, Math.round(field.high * field.scale)));
  return { min: WOS_MIN, max: WOS_MAX, value, label: sliderLabel(value) };
}

/** Protocol lines that stage this field's current state. */
export function setLines(field: FieldModel): string[] {
  const at = `SET ${field.slot} ${field.metric}`;
  const lines = [`${at} poll=${field.pollS}`];
  if (field.thresholdOn) {
    lines.push(`${at} low=${field.low}`, `${at} high=${field.high}`, `${at} threshold=on`);
  } else {
    lines.push(`${at} threshold=off`);
  }
  return lines;
}

/** The staged-commit sequence for every dirty field. */
export function saveSequence(fields: FieldModel[]): string[] {
  const lines: string[] = [];
  for (const f of fields) {
    if (f.dirty && f.error === null) lines.push(...setLines(f));
  }
  lines.push("SAVE");
  return lines;
}

/** Map an ERR reply onto a human message for inline display. */
export function errorMessage(reply: string): string | null {
  if (!reply.startsWith("ERR ")) return null;
  const rest = reply.slice(4);
  const space = rest.indexOf(" ");
  if (space < 0) return rest;
  return `${rest.slice(0, space)}: ${rest.slice(space + 1)}`;
}
