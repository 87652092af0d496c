import { describe, expect, it } from "vitest";

import { CollectorApi } from "../src/api";
import {
  FieldModel,
  errorMessage,
  micSlider,
  modelFromList,
  saveSequence,
  setLines,
  validatePoll,
  validateThreshold,
} from "../src/config-form";
import { boardBreakdown, comparisonRows, lifetimeLabel } from "../src/report";
import { SeriesStore } from "../src/store";

const LIST_DOC = {
  boards: [
    {
      slot: 0,
      type: "environmental",
      fw: "1.0",
      metrics: [
        { slot: 0, metric: 0, kind: "TEMPERATURE", unit: "degC", scale: 0.01, poll_s: 300, threshold: false, low: 0, high: 0 },
      ],
    },
    {
      slot: 1,
      type: "microphone",
      fw: "1.0",
      metrics: [
        { slot: 1, metric: 0, kind: "SOUND_LEVEL", unit: "dBSPL", scale: 0.01, poll_s: 0, threshold: true, low: 0, high: 7700 },
      ],
    },
    {
      slot: 2,
      type: "button",
      fw: "1.0",
      metrics: [
        { slot: 2, metric: 0, kind: "BUTTON_PRESS", unit: "count", scale: 1, poll_s: 0, threshold: false, low: 0, high: 0 },
      ],
    },
  ],
};

function field(kind: string): FieldModel {
  const fields = modelFromList(LIST_DOC);
  return fields.find((f) => f.kind === kind)!;
}

describe("config form validation", () => {
  it("rejects a 5 s poll with the device's minimum in the message", () => {
    const error = validatePoll(field("TEMPERATURE"), 5);
    expect(error).toContain("at least 10 s");
    expect(validatePoll(field("TEMPERATURE"), 10)).toBeNull();
    expect(validatePoll(field("TEMPERATURE"), 0)).toBeNull();
  });

  it("button metrics are interrupt only", () => {
    expect(validatePoll(field("BUTTON_PRESS"), 60)).toContain("interrupt");
  });

  it("mic polling and wake-on-sound exclude each other", () => {
    const mic = field("SOUND_LEVEL");
    expect(validatePoll(mic, 300)).toContain("mutually exclusive");
    mic.thresholdOn = false;
    expect(validatePoll(mic, 300)).toBeNull();
  });

  it("low must not exceed high", () => {
    const temp = field("TEMPERATURE");
    expect(validateThreshold(temp, 2500, 2000)).toContain("low");
    expect(validateThreshold(temp, 2000, 2500)).toBeNull();
  });

  it("mic slider reflects the stored wire value", () => {
    const slider = micSlider(field("SOUND_LEVEL"));
    expect(slider.value).toBe(77);
    expect(slider.label).toBe("hardware level: 77 dBSPL");
    expect(slider.min).toBe(65);
    expect(slider.max).toBe(100);
  });

  it("save emits staged SET lines then one SAVE", () => {
    const fields = modelFromList(LIST_DOC);
    fields[0].pollS = 600;
    fields[0].dirty = true;
    const lines = saveSequence(fields);
    expect(lines[0]).toBe("SET 0 0 poll=600");
    expect(lines[lines.length - 1]).toBe("SAVE");
    // clean fields stay out of the sequence
    expect(lines.filter((l) => l.startsWith("SET 1"))).toEqual([]);
  });

  it("threshold lines carry low, high, and the enable", () => {
    const mic = field("SOUND_LEVEL");
    const lines = setLines(mic);
    expect(lines).toContain("SET 1 0 high=7700");
    expect(lines).toContain("SET 1 0 threshold=on");
  });

  it("maps protocol errors to inline text", () => {
    expect(errorMessage("ERR InvalidConfigValue poll interval below minimum"))
      .toBe("InvalidConfigValue: poll interval below minimum");
    expect(errorMessage("OK saved 96 bytes")).toBeNull();
  });
});

describe("report view", () => {
  const report = {
    boards: {
      motherboard: {
        charge_uah: 100,
        by_label: {
          sleep: { charge_uah: 20, energy_mj: 1, seconds: 3000 },
          uplink: { charge_uah: 80, energy_mj: 4, seconds: 60 },
        },
      },
    },
    projection: { outcome: "depletes", hours: 231.04 },
  };

  it("orders breakdown segments by charge", () => {
    const segments = boardBreakdown(report, "motherboard");
    expect(segments.map((s) => s.label)).toEqual(["uplink", "sleep"]);
    expect(segments[0].fraction).toBeCloseTo(0.8);
  });

  it("formats the projection", () => {
    expect(lifetimeLabel(report)).toBe("projected lifetime: 231.0 h");
    expect(lifetimeLabel({ projection: { outcome: "never_depletes" } }))
      .toContain("never depletes");
    expect(lifetimeLabel({})).toBe("no projection");
  });

  it("presents the comparison in the report's ordering", () => {
    const rows = comparisonRows({
      runs: [
        { name: "wos", total_charge_uah: 9, lifetime_hours: 2, outcome: "depletes" },
        { name: "polling", total_charge_uah: 3, lifetime_hours: 6, outcome: "depletes" },
      ],
      ordering: ["polling", "wos"],
      winner: "polling",
    });
    expect(rows.map((r) => r.name)).toEqual(["polling", "wos"]);
    expect(rows[0].winner).toBe(true);
    expect(rows[1].winner).toBe(false);
  });
});

describe("store and api plumbing", () => {
  it("merges live rows in arrival order", () => {
    const store = new SeriesStore();
    store.addRow({ device_id: "d", slot: 0, metric: "TEMPERATURE", unit: "degC", timestamp_s: 10, value: 1 });
    store.addRow({ device_id: "d", slot: 0, metric: "TEMPERATURE", unit: "degC", timestamp_s: 5, value: 2 });
    store.addRow({ device_id: "d", slot: 0, metric: "TEMPERATURE", unit: "degC", timestamp_s: 10, value: 3 });
    expect(store.series("d", "TEMPERATURE")).toEqual([[5, 2], [10, 3]]);
  });

  it("builds export and live URLs from the base", () => {
    const api = new CollectorApi("http://host:8800/");
    expect(api.exportUrl()).toBe("http://host:8800/api/export.csv");
    expect(api.liveUrl()).toBe("ws://host:8800/api/live");
  });
});
