/**
 * Power report view model: per-board charge breakdown segments, the
 * lifetime projection line, and the polling-vs-WOS comparison table.
 * Everything is a straight rearrangement of report.json fields.
 */

export interface Segment {
  label: string;
  chargeUah: number;
  seconds: number;
  fraction: number; // of the board total
}

export function boardBreakdown(report: any, board: string): Segment[] {
  const doc = report?.boards?.[board];
  if (!doc) return [];
  const total = doc.charge_uah || 0;
  const segments: Segment[] = Object.entries(doc.by_label ?? {}).map(
    ([label, row]: [string, any]) => ({
      label,
      chargeUah: row.charge_uah,
      seconds: row.seconds,
      fraction: total > 0 ? row.charge_uah / total : 0,
    }),
  );
  segments.sort((a, b) => b.chargeUah - a.chargeUah);
  return segments;
}

export function boardNames(report: any): string[] {
  return Object.keys(report?.boards ?? {}).sort();
}

export function lifetimeLabel(report: any): string {
  const projection = report?.projection;
  if (!projection) return "no projection";
  if (projection.outcome === "never_depletes") {
    return "battery never depletes at this draw";
  }
  return `projected lifetime: ${projection.hours.toFixed(1)} h`;
}

export interface ComparisonRow {
  name: string;
  chargeUah: number;
  lifetimeHours: number;
  outcome: string;
  winner: boolean;
}

export function comparisonRows(comparison: any): ComparisonRow[] {
  if (!comparison?.runs) return [];
  const byName = new Map<string, any>(
    comparison.runs.map((r: any) => [r.name, r]),
  );
  // present in the report's own ordering, cheapest first
  return comparison.ordering.map((name: string) => {
    const run = byName.get(name);
    return {
      name,
      chargeUah: run.total_charge_uah,
      lifetimeHours: run.lifetime_hours,
      outcome: run.outcome,
      winner: name === comparison.winner,
    };
  });
}
