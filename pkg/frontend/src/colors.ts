/**
 * Deterministic per-motherboard coloring. Hash of the device id into
 * a fixed palette, so a device keeps its color across every chart,
 * reload, and browser. No registry, no ordering dependence.
 */

export const PALETTE = [
  "#2563eb", // blue
  "#dc2626", // red
  "#16a34a", // green
  "#9333ea", // purple
  "#ea580c", // orange
  "#0891b2", // cyan
  "#ca8a04", // amber
  "#db2777", // pink
];

// FNV-1a over the id string
function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

export function colorFor(deviceId: string): string {
  return PALETTE[fnv1a(deviceId) % PALETTE.length];
}
