/**
 * Wake-on-sound threshold mapping, mirrored from the device so the
 * configuration panel can show the effective hardware level while the
 * user drags the slider. The comparator only supports three trigger
 * levels; the device picks the highest one not above the software
 * threshold.
 */

export const HARDWARE_LEVELS = [65, 77, 89];

export const WOS_MIN = 65;
export const WOS_MAX = 100;

export function wosHardwareLevel(softwareDb: number): number {
  if (softwareDb < WOS_MIN || softwareDb > WOS_MAX) {
    throw new RangeError(
      `threshold ${softwareDb} outside ${WOS_MIN}..${WOS_MAX} dBSPL`,
    );
  }
  let level = HARDWARE_LEVELS[0];
  for (const candidate of HARDWARE_LEVELS) {
    if (candidate <= softwareDb) level = candidate;
  }
  return level;
}

/** Label text next to the mic threshold slider. */
export function sliderLabel(softwareDb: number): string {
  return `hardware level: ${wosHardwareLevel(softwareDb)} dBSPL`;
}
