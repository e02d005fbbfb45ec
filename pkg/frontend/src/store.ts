/** Per-register telemetry series with dedup and gap markers.
 *
 * Points are keyed by the reading's timePeriod.start, so a reconnect
 * replaying history never duplicates a sample.
 */

import type { TelemetryRecord } from "./types.js";

export interface Point {
  t: number;
  y: number;
}

export class SeriesStore {
  private series = new Map<number, Map<number, number>>();
  private gaps = new Map<number, Set<number>>();
  private lastT = new Map<number, number>();

  constructor(private readonly maxPoints = 600) {}

  /** Returns true when the point was new (not a duplicate). */
  add(register: number, start: number, value: number): boolean {
    let points = this.series.get(register);
    if (!points) {
      points = new Map();
      this.series.set(register, points);
    }
    if (points.has(start)) {
      return false;
    }
    points.set(start, value);
    this.lastT.set(register, Math.max(this.lastT.get(register) ?? -Infinity, start));
    if (points.size > this.maxPoints) {
      const oldest = Math.min(...points.keys());
      points.delete(oldest);
      this.gaps.get(register)?.delete(oldest);
    }
    return true;
  }

  addRecord(record: TelemetryRecord): boolean {
    const body = record.document[String(record.register)];
    if (!body) {
      return false;
    }
    return this.add(record.register, body.Reading.timePeriod.start, body.Reading.value);
  }

  /** Mark a stream gap after the latest point of every tracked register. */
  markGap(): void {
    for (const [register, last] of this.lastT) {
      if (Number.isFinite(last)) {
        let marks = this.gaps.get(register);
        if (!marks) {
          marks = new Set();
          this.gaps.set(register, marks);
        }
        marks.add(last);
      }
    }
  }

  points(register: number): Point[] {
    const raw = this.series.get(register);
    if (!raw) {
      return [];
    }
    return [...raw.entries()].sort((a, b) => a[0] - b[0]).map(([t, y]) => ({ t, y }));
  }

  gapsFor(register: number): Set<number> {
    return this.gaps.get(register) ?? new Set();
  }

  latest(register: number): Point | null {
    const points = this.points(register);
    return points.length > 0 ? points[points.length - 1] : null;
  }

  clear(): void {
    this.series.clear();
    this.gaps.clear();
    this.lastT.clear();
  }
}
