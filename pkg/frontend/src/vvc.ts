/** Volt-VAR curve shape used by the editor preview.
 *
 * Must stay pointwise identical to the gateway's evaluator: saturation
 * outside [V90, V110], linear ramps into a [V95, V105] deadband, and
 * thresholds taking the adjacent flat segment's value.
 */

import type { CurveBounds } from "./types.js";

export function setpointAt(curve: CurveBounds, voltage: number): number {
  const { V90, V95, V105, V110 } = curve.VOLTAGE_THRESHOLDS;
  const { Q_EXPORT, Q_ABSORB, UNITY } = curve.REACTIVE_POWER_LIMITS;
  if (voltage <= V90) {
    return Q_EXPORT;
  }
  if (voltage < V95) {
    return Q_EXPORT + ((voltage - V90) / (V95 - V90)) * (UNITY - Q_EXPORT);
  }
  if (voltage <= V105) {
    return UNITY;
  }
  if (voltage < V110) {
    return UNITY + ((voltage - V105) / (V110 - V105)) * (Q_ABSORB - UNITY);
  }
  return Q_ABSORB;
}

/** Sample the curve for plotting: [voltage, setpoint] pairs. */
export function sampleCurve(
  curve: CurveBounds,
  vMin = 190,
  vMax = 265,
  step = 0.25,
): Array<[number, number]> {
  const points: Array<[number, number]> = [];
  for (let v = vMin; v <= vMax + 1e-9; v += step) {
    points.push([v, setpointAt(curve, v)]);
  }
  return points;
}
