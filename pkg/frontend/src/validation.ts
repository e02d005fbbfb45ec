/** Client-side validation mirroring the gateway's acceptance rules. */

import type { CurveBounds } from "./types.js";

export interface FieldError {
  field: string;
  message: string;
}

/** Raw form state for the curve editor; everything arrives as strings. */
export interface CurveDraft {
  v90: string;
  v95: string;
  v105: string;
  v110: string;
  qExport: string;
  qAbsorb: string;
  unity: string;
  activePowerLimit: string;
  curveId: string;
}

const NUMERIC_FIELDS: Array<[keyof CurveDraft, string]> = [
  ["v90", "V90"],
  ["v95", "V95"],
  ["v105", "V105"],
  ["v110", "V110"],
  ["qExport", "Q_EXPORT"],
  ["qAbsorb", "Q_ABSORB"],
  ["unity", "UNITY"],
  ["activePowerLimit", "ACTIVE_POWER_LIMIT"],
];

export function validateCurveDraft(draft: CurveDraft): FieldError[] {
  const errors: FieldError[] = [];
  const values: Partial<Record<keyof CurveDraft, number>> = {};
  for (const [key, label] of NUMERIC_FIELDS) {
    const raw = draft[key].trim();
    const value = Number(raw);
    if (raw === "" || !Number.isFinite(value)) {
      errors.push({ field: label, message: "must be a number" });
    } else {
      values[key] = value;
    }
  }
  if (errors.length > 0) {
    return errors;
  }
  const { v90, v95, v105, v110, qExport, qAbsorb, unity, activePowerLimit } = values as Record<
    keyof CurveDraft,
    number
  >;
  if (!(v90 < v95 && v95 < v105 && v105 < v110)) {
    errors.push({
      field: "VOLTAGE_THRESHOLDS",
      message: "thresholds must be strictly increasing (V90 < V95 < V105 < V110)",
    });
  }
  if (!(qAbsorb <= unity && unity <= qExport)) {
    errors.push({
      field: "REACTIVE_POWER_LIMITS",
      message: "need Q_ABSORB <= UNITY <= Q_EXPORT",
    });
  }
  if (!(activePowerLimit > 0 && activePowerLimit <= 100)) {
    errors.push({ field: "ACTIVE_POWER_LIMIT", message: "must be in (0, 100]" });
  }
  return errors;
}

/** Build the wire document; only valid for a draft with no errors. */
export function draftToCurve(draft: CurveDraft): CurveBounds {
  const errors = validateCurveDraft(draft);
  if (errors.length > 0) {
    throw new Error(`invalid draft: ${errors.map((e) => e.field).join(", ")}`);
  }
  const curve: CurveBounds = {
    VOLTAGE_THRESHOLDS: {
      V90: Number(draft.v90),
      V95: Number(draft.v95),
      V105: Number(draft.v105),
      V110: Number(draft.v110),
    },
    REACTIVE_POWER_LIMITS: {
      Q_EXPORT: Number(draft.qExport),
      Q_ABSORB: Number(draft.qAbsorb),
      UNITY: Number(draft.unity),
    },
    ACTIVE_POWER_LIMIT: Number(draft.activePowerLimit),
  };
  if (draft.curveId.trim()) {
    curve.curve_id = draft.curveId.trim();
  }
  return curve;
}

export function curveToDraft(curve: CurveBounds): CurveDraft {
  return {
    v90: String(curve.VOLTAGE_THRESHOLDS.V90),
    v95: String(curve.VOLTAGE_THRESHOLDS.V95),
    v105: String(curve.VOLTAGE_THRESHOLDS.V105),
    v110: String(curve.VOLTAGE_THRESHOLDS.V110),
    qExport: String(curve.REACTIVE_POWER_LIMITS.Q_EXPORT),
    qAbsorb: String(curve.REACTIVE_POWER_LIMITS.Q_ABSORB),
    unity: String(curve.REACTIVE_POWER_LIMITS.UNITY),
    activePowerLimit: String(curve.ACTIVE_POWER_LIMIT),
    curveId: curve.curve_id ?? "",
  };
}

/** Curtailment percent must sit in (0, 100]. Returns a message or null. */
export function validateCurtailPercent(raw: string): string | null {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    return "percent must be a number";
  }
  if (!(value > 0 && value <= 100)) {
    return "percent must be in (0, 100]";
  }
  return null;
}
