/** Shapes exchanged with the cloud twin REST/SSE API. */

export type DeviceStatus = "provisioning" | "online" | "degraded" | "offline";

export interface DeviceRecord {
  gateway_id: string;
  device_type: string;
  reported: {
    ip?: string;
    software_version?: string;
    mapping_version?: number;
    active_curve_id?: string;
    degraded?: boolean;
    [key: string]: unknown;
  };
  desired: { mapping_version?: number; curve_id?: string };
  last_seen: number | null;
  heartbeat_interval: number;
  status: DeviceStatus;
}

export interface Reading {
  consumptionBlock: string;
  qualityFlags: string;
  timePeriod: { duration: number; start: number };
  touTier: string;
  value: number;
}

export interface ReadingType {
  description: string;
  uom: number;
  [key: string]: unknown;
}

/** One-element object keyed by the decimal register number. */
export type ReadingEnvelope = Record<string, { ReadingType: ReadingType; Reading: Reading }>;

export interface TelemetryRecord {
  gateway_id: string;
  register: number;
  ingested_at: number;
  document: ReadingEnvelope;
}

export interface CurveBounds {
  VOLTAGE_THRESHOLDS: { V90: number; V95: number; V105: number; V110: number };
  REACTIVE_POWER_LIMITS: { Q_EXPORT: number; Q_ABSORB: number; UNITY: number };
  ACTIVE_POWER_LIMIT: number;
  curve_id?: string;
}

export interface Invocation {
  request_id: string;
  gateway_id: string;
  method: string;
  payload: Record<string, unknown>;
  state: "queued" | "delivered" | "completed" | "failed";
  response: { request_id: string; status: number; body: Record<string, unknown> } | null;
}

/** The registers charted by the console, in display order. */
export const CHARTED_REGISTERS = [
  { register: 40083, label: "Active power", unit: "W" },
  { register: 40072, label: "AC voltage", unit: "V" },
  { register: 40070, label: "Line frequency", unit: "Hz" },
  { register: 40084, label: "Reactive power", unit: "VAr" },
] as const;
