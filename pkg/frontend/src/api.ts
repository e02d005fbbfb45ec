/** Typed client for the cloud twin REST API. Every call carries the
 * operator's bearer token; no token, no call.
 */

import type { CurveBounds, DeviceRecord, Invocation, TelemetryRecord } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface TelemetryQuery {
  gateway_id?: string;
  register?: number;
  from?: number;
  to?: number;
  limit?: number;
  offset?: number;
}

export function buildQuery(params: Record<string, string | number | undefined>): string {
  const parts = Object.entries(params)
    .filter(([, v]) => v !== undefined && v !== "")
    .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(String(v))}`);
  return parts.length > 0 ? `?${parts.join("&")}` : "";
}

export class CloudApi {
  constructor(
    readonly baseUrl: string,
    private readonly token: string,
  ) {
    if (!token) {
      throw new ApiError(401, "an operator token is required");
    }
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(response.status, (payload as { error?: string }).error ?? response.statusText);
    }
    return payload as T;
  }

  devices(): Promise<{ devices: DeviceRecord[] }> {
    return this.call("GET", "/api/devices");
  }

  device(gatewayId: string): Promise<DeviceRecord> {
    return this.call("GET", `/api/devices/${encodeURIComponent(gatewayId)}`);
  }

  async queryTelemetry(query: TelemetryQuery): Promise<TelemetryRecord[]> {
    const result = await this.call<{ records: TelemetryRecord[] }>(
      "GET",
      `/api/telemetry${buildQuery(query as Record<string, string | number | undefined>)}`,
    );
    return result.records;
  }

  getVvc(gatewayId: string): Promise<CurveBounds> {
    return this.call("GET", `/api/devices/${encodeURIComponent(gatewayId)}/vvc`);
  }

  putVvc(gatewayId: string, curve: CurveBounds): Promise<{ curve_id: string }> {
    return this.call("PUT", `/api/devices/${encodeURIComponent(gatewayId)}/vvc`, curve);
  }

  invoke(
    gatewayId: string,
    method: string,
    payload: Record<string, unknown>,
    waitS = 30,
  ): Promise<Invocation> {
    const path = `/api/devices/${encodeURIComponent(gatewayId)}/methods/${method}${buildQuery({ wait: waitS })}`;
    return this.call("POST", path, payload);
  }

  telemetryStreamUrl(): string {
    return `${this.baseUrl}/api/stream/telemetry`;
  }

  streamToken(): string {
    return this.token;
  }
}
