/** Device fleet table: status, versions, last_seen; auto-refreshing. */

import { ApiError, CloudApi } from "../api.js";
import type { DeviceRecord } from "../types.js";

export interface DeviceListCallbacks {
  onSelect: (gatewayId: string) => void;
  onAuthFailure: () => void;
}

export class DeviceListView {
  private timer: number | null = null;
  private selected: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: CloudApi,
    private readonly callbacks: DeviceListCallbacks,
  ) {}

  start(intervalMs = 3000): void {
    void this.refresh();
    this.timer = window.setInterval(() => void this.refresh(), intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      window.clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    let devices: DeviceRecord[];
    try {
      devices = (await this.api.devices()).devices;
    } catch (error) {
      if (error instanceof ApiError && error.status === 401) {
        this.stop();
        this.callbacks.onAuthFailure();
        return;
      }
      this.root.innerHTML = `<p class="error">device list unavailable: ${describe(error)}</p>`;
      return;
    }
    this.render(devices);
  }

  private render(devices: DeviceRecord[]): void {
    if (devices.length === 0) {
      this.root.innerHTML = `<p class="muted">No gateways registered yet.</p>`;
      return;
    }
    const rows = devices
      .map((d) => {
        const seen = d.last_seen === null ? "never" : new Date(d.last_seen * 1000).toLocaleTimeString();
        const selected = d.gateway_id === this.selected ? " selected" : "";
        return `
          <tr class="device status-${d.status}${selected}" data-id="${d.gateway_id}">
            <td>${d.gateway_id}</td>
            <td>${d.device_type}</td>
            <td><span class="badge ${d.status}">${d.status}</span></td>
            <td>${d.reported.mapping_version ?? "-"}</td>
            <td>${d.reported.active_curve_id ?? "-"}</td>
            <td>${seen}</td>
          </tr>`;
      })
      .join("");
    this.root.innerHTML = `
      <table>
        <thead>
          <tr><th>gateway</th><th>type</th><th>status</th><th>mapping v</th><th>active curve</th><th>last seen</th></tr>
        </thead>
        <tbody>${rows}</tbody>
      </table>`;
    for (const row of this.root.querySelectorAll<HTMLTableRowElement>("tr.device")) {
      row.addEventListener("click", () => {
        this.selected = row.dataset.id ?? null;
        if (this.selected) {
          this.callbacks.onSelect(this.selected);
        }
        void this.refresh();
      });
    }
  }
}

export function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.status}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}
