/** Volt-VAR curve editor: presets, validation, preview, push. */

import { CloudApi } from "../api.js";
import { drawCurvePreview } from "../chart.js";
import type { CurveBounds } from "../types.js";
import {
  CurveDraft,
  curveToDraft,
  draftToCurve,
  validateCurveDraft,
} from "../validation.js";
import { sampleCurve, setpointAt } from "../vvc.js";
import { describe } from "./devices.js";

export const PRESETS: Record<string, CurveBounds> = {
  VVC1: {
    VOLTAGE_THRESHOLDS: { V90: 207.0, V95: 218.5, V105: 241.5, V110: 253.0 },
    REACTIVE_POWER_LIMITS: { Q_EXPORT: 45.4, Q_ABSORB: -45.4, UNITY: 0.0 },
    ACTIVE_POWER_LIMIT: 75.0,
    curve_id: "VVC1",
  },
  VVC2: {
    VOLTAGE_THRESHOLDS: { V90: 207.0, V95: 218.5, V105: 241.5, V110: 253.0 },
    REACTIVE_POWER_LIMITS: { Q_EXPORT: 40.5, Q_ABSORB: -40.5, UNITY: 0.0 },
    ACTIVE_POWER_LIMIT: 100.0,
    curve_id: "VVC2",
  },
};

const FIELDS: Array<[keyof CurveDraft, string]> = [
  ["v90", "V90 (V)"],
  ["v95", "V95 (V)"],
  ["v105", "V105 (V)"],
  ["v110", "V110 (V)"],
  ["qExport", "Q_EXPORT (%)"],
  ["qAbsorb", "Q_ABSORB (%)"],
  ["unity", "UNITY (%)"],
  ["activePowerLimit", "ACTIVE_POWER_LIMIT (%)"],
  ["curveId", "curve id"],
];

export class CurveEditorView {
  private draft: CurveDraft = curveToDraft(PRESETS.VVC1);

  constructor(
    private readonly root: HTMLElement,
    private readonly api: CloudApi,
    private readonly gatewayId: () => string | null,
    private readonly liveVoltage: () => number | null,
    private readonly onStatus: (text: string, ok?: boolean) => void,
  ) {}

  render(): void {
    const inputs = FIELDS.map(
      ([key, label]) => `
        <label>${label}
          <input name="${key}" value="${this.draft[key]}" autocomplete="off" />
        </label>`,
    ).join("");
    this.root.innerHTML = `
      <div class="curve-editor">
        <div class="curve-form">
          <div class="presets">
            <button data-preset="VVC1">load VVC1</button>
            <button data-preset="VVC2">load VVC2</button>
          </div>
          ${inputs}
          <ul class="field-errors"></ul>
          <button class="push" disabled>push to gateway</button>
        </div>
        <canvas class="curve-preview" width="430" height="260"></canvas>
      </div>`;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("[data-preset]")) {
      button.addEventListener("click", () => {
        this.draft = curveToDraft(PRESETS[button.dataset.preset!]);
        this.render();
      });
    }
    for (const input of this.root.querySelectorAll<HTMLInputElement>("input")) {
      input.addEventListener("input", () => {
        this.draft = { ...this.draft, [input.name as keyof CurveDraft]: input.value };
        this.update();
      });
    }
    this.root.querySelector<HTMLButtonElement>("button.push")!.addEventListener("click", () => {
      void this.push();
    });
    this.update();
  }

  /** Re-validate, re-enable the push button, redraw the preview. */
  update(): void {
    const errors = validateCurveDraft(this.draft);
    const list = this.root.querySelector<HTMLUListElement>("ul.field-errors")!;
    list.innerHTML = errors.map((e) => `<li><b>${e.field}</b>: ${e.message}</li>`).join("");
    const push = this.root.querySelector<HTMLButtonElement>("button.push")!;
    push.disabled = errors.length > 0 || this.gatewayId() === null;
    if (errors.length === 0) {
      const curve = draftToCurve(this.draft);
      const voltage = this.liveVoltage();
      const marker: [number, number] | null =
        voltage === null ? null : [voltage, setpointAt(curve, voltage)];
      drawCurvePreview(
        this.root.querySelector<HTMLCanvasElement>("canvas.curve-preview")!,
        sampleCurve(curve),
        marker,
      );
    }
  }

  private async push(): Promise<void> {
    const gateway = this.gatewayId();
    if (!gateway) {
      return;
    }
    const curve = draftToCurve(this.draft);
    try {
      // desired state first, then the explicit method so the edge applies it
      const { curve_id } = await this.api.putVvc(gateway, curve);
      const invocation = await this.api.invoke(gateway, "updateGatewayCache", {
        kind: "vvc",
        curve,
      });
      if (invocation.state === "completed") {
        this.onStatus(`curve ${curve_id} active on ${gateway}`, true);
      } else {
        this.onStatus(`push ${invocation.state}: ${JSON.stringify(invocation.response?.body)}`, false);
      }
    } catch (error) {
      this.onStatus(`push failed, ${describe(error)}`, false);
    }
  }
}
