/** Live telemetry charts for one gateway: history backfill + SSE tail. */

import { CloudApi } from "../api.js";
import { LineChart } from "../chart.js";
import { SseStream } from "../sse.js";
import { SeriesStore } from "../store.js";
import { CHARTED_REGISTERS, type TelemetryRecord } from "../types.js";

const COLORS: Record<number, string> = {
  40083: "#4cc2ff",
  40072: "#7ce38b",
  40070: "#d2a8ff",
  40084: "#ffb84c",
};

export class TelemetryView {
  private readonly store = new SeriesStore();
  private charts = new Map<number, LineChart>();
  private stream: SseStream | null = null;
  private gateway: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: CloudApi,
    private readonly onStatus: (text: string) => void,
  ) {}

  async show(gatewayId: string): Promise<void> {
    this.hide();
    this.gateway = gatewayId;
    this.root.innerHTML = CHARTED_REGISTERS.map(
      (c) => `<canvas id="chart-${c.register}" width="460" height="170"></canvas>`,
    ).join("");
    this.charts = new Map(
      CHARTED_REGISTERS.map((c) => [
        c.register,
        new LineChart(
          this.root.querySelector<HTMLCanvasElement>(`#chart-${c.register}`)!,
          { label: c.label, unit: c.unit, color: COLORS[c.register] },
        ),
      ]),
    );

    // backfill history, then tail the stream
    const records = await this.api.queryTelemetry({ gateway_id: gatewayId, limit: 500 });
    for (const record of records) {
      this.store.addRecord(record);
    }
    this.redraw();

    this.stream = new SseStream(
      this.api.telemetryStreamUrl(),
      this.api.streamToken(),
      (event) => {
        if (event.event !== "telemetry") {
          return;
        }
        const record = JSON.parse(event.data) as TelemetryRecord;
        if (record.gateway_id === this.gateway && this.store.addRecord(record)) {
          this.redraw();
        }
      },
      () => {
        this.store.markGap();
        this.onStatus("stream dropped, reconnecting");
        this.redraw();
      },
    );
    this.stream.start();
  }

  hide(): void {
    this.stream?.stop();
    this.stream = null;
    this.store.clear();
    this.gateway = null;
  }

  latestVoltage(): number | null {
    return this.store.latest(40072)?.y ?? null;
  }

  private redraw(): void {
    for (const { register } of CHARTED_REGISTERS) {
      this.charts.get(register)?.draw(this.store.points(register), this.store.gapsFor(register));
    }
  }
}
