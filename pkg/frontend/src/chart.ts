/** Small dependency-free canvas line chart for streaming telemetry. */

import type { Point } from "./store.js";

export interface ChartOptions {
  label: string;
  unit: string;
  color?: string;
}

const PAD = { left: 54, right: 10, top: 18, bottom: 22 };

export class LineChart {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly options: ChartOptions,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("canvas 2d context unavailable");
    }
    this.ctx = ctx;
  }

  draw(points: Point[], gaps: Set<number> = new Set()): void {
    const { ctx, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#141a22";
    ctx.fillRect(0, 0, w, h);
    ctx.fillStyle = "#9fb2c8";
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText(`${this.options.label} (${this.options.unit})`, PAD.left, 13);

    if (points.length === 0) {
      ctx.fillStyle = "#5c6c80";
      ctx.fillText("no data in range", w / 2 - 45, h / 2);
      return;
    }

    const ts = points.map((p) => p.t);
    const ys = points.map((p) => p.y);
    const tMin = Math.min(...ts);
    const tMax = Math.max(...ts);
    let yMin = Math.min(...ys);
    let yMax = Math.max(...ys);
    if (yMax === yMin) {
      yMax += 1;
      yMin -= 1;
    }
    const margin = (yMax - yMin) * 0.1;
    yMin -= margin;
    yMax += margin;

    const x = (t: number) =>
      PAD.left + ((t - tMin) / Math.max(tMax - tMin, 1)) * (w - PAD.left - PAD.right);
    const y = (v: number) => h - PAD.bottom - ((v - yMin) / (yMax - yMin)) * (h - PAD.top - PAD.bottom);

    // axes and scale labels
    ctx.strokeStyle = "#2a3646";
    ctx.beginPath();
    ctx.moveTo(PAD.left, PAD.top);
    ctx.lineTo(PAD.left, h - PAD.bottom);
    ctx.lineTo(w - PAD.right, h - PAD.bottom);
    ctx.stroke();
    ctx.fillStyle = "#5c6c80";
    ctx.fillText(format(yMax), 4, PAD.top + 8);
    ctx.fillText(format(yMin), 4, h - PAD.bottom);
    ctx.fillText(clock(tMin), PAD.left, h - 6);
    ctx.fillText(clock(tMax), w - PAD.right - 52, h - 6);

    // the polyline, broken at gap markers
    ctx.strokeStyle = this.options.color ?? "#4cc2ff";
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    let penDown = false;
    for (const point of points) {
      if (!penDown) {
        ctx.moveTo(x(point.t), y(point.y));
        penDown = true;
      } else {
        ctx.lineTo(x(point.t), y(point.y));
      }
      if (gaps.has(point.t)) {
        penDown = false; // break the line where the stream dropped
      }
    }
    ctx.stroke();

    // gap markers
    ctx.fillStyle = "#ffb84c";
    for (const t of gaps) {
      if (t >= tMin && t <= tMax) {
        ctx.fillRect(x(t) - 1, PAD.top, 2, h - PAD.top - PAD.bottom);
      }
    }

    const last = points[points.length - 1];
    ctx.fillStyle = "#e8f2ff";
    ctx.fillText(format(last.y), w - PAD.right - 52, PAD.top + 8);
  }
}

function format(v: number): string {
  return Math.abs(v) >= 1000 ? v.toFixed(0) : v.toFixed(Math.abs(v) < 10 ? 2 : 1);
}

function clock(epoch: number): string {
  return new Date(epoch * 1000).toLocaleTimeString();
}

/** Plot a volt-var curve plus optional live (voltage, Q) marker. */
export function drawCurvePreview(
  canvas: HTMLCanvasElement,
  samples: Array<[number, number]>,
  marker: [number, number] | null = null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || samples.length === 0) {
    return;
  }
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#141a22";
  ctx.fillRect(0, 0, w, h);
  const vs = samples.map((s) => s[0]);
  const qs = samples.map((s) => s[1]);
  const vMin = Math.min(...vs);
  const vMax = Math.max(...vs);
  const qSpan = Math.max(Math.max(...qs.map(Math.abs)), 1) * 1.15;
  const x = (v: number) => PAD.left + ((v - vMin) / (vMax - vMin)) * (w - PAD.left - PAD.right);
  const y = (q: number) => h / 2 - (q / qSpan) * (h / 2 - PAD.top);

  ctx.strokeStyle = "#2a3646";
  ctx.beginPath();
  ctx.moveTo(PAD.left, h / 2);
  ctx.lineTo(w - PAD.right, h / 2);
  ctx.stroke();
  ctx.fillStyle = "#5c6c80";
  ctx.font = "12px system-ui, sans-serif";
  ctx.fillText(`${vMin} V`, PAD.left, h - 6);
  ctx.fillText(`${vMax} V`, w - PAD.right - 40, h - 6);
  ctx.fillText(`+${qSpan.toFixed(0)}%`, 4, PAD.top + 8);
  ctx.fillText(`-${qSpan.toFixed(0)}%`, 4, h - PAD.top);

  ctx.strokeStyle = "#7ce38b";
  ctx.lineWidth = 2;
  ctx.beginPath();
  samples.forEach(([v, q], i) => {
    if (i === 0) {
      ctx.moveTo(x(v), y(q));
    } else {
      ctx.lineTo(x(v), y(q));
    }
  });
  ctx.stroke();

  if (marker) {
    ctx.fillStyle = "#ff6b6b";
    ctx.beginPath();
    ctx.arc(x(marker[0]), y(marker[1]), 4, 0, Math.PI * 2);
    ctx.fill();
  }
}
