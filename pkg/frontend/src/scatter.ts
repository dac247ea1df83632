// Fitness-versus-evaluation scatter model and its canvas drawing routine.
// The model dedupes by eval_index so replayed history and live events can
// both feed it without double-plotting.

import type { EvalRecord } from './types.js';

export interface ScatterPoint {
  evalIndex: number;
  fitness: number;
  accepted: boolean;
}

export class ScatterModel {
  points: ScatterPoint[] = [];

  private seen = new Set<number>();

  // Returns true when the record was new and a point was added.
  addRecord(record: EvalRecord): boolean {
    if (this.seen.has(record.eval_index)) {
      return false;
    }
    this.seen.add(record.eval_index);
    this.points.push({
      evalIndex: record.eval_index,
      fitness: record.fitness,
      accepted: record.accepted,
    });
    return true;
  }

  seedFromHistory(records: EvalRecord[]): number {
    let added = 0;
    for (const record of records) {
      if (this.addRecord(record)) {
        added += 1;
      }
    }
    return added;
  }

  clear(): void {
    this.points = [];
    this.seen.clear();
  }

  // Running best fitness by evaluation order, for the champion trace line.
  bestTrace(): ScatterPoint[] {
    const ordered = [...this.points].sort((a, b) => a.evalIndex - b.evalIndex);
    const trace: ScatterPoint[] = [];
    let best = -Infinity;
    for (const point of ordered) {
      if (point.fitness > best) {
        best = point.fitness;
        trace.push(point);
      }
    }
    return trace;
  }
}

export interface ScatterStyle {
  background: string;
  axis: string;
  accepted: string;
  rejected: string;
  trace: string;
}

export const DEFAULT_SCATTER_STYLE: ScatterStyle = {
  background: '#14161a',
  axis: '#4a4f58',
  accepted: '#5fd38d',
  rejected: '#6b7280',
  trace: '#e8b34b',
};

const MARGIN = { left: 42, right: 10, top: 8, bottom: 22 };

// Draws the model into a 2d context.  Pure function of (model, size) so it
// can run against a stub context in tests.
export function drawScatter(
  ctx: CanvasRenderingContext2D,
  model: ScatterModel,
  width: number,
  height: number,
  style: ScatterStyle = DEFAULT_SCATTER_STYLE,
): void {
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, height);

  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  if (plotW <= 0 || plotH <= 0) {
    return;
  }

  ctx.strokeStyle = style.axis;
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(MARGIN.left, MARGIN.top);
  ctx.lineTo(MARGIN.left, MARGIN.top + plotH);
  ctx.lineTo(MARGIN.left + plotW, MARGIN.top + plotH);
  ctx.stroke();

  if (model.points.length === 0) {
    return;
  }

  let xMax = 1;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const point of model.points) {
    xMax = Math.max(xMax, point.evalIndex);
    yMin = Math.min(yMin, point.fitness);
    yMax = Math.max(yMax, point.fitness);
  }
  if (yMin === yMax) {
    yMin -= 0.5;
    yMax += 0.5;
  }

  const toX = (evalIndex: number) => MARGIN.left + (evalIndex / xMax) * plotW;
  const toY = (fitness: number) => MARGIN.top + (1 - (fitness - yMin) / (yMax - yMin)) * plotH;

  const trace = model.bestTrace();
  if (trace.length > 1) {
    ctx.strokeStyle = style.trace;
    ctx.beginPath();
    trace.forEach((point, i) => {
      const x = toX(point.evalIndex);
      const y = toY(point.fitness);
      if (i === 0) {
        ctx.moveTo(x, y);
      } else {
        ctx.lineTo(x, y);
      }
    });
    // Extend the trace flat to the latest evaluation.
    const lastTracePoint = trace[trace.length - 1];
    if (lastTracePoint !== undefined && lastTracePoint.evalIndex < xMax) {
      ctx.lineTo(toX(xMax), toY(lastTracePoint.fitness));
    }
    ctx.stroke();
  }

  for (const point of model.points) {
    ctx.fillStyle = point.accepted ? style.accepted : style.rejected;
    ctx.beginPath();
    ctx.arc(toX(point.evalIndex), toY(point.fitness), point.accepted ? 2.5 : 1.5, 0, Math.PI * 2);
    ctx.fill();
  }

  ctx.fillStyle = style.axis;
  ctx.font = '10px system-ui, sans-serif';
  ctx.textAlign = 'right';
  ctx.fillText(yMax.toFixed(3), MARGIN.left - 4, MARGIN.top + 8);
  ctx.fillText(yMin.toFixed(3), MARGIN.left - 4, MARGIN.top + plotH);
  ctx.textAlign = 'center';
  ctx.fillText(String(xMax), MARGIN.left + plotW, MARGIN.top + plotH + 14);
  ctx.fillText('0', MARGIN.left, MARGIN.top + plotH + 14);
}
