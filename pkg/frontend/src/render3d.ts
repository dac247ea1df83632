// Canvas renderer for one log frame: shaded boxes over a ground grid,
// drawn back to front (painter's algorithm).  No scene graph and no GPU;
// the worlds here are a handful of boxes, so sorting faces per frame is
// cheap and keeps the whole renderer self-contained.

import type { OrbitCamera, Vec3 } from './camera.js';
import type { LogFrame, LogHeader } from './simlog.js';

export type Rgb = [number, number, number];

// Unit-cube corners as sign triples; scaled by half extents per body.
const CORNER_SIGNS: Vec3[] = [
  [-1, -1, -1],
  [1, -1, -1],
  [1, 1, -1],
  [-1, 1, -1],
  [-1, -1, 1],
  [1, -1, 1],
  [1, 1, 1],
  [-1, 1, 1],
];

// Faces as corner indices, counter-clockwise seen from outside, with the
// outward normal in body frame.
const FACES: { corners: [number, number, number, number]; normal: Vec3 }[] = [
  { corners: [0, 3, 2, 1], normal: [0, 0, -1] },
  { corners: [4, 5, 6, 7], normal: [0, 0, 1] },
  { corners: [0, 1, 5, 4], normal: [0, -1, 0] },
  { corners: [3, 7, 6, 2], normal: [0, 1, 0] },
  { corners: [0, 4, 7, 3], normal: [-1, 0, 0] },
  { corners: [1, 2, 6, 5], normal: [1, 0, 0] },
];

const LIGHT_DIR: Vec3 = normalize([0.45, 0.8, 0.35]);
const DEFAULT_COLOR: Rgb = [0.62, 0.66, 0.72];
const GRID_COLOR = '#2a2e36';
const GRID_AXIS_COLOR = '#3c424d';
const GRID_EXTENT = 6;

export function quatRotate(q: [number, number, number, number], v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v + 2 q_vec x (q_vec x v + w v)
  const tx = 2 * (y * v[2] - z * v[1]);
  const ty = 2 * (z * v[0] - x * v[2]);
  const tz = 2 * (x * v[1] - y * v[0]);
  return [
    v[0] + w * tx + y * tz - z * ty,
    v[1] + w * ty + z * tx - x * tz,
    v[2] + w * tz + x * ty - y * tx,
  ];
}

interface ShadedFace {
  points: [number, number][];
  depth: number;
  fill: string;
}

function shade(color: Rgb, normal: Vec3): string {
  const lambert = Math.max(dot(normal, LIGHT_DIR), 0);
  const ambient = 0.35;
  const k = ambient + (1 - ambient) * lambert;
  const r = Math.round(Math.min(color[0] * k, 1) * 255);
  const g = Math.round(Math.min(color[1] * k, 1) * 255);
  const b = Math.round(Math.min(color[2] * k, 1) * 255);
  return `rgb(${r}, ${g}, ${b})`;
}

function drawGrid(
  ctx: CanvasRenderingContext2D,
  camera: OrbitCamera,
  width: number,
  height: number,
): void {
  ctx.lineWidth = 1;
  for (let i = -GRID_EXTENT; i <= GRID_EXTENT; i++) {
    ctx.strokeStyle = i === 0 ? GRID_AXIS_COLOR : GRID_COLOR;
    strokeSegment(ctx, camera, [i, 0, -GRID_EXTENT], [i, 0, GRID_EXTENT], width, height);
    strokeSegment(ctx, camera, [-GRID_EXTENT, 0, i], [GRID_EXTENT, 0, i], width, height);
  }
}

function strokeSegment(
  ctx: CanvasRenderingContext2D,
  camera: OrbitCamera,
  a: Vec3,
  b: Vec3,
  width: number,
  height: number,
): void {
  const pa = camera.project(a, width, height);
  const pb = camera.project(b, width, height);
  if (pa === null || pb === null) {
    return;
  }
  ctx.beginPath();
  ctx.moveTo(pa[0], pa[1]);
  ctx.lineTo(pb[0], pb[1]);
  ctx.stroke();
}

// Draws one frame.  colorOverrides maps body index to a replacement color
// (used for per-body recolor in the player); passing the map never touches
// the network or the log itself.
export function drawFrame(
  ctx: CanvasRenderingContext2D,
  camera: OrbitCamera,
  header: LogHeader,
  frame: LogFrame,
  width: number,
  height: number,
  colorOverrides: Map<number, Rgb> = new Map(),
): void {
  ctx.fillStyle = '#14161a';
  ctx.fillRect(0, 0, width, height);
  drawGrid(ctx, camera, width, height);

  const eye = camera.position();
  const faces: ShadedFace[] = [];

  header.bodies.forEach((body, bodyIndex) => {
    const state = frame.states[bodyIndex];
    if (state === undefined) {
      return;
    }
    const pos: Vec3 = [state[0], state[1], state[2]];
    const quat: [number, number, number, number] = [state[3], state[4], state[5], state[6]];
    const he = body.half_extents;
    const color = colorOverrides.get(bodyIndex) ?? (body.color as Rgb | undefined) ?? DEFAULT_COLOR;

    const corners: Vec3[] = CORNER_SIGNS.map((s) => {
      const local: Vec3 = [s[0] * he[0], s[1] * he[1], s[2] * he[2]];
      const rotated = quatRotate(quat, local);
      return [rotated[0] + pos[0], rotated[1] + pos[1], rotated[2] + pos[2]];
    });

    for (const face of FACES) {
      const worldNormal = quatRotate(quat, face.normal);
      const center = faceCenter(corners, face.corners);
      const toEye: Vec3 = [eye[0] - center[0], eye[1] - center[1], eye[2] - center[2]];
      if (dot(worldNormal, toEye) <= 0) {
        continue; // back face
      }
      const points: [number, number][] = [];
      let depth = 0;
      let visible = true;
      for (const index of face.corners) {
        const corner = corners[index] as Vec3;
        const projected = camera.project(corner, width, height);
        if (projected === null) {
          visible = false;
          break;
        }
        points.push([projected[0], projected[1]]);
        depth += projected[2];
      }
      if (!visible) {
        continue;
      }
      faces.push({ points, depth: depth / face.corners.length, fill: shade(color, worldNormal) });
    }
  });

  faces.sort((a, b) => b.depth - a.depth);
  for (const face of faces) {
    ctx.fillStyle = face.fill;
    ctx.beginPath();
    const first = face.points[0];
    if (first === undefined) {
      continue;
    }
    ctx.moveTo(first[0], first[1]);
    for (let i = 1; i < face.points.length; i++) {
      const p = face.points[i] as [number, number];
      ctx.lineTo(p[0], p[1]);
    }
    ctx.closePath();
    ctx.fill();
  }
}

function faceCenter(corners: Vec3[], indices: [number, number, number, number]): Vec3 {
  let x = 0;
  let y = 0;
  let z = 0;
  for (const index of indices) {
    const c = corners[index] as Vec3;
    x += c[0];
    y += c[1];
    z += c[2];
  }
  return [x / 4, y / 4, z / 4];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}
