// Orbit camera over the arena.  Spherical coordinates around a target
// point, with a simple perspective projection; all math lives here so the
// renderer and the input handlers stay small.

export type Vec3 = [number, number, number];

const PITCH_MIN = -1.45;
const PITCH_MAX = 1.45;
const DISTANCE_MIN = 0.5;
const DISTANCE_MAX = 60;

export class OrbitCamera {
  yaw = 0.7;
  pitch = 0.45;
  distance = 6;
  target: Vec3 = [0, 0.4, 0];
  fov = 55 * (Math.PI / 180);

  orbit(dYaw: number, dPitch: number): void {
    this.yaw += dYaw;
    this.pitch = Math.min(Math.max(this.pitch + dPitch, PITCH_MIN), PITCH_MAX);
  }

  zoom(factor: number): void {
    this.distance = Math.min(Math.max(this.distance * factor, DISTANCE_MIN), DISTANCE_MAX);
  }

  // Slide the target in the camera's screen plane.
  pan(dx: number, dy: number): void {
    const [right, up] = this.basis();
    const scale = this.distance * 0.002;
    this.target = [
      this.target[0] + (right[0] * dx + up[0] * dy) * scale,
      this.target[1] + (right[1] * dx + up[1] * dy) * scale,
      this.target[2] + (right[2] * dx + up[2] * dy) * scale,
    ];
  }

  position(): Vec3 {
    const cp = Math.cos(this.pitch);
    return [
      this.target[0] + this.distance * cp * Math.sin(this.yaw),
      this.target[1] + this.distance * Math.sin(this.pitch),
      this.target[2] + this.distance * cp * Math.cos(this.yaw),
    ];
  }

  // Right and up vectors of the view plane, and the forward direction from
  // the eye toward the target.
  basis(): [Vec3, Vec3, Vec3] {
    const eye = this.position();
    const forward = normalize([
      this.target[0] - eye[0],
      this.target[1] - eye[1],
      this.target[2] - eye[2],
    ]);
    const worldUp: Vec3 = [0, 1, 0];
    const right = normalize(cross(forward, worldUp));
    const up = cross(right, forward);
    return [right, up, forward];
  }

  // Projects a world point to canvas pixels plus its view-space depth.
  // Returns null for points at or behind the eye plane.
  project(point: Vec3, width: number, height: number): [number, number, number] | null {
    const eye = this.position();
    const [right, up, forward] = this.basis();
    const rel: Vec3 = [point[0] - eye[0], point[1] - eye[1], point[2] - eye[2]];
    const depth = dot(rel, forward);
    if (depth < 1e-6) {
      return null;
    }
    const focal = height / 2 / Math.tan(this.fov / 2);
    const x = width / 2 + (dot(rel, right) / depth) * focal;
    const y = height / 2 - (dot(rel, up) / depth) * focal;
    return [x, y, depth];
  }
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (n < 1e-12) {
    return [0, 0, 1];
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}
