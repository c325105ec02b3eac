/**
 * Plain-array vector math for gizmo dragging. Kept free of three.js so the
 * drag behavior is testable without a renderer.
 */

import type { Vec3 } from "./protocol.js";

export interface Ray {
  origin: Vec3;
  dir: Vec3;
}

export interface Box {
  min: Vec3;
  max: Vec3;
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function boxCenter(box: Box): Vec3 {
  return [
    0.5 * (box.min[0] + box.max[0]),
    0.5 * (box.min[1] + box.max[1]),
    0.5 * (box.min[2] + box.max[2]),
  ];
}

/** Center of one face of the box, the spot where its drag handle sits. */
export function faceCenter(box: Box, axis: 0 | 1 | 2, side: "min" | "max"): Vec3 {
  const c = boxCenter(box);
  c[axis] = side === "min" ? box.min[axis] : box.max[axis];
  return c;
}

/**
 * Parameter along an axis-aligned line closest to a pointer ray.
 *
 * Solves the two-line closest-point system; the returned value is the new
 * coordinate for the dragged face. Near-parallel configurations (looking
 * straight down the axis) return null so the drag just holds still.
 */
export function dragCoordinate(
  linePoint: Vec3,
  axis: 0 | 1 | 2,
  ray: Ray,
): number | null {
  const axisDir: Vec3 = [0, 0, 0];
  axisDir[axis] = 1;
  const b = dot(axisDir, ray.dir);
  const denom = dot(ray.dir, ray.dir) - b * b;
  if (Math.abs(denom) < 1e-9) return null;
  const w = sub(linePoint, ray.origin);
  const d = dot(axisDir, w);
  const e = dot(ray.dir, w);
  const s = (b * e - d * dot(ray.dir, ray.dir)) / denom;
  return linePoint[axis] + s;
}

/**
 * Apply a handle drag: move one face of the box along its axis to track the
 * pointer ray. Faces may cross; the caller normalizes min/max afterwards, so
 * this returns the raw corner pair.
 */
export function dragFace(
  box: Box,
  axis: 0 | 1 | 2,
  side: "min" | "max",
  ray: Ray,
): { a: Vec3; b: Vec3 } {
  const handle = faceCenter(box, axis, side);
  const coord = dragCoordinate(handle, axis, ray);
  const a: Vec3 = [...box.min];
  const b: Vec3 = [...box.max];
  if (coord !== null) {
    if (side === "min") a[axis] = coord;
    else b[axis] = coord;
  }
  return { a, b };
}

/** Slab test, open where the box is behind the origin. Used for hover only. */
export function rayHitsBox(ray: Ray, box: Box): boolean {
  let t0 = 0;
  let t1 = Infinity;
  for (let k = 0; k < 3; k++) {
    const d = ray.dir[k];
    if (Math.abs(d) < 1e-12) {
      if (ray.origin[k] < box.min[k] || ray.origin[k] > box.max[k]) return false;
      continue;
    }
    let near = (box.min[k] - ray.origin[k]) / d;
    let far = (box.max[k] - ray.origin[k]) / d;
    if (near > far) [near, far] = [far, near];
    t0 = Math.max(t0, near);
    t1 = Math.min(t1, far);
    if (t0 > t1) return false;
  }
  return true;
}
