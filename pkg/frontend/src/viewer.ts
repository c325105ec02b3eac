/**
 * three.js viewport: decimated point cloud, camera frusta, box gizmos with
 * draggable face handles. Pure display and picking; box edits go back to the
 * app through onBoxDrag and the app pushes new boxes in with setBoxes.
 */

import * as THREE from "three";
import { OrbitControls } from "./orbit.js";
import type { Box, Ray } from "./boxmath.js";
import { faceCenter } from "./boxmath.js";
import type { Vec3, ViewInfo } from "./protocol.js";

const FRUSTUM_DEPTH = 0.22;
const HANDLE_RADIUS = 0.035;

export interface BoxDisplay {
  box: Box;
  color: string;
}

interface HandleRef {
  axis: 0 | 1 | 2;
  side: "min" | "max";
}

/** Rotation matrix rows from a world-to-camera quaternion in w,x,y,z order. */
function quatRows(q: readonly number[]): [Vec3, Vec3, Vec3] {
  const [w, x, y, z] = q;
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
  ];
}

const BOX_EDGES: [number, number][] = [
  [0, 1], [1, 3], [3, 2], [2, 0],
  [4, 5], [5, 7], [7, 6], [6, 4],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

function boxCorners(box: Box): Vec3[] {
  const out: Vec3[] = [];
  for (let i = 0; i < 8; i++) {
    out.push([
      i & 1 ? box.max[0] : box.min[0],
      i & 2 ? box.max[1] : box.min[1],
      i & 4 ? box.max[2] : box.min[2],
    ]);
  }
  return out;
}

export class Viewer {
  onBoxDrag:
    | ((roi: number, axis: 0 | 1 | 2, side: "min" | "max", ray: Ray, phase: "move" | "end") => void)
    | null = null;

  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private raycaster = new THREE.Raycaster();

  private points: THREE.Points | null = null;
  private frusta: THREE.LineSegments | null = null;
  private frustaViewIds: number[] = [];
  private boxGroup = new THREE.Group();
  private handles: THREE.Mesh[] = [];
  private activeBox = -1;
  private drag: { roi: number; handle: HandleRef } | null = null;
  private running = true;

  constructor(private container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.renderer.setClearColor(0x14161a);
    container.appendChild(this.renderer.domElement);

    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 1000);
    this.camera.up.set(0, 0, 1);
    this.scene.add(this.boxGroup);

    // drag listeners first: handle grabs stop the event before the orbit
    // controller (registered below) ever sees it
    this.renderer.domElement.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    this.renderer.domElement.addEventListener("pointermove", (e) => this.onPointerMove(e));
    this.renderer.domElement.addEventListener("pointerup", (e) => this.onPointerUp(e));
    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    window.addEventListener("resize", () => this.resize());
    this.resize();

    const loop = () => {
      if (!this.running) return;
      this.renderer.render(this.scene, this.camera);
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  setPoints(positions: Vec3[], colors: Vec3[]): void {
    if (this.points !== null) {
      this.scene.remove(this.points);
      this.points.geometry.dispose();
    }
    const n = positions.length;
    const pos = new Float32Array(n * 3);
    const col = new Float32Array(n * 3);
    const center = new THREE.Vector3();
    for (let i = 0; i < n; i++) {
      pos[3 * i] = positions[i][0];
      pos[3 * i + 1] = positions[i][1];
      pos[3 * i + 2] = positions[i][2];
      col[3 * i] = colors[i][0] / 255;
      col[3 * i + 1] = colors[i][1] / 255;
      col[3 * i + 2] = colors[i][2] / 255;
      center.x += positions[i][0];
      center.y += positions[i][1];
      center.z += positions[i][2];
    }
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(pos, 3));
    geo.setAttribute("color", new THREE.BufferAttribute(col, 3));
    const mat = new THREE.PointsMaterial({ size: 0.02, vertexColors: true });
    this.points = new THREE.Points(geo, mat);
    this.scene.add(this.points);

    if (n > 0) {
      center.multiplyScalar(1 / n);
      let r2 = 0;
      for (let i = 0; i < n; i++) {
        const dx = pos[3 * i] - center.x;
        const dy = pos[3 * i + 1] - center.y;
        const dz = pos[3 * i + 2] - center.z;
        r2 = Math.max(r2, dx * dx + dy * dy + dz * dz);
      }
      this.controls.frame(center, Math.sqrt(r2));
    }
  }

  /** Build all frusta as one LineSegments; colors update in place later. */
  setFrusta(views: ViewInfo[]): void {
    if (this.frusta !== null) {
      this.scene.remove(this.frusta);
      this.frusta.geometry.dispose();
    }
    this.frustaViewIds = views.map((v) => v.view_id);
    const segs = 8; // apex-to-corner x4, rim x4
    const pos = new Float32Array(views.length * segs * 2 * 3);
    let o = 0;
    const put = (p: Vec3) => {
      pos[o++] = p[0];
      pos[o++] = p[1];
      pos[o++] = p[2];
    };
    for (const view of views) {
      const rows = quatRows(view.rotation);
      const fwd = rows[2];
      const right = rows[0];
      const down = rows[1];
      const apex = view.center;
      const corners: Vec3[] = [];
      for (const [su, sv] of [[-1, -1], [1, -1], [1, 1], [-1, 1]] as const) {
        corners.push([
          apex[0] + FRUSTUM_DEPTH * (fwd[0] + 0.6 * su * right[0] + 0.45 * sv * down[0]),
          apex[1] + FRUSTUM_DEPTH * (fwd[1] + 0.6 * su * right[1] + 0.45 * sv * down[1]),
          apex[2] + FRUSTUM_DEPTH * (fwd[2] + 0.6 * su * right[2] + 0.45 * sv * down[2]),
        ]);
      }
      for (let i = 0; i < 4; i++) {
        put(apex);
        put(corners[i]);
      }
      for (let i = 0; i < 4; i++) {
        put(corners[i]);
        put(corners[(i + 1) % 4]);
      }
    }
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(pos, 3));
    geo.setAttribute(
      "color",
      new THREE.BufferAttribute(new Float32Array(pos.length).fill(0.5), 3),
    );
    this.frusta = new THREE.LineSegments(
      geo,
      new THREE.LineBasicMaterial({ vertexColors: true }),
    );
    this.scene.add(this.frusta);
  }

  /** Recolor frusta; order must match the views passed to setFrusta. */
  setFrustumColors(cssColors: string[]): void {
    if (this.frusta === null) return;
    const attr = this.frusta.geometry.getAttribute("color") as THREE.BufferAttribute;
    const data = attr.array as Float32Array;
    const c = new THREE.Color();
    const vertsPerView = 16;
    for (let v = 0; v < this.frustaViewIds.length; v++) {
      c.set(cssColors[v] ?? "#888888");
      for (let k = 0; k < vertsPerView; k++) {
        const base = (v * vertsPerView + k) * 3;
        data[base] = c.r;
        data[base + 1] = c.g;
        data[base + 2] = c.b;
      }
    }
    attr.needsUpdate = true;
  }

  /**
   * Rebuild the gizmo group. The active box gets six face handles sized to
   * the current camera distance so they stay grabbable when zoomed out.
   */
  setBoxes(boxes: BoxDisplay[], active: number): void {
    this.boxGroup.clear();
    this.handles = [];
    this.activeBox = active;
    boxes.forEach((entry, idx) => {
      const corners = boxCorners(entry.box);
      const pos = new Float32Array(BOX_EDGES.length * 2 * 3);
      let o = 0;
      for (const [a, b] of BOX_EDGES) {
        for (const p of [corners[a], corners[b]]) {
          pos[o++] = p[0];
          pos[o++] = p[1];
          pos[o++] = p[2];
        }
      }
      const geo = new THREE.BufferGeometry();
      geo.setAttribute("position", new THREE.BufferAttribute(pos, 3));
      const mat = new THREE.LineBasicMaterial({
        color: entry.color,
        transparent: idx !== active,
        opacity: idx === active ? 1.0 : 0.45,
      });
      this.boxGroup.add(new THREE.LineSegments(geo, mat));
    });

    if (active >= 0 && active < boxes.length) {
      const box = boxes[active].box;
      const r = HANDLE_RADIUS * Math.max(1, this.controls.radius / 4);
      const axisColors = [0xd05050, 0x50b050, 0x5070d0];
      for (const axis of [0, 1, 2] as const) {
        for (const side of ["min", "max"] as const) {
          const mesh = new THREE.Mesh(
            new THREE.SphereGeometry(r, 12, 10),
            new THREE.MeshBasicMaterial({ color: axisColors[axis] }),
          );
          const c = faceCenter(box, axis, side);
          mesh.position.set(c[0], c[1], c[2]);
          mesh.userData.handle = { axis, side } satisfies HandleRef;
          this.boxGroup.add(mesh);
          this.handles.push(mesh);
        }
      }
    }
  }

  /** Current viewpoint in the convention the preview endpoint expects. */
  cameraPose(): { rotation: number[]; translation: number[] } {
    // the render convention is x right, y down, z forward; three cameras
    // look down -z with y up, so flip by a half turn about x first
    const flip = new THREE.Quaternion(1, 0, 0, 0);
    const q = flip.multiply(this.camera.quaternion.clone().invert());
    const t = this.camera.position.clone().negate().applyQuaternion(q);
    return { rotation: [q.w, q.x, q.y, q.z], translation: [t.x, t.y, t.z] };
  }

  private pointerRay(e: PointerEvent): Ray {
    const rect = this.renderer.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((e.clientX - rect.left) / rect.width) * 2 - 1,
      -((e.clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    const r = this.raycaster.ray;
    return {
      origin: [r.origin.x, r.origin.y, r.origin.z],
      dir: [r.direction.x, r.direction.y, r.direction.z],
    };
  }

  private onPointerDown(e: PointerEvent): void {
    if (e.button !== 0 || this.activeBox < 0) return;
    this.pointerRay(e); // refreshes raycaster from this event
    const hits = this.raycaster.intersectObjects(this.handles, false);
    if (hits.length === 0) return;
    const handle = hits[0].object.userData.handle as HandleRef;
    this.drag = { roi: this.activeBox, handle };
    this.controls.enabled = false;
    this.renderer.domElement.setPointerCapture(e.pointerId);
    e.stopImmediatePropagation(); // keep the orbit handler from grabbing it
  }

  private onPointerMove(e: PointerEvent): void {
    if (this.drag === null) return;
    const ray = this.pointerRay(e);
    this.onBoxDrag?.(this.drag.roi, this.drag.handle.axis, this.drag.handle.side, ray, "move");
  }

  private onPointerUp(e: PointerEvent): void {
    if (this.drag === null) return;
    const drag = this.drag;
    this.drag = null;
    this.controls.enabled = true;
    if (this.renderer.domElement.hasPointerCapture(e.pointerId)) {
      this.renderer.domElement.releasePointerCapture(e.pointerId);
    }
    this.onBoxDrag?.(drag.roi, drag.handle.axis, drag.handle.side, this.pointerRay(e), "end");
  }

  private resize(): void {
    const w = this.container.clientWidth || 800;
    const h = this.container.clientHeight || 600;
    this.renderer.setSize(w, h);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  dispose(): void {
    this.running = false;
    this.controls.dispose();
    this.renderer.dispose();
    this.container.removeChild(this.renderer.domElement);
  }
}
