/**
 * Small orbit controller: left drag rotates, right or shift drag pans,
 * wheel dollies. No inertia. The gizmo sets enabled=false during handle
 * drags so the camera holds still.
 */

import * as THREE from "three";

export class OrbitControls {
  enabled = true;
  readonly target = new THREE.Vector3(0, 0, 0);

  private spherical = new THREE.Spherical(6, 1.1, 0.7);
  private dragging: "rotate" | "pan" | null = null;
  private lastX = 0;
  private lastY = 0;
  private detach: () => void;

  constructor(
    private camera: THREE.PerspectiveCamera,
    private dom: HTMLElement,
  ) {
    const down = (e: PointerEvent) => this.onDown(e);
    const move = (e: PointerEvent) => this.onMove(e);
    const up = (e: PointerEvent) => this.onUp(e);
    const wheel = (e: WheelEvent) => this.onWheel(e);
    const menu = (e: Event) => e.preventDefault();
    dom.addEventListener("pointerdown", down);
    dom.addEventListener("pointermove", move);
    dom.addEventListener("pointerup", up);
    dom.addEventListener("pointercancel", up);
    dom.addEventListener("wheel", wheel, { passive: false });
    dom.addEventListener("contextmenu", menu);
    this.detach = () => {
      dom.removeEventListener("pointerdown", down);
      dom.removeEventListener("pointermove", move);
      dom.removeEventListener("pointerup", up);
      dom.removeEventListener("pointercancel", up);
      dom.removeEventListener("wheel", wheel);
      dom.removeEventListener("contextmenu", menu);
    };
    this.apply();
  }

  /** Place the camera to see a sphere of the given radius around center. */
  frame(center: THREE.Vector3, radius: number): void {
    this.target.copy(center);
    this.spherical.radius = Math.max(0.5, radius * 2.2);
    this.apply();
  }

  get radius(): number {
    return this.spherical.radius;
  }

  private onDown(e: PointerEvent): void {
    if (!this.enabled) return;
    this.dragging = e.button === 2 || e.shiftKey ? "pan" : "rotate";
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    this.dom.setPointerCapture(e.pointerId);
  }

  private onMove(e: PointerEvent): void {
    if (!this.enabled || this.dragging === null) return;
    const dx = e.clientX - this.lastX;
    const dy = e.clientY - this.lastY;
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    if (this.dragging === "rotate") {
      this.spherical.theta -= dx * 0.008;
      this.spherical.phi = THREE.MathUtils.clamp(
        this.spherical.phi - dy * 0.008,
        0.05,
        Math.PI - 0.05,
      );
    } else {
      const scale = this.spherical.radius * 0.0016;
      const right = new THREE.Vector3().setFromMatrixColumn(this.camera.matrix, 0);
      const upv = new THREE.Vector3().setFromMatrixColumn(this.camera.matrix, 1);
      this.target.addScaledVector(right, -dx * scale);
      this.target.addScaledVector(upv, dy * scale);
    }
    this.apply();
  }

  private onUp(e: PointerEvent): void {
    if (this.dragging !== null && this.dom.hasPointerCapture(e.pointerId)) {
      this.dom.releasePointerCapture(e.pointerId);
    }
    this.dragging = null;
  }

  private onWheel(e: WheelEvent): void {
    if (!this.enabled) return;
    e.preventDefault();
    const factor = Math.exp(e.deltaY * 0.001);
    this.spherical.radius = THREE.MathUtils.clamp(this.spherical.radius * factor, 0.05, 500);
    this.apply();
  }

  private apply(): void {
    // z-up scene, so build the offset directly instead of setFromSpherical
    const { radius: r, phi, theta } = this.spherical;
    const offset = new THREE.Vector3(
      r * Math.sin(phi) * Math.cos(theta),
      r * Math.sin(phi) * Math.sin(theta),
      r * Math.cos(phi),
    );
    this.camera.up.set(0, 0, 1);
    this.camera.position.copy(this.target).add(offset);
    this.camera.lookAt(this.target);
    this.camera.updateMatrix();
  }

  dispose(): void {
    this.detach();
  }
}
