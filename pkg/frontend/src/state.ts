/**
 * Session state and the pure transforms the widgets call. Nothing in here
 * touches the DOM or three.js, and nothing mutates the reconstruction
 * summary: the server copy is the only truth and edits only touch ROI drafts.
 */

import type { GroupResponse, ReconSummary, RoiDraft, Vec3 } from "./protocol.js";

export type PreviewMode = "scene-only" | "composed";

export interface SessionState {
  recon: ReconSummary | null;
  rois: RoiDraft[];
  activeRoi: number;
  // latest grouping response, displayed verbatim
  grouping: GroupResponse | null;
  groupingForRoi: number;
  previewMode: PreviewMode;
  banner: string | null;
}

export function initialState(): SessionState {
  return {
    recon: null,
    rois: [],
    activeRoi: -1,
    grouping: null,
    groupingForRoi: -1,
    previewMode: "scene-only",
    banner: null,
  };
}

/** Componentwise sort so min <= max holds on every axis after any drag. */
export function normalizeBox(a: Vec3, b: Vec3): { min: Vec3; max: Vec3 } {
  const min: Vec3 = [Math.min(a[0], b[0]), Math.min(a[1], b[1]), Math.min(a[2], b[2])];
  const max: Vec3 = [Math.max(a[0], b[0]), Math.max(a[1], b[1]), Math.max(a[2], b[2])];
  return { min, max };
}

const ROI_HUES = [145, 28, 205, 330, 55, 260, 95, 0];

/** Stable per-ROI accent color for its gizmo and list entry. */
export function roiColor(index: number): string {
  const hue = ROI_HUES[index % ROI_HUES.length];
  return `hsl(${hue}, 70%, 55%)`;
}

export const SELECTED_FRUSTUM = "#3dbb5e"; // cameras the server picked
export const UNSELECTED_FRUSTUM = "#3a6fd8"; // everything else

/**
 * Frustum color per view id. The set comes straight from the last server
 * response; the client never recounts visibility.
 */
export function frustumColors(views: number[], grouping: GroupResponse | null): string[] {
  const selected = new Set(grouping ? grouping.selected : []);
  return views.map((vid) => (selected.has(vid) ? SELECTED_FRUSTUM : UNSELECTED_FRUSTUM));
}

function uniqueName(base: string, taken: Set<string>): string {
  if (!taken.has(base)) return base;
  for (let i = 2; ; i++) {
    const name = `${base}-${i}`;
    if (!taken.has(name)) return name;
  }
}

/** Fresh draft centered on the decimated cloud, sized to a third of it. */
export function newDraft(state: SessionState): RoiDraft {
  let lo: Vec3 = [-1, -1, -1];
  let hi: Vec3 = [1, 1, 1];
  const pts = state.recon?.points.positions ?? [];
  if (pts.length > 0) {
    lo = [Infinity, Infinity, Infinity];
    hi = [-Infinity, -Infinity, -Infinity];
    for (const p of pts) {
      for (let k = 0; k < 3; k++) {
        if (p[k] < lo[k]) lo[k] = p[k];
        if (p[k] > hi[k]) hi[k] = p[k];
      }
    }
  }
  const center = [0, 1, 2].map((k) => 0.5 * (lo[k] + hi[k]));
  const half = [0, 1, 2].map((k) => Math.max(1e-3, (hi[k] - lo[k]) / 6));
  const taken = new Set(state.rois.map((r) => r.name));
  return {
    name: uniqueName("roi", taken),
    min: [center[0] - half[0], center[1] - half[1], center[2] - half[2]],
    max: [center[0] + half[0], center[1] + half[1], center[2] + half[2]],
    thresholdFraction: 0.1,
    sceneIntegrationFraction: 0.5,
    testFraction: 0.15,
    dMaxOverride: null,
  };
}

export function addRoi(state: SessionState, draft: RoiDraft): SessionState {
  return { ...state, rois: [...state.rois, draft], activeRoi: state.rois.length };
}

export function removeRoi(state: SessionState, index: number): SessionState {
  const rois = state.rois.filter((_, i) => i !== index);
  const activeRoi = Math.min(state.activeRoi, rois.length - 1);
  const wasActive = index === state.groupingForRoi;
  return {
    ...state,
    rois,
    activeRoi,
    grouping: wasActive ? null : state.grouping,
    groupingForRoi: wasActive ? -1 : state.groupingForRoi,
  };
}

/** Replace one draft's box, keeping the min/max invariant. */
export function setRoiBox(state: SessionState, index: number, a: Vec3, b: Vec3): SessionState {
  const { min, max } = normalizeBox(a, b);
  const rois = state.rois.map((r, i) => (i === index ? { ...r, min, max } : r));
  return { ...state, rois };
}

export function setRoiThreshold(state: SessionState, index: number, t: number): SessionState {
  const clamped = Math.min(1, Math.max(0, t));
  const rois = state.rois.map((r, i) =>
    i === index ? { ...r, thresholdFraction: clamped } : r,
  );
  return { ...state, rois };
}

export function applyGrouping(
  state: SessionState,
  roiIndex: number,
  resp: GroupResponse,
): SessionState {
  return { ...state, grouping: resp, groupingForRoi: roiIndex, banner: null };
}

export function clearGrouping(state: SessionState, banner: string | null): SessionState {
  return { ...state, grouping: null, groupingForRoi: -1, banner };
}

/** Imported drafts replace the working set; gizmos rebuild from these. */
export function replaceRois(state: SessionState, drafts: RoiDraft[]): SessionState {
  return {
    ...state,
    rois: drafts,
    activeRoi: drafts.length > 0 ? 0 : -1,
    grouping: null,
    groupingForRoi: -1,
  };
}
