/**
 * App wiring: one Viewer, one ApiClient, a debounced grouping channel and a
 * single-flight preview gate. State lives in a SessionState value; every
 * mutation goes through the pure helpers and ends with sync().
 */

import {
  ApiClient,
  EmptyBoxError,
  FieldsNotLoadedError,
  GroupRequester,
  PreviewGate,
  type GroupQuery,
  type PreviewQuery,
} from "./client.js";
import { dragFace, type Ray } from "./boxmath.js";
import {
  buildExportEnvelope,
  canonicalJson,
  parseRoisFile,
  type PreviewResponse,
} from "./protocol.js";
import {
  addRoi,
  applyGrouping,
  clearGrouping,
  frustumColors,
  initialState,
  newDraft,
  normalizeBox,
  removeRoi,
  replaceRois,
  roiColor,
  setRoiBox,
  setRoiThreshold,
  type SessionState,
} from "./state.js";
import { Viewer } from "./viewer.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  state: SessionState = initialState();

  private api = new ApiClient("");
  private viewer = new Viewer(el("viewport"));
  private requester: GroupRequester;
  private previews: PreviewGate;
  private pendingRoi = -1; // roi index the in-flight grouping belongs to
  private lastPreviewPose: PreviewQuery["pose"] | null = null;

  private banner = el<HTMLDivElement>("banner");
  private roiList = el<HTMLUListElement>("roi-list");
  private roiEdit = el<HTMLDivElement>("roi-edit");
  private nameInput = el<HTMLInputElement>("roi-name");
  private slider = el<HTMLInputElement>("threshold");
  private sliderValue = el<HTMLSpanElement>("threshold-value");
  private groupingLine = el<HTMLDivElement>("grouping-line");
  private sessionLine = el<HTMLDivElement>("session-line");
  private previewPanel = el<HTMLElement>("preview-panel");
  private sceneImg = el<HTMLImageElement>("preview-scene");
  private composedImg = el<HTMLImageElement>("preview-composed");
  private acceptCount = el<HTMLSpanElement>("accept-count");

  constructor() {
    this.requester = new GroupRequester(
      (q, signal) => this.api.group(q, signal),
      {
        onResult: (_q, resp) => {
          this.state = applyGrouping(this.state, this.pendingRoi, resp);
          this.sync();
        },
        onEmptyBox: () => {
          this.state = clearGrouping(this.state, "box captures no points");
          this.sync();
        },
        onError: (err) => this.showBanner(describe(err)),
      },
    );
    this.previews = new PreviewGate(
      (q) => this.api.preview(q),
      (q, resp) => this.showPreview(q, resp),
      (err) => {
        if (err instanceof FieldsNotLoadedError) this.showBanner("load fields first");
        else this.showBanner(describe(err));
      },
    );

    this.viewer.onBoxDrag = (roi, axis, side, ray, phase) => this.dragBox(roi, axis, side, ray, phase);

    el("add-roi").addEventListener("click", () => {
      this.state = addRoi(this.state, newDraft(this.state));
      this.sync();
      this.queryActive();
    });
    this.nameInput.addEventListener("change", () => {
      const i = this.state.activeRoi;
      if (i < 0) return;
      const name = this.nameInput.value.trim();
      if (name.length === 0) return;
      this.state.rois = this.state.rois.map((r, k) => (k === i ? { ...r, name } : r));
      this.sync();
    });
    this.slider.addEventListener("input", () => {
      const i = this.state.activeRoi;
      if (i < 0) return;
      this.state = setRoiThreshold(this.state, i, Number(this.slider.value) / 100);
      this.sync();
      this.queryActive();
    });
    this.slider.addEventListener("change", () => this.requester.flush());
    el("export-rois").addEventListener("click", () => this.exportRois());
    el("save-rois").addEventListener("click", () => this.saveRois());
    el<HTMLInputElement>("import-rois").addEventListener("change", (e) => {
      const input = e.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) void this.importRois(file);
      input.value = "";
    });
    el("render-preview").addEventListener("click", () => this.renderPreview(true));
    for (const mode of ["scene-only", "composed"] as const) {
      el<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
        this.state.previewMode = mode;
        // same pose on purpose: toggling compares modes, not viewpoints
        this.renderPreview(false);
      });
    }
    el("reload").addEventListener("click", () => void this.boot());

    void this.boot();
  }

  /** Fetch the reconstruction and (re)build the static scene. Idempotent. */
  async boot(): Promise<void> {
    try {
      const recon = await this.api.reconstruction();
      this.state = { ...this.state, recon, banner: null };
      this.viewer.setPoints(recon.points.positions, recon.points.colors);
      this.viewer.setFrusta(recon.views);
      this.sessionLine.textContent =
        `${recon.points.ids.length.toLocaleString()} of ` +
        `${recon.nbTotalPoints.toLocaleString()} points, ${recon.views.length} cameras`;
      this.sync();
      this.queryActive();
    } catch (err) {
      this.showBanner(`service unreachable: ${describe(err)}`);
    }
  }

  /** Push state into the DOM and the viewer. */
  private sync(): void {
    const st = this.state;
    this.banner.hidden = st.banner === null;
    if (st.banner !== null) this.banner.textContent = st.banner;

    this.roiList.replaceChildren(
      ...st.rois.map((roi, i) => {
        const li = document.createElement("li");
        li.classList.toggle("active", i === st.activeRoi);
        const chip = document.createElement("span");
        chip.className = "chip";
        chip.style.background = roiColor(i);
        const label = document.createElement("span");
        label.textContent = roi.name;
        label.className = "roi-label";
        const drop = document.createElement("button");
        drop.textContent = "x";
        drop.title = "remove";
        drop.addEventListener("click", (e) => {
          e.stopPropagation();
          this.state = removeRoi(this.state, i);
          this.sync();
          this.queryActive();
        });
        li.append(chip, label, drop);
        li.addEventListener("click", () => {
          this.state.activeRoi = i;
          this.sync();
          this.queryActive();
        });
        return li;
      }),
    );

    const active = st.activeRoi >= 0 ? st.rois[st.activeRoi] : null;
    this.roiEdit.hidden = active === null;
    if (active !== null) {
      this.nameInput.value = active.name;
      this.slider.value = String(Math.round(active.thresholdFraction * 100));
      this.sliderValue.textContent = `${Math.round(active.thresholdFraction * 100)}%`;
    }

    if (st.grouping !== null && st.recon !== null) {
      const n = st.grouping.selected.length;
      this.groupingLine.textContent =
        `${n} of ${st.recon.views.length} cameras selected ` +
        `(${st.grouping.nbTotalPoints.toLocaleString()} points in box)`;
    } else {
      this.groupingLine.textContent = "";
    }

    this.viewer.setBoxes(
      st.rois.map((r, i) => ({ box: { min: r.min, max: r.max }, color: roiColor(i) })),
      st.activeRoi,
    );
    if (st.recon !== null) {
      const ids = st.recon.views.map((v) => v.view_id);
      this.viewer.setFrustumColors(frustumColors(ids, st.grouping));
    }
  }

  /** Debounced grouping query for the active box. */
  private queryActive(): void {
    const i = this.state.activeRoi;
    if (i < 0) {
      this.state = clearGrouping(this.state, null);
      this.sync();
      return;
    }
    const roi = this.state.rois[i];
    this.pendingRoi = i;
    const query: GroupQuery = {
      aabb: { min: [...roi.min], max: [...roi.max] },
      threshold_fraction: roi.thresholdFraction,
    };
    this.requester.request(query);
  }

  private dragBox(
    roi: number,
    axis: 0 | 1 | 2,
    side: "min" | "max",
    ray: Ray,
    phase: "move" | "end",
  ): void {
    const current = this.state.rois[roi];
    if (current === undefined) return;
    const { a, b } = dragFace({ min: current.min, max: current.max }, axis, side, ray);
    const { min, max } = normalizeBox(a, b);
    this.state = setRoiBox(this.state, roi, min, max);
    this.sync();
    this.queryActive();
    if (phase === "end") this.requester.flush();
  }

  private exportRois(): void {
    const text = canonicalJson(buildExportEnvelope(this.state.rois));
    const blob = new Blob([text], { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const a = document.createElement("a");
    a.href = url;
    a.download = "rois.json";
    a.click();
    URL.revokeObjectURL(url);
  }

  private async saveRois(): Promise<void> {
    try {
      const out = await this.api.saveRois(this.state.rois);
      this.showBanner(`saved ${out.count} rois (config ${out.config_id})`);
    } catch (err) {
      this.showBanner(describe(err));
    }
  }

  private async importRois(file: File): Promise<void> {
    try {
      const drafts = parseRoisFile(await file.text());
      this.state = replaceRois(this.state, drafts);
      this.sync();
      this.queryActive();
    } catch (err) {
      this.showBanner(`import failed: ${describe(err)}`);
    }
  }

  /** Render from the current viewpoint; reuse the last pose on mode toggles. */
  private renderPreview(capturePose: boolean): void {
    if (capturePose || this.lastPreviewPose === null) {
      this.lastPreviewPose = this.viewer.cameraPose();
    }
    this.previews.request({
      pose: this.lastPreviewPose,
      mode: this.state.previewMode,
      max_dim: 320,
    });
  }

  private showPreview(query: PreviewQuery, resp: PreviewResponse): void {
    this.previewPanel.hidden = false;
    const src = `data:image/png;base64,${resp.png}`;
    if (resp.mode === "scene-only") {
      this.sceneImg.src = src;
    } else {
      this.composedImg.src = src;
      this.acceptCount.textContent = `${acceptedRays(resp.stats)} rays accepted, ${resp.elapsed_ms} ms`;
    }
  }

  private showBanner(text: string): void {
    this.state = { ...this.state, banner: text };
    this.banner.hidden = false;
    this.banner.textContent = text;
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}

function acceptedRays(stats: unknown): number {
  // stats.rois[name].rays_accepted summed; tolerate missing pieces
  if (typeof stats !== "object" || stats === null) return 0;
  const rois = (stats as Record<string, unknown>).rois;
  if (typeof rois !== "object" || rois === null) return 0;
  let total = 0;
  for (const entry of Object.values(rois)) {
    const n = (entry as Record<string, unknown>)?.rays_accepted;
    if (typeof n === "number") total += n;
  }
  return total;
}

new App();
