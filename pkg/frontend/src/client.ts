/**
 * Typed fetch wrapper plus the two request schedulers the UI needs:
 * a debounced latest-wins channel for grouping (box drags fire constantly)
 * and a single-flight gate for previews (renders are slow, never stack them).
 */

import {
  apiErrorSchema,
  buildExportEnvelope,
  groupResponseSchema,
  previewResponseSchema,
  reconSummarySchema,
  roisEnvelopeSchema,
  saveRoisResponseSchema,
  specToDraft,
  type AabbJson,
  type GroupResponse,
  type PreviewResponse,
  type ReconSummary,
  type RoiDraft,
} from "./protocol.js";

export class ApiFailure extends Error {
  constructor(
    public status: number,
    public errorName: string,
    detail: string,
  ) {
    super(detail);
  }
}

/** 422 from /api/group: the box selects no reconstruction points. */
export class EmptyBoxError extends ApiFailure {}

/** 409 from /api/preview: the server was started without render fields. */
export class FieldsNotLoadedError extends ApiFailure {}

async function raiseFor(resp: Response): Promise<never> {
  let name = "HttpError";
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = apiErrorSchema.parse(await resp.json());
    name = body.error;
    detail = body.detail ?? detail;
  } catch {
    // non-JSON error body, keep the status line
  }
  if (resp.status === 422) throw new EmptyBoxError(resp.status, name, detail);
  if (resp.status === 409) throw new FieldsNotLoadedError(resp.status, name, detail);
  throw new ApiFailure(resp.status, name, detail);
}

export interface GroupQuery {
  aabb: AabbJson;
  threshold_fraction: number;
}

export interface PreviewQuery {
  view?: number;
  pose?: { rotation: number[]; translation: number[] };
  mode: "scene-only" | "composed";
  max_dim?: number;
}

type FetchFn = typeof fetch;

export class ApiClient {
  constructor(
    public baseUrl: string = "",
    private fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  private async post(path: string, body: unknown, signal?: AbortSignal): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) await raiseFor(resp);
    return resp.json();
  }

  private async get(path: string, signal?: AbortSignal): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + path, { signal });
    if (!resp.ok) await raiseFor(resp);
    return resp.json();
  }

  async health(): Promise<{ reconstruction: boolean; fields: boolean }> {
    const body = (await this.get("/api/health")) as Record<string, unknown>;
    return { reconstruction: body.reconstruction === true, fields: body.fields === true };
  }

  async reconstruction(signal?: AbortSignal): Promise<ReconSummary> {
    return reconSummarySchema.parse(await this.get("/api/reconstruction", signal));
  }

  async group(query: GroupQuery, signal?: AbortSignal): Promise<GroupResponse> {
    return groupResponseSchema.parse(await this.post("/api/group", query, signal));
  }

  async preview(query: PreviewQuery, signal?: AbortSignal): Promise<PreviewResponse> {
    return previewResponseSchema.parse(await this.post("/api/preview", query, signal));
  }

  async saveRois(drafts: RoiDraft[]): Promise<{ config_id: string; count: number }> {
    return saveRoisResponseSchema.parse(
      await this.post("/api/rois", buildExportEnvelope(drafts)),
    );
  }

  async rois(): Promise<RoiDraft[]> {
    const env = roisEnvelopeSchema.parse(await this.get("/api/rois"));
    return env.rois.map(specToDraft);
  }
}

export interface GroupSink {
  onResult(query: GroupQuery, resp: GroupResponse): void;
  onEmptyBox(query: GroupQuery): void;
  onError(err: unknown): void;
}

/**
 * Debounces grouping queries and guarantees at most one request in flight.
 * A newer query aborts the running one, and responses that lost the race are
 * dropped, so the sink only ever sees results in submission order with the
 * latest query winning.
 */
export class GroupRequester {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pending: GroupQuery | null = null;
  private inflight: AbortController | null = null;
  private generation = 0;

  constructor(
    private runQuery: (q: GroupQuery, signal: AbortSignal) => Promise<GroupResponse>,
    private sink: GroupSink,
    public debounceMs = 150,
  ) {}

  /** Queue a query; it fires debounceMs after the last edit. */
  request(query: GroupQuery): void {
    this.pending = query;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => this.fire(), this.debounceMs);
  }

  /** Skip the debounce window, e.g. on slider release. */
  flush(): void {
    if (this.pending === null) return;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.fire();
  }

  private fire(): void {
    const query = this.pending;
    this.timer = null;
    this.pending = null;
    if (query === null) return;

    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const gen = ++this.generation;

    this.runQuery(query, controller.signal).then(
      (resp) => {
        if (gen !== this.generation) return; // a newer query superseded this one
        this.inflight = null;
        this.sink.onResult(query, resp);
      },
      (err) => {
        if (gen !== this.generation) return;
        this.inflight = null;
        if (controller.signal.aborted) return;
        if (err instanceof EmptyBoxError) this.sink.onEmptyBox(query);
        else this.sink.onError(err);
      },
    );
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.pending = null;
    this.generation++;
    this.inflight?.abort();
    this.inflight = null;
  }
}

/**
 * At most one preview render in flight. Requests made while busy replace the
 * queued one; when the running render finishes, the newest request goes out.
 */
export class PreviewGate {
  private busy = false;
  private queued: PreviewQuery | null = null;

  constructor(
    private runQuery: (q: PreviewQuery) => Promise<PreviewResponse>,
    private onResult: (q: PreviewQuery, r: PreviewResponse) => void,
    private onError: (err: unknown) => void,
  ) {}

  request(query: PreviewQuery): void {
    if (this.busy) {
      this.queued = query;
      return;
    }
    this.busy = true;
    this.runQuery(query).then(
      (resp) => {
        this.onResult(query, resp);
        this.finish();
      },
      (err) => {
        this.onError(err);
        this.finish();
      },
    );
  }

  get inFlight(): boolean {
    return this.busy;
  }

  private finish(): void {
    this.busy = false;
    const next = this.queued;
    this.queued = null;
    if (next !== null) this.request(next);
  }
}
