import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import {
  EmptyBoxError,
  GroupRequester,
  PreviewGate,
  type GroupQuery,
} from "../src/client.js";
import type { GroupResponse, PreviewResponse } from "../src/protocol.js";

function query(x: number): GroupQuery {
  return { aabb: { min: [-x, -1, 0], max: [x, 1, 1] }, threshold_fraction: 0.1 };
}

function response(n: number): GroupResponse {
  return { nbTotalPoints: n, counts: {}, selected: [n] };
}

interface Call {
  query: GroupQuery;
  signal: AbortSignal;
  resolve: (r: GroupResponse) => void;
  reject: (e: unknown) => void;
}

function harness(debounceMs = 150) {
  const calls: Call[] = [];
  const results: GroupResponse[] = [];
  const emptyBoxes: GroupQuery[] = [];
  const errors: unknown[] = [];
  const requester = new GroupRequester(
    (q, signal) =>
      new Promise<GroupResponse>((resolve, reject) => {
        calls.push({ query: q, signal, resolve, reject });
      }),
    {
      onResult: (_q, r) => results.push(r),
      onEmptyBox: (q) => emptyBoxes.push(q),
      onError: (e) => errors.push(e),
    },
    debounceMs,
  );
  return { requester, calls, results, emptyBoxes, errors };
}

// real microtasks keep running; only the debounce clock is faked
const settle = () => new Promise((r) => setImmediate(r));

beforeEach(() => {
  vi.useFakeTimers({ toFake: ["setTimeout", "clearTimeout"] });
});

afterEach(() => {
  vi.useRealTimers();
});

describe("GroupRequester debounce", () => {
  it("coalesces a drag burst into one request for the last box", async () => {
    const h = harness();
    h.requester.request(query(1));
    vi.advanceTimersByTime(100);
    h.requester.request(query(2));
    vi.advanceTimersByTime(100); // only 100 ms since the last edit
    expect(h.calls).toHaveLength(0);
    vi.advanceTimersByTime(60);
    expect(h.calls).toHaveLength(1);
    expect(h.calls[0].query).toEqual(query(2));

    h.calls[0].resolve(response(5));
    await settle();
    expect(h.results).toEqual([response(5)]);
  });

  it("flush skips the remaining debounce wait", () => {
    const h = harness();
    h.requester.request(query(1));
    expect(h.calls).toHaveLength(0);
    h.requester.flush();
    expect(h.calls).toHaveLength(1);
    h.requester.flush(); // nothing pending, no second request
    expect(h.calls).toHaveLength(1);
  });

  it("aborts the stale request and drops its late response", async () => {
    const h = harness();
    h.requester.request(query(1));
    vi.advanceTimersByTime(150);
    expect(h.calls).toHaveLength(1);

    h.requester.request(query(2));
    vi.advanceTimersByTime(150);
    expect(h.calls).toHaveLength(2);
    expect(h.calls[0].signal.aborted).toBe(true);
    expect(h.calls[1].signal.aborted).toBe(false);

    // the superseded request resolves late; its result must not surface
    h.calls[0].resolve(response(1));
    await settle();
    expect(h.results).toEqual([]);

    h.calls[1].resolve(response(2));
    await settle();
    expect(h.results).toEqual([response(2)]);
    expect(h.errors).toEqual([]);
  });

  it("swallows the abort rejection of a superseded request", async () => {
    const h = harness();
    h.requester.request(query(1));
    vi.advanceTimersByTime(150);
    h.requester.request(query(2));
    vi.advanceTimersByTime(150);

    h.calls[0].reject(new DOMException("aborted", "AbortError"));
    await settle();
    expect(h.errors).toEqual([]);
    expect(h.emptyBoxes).toEqual([]);
  });

  it("routes 422 to the empty-box handler", async () => {
    const h = harness();
    h.requester.request(query(1));
    vi.advanceTimersByTime(150);
    h.calls[0].reject(new EmptyBoxError(422, "EmptyRoi", "no points"));
    await settle();
    expect(h.emptyBoxes).toEqual([query(1)]);
    expect(h.errors).toEqual([]);
  });

  it("dispose cancels pending and in-flight work", async () => {
    const h = harness();
    h.requester.request(query(1));
    vi.advanceTimersByTime(150);
    h.requester.request(query(2)); // still debouncing
    h.requester.dispose();
    vi.advanceTimersByTime(1000);
    expect(h.calls).toHaveLength(1); // the debounced second request never fired
    expect(h.calls[0].signal.aborted).toBe(true);

    h.calls[0].resolve(response(1));
    await settle();
    expect(h.results).toEqual([]);
  });
});

describe("PreviewGate", () => {
  function previewHarness() {
    const calls: { mode: string; resolve: (r: PreviewResponse) => void; reject: (e: unknown) => void }[] = [];
    const shown: string[] = [];
    const errors: unknown[] = [];
    const gate = new PreviewGate(
      (q) =>
        new Promise<PreviewResponse>((resolve, reject) => {
          calls.push({ mode: q.mode, resolve, reject });
        }),
      (_q, r) => shown.push(r.mode),
      (e) => errors.push(e),
    );
    const done = (i: number, mode: "scene-only" | "composed") =>
      calls[i].resolve({ mode, width: 1, height: 1, png: "", stats: null, elapsed_ms: 1 });
    return { gate, calls, shown, errors, done };
  }

  it("holds one render in flight and keeps only the newest waiter", async () => {
    const h = previewHarness();
    h.gate.request({ mode: "scene-only" });
    h.gate.request({ mode: "composed" });
    h.gate.request({ mode: "composed", max_dim: 64 });
    expect(h.calls).toHaveLength(1);
    expect(h.gate.inFlight).toBe(true);

    h.done(0, "scene-only");
    await settle();
    expect(h.calls).toHaveLength(2); // the queued latest request went out
    expect(h.calls[1].mode).toBe("composed");

    h.done(1, "composed");
    await settle();
    expect(h.shown).toEqual(["scene-only", "composed"]);
    expect(h.gate.inFlight).toBe(false);
  });

  it("reports errors and frees the gate", async () => {
    const h = previewHarness();
    h.gate.request({ mode: "scene-only" });
    h.calls[0].reject(new Error("boom"));
    await settle();
    expect(h.errors).toHaveLength(1);
    expect(h.gate.inFlight).toBe(false);
    h.gate.request({ mode: "scene-only" });
    expect(h.calls).toHaveLength(2);
  });
});
