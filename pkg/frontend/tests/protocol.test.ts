import { describe, expect, it } from "vitest";
import {
  buildExportEnvelope,
  canonicalJson,
  draftToSpec,
  groupResponseSchema,
  parseRoisFile,
  reconSummarySchema,
  specToDraft,
  type RoiDraft,
} from "../src/protocol.js";

const sampleRecon = {
  schema: "roi-recon-summary v1",
  seed: 0,
  point_budget: 1000,
  nbTotalPoints: 2,
  points: {
    ids: [1, 2],
    positions: [
      [0.1, 0.2, 0.3],
      [-1, 0, 2],
    ],
    colors: [
      [255, 0, 0],
      [0, 128, 255],
    ],
  },
  views: [
    {
      view_id: 7,
      name: "frame_0007.png",
      camera_id: 1,
      rotation: [1, 0, 0, 0],
      translation: [0, 0, 4],
      center: [0, 0, -4],
    },
  ],
  intrinsics: [
    { camera_id: 1, model: "PINHOLE", width: 640, height: 480, fx: 500, fy: 500, cx: 320, cy: 240 },
  ],
};

const draft: RoiDraft = {
  name: "ball",
  min: [-0.75, -0.75, -0.05],
  max: [0.75, 0.75, 0.85],
  thresholdFraction: 0.1,
  sceneIntegrationFraction: 0.5,
  testFraction: 0.15,
  dMaxOverride: 4.0,
};

describe("reconstruction summary schema", () => {
  it("accepts the service payload", () => {
    const parsed = reconSummarySchema.parse(sampleRecon);
    expect(parsed.views[0].center).toEqual([0, 0, -4]);
  });

  it("rejects a malformed position triplet", () => {
    const bad = structuredClone(sampleRecon);
    (bad.points.positions[0] as number[]).push(9);
    expect(() => reconSummarySchema.parse(bad)).toThrow();
  });
});

describe("group response schema", () => {
  it("keeps counts keyed by view id string", () => {
    const resp = groupResponseSchema.parse({
      nbTotalPoints: 42,
      counts: { "3": 40, "11": 2 },
      selected: [3],
    });
    expect(resp.counts["3"]).toBe(40);
    expect(resp.selected).toEqual([3]);
  });

  it("rejects fractional counts", () => {
    expect(() =>
      groupResponseSchema.parse({ nbTotalPoints: 1, counts: { "0": 0.5 }, selected: [] }),
    ).toThrow();
  });
});

describe("roi export round trip", () => {
  it("preserves every spec field through draft -> spec -> draft", () => {
    expect(specToDraft(draftToSpec(draft))).toEqual(draft);
  });

  it("omits d_max_override when unset and keeps it when set", () => {
    expect(draftToSpec({ ...draft, dMaxOverride: null })).not.toHaveProperty("d_max_override");
    expect(draftToSpec(draft).d_max_override).toBe(4.0);
  });

  it("writes the stored envelope shape", () => {
    const env = buildExportEnvelope([draft]);
    expect(env.schema).toBe("roi-groups v1");
    expect(env.rois).toHaveLength(1);
    expect(env.rois[0].spec.name).toBe("ball");
    expect(env.rois[0].spec.aabb).toEqual({ min: draft.min, max: draft.max });
  });

  it("re-imports its own export", () => {
    const text = canonicalJson(buildExportEnvelope([draft, { ...draft, name: "b", dMaxOverride: null }]));
    const back = parseRoisFile(text);
    expect(back).toEqual([draft, { ...draft, name: "b", dMaxOverride: null }]);
  });

  it("accepts bare spec lists and bare entries", () => {
    const spec = draftToSpec(draft);
    expect(parseRoisFile(JSON.stringify([spec]))).toEqual([draft]);
    expect(parseRoisFile(JSON.stringify({ rois: [spec] }))).toEqual([draft]);
    expect(parseRoisFile(JSON.stringify({ rois: [{ spec }] }))).toEqual([draft]);
  });

  it("exports an empty set as a valid config", () => {
    const text = canonicalJson(buildExportEnvelope([]));
    expect(JSON.parse(text)).toEqual({ schema: "roi-groups v1", rois: [] });
    expect(parseRoisFile(text)).toEqual([]);
  });
});

describe("canonicalJson", () => {
  it("sorts keys recursively and ends with a newline", () => {
    const text = canonicalJson({ b: 1, a: { d: [{ z: 0, y: 1 }], c: 2 } });
    expect(text).toBe('{"a":{"c":2,"d":[{"y":1,"z":0}]},"b":1}\n');
  });
});
