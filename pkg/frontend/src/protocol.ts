/**
 * Wire types for the roi-compose service, validated with zod so a drifting
 * server shows up as a parse error instead of NaNs in the viewport.
 *
 * The export envelope written by the UI is the same "roi-groups v1" shape the
 * server stores and the CLI reads, so a file saved here feeds group/evaluate
 * without translation.
 */

import { z } from "zod";

export const GROUPS_SCHEMA = "roi-groups v1";

const vec3 = z.tuple([z.number(), z.number(), z.number()]);
const quat = z.tuple([z.number(), z.number(), z.number(), z.number()]);

export type Vec3 = z.infer<typeof vec3>;

export const aabbSchema = z.object({
  min: vec3,
  max: vec3,
});
export type AabbJson = z.infer<typeof aabbSchema>;

export const roiSpecSchema = z.object({
  name: z.string().min(1),
  aabb: aabbSchema,
  threshold_fraction: z.number().min(0).max(1).default(0.1),
  scene_integration_fraction: z.number().default(0.5),
  test_fraction: z.number().default(0.15),
  d_max_override: z.number().positive().optional(),
});
export type RoiSpecJson = z.infer<typeof roiSpecSchema>;

export const viewSchema = z.object({
  view_id: z.number().int(),
  name: z.string(),
  camera_id: z.number().int(),
  rotation: quat,
  translation: vec3,
  center: vec3,
});
export type ViewInfo = z.infer<typeof viewSchema>;

export const intrinsicsSchema = z.object({
  camera_id: z.number().int(),
  model: z.string(),
  width: z.number().int(),
  height: z.number().int(),
  fx: z.number(),
  fy: z.number(),
  cx: z.number(),
  cy: z.number(),
});
export type IntrinsicsInfo = z.infer<typeof intrinsicsSchema>;

export const reconSummarySchema = z.object({
  schema: z.literal("roi-recon-summary v1"),
  seed: z.number().int(),
  point_budget: z.number().int(),
  nbTotalPoints: z.number().int(),
  points: z.object({
    ids: z.array(z.number().int()),
    positions: z.array(vec3),
    colors: z.array(vec3),
  }),
  views: z.array(viewSchema),
  intrinsics: z.array(intrinsicsSchema),
});
export type ReconSummary = z.infer<typeof reconSummarySchema>;

// The grouping response is rendered verbatim: selected ids straight from the
// server decide frustum colors, nothing is recounted client side.
export const groupResponseSchema = z.object({
  nbTotalPoints: z.number().int(),
  counts: z.record(z.string(), z.number().int()),
  selected: z.array(z.number().int()),
});
export type GroupResponse = z.infer<typeof groupResponseSchema>;

export const previewResponseSchema = z.object({
  mode: z.enum(["scene-only", "composed"]),
  width: z.number().int(),
  height: z.number().int(),
  png: z.string(),
  stats: z.unknown().nullable(),
  elapsed_ms: z.number(),
});
export type PreviewResponse = z.infer<typeof previewResponseSchema>;

export const apiErrorSchema = z.object({
  error: z.string(),
  category: z.string().optional(),
  detail: z.string().optional(),
});
export type ApiError = z.infer<typeof apiErrorSchema>;

export const saveRoisResponseSchema = z.object({
  config_id: z.string(),
  count: z.number().int(),
});

// Stored envelope entries are {spec: {...}}; the loader on the Python side
// also takes bare specs, so imports accept both.
const envelopeEntry = z.union([
  z.object({ spec: roiSpecSchema }).transform((e) => e.spec),
  roiSpecSchema,
]);

export const roisEnvelopeSchema = z.object({
  schema: z.string().optional(),
  rois: z.array(envelopeEntry),
});

/** Editable box as the UI holds it, before it becomes a RoiSpec. */
export interface RoiDraft {
  name: string;
  min: Vec3;
  max: Vec3;
  thresholdFraction: number;
  sceneIntegrationFraction: number;
  testFraction: number;
  dMaxOverride: number | null;
}

export function draftToSpec(d: RoiDraft): RoiSpecJson {
  const spec: RoiSpecJson = {
    name: d.name,
    aabb: { min: [...d.min], max: [...d.max] },
    threshold_fraction: d.thresholdFraction,
    scene_integration_fraction: d.sceneIntegrationFraction,
    test_fraction: d.testFraction,
  };
  if (d.dMaxOverride !== null) spec.d_max_override = d.dMaxOverride;
  return spec;
}

export function specToDraft(s: RoiSpecJson): RoiDraft {
  return {
    name: s.name,
    min: [...s.aabb.min],
    max: [...s.aabb.max],
    thresholdFraction: s.threshold_fraction,
    sceneIntegrationFraction: s.scene_integration_fraction,
    testFraction: s.test_fraction,
    dMaxOverride: s.d_max_override ?? null,
  };
}

export function buildExportEnvelope(drafts: RoiDraft[]): {
  schema: string;
  rois: { spec: RoiSpecJson }[];
} {
  return { schema: GROUPS_SCHEMA, rois: drafts.map((d) => ({ spec: draftToSpec(d) })) };
}

/** Parse a rois file (exported envelope, or a bare list of specs). */
export function parseRoisFile(text: string): RoiDraft[] {
  const raw: unknown = JSON.parse(text);
  const specs = Array.isArray(raw)
    ? z.array(envelopeEntry).parse(raw)
    : roisEnvelopeSchema.parse(raw).rois;
  return specs.map(specToDraft);
}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeysDeep);
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeysDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

/** Compact JSON with recursively sorted keys and a trailing newline. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortKeysDeep(value)) + "\n";
}
