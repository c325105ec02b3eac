"""Ray-level composition of a scene field with per-ROI detail fields.

For every ray the pipeline decides, per ROI box:

  no-intersection   ray misses the box (or composition is off for it)
  rejected-distance camera farther from the box center than the ROI's d_max
  rejected-occluded scene depth sits in front of the box entry (pre-check)
  rejected-depth    the ROI field's own median depth falls outside the box span
  accepted          the ROI renders this ray inside [t_enter, t_exit]

Accepted ROIs replace the scene samples inside their interval: the scene
samples there turn invisible (repositioned to t=0 with sigma=0) and the ROI's
cached full-ray samples turn visible inside the interval. Every ROI always
contributes its full sample-slot block; rejected or missed ROIs contribute
all-invisible padding, so each composed ray in a batch has the same length
n_scene + sum(n_roi). Where two accepted intervals overlap, the ROI with the
nearer median depth keeps the overlap (ties by name order) and the other's
interval is clipped, possibly into two pieces.

With sample replacement disabled (ablations a/b) the scene sample positions
are kept and the ROI field is re-queried at the scene positions inside the
interval; those queries are counted, unlike the replacement path, which must
reuse the samples cached during depth filtering without a single new query.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import AblationUnsupported, IntervalOverlapUnresolved, ValidationError
from .fields import QueryCounter
from .geometry import Aabb, Interval, Ray, camera_center, camera_rays_batch, ray_aabb_intersect_batch
from .grouping import RoiSpec
from .rendering import (
    ImageBuffer,
    SamplerConfig,
    ShadedSamples,
    deltas_from_ts,
    depth_at_weight_batch,
    quadrature_batch,
    render_image,
    resolve_bounds,
    sample_and_shade_batch,
)
from .rng import STREAM_ROI_BASE, STREAM_SCENE_COARSE, STREAM_SCENE_FINE

_CHUNK = 4096  # composed arrays are wide; keep chunks moderate


class Verdict(enum.Enum):
    ACCEPTED = "accepted"
    NO_INTERSECTION = "no-intersection"
    REJECTED_DISTANCE = "rejected-distance"
    REJECTED_OCCLUDED = "rejected-occluded"
    REJECTED_DEPTH = "rejected-depth"


@dataclass
class RoiRuntime:
    """A grouped ROI ready to compose: spec + detail field + distance cap."""

    spec: RoiSpec
    field: object
    d_max: float
    sampler: SamplerConfig | None = None  # None: inherit the render sampler

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class CompositionConfig:
    enabled: bool = True
    enable_rsr: bool = True       # replace scene samples with cached ROI samples
    enable_drf: bool = True       # depth-based ray filtering
    enable_d_max: bool = True
    occlusion_precheck: bool = True
    depth_threshold: float = 0.5
    occlusion_eps_fraction: float = 1e-3  # of the scene bounds diagonal
    overlap_policy: str = "nearest-depth-wins"

    def __post_init__(self):
        if self.overlap_policy != "nearest-depth-wins":
            raise ValidationError(f"unknown overlap policy {self.overlap_policy!r}")
        if not (0.0 < self.depth_threshold < 1.0):
            raise ValidationError("depth_threshold must be in (0, 1)")


@dataclass
class RoiDecision:
    roi_name: str
    verdict: Verdict
    interval: Interval | None = None
    depth: float | None = None
    cached: ShadedSamples | None = None


@dataclass
class ResolvedRoi:
    """An accepted ROI after overlap resolution: possibly clipped intervals."""

    roi_name: str
    intervals: list
    depth: float
    cached: ShadedSamples | None = None


@dataclass
class ComposedRay:
    """Merged fixed-length sample sequence ready for quadrature."""

    ts: np.ndarray
    deltas: np.ndarray
    sigma: np.ndarray
    rgb: np.ndarray
    visible: np.ndarray
    sources: np.ndarray  # 0 = scene, i+1 = rois[i]
    t_far: float


@dataclass
class RoiStats:
    rays_intersecting: int = 0
    rays_accepted: int = 0
    rejected_distance: int = 0
    rejected_occluded: int = 0
    rejected_depth: int = 0
    shading_queries: int = 0    # field queries spent deciding / filling the cache
    compose_queries: int = 0    # field queries issued while assembling rays
    cached_samples_used: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CompositionStats:
    scene_queries: int = 0
    rois: dict = dc_field(default_factory=dict)          # name -> RoiStats
    intersect_maps: dict = dc_field(default_factory=dict)  # name -> (H,W) float32
    accept_maps: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "scene_queries": self.scene_queries,
            "rois": {name: rs.to_json() for name, rs in sorted(self.rois.items())},
        }


# ---------------------------------------------------------------------------
# single-ray pipeline (readable reference; the batch path must match it)
# ---------------------------------------------------------------------------

def roi_candidates(ray: Ray, cam_center: np.ndarray, rois, config: CompositionConfig):
    """ROIs whose box the ray crosses and whose d_max admits this camera.

    Returns [(RoiRuntime, Interval)] ordered by entry distance.
    """
    out = []
    for roi in rois:
        hit, t0, t1 = ray_aabb_intersect_batch(
            ray.origin[None], ray.direction[None], roi.spec.aabb, ray.t_near, ray.t_far
        )
        if not hit[0]:
            continue
        if config.enable_d_max:
            dist = float(np.linalg.norm(np.asarray(cam_center) - roi.spec.aabb.center))
            if dist > roi.d_max:
                continue
        out.append((roi, Interval(float(t0[0]), float(t1[0]))))
    out.sort(key=lambda pair: pair[1].t_enter)
    return out


def depth_filter(ray: Ray, roi: RoiRuntime, interval: Interval, scene_shaded: ShadedSamples,
                 config: CompositionConfig, sampler: SamplerConfig,
                 occlusion_eps: float, pixel_index: int = 0,
                 roi_index: int = 0) -> RoiDecision:
    """Accept or reject one candidate ROI for one ray.

    Order matters: the scene-occlusion pre-check runs first and costs no ROI
    queries; only survivors pay for the ROI shading pass. The shaded samples
    ride along on the decision so composition can reuse them.
    """
    if config.occlusion_precheck:
        _, w, _, _ = quadrature_batch(
            scene_shaded.sigma[None], scene_shaded.rgb[None], scene_shaded.deltas[None],
            (0, 0, 0), None if scene_shaded.visible is None else scene_shaded.visible[None],
        )
        scene_depth = depth_at_weight_batch(scene_shaded.ts[None], w, config.depth_threshold)[0]
        if not np.isnan(scene_depth) and scene_depth < interval.t_enter - occlusion_eps:
            return RoiDecision(roi.name, Verdict.REJECTED_OCCLUDED, interval)

    roi_sampler = roi.sampler or sampler
    ts, deltas, sigma, rgb = sample_and_shade_batch(
        roi.field, ray.origin[None], ray.direction[None],
        np.asarray([ray.t_near]), np.asarray([ray.t_far]),
        roi_sampler, np.asarray([pixel_index], dtype=np.uint64),
        STREAM_ROI_BASE + 2 * roi_index, STREAM_ROI_BASE + 2 * roi_index + 1,
    )
    _, w, _, _ = quadrature_batch(sigma, rgb, deltas, (0, 0, 0))
    depth = depth_at_weight_batch(ts, w, config.depth_threshold)[0]
    cached = ShadedSamples(ts[0], deltas[0], sigma[0], rgb[0], ray.t_far)
    if np.isnan(depth) or not (interval.t_enter <= depth <= interval.t_exit):
        return RoiDecision(roi.name, Verdict.REJECTED_DEPTH, interval, None, cached)
    return RoiDecision(roi.name, Verdict.ACCEPTED, interval, float(depth), cached)


def _subtract(spans, claim: Interval):
    """Remove a claimed interval from a list of disjoint spans."""
    out = []
    for s in spans:
        if claim.t_exit <= s.t_enter or claim.t_enter >= s.t_exit:
            out.append(s)
            continue
        if claim.t_enter > s.t_enter:
            out.append(Interval(s.t_enter, claim.t_enter))
        if claim.t_exit < s.t_exit:
            out.append(Interval(claim.t_exit, s.t_exit))
    return out


def resolve_overlaps(decisions) -> list:
    """Turn accepted decisions into disjoint claims, nearest depth first.

    Each ROI keeps its interval minus everything claimed by strictly nearer
    (or equal-depth, earlier-named) ROIs; a clipped interval can split in two.

    Raises:
        IntervalOverlapUnresolved: an accepted decision lacks a depth.
    """
    accepted = [d for d in decisions if d.verdict is Verdict.ACCEPTED]
    for d in accepted:
        if d.depth is None:
            raise IntervalOverlapUnresolved(f"roi {d.roi_name!r} accepted without depth")
    accepted.sort(key=lambda d: (d.depth, d.roi_name))
    resolved = []
    claimed = []
    for d in accepted:
        spans = [d.interval]
        for c in claimed:
            spans = _subtract(spans, c)
        resolved.append(ResolvedRoi(d.roi_name, spans, d.depth, d.cached))
        claimed.append(d.interval)
    return resolved


def _in_spans(ts: np.ndarray, spans) -> np.ndarray:
    mask = np.zeros(ts.shape, dtype=bool)
    for s in spans:
        mask |= (ts >= s.t_enter) & (ts <= s.t_exit)
    return mask


def compose_ray(ray: Ray, scene_shaded: ShadedSamples, decisions, rois,
                config: CompositionConfig, sampler: SamplerConfig | None = None) -> ComposedRay:
    """Assemble one fixed-length composed ray from cached samples.

    `decisions` holds one RoiDecision per entry of `rois` (same order).
    Never queries a field: accepted ROIs must carry their cached samples.
    `sampler` sizes the padding blocks of ROIs that were never shaded.
    """
    resolved = {r.roi_name: r for r in resolve_overlaps(decisions)}
    union_spans = [d.interval for d in decisions if d.verdict is Verdict.ACCEPTED]

    ts = [scene_shaded.ts.copy()]
    sigma = [scene_shaded.sigma.copy()]
    rgb = [scene_shaded.rgb.copy()]
    visible = [~_in_spans(scene_shaded.ts, union_spans)] if config.enable_rsr else \
        [np.ones(len(scene_shaded.ts), dtype=bool)]
    sources = [np.zeros(len(scene_shaded.ts), dtype=np.int16)]

    for i, (roi, dec) in enumerate(zip(rois, decisions)):
        n = len(dec.cached.ts) if dec.cached is not None else _roi_sample_count(roi, sampler)
        if dec.verdict is Verdict.ACCEPTED and dec.cached is not None:
            vis = _in_spans(dec.cached.ts, resolved[dec.roi_name].intervals)
            ts.append(dec.cached.ts.copy())
            sigma.append(dec.cached.sigma.copy())
            rgb.append(dec.cached.rgb.copy())
            visible.append(vis)
        else:
            ts.append(np.zeros(n))
            sigma.append(np.zeros(n))
            rgb.append(np.zeros((n, 3)))
            visible.append(np.zeros(n, dtype=bool))
        sources.append(np.full(n, i + 1, dtype=np.int16))

    ts = np.concatenate(ts)
    sigma = np.concatenate(sigma)
    rgb = np.concatenate(rgb)
    visible = np.concatenate(visible)
    sources = np.concatenate(sources)

    # invisible samples move to the ray origin with zero density
    ts = np.where(visible, ts, 0.0)
    sigma = np.where(visible, sigma, 0.0)

    order = np.argsort(ts, kind="stable")
    ts, sigma, visible, sources = ts[order], sigma[order], visible[order], sources[order]
    rgb = rgb[order]
    deltas = deltas_from_ts(ts[None], np.asarray([scene_shaded.t_far]))[0]
    return ComposedRay(ts, deltas, sigma, rgb, visible, sources, scene_shaded.t_far)


def _roi_sample_count(roi: RoiRuntime, sampler: SamplerConfig | None) -> int:
    s = roi.sampler or sampler or SamplerConfig()
    return s.n_coarse + s.n_fine


# ---------------------------------------------------------------------------
# batch pipeline
# ---------------------------------------------------------------------------

def render_image_composed(scene_field, rois, view, intrinsics,
                          sampler: SamplerConfig | None = None,
                          config: CompositionConfig | None = None,
                          bounds: Aabb | None = None):
    """Render a frame with ray-level ROI composition.

    Returns (ImageBuffer, CompositionStats). With no ROIs (or composition
    disabled) the output is bitwise identical to render_image on the scene
    field. Ablation RSR-on/DRF-off only supports a single ROI.

    Query accounting: scene and ROI fields are wrapped in counters; the
    replacement path must not issue any ROI query during assembly (the cache
    carries everything), which the stats expose for auditing.
    """
    sampler = sampler or SamplerConfig()
    config = config or CompositionConfig()
    if config.enable_rsr and not config.enable_drf and config.enabled and len(rois) > 1:
        raise AblationUnsupported("sample replacement without depth filtering is single-ROI only")
    b = resolve_bounds(scene_field, bounds)
    eps = config.occlusion_eps_fraction * b.diagonal

    scene_c = QueryCounter(scene_field)
    roi_cs = [QueryCounter(r.field) for r in rois]
    wrapped = [RoiRuntime(r.spec, c, r.d_max, r.sampler) for r, c in zip(rois, roi_cs)]

    w, h = intrinsics.width, intrinsics.height
    rgb = np.zeros((h, w, 3), dtype=np.float32)
    depth = np.full((h, w), np.nan, dtype=np.float32)
    opacity = np.zeros((h, w), dtype=np.float32)
    stats = CompositionStats()
    for r in rois:
        stats.rois[r.name] = RoiStats()
        stats.intersect_maps[r.name] = np.zeros((h, w), dtype=np.float32)
        stats.accept_maps[r.name] = np.zeros((h, w), dtype=np.float32)

    cam = camera_center(view)
    vs, us = np.mgrid[0:h, 0:w]
    us, vs = us.ravel(), vs.ravel()
    for lo in range(0, h * w, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, h * w))
        _composed_chunk(
            scene_c, wrapped, view, intrinsics, sampler, config, b, eps, cam,
            us[sl], vs[sl],
            rgb.reshape(-1, 3)[sl], depth.reshape(-1)[sl], opacity.reshape(-1)[sl],
            stats,
        )
    stats.scene_queries = scene_c.count
    return ImageBuffer(rgb, depth, opacity), stats


def _composed_chunk(scene_field, rois, view, intrinsics, sampler, config, bounds, eps,
                    cam, us, vs, out_rgb, out_depth, out_op, stats):
    origins, dirs = camera_rays_batch(view, intrinsics, us, vs)
    hit, t0, t1 = ray_aabb_intersect_batch(origins, dirs, bounds, 1e-6, np.inf)
    hit &= t1 > t0
    bg = np.asarray(sampler.background, dtype=np.float64)
    out_rgb[:] = bg
    if not np.any(hit):
        return
    o, d = origins[hit], dirs[hit]
    ht0, ht1 = t0[hit], t1[hit]
    pix = (vs[hit] * intrinsics.width + us[hit]).astype(np.uint64)
    n = len(o)

    ts_s, del_s, sig_s, rgb_s = sample_and_shade_batch(
        scene_field, o, d, ht0, ht1, sampler, pix, STREAM_SCENE_COARSE, STREAM_SCENE_FINE
    )

    active = config.enabled and len(rois) > 0
    scene_depth = None
    if active and config.enable_drf and config.occlusion_precheck:
        _, w_s, _, _ = quadrature_batch(sig_s, rgb_s, del_s, (0, 0, 0))
        scene_depth = depth_at_weight_batch(ts_s, w_s, config.depth_threshold)

    per_roi = []
    if active:
        for ri, roi in enumerate(rois):
            per_roi.append(_decide_roi(
                roi, ri, o, d, ht0, ht1, sampler, config, eps, cam, pix, scene_depth, stats,
                us[hit], vs[hit],
            ))

    if not active or not per_roi:
        color, weights, t_end, op = quadrature_batch(sig_s, rgb_s, del_s, bg)
        out_rgb[hit] = color
        out_depth[hit] = depth_at_weight_batch(ts_s, weights, 0.5)
        out_op[hit] = op
        return

    if config.enable_rsr:
        ts, deltas, sigma, rgbm, visible = _assemble_replacement(
            ts_s, sig_s, rgb_s, ht1, per_roi, rois, stats
        )
        color, weights, t_end, op = quadrature_batch(sigma, rgbm, deltas, bg, visible)
        out_rgb[hit] = color
        out_depth[hit] = depth_at_weight_batch(ts, weights, 0.5)
        out_op[hit] = op
    else:
        sig2, rgb2 = _substitute_values(o, d, ts_s, sig_s, rgb_s, per_roi, rois, config, stats)
        color, weights, t_end, op = quadrature_batch(sig2, rgb2, del_s, bg)
        out_rgb[hit] = color
        out_depth[hit] = depth_at_weight_batch(ts_s, weights, 0.5)
        out_op[hit] = op


def _decide_roi(roi, ri, o, d, t0, t1, sampler, config, eps, cam, pix, scene_depth, stats,
                us=None, vs=None):
    """Batch decision for one ROI. Returns a dict of per-ray arrays."""
    n = len(o)
    rs = stats.rois[roi.name]
    bhit, bt0, bt1 = ray_aabb_intersect_batch(o, d, roi.spec.aabb, 1e-6, np.inf)
    bt0 = np.maximum(bt0, t0)
    bt1 = np.minimum(bt1, t1)
    bhit &= bt0 <= bt1
    rs.rays_intersecting += int(bhit.sum())
    if us is not None:
        stats.intersect_maps[roi.name][vs[bhit], us[bhit]] = 1.0

    verdict = np.full(n, Verdict.NO_INTERSECTION, dtype=object)
    candidate = bhit.copy()
    if config.enable_d_max:
        dist = float(np.linalg.norm(cam - roi.spec.aabb.center))
        if dist > roi.d_max:
            verdict[bhit] = Verdict.REJECTED_DISTANCE
            rs.rejected_distance += int(bhit.sum())
            candidate[:] = False

    if config.enable_drf and config.occlusion_precheck and scene_depth is not None:
        occluded = candidate & ~np.isnan(scene_depth) & (scene_depth < bt0 - eps)
        verdict[occluded] = Verdict.REJECTED_OCCLUDED
        rs.rejected_occluded += int(occluded.sum())
        candidate &= ~occluded

    roi_sampler = roi.sampler or sampler
    k_roi = roi_sampler.n_coarse + roi_sampler.n_fine
    cache = {
        "ts": np.zeros((n, k_roi)), "sigma": np.zeros((n, k_roi)),
        "rgb": np.zeros((n, k_roi, 3)),
        "enter": bt0, "exit": bt1, "depth": np.full(n, np.nan),
        "accepted": np.zeros(n, dtype=bool), "verdict": verdict, "k": k_roi,
    }
    needs_shading = candidate if (config.enable_drf or config.enable_rsr) else np.zeros(n, bool)
    if np.any(needs_shading):
        m = needs_shading
        before = roi.field.count if isinstance(roi.field, QueryCounter) else 0
        ts_r, del_r, sig_r, rgb_r = sample_and_shade_batch(
            roi.field, o[m], d[m], t0[m], t1[m], roi_sampler, pix[m],
            STREAM_ROI_BASE + 2 * ri, STREAM_ROI_BASE + 2 * ri + 1,
        )
        if isinstance(roi.field, QueryCounter):
            rs.shading_queries += roi.field.count - before
        cache["ts"][m] = ts_r
        cache["sigma"][m] = sig_r
        cache["rgb"][m] = rgb_r
        if config.enable_drf:
            _, w_r, _, _ = quadrature_batch(sig_r, rgb_r, del_r, (0, 0, 0))
            depth_r = depth_at_weight_batch(ts_r, w_r, config.depth_threshold)
            cache["depth"][m] = depth_r

    if config.enable_drf:
        ok = candidate & ~np.isnan(cache["depth"]) \
            & (cache["depth"] >= bt0) & (cache["depth"] <= bt1)
        bad = candidate & ~ok
        verdict[bad] = Verdict.REJECTED_DEPTH
        rs.rejected_depth += int(bad.sum())
        candidate = ok
    else:
        # ablations without the filter accept every surviving candidate
        cache["depth"] = np.where(candidate, bt0, np.nan)

    verdict[candidate] = Verdict.ACCEPTED
    cache["accepted"] = candidate
    rs.rays_accepted += int(candidate.sum())
    if us is not None:
        stats.accept_maps[roi.name][vs[candidate], us[candidate]] = 1.0
    return cache


def _assemble_replacement(ts_s, sig_s, rgb_s, t_far, per_roi, rois, stats):
    """Merge scene + cached ROI samples into fixed-length composed arrays."""
    n, ks = ts_s.shape
    union = np.zeros((n, ks), dtype=bool)

    # visibility of each roi's samples inside its own (possibly clipped) spans
    roi_vis = []
    for cache in per_roi:
        vis = cache["accepted"][:, None] & (cache["ts"] >= cache["enter"][:, None]) \
            & (cache["ts"] <= cache["exit"][:, None])
        roi_vis.append(vis)
        acc = cache["accepted"]
        union |= acc[:, None] & (ts_s >= cache["enter"][:, None]) & (ts_s <= cache["exit"][:, None])

    # rays with two or more accepted ROIs need explicit overlap resolution
    n_acc = np.sum([c["accepted"] for c in per_roi], axis=0)
    for row in np.nonzero(n_acc >= 2)[0]:
        decisions = []
        for cache, roi in zip(per_roi, rois):
            if not cache["accepted"][row]:
                continue
            decisions.append(RoiDecision(
                roi.name, Verdict.ACCEPTED,
                Interval(float(cache["enter"][row]), float(cache["exit"][row])),
                float(cache["depth"][row]),
            ))
        for r in resolve_overlaps(decisions):
            i = next(i for i, roi in enumerate(rois) if roi.name == r.roi_name)
            roi_vis[i][row] = _in_spans(per_roi[i]["ts"][row], r.intervals)

    for cache, roi in zip(per_roi, rois):
        stats.rois[roi.name].cached_samples_used += int(cache["accepted"].sum()) * cache["k"]

    parts_t = [np.where(union, 0.0, ts_s)]
    parts_s = [np.where(union, 0.0, sig_s)]
    parts_c = [rgb_s]
    parts_v = [~union]
    for cache, vis in zip(per_roi, roi_vis):
        parts_t.append(np.where(vis, cache["ts"], 0.0))
        parts_s.append(np.where(vis, cache["sigma"], 0.0))
        parts_c.append(cache["rgb"])
        parts_v.append(vis)

    ts = np.concatenate(parts_t, axis=-1)
    sigma = np.concatenate(parts_s, axis=-1)
    rgbm = np.concatenate(parts_c, axis=-2)
    visible = np.concatenate(parts_v, axis=-1)

    order = np.argsort(ts, axis=-1, kind="stable")
    rows = np.arange(n)[:, None]
    ts = ts[rows, order]
    sigma = sigma[rows, order]
    rgbm = rgbm[rows, order]
    visible = visible[rows, order]
    deltas = deltas_from_ts(ts, t_far)
    return ts, deltas, sigma, rgbm, visible


def _substitute_values(o, d, ts_s, sig_s, rgb_s, per_roi, rois, config, stats):
    """Ablation a/b: keep scene positions, take values from accepted ROI fields.

    Overlap claims go to the ROI with the smaller key (median depth when the
    filter ran, box entry otherwise); ties fall to the earlier name.
    """
    n, ks = ts_s.shape
    order = sorted(range(len(rois)), key=lambda i: rois[i].name)
    best_key = np.full((n, ks), np.inf)
    winner = np.full((n, ks), -1, dtype=np.int32)
    for i in order:
        cache = per_roi[i]
        acc = cache["accepted"]
        in_iv = acc[:, None] & (ts_s >= cache["enter"][:, None]) & (ts_s <= cache["exit"][:, None])
        key = np.where(np.isnan(cache["depth"]), cache["enter"], cache["depth"])[:, None]
        better = in_iv & (key < best_key)
        winner = np.where(better, i, winner)
        best_key = np.where(better, key, best_key)

    sig2, rgb2 = sig_s.copy(), rgb_s.copy()
    for i, roi in enumerate(rois):
        m = winner == i
        if not np.any(m):
            continue
        ridx, sidx = np.nonzero(m)
        pos = o[ridx] + ts_s[m][:, None] * d[ridx]
        before = roi.field.count if isinstance(roi.field, QueryCounter) else 0
        sig_q, rgb_q = roi.field.query_many(pos, d[ridx])
        if isinstance(roi.field, QueryCounter):
            stats.rois[roi.name].compose_queries += roi.field.count - before
        sig2[m] = sig_q
        rgb2[m] = rgb_q
    return sig2, rgb2


# ---------------------------------------------------------------------------
# pixel-level baseline
# ---------------------------------------------------------------------------

def pixel_level_compose(scene_img: ImageBuffer, roi_images: dict, accept: dict,
                        depths: dict, roi_order) -> ImageBuffer:
    """Whole-pixel composition: accepted ROI pixels replace scene pixels.

    Among ROIs accepting a pixel, the one with the nearest depth wins (ties
    by name order). Inputs are full-frame renders per ROI plus accept masks.
    """
    rgb = scene_img.rgb.copy()
    depth = scene_img.depth.copy()
    opacity = scene_img.opacity.copy()
    h, w = scene_img.shape
    best = np.full((h, w), np.inf)
    for name in sorted(roi_order):
        # depthless accepted pixels (filter off) still claim, but lose any tie
        key = np.where(np.isnan(depths[name]), np.finfo(np.float64).max, depths[name])
        m = accept[name] & (key < best)
        rgb[m] = roi_images[name].rgb[m]
        depth[m] = roi_images[name].depth[m]
        opacity[m] = roi_images[name].opacity[m]
        best = np.where(m, key, best)
    return ImageBuffer(rgb, depth, opacity)


def render_image_pixel_baseline(scene_field, rois, view, intrinsics,
                                sampler: SamplerConfig | None = None,
                                config: CompositionConfig | None = None,
                                bounds: Aabb | None = None):
    """The naive alternative: render every ROI field over the full frame.

    Each ROI costs a complete render of the view (that is the point of
    comparison: wall time grows linearly with ROI count). Accept masks reuse
    the same decision rules, evaluated on the full-frame depth maps.
    """
    sampler = sampler or SamplerConfig()
    config = config or CompositionConfig()
    b = resolve_bounds(scene_field, bounds)
    eps = config.occlusion_eps_fraction * b.diagonal
    scene_img = render_image(scene_field, view, intrinsics, sampler, bounds=b)

    h, w = scene_img.shape
    vs, us = np.mgrid[0:h, 0:w]
    origins, dirs = camera_rays_batch(view, intrinsics, us.ravel(), vs.ravel())
    cam = camera_center(view)

    roi_images, accept, depths = {}, {}, {}
    queries = {}
    for roi in rois:
        counter = QueryCounter(roi.field)
        img = render_image(counter, view, intrinsics, sampler, bounds=b)
        queries[roi.name] = counter.count
        bhit, bt0, bt1 = ray_aabb_intersect_batch(origins, dirs, roi.spec.aabb, 1e-6, np.inf)
        ok = bhit.reshape(h, w)
        if config.enable_d_max:
            dist = float(np.linalg.norm(cam - roi.spec.aabb.center))
            if dist > roi.d_max:
                ok = np.zeros((h, w), dtype=bool)
        rdepth = img.depth.astype(np.float64)
        if config.enable_drf:
            in_span = (rdepth >= bt0.reshape(h, w)) & (rdepth <= bt1.reshape(h, w))
            ok &= ~np.isnan(rdepth) & in_span
            if config.occlusion_precheck:
                sdepth = scene_img.depth.astype(np.float64)
                occ = ~np.isnan(sdepth) & (sdepth < bt0.reshape(h, w) - eps)
                ok &= ~occ
        roi_images[roi.name] = img
        accept[roi.name] = ok
        depths[roi.name] = rdepth
    out = pixel_level_compose(scene_img, roi_images, accept, depths, [r.name for r in rois])
    return out, {"roi_queries": queries, "accepted": {k: int(v.sum()) for k, v in accept.items()}}
