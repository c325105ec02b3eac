"""Ray sampling and volume rendering quadrature.

The estimator for a ray r(t) = o + t d sampled at t_1 < ... < t_K is

    C = sum_k T_k alpha_k c_k + T_end * background
    T_k = exp(-sum_{j<k} sigma_j delta_j),  alpha_k = 1 - exp(-sigma_k delta_k)

with delta_k = t_{k+1} - t_k and delta_K = t_far - t_K (finite). The weights
w_k = T_k alpha_k plus the residual transmittance T_end sum to one exactly.

Color and opacity accumulate with a sequential loop over the sample axis on
purpose: inserting zero-density padding samples must not change images even
bitwise, and numpy's pairwise reductions would regroup the non-padding terms.

Randomness: the batch render paths draw jitter from counter-based streams
keyed by (seed, pixel index), so results do not depend on chunking or worker
layout. The single-ray helpers accept a numpy Generator for ad-hoc use;
with jitter off both paths are midpoint-deterministic and agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DimensionMismatch, NumericalDomainError, ValidationError
from .geometry import Aabb, Ray, camera_rays_batch, ray_aabb_intersect_batch
from .rng import STREAM_SCENE_COARSE, STREAM_SCENE_FINE, uniform_grid

_CHUNK = 16384  # rays per render chunk; results are chunking-independent


@dataclass(frozen=True)
class SamplerConfig:
    n_coarse: int = 64
    n_fine: int = 64
    jitter: bool = False
    seed: int = 0
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n_coarse < 1:
            raise ValidationError("n_coarse must be >= 1")
        if self.n_fine < 0:
            raise ValidationError("n_fine must be >= 0")


@dataclass
class RaySamples:
    """Sample positions along one ray; deltas end with t_far - t_last."""

    ts: np.ndarray
    deltas: np.ndarray
    t_far: float


@dataclass
class ShadedSamples:
    """Samples with field values attached; invisible ones act as vacuum."""

    ts: np.ndarray
    deltas: np.ndarray
    sigma: np.ndarray
    rgb: np.ndarray
    t_far: float
    visible: np.ndarray | None = None


@dataclass
class QuadratureResult:
    color: np.ndarray
    weights: np.ndarray
    t_end: float          # transmittance left after the last sample
    opacity: float
    depth: float | None   # depth at cumulative weight 0.5, None if never reached


@dataclass
class ImageBuffer:
    """Linear-light render output: rgb (H,W,3), depth (H,W, NaN=none), opacity."""

    rgb: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray

    @property
    def shape(self):
        return self.rgb.shape[:2]


# ---------------------------------------------------------------------------
# batch kernels
# ---------------------------------------------------------------------------

def stratified_ts_batch(t0, t1, n: int, u: np.ndarray | None) -> np.ndarray:
    """One sample per stratum of [t0, t1]; u=None puts them at midpoints.

    t0/t1 are (N,) bounds, u is (N, n) in [0, 1).
    """
    t0 = np.asarray(t0, dtype=np.float64)[:, None]
    t1 = np.asarray(t1, dtype=np.float64)[:, None]
    k = np.arange(n, dtype=np.float64)[None, :]
    off = np.full((1, n), 0.5) if u is None else u
    return t0 + (t1 - t0) * (k + off) / n


def deltas_from_ts(ts: np.ndarray, t_far) -> np.ndarray:
    t_far = np.asarray(t_far, dtype=np.float64)
    return np.diff(ts, axis=-1, append=t_far[..., None])


def quadrature_batch(sigma, rgb, deltas, background, visible=None):
    """Vectorized quadrature over (N, K) sample arrays.

    Returns (color (N,3), weights (N,K), t_end (N,), opacity (N,)).
    Invisible samples contribute nothing regardless of stored sigma.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.float64)
    if np.any(np.isnan(sigma)):
        raise NumericalDomainError("NaN density in quadrature input")
    if np.any(sigma < 0):
        raise NumericalDomainError("negative density in quadrature input")
    if np.any(deltas < 0):
        raise NumericalDomainError("negative delta in quadrature input")
    if visible is not None:
        sigma = np.where(visible, sigma, 0.0)

    tau = sigma * deltas
    accum = np.cumsum(tau, axis=-1)
    t_end = np.exp(-accum[:, -1])
    trans = np.exp(-(accum - tau))  # T_k: optical depth strictly before sample k
    alpha = -np.expm1(-tau)
    weights = trans * alpha

    n, k = weights.shape
    color = np.zeros((n, 3))
    opacity = np.zeros(n)
    for j in range(k):
        color += weights[:, j, None] * rgb[:, j]
        opacity += weights[:, j]
    color += t_end[:, None] * np.asarray(background, dtype=np.float64)
    return color, weights, t_end, opacity


def depth_at_weight_batch(ts, weights, threshold: float) -> np.ndarray:
    """First t where cumulative weight reaches threshold; NaN when it never does.

    Linear interpolation on the cumulative-weight curve between the previous
    sample and the crossing sample.
    """
    ts = np.asarray(ts, dtype=np.float64)
    cum = np.cumsum(np.asarray(weights, dtype=np.float64), axis=-1)
    reached = cum[:, -1] >= threshold
    idx = np.minimum((cum < threshold).sum(axis=-1), ts.shape[-1] - 1)
    rows = np.arange(len(ts))
    t_hi = ts[rows, idx]
    c_hi = cum[rows, idx]
    prev = np.maximum(idx - 1, 0)
    t_lo = np.where(idx > 0, ts[rows, prev], t_hi)
    c_lo = np.where(idx > 0, cum[rows, prev], 0.0)
    span = c_hi - c_lo
    frac = np.where(span > 0, (threshold - c_lo) / np.where(span > 0, span, 1.0), 0.0)
    depth = t_lo + np.clip(frac, 0.0, 1.0) * (t_hi - t_lo)
    return np.where(reached, depth, np.nan)


def importance_ts_batch(t0, t1, n_strata: int, weights, n_fine: int, u: np.ndarray | None):
    """Inverse-CDF draws from the piecewise-constant pdf given by stratum weights.

    The pdf is constant on each of the n_strata equal slices of [t0, t1] and
    proportional to that stratum's weight; all-zero rows fall back to uniform.
    u=None uses the deterministic offsets (i + 0.5) / n_fine.
    """
    t0 = np.asarray(t0, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    w = np.maximum(np.asarray(weights, dtype=np.float64), 0.0)
    if w.shape[-1] != n_strata:
        raise DimensionMismatch(f"{w.shape[-1]} weights for {n_strata} strata")
    total = w.sum(axis=-1, keepdims=True)
    flat = total[:, 0] < 1e-12
    w = np.where(flat[:, None], 1.0, w)
    total = w.sum(axis=-1, keepdims=True)
    cdf = np.cumsum(w, axis=-1) / total
    cdf[:, -1] = 1.0

    n = len(cdf)
    if u is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (n, n_fine))
    # per-row searchsorted via row offsets (cdf rows live in [0, 1])
    offsets = 2.0 * np.arange(n)[:, None]
    bins = np.searchsorted((cdf + offsets).ravel(), (u + offsets).ravel(), side="right")
    bins = (bins - np.repeat(np.arange(n) * n_strata, n_fine)).reshape(n, n_fine)
    bins = np.clip(bins, 0, n_strata - 1)

    rows = np.repeat(np.arange(n), n_fine).reshape(n, n_fine)
    c_hi = cdf[rows, bins]
    c_lo = np.where(bins > 0, cdf[rows, np.maximum(bins - 1, 0)], 0.0)
    span = np.where(c_hi > c_lo, c_hi - c_lo, 1.0)
    frac = (u - c_lo) / span
    h = (t1 - t0)[:, None] / n_strata
    return t0[:, None] + (bins + np.clip(frac, 0.0, 1.0)) * h


def shade_batch(field, origins, dirs, ts):
    """Query a field at o + t d for (N, K) ts. Returns sigma (N,K), rgb (N,K,3)."""
    n, k = ts.shape
    pos = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
    d = np.repeat(dirs, k, axis=0)
    sigma, rgb = field.query_many(pos.reshape(-1, 3), d)
    return sigma.reshape(n, k), rgb.reshape(n, k, 3)


def sample_and_shade_batch(field, origins, dirs, t0, t1, sampler: SamplerConfig,
                           pixel_index, stream_coarse, stream_fine):
    """Coarse + importance sampling against one field for a batch of rays.

    Fine positions are drawn from the coarse weights, shaded, and merged with
    the coarse values by sort order, so each ray costs exactly
    n_coarse + n_fine field queries.

    Returns (ts, deltas, sigma, rgb) with K = n_coarse + n_fine columns.
    """
    u_c = u_f = None
    if sampler.jitter:
        u_c = uniform_grid(sampler.seed, pixel_index, stream_coarse, sampler.n_coarse)
    ts_c = stratified_ts_batch(t0, t1, sampler.n_coarse, u_c)
    sig_c, rgb_c = shade_batch(field, origins, dirs, ts_c)

    if sampler.n_fine == 0:
        deltas = deltas_from_ts(ts_c, t1)
        return ts_c, deltas, sig_c, rgb_c

    d_c = deltas_from_ts(ts_c, t1)
    _, w_c, _, _ = quadrature_batch(sig_c, rgb_c, d_c, (0.0, 0.0, 0.0))
    if sampler.jitter:
        u_f = uniform_grid(sampler.seed, pixel_index, stream_fine, sampler.n_fine)
    ts_f = importance_ts_batch(t0, t1, sampler.n_coarse, w_c, sampler.n_fine, u_f)
    sig_f, rgb_f = shade_batch(field, origins, dirs, ts_f)

    ts = np.concatenate([ts_c, ts_f], axis=-1)
    order = np.argsort(ts, axis=-1, kind="stable")
    rows = np.arange(len(ts))[:, None]
    ts = ts[rows, order]
    sigma = np.concatenate([sig_c, sig_f], axis=-1)[rows, order]
    rgb = np.concatenate([rgb_c, rgb_f], axis=-2)[rows, order]
    return ts, deltas_from_ts(ts, t1), sigma, rgb


# ---------------------------------------------------------------------------
# single-ray API (thin wrappers over the batch kernels)
# ---------------------------------------------------------------------------

def _draws(rng, n):
    if rng is None:
        return None
    return rng.random((1, n))


def stratified_samples(ray: Ray, n: int, jitter: bool = False, rng=None) -> RaySamples:
    """n stratified samples over [t_near, t_far]; midpoints unless jittered."""
    u = _draws(rng, n) if jitter else None
    if jitter and u is None:
        raise ValidationError("jitter=True needs an rng")
    ts = stratified_ts_batch([ray.t_near], [ray.t_far], n, u)
    return RaySamples(ts[0], deltas_from_ts(ts, np.asarray([ray.t_far]))[0], ray.t_far)


def shade(field, ray: Ray, samples: RaySamples) -> ShadedSamples:
    sigma, rgb = shade_batch(field, ray.origin[None], ray.direction[None], samples.ts[None])
    return ShadedSamples(samples.ts, samples.deltas, sigma[0], rgb[0], samples.t_far)


def importance_resample(ray: Ray, coarse: ShadedSamples, n_fine: int, rng=None) -> RaySamples:
    """Draw n_fine samples from the coarse weight pdf and merge with coarse ts."""
    _, w, _, _ = quadrature_batch(
        coarse.sigma[None], coarse.rgb[None], coarse.deltas[None], (0, 0, 0),
        None if coarse.visible is None else coarse.visible[None],
    )
    u = _draws(rng, n_fine)
    ts_f = importance_ts_batch([ray.t_near], [ray.t_far], len(coarse.ts), w, n_fine, u)
    ts = np.sort(np.concatenate([coarse.ts, ts_f[0]]))
    return RaySamples(ts, deltas_from_ts(ts[None], np.asarray([ray.t_far]))[0], ray.t_far)


def quadrature(shaded: ShadedSamples, background=(0.0, 0.0, 0.0),
               depth_threshold: float = 0.5) -> QuadratureResult:
    color, weights, t_end, opacity = quadrature_batch(
        shaded.sigma[None], shaded.rgb[None], shaded.deltas[None], background,
        None if shaded.visible is None else shaded.visible[None],
    )
    depth = depth_at_weight_batch(shaded.ts[None], weights, depth_threshold)[0]
    return QuadratureResult(color[0], weights[0], float(t_end[0]), float(opacity[0]),
                            None if np.isnan(depth) else float(depth))


def depth_at_weight(shaded: ShadedSamples, weights: np.ndarray, threshold: float = 0.5):
    d = depth_at_weight_batch(shaded.ts[None], weights[None], threshold)[0]
    return None if np.isnan(d) else float(d)


# ---------------------------------------------------------------------------
# full-frame rendering
# ---------------------------------------------------------------------------

def resolve_bounds(field, bounds: Aabb | None) -> Aabb:
    b = bounds if bounds is not None else field.domain()
    if b is None:
        raise ValidationError("field has no domain; pass explicit marching bounds")
    return b


def render_image(field, view, intrinsics, sampler: SamplerConfig | None = None,
                 bounds: Aabb | None = None) -> ImageBuffer:
    """Render a full frame of `field` from a posed pinhole view.

    Rays march their intersection with `bounds` (default: the field's own
    domain); rays that miss show the background with zero opacity. Output is
    linear light. Bitwise-deterministic for a given sampler seed.
    """
    sampler = sampler or SamplerConfig()
    b = resolve_bounds(field, bounds)
    w, h = intrinsics.width, intrinsics.height
    rgb = np.zeros((h, w, 3), dtype=np.float32)
    depth = np.full((h, w), np.nan, dtype=np.float32)
    opacity = np.zeros((h, w), dtype=np.float32)

    vs, us = np.mgrid[0:h, 0:w]
    us, vs = us.ravel(), vs.ravel()
    for lo in range(0, h * w, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, h * w))
        _render_chunk(field, view, intrinsics, sampler, b, us[sl], vs[sl],
                      rgb.reshape(-1, 3)[sl], depth.reshape(-1)[sl], opacity.reshape(-1)[sl])
    return ImageBuffer(rgb, depth, opacity)


def _render_chunk(field, view, intrinsics, sampler, bounds, us, vs, out_rgb, out_depth, out_op):
    origins, dirs = camera_rays_batch(view, intrinsics, us, vs)
    hit, t0, t1 = ray_aabb_intersect_batch(origins, dirs, bounds, 1e-6, np.inf)
    hit &= t1 > t0
    bg = np.asarray(sampler.background, dtype=np.float64)
    out_rgb[:] = bg
    if not np.any(hit):
        return
    pix = (vs[hit] * intrinsics.width + us[hit]).astype(np.uint64)
    ts, deltas, sigma, rgb = sample_and_shade_batch(
        field, origins[hit], dirs[hit], t0[hit], t1[hit], sampler,
        pix, STREAM_SCENE_COARSE, STREAM_SCENE_FINE,
    )
    color, weights, t_end, opacity = quadrature_batch(sigma, rgb, deltas, bg)
    out_rgb[hit] = color
    out_depth[hit] = depth_at_weight_batch(ts, weights, 0.5)
    out_op[hit] = opacity
