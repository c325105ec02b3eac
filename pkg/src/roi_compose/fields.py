"""Radiance fields: analytic primitive scenes and trilinear voxel grids.

A field maps world position (+ view direction) to density sigma >= 0 and
linear rgb in [0, 1]^3. Analytic fields are the ground-truth oracles for the
built-in fixtures; grid fields are the "trained model" stand-ins, produced
either by direct baking (oracle known) or by fitting to rendered images.

Queries outside a field's domain return sigma = 0. Positions must be finite;
NaNs are rejected up front rather than propagated into the quadrature.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatch,
    CorruptHeader,
    DivergedLoss,
    MissingFile,
    NoUsableView,
    NumericalDomainError,
    ResolutionTooSmall,
    ValidationError,
)
from .geometry import Aabb, camera_rays_batch, ray_aabb_intersect_batch

GRID_MAGIC = b"ROIGRID1"
N_MAX_CAP = 4096


@dataclass(frozen=True)
class FieldSample:
    sigma: float
    rgb: np.ndarray


def _check_positions(positions: np.ndarray) -> np.ndarray:
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValidationError(f"positions must be (M, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NumericalDomainError("non-finite query position")
    return p


class RadianceField:
    """Base interface. Subclasses implement query_many."""

    field_id: str = "field"

    def domain(self) -> Aabb | None:
        """Bounding box outside which the field is empty; None = everywhere."""
        return None

    def query_many(self, positions: np.ndarray, directions: np.ndarray | None = None):
        """Evaluate sigma (M,) and rgb (M, 3) at (M, 3) world positions."""
        raise NotImplementedError

    def query(self, position, direction=None) -> FieldSample:
        d = None if direction is None else np.asarray(direction, dtype=np.float64).reshape(1, 3)
        sigma, rgb = self.query_many(np.asarray(position, dtype=np.float64).reshape(1, 3), d)
        return FieldSample(float(sigma[0]), rgb[0])


class QueryCounter(RadianceField):
    """Wraps a field and counts queried sample rows (for cache audits)."""

    def __init__(self, inner: RadianceField):
        self.inner = inner
        self.field_id = inner.field_id
        self.count = 0

    def domain(self):
        return self.inner.domain()

    def query_many(self, positions, directions=None):
        self.count += len(positions)
        return self.inner.query_many(positions, directions)


# ---------------------------------------------------------------------------
# Analytic primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Checker:
    """3D checkerboard: cells of side 1/frequency alternate base/other color."""

    frequency: float
    other: tuple

    def shade(self, base: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells = np.floor(points * self.frequency).astype(np.int64)
        odd = (cells.sum(axis=-1) & 1).astype(bool)
        out = np.broadcast_to(base, points.shape).copy()
        out[odd] = self.other
        return out


@dataclass(frozen=True)
class Stripes:
    """Sinusoidal stripes along one axis, blending base with `other`."""

    frequency: float
    axis: int
    other: tuple

    def shade(self, base: np.ndarray, points: np.ndarray) -> np.ndarray:
        s = 0.5 + 0.5 * np.sin(2.0 * np.pi * self.frequency * points[:, self.axis])
        other = np.asarray(self.other, dtype=np.float64)
        return base * (1.0 - s[:, None]) + other * s[:, None]


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    density: float
    color: tuple
    texture: object = None
    view_tint: bool = False  # darken back-facing directions (see module docs)

    def evaluate(self, points, dirs):
        rel = points - np.asarray(self.center, dtype=np.float64)
        inside = np.einsum("ij,ij->i", rel, rel) <= self.radius * self.radius
        sigma = np.where(inside, self.density, 0.0)
        rgb = np.broadcast_to(np.asarray(self.color, dtype=np.float64), points.shape).copy()
        if self.texture is not None:
            rgb = self.texture.shade(rgb, points)
        if self.view_tint and dirs is not None:
            n = rel / np.maximum(np.linalg.norm(rel, axis=-1, keepdims=True), 1e-12)
            factor = 0.5 * (1.0 - np.einsum("ij,ij->i", dirs, n))
            rgb = rgb * np.clip(factor, 0.0, 1.0)[:, None]
        return sigma, np.clip(rgb, 0.0, 1.0)


@dataclass(frozen=True)
class Box:
    box: Aabb
    density: float
    color: tuple
    texture: object = None

    def evaluate(self, points, dirs):
        inside = self.box.contains(points)
        sigma = np.where(inside, self.density, 0.0)
        rgb = np.broadcast_to(np.asarray(self.color, dtype=np.float64), points.shape).copy()
        if self.texture is not None:
            rgb = self.texture.shade(rgb, points)
        return sigma, np.clip(rgb, 0.0, 1.0)


@dataclass(frozen=True)
class Slab:
    """Homogeneous axis-aligned slab: lo <= p[axis] <= hi, infinite otherwise."""

    axis: int
    lo: float
    hi: float
    density: float
    color: tuple
    texture: object = None

    def evaluate(self, points, dirs):
        coord = points[:, self.axis]
        inside = (coord >= self.lo) & (coord <= self.hi)
        sigma = np.where(inside, self.density, 0.0)
        rgb = np.broadcast_to(np.asarray(self.color, dtype=np.float64), points.shape).copy()
        if self.texture is not None:
            rgb = self.texture.shade(rgb, points)
        return sigma, np.clip(rgb, 0.0, 1.0)


class AnalyticField(RadianceField):
    """Union of primitives; where they overlap the densest one wins.

    Ties go to the earliest primitive in the list (strict comparison while
    scanning in order). An optional domain box empties everything outside it.
    """

    def __init__(self, primitives, domain: Aabb | None = None, field_id: str = "analytic"):
        if not primitives:
            raise ValidationError("analytic field needs at least one primitive")
        self.primitives = list(primitives)
        self._domain = domain
        self.field_id = field_id

    def domain(self):
        return self._domain

    def query_many(self, positions, directions=None):
        p = _check_positions(positions)
        dirs = None
        if directions is not None:
            dirs = np.asarray(directions, dtype=np.float64)
            if dirs.shape != p.shape:
                dirs = np.broadcast_to(dirs, p.shape)
        sigma = np.zeros(len(p))
        rgb = np.zeros((len(p), 3))
        for prim in self.primitives:
            s, c = prim.evaluate(p, dirs)
            take = s > sigma
            sigma = np.where(take, s, sigma)
            rgb[take] = c[take]
        if self._domain is not None:
            outside = ~self._domain.contains(p)
            sigma[outside] = 0.0
        return sigma, rgb


# ---------------------------------------------------------------------------
# Voxel grids
# ---------------------------------------------------------------------------

def _check_resolution(resolution) -> tuple:
    if np.isscalar(resolution):
        resolution = (resolution, resolution, resolution)
    res = tuple(int(r) for r in resolution)
    if any(r < 2 for r in res):
        raise ResolutionTooSmall(f"grid needs >= 2 nodes per axis, got {res}")
    return res


class GridField(RadianceField):
    """Trilinearly interpolated voxel grid over a box domain.

    `resolution` counts grid nodes per axis; node (i, j, k) sits at
    domain.min + (i, j, k) * cell where cell = extent / (resolution - 1).
    sigma has shape (Nx, Ny, Nz), rgb (Nx, Ny, Nz, 3), stored float32 with
    sigma >= 0 and rgb in [0, 1]. Queries outside the domain return zero.
    """

    def __init__(self, domain: Aabb, sigma: np.ndarray, rgb: np.ndarray, field_id: str = "grid"):
        res = _check_resolution(sigma.shape)
        if tuple(rgb.shape) != res + (3,):
            raise ValidationError(f"rgb shape {rgb.shape} does not match sigma {sigma.shape}")
        if np.any(sigma < 0) or np.any(np.isnan(sigma)):
            raise ValidationError("grid sigma must be finite and non-negative")
        if np.any(rgb < 0) or np.any(rgb > 1) or np.any(np.isnan(rgb)):
            raise ValidationError("grid rgb must lie in [0, 1]")
        self._domain = domain
        self.resolution = res
        self.sigma = np.ascontiguousarray(sigma, dtype=np.float32)
        self.rgb = np.ascontiguousarray(rgb, dtype=np.float32)
        self.field_id = field_id

    def domain(self):
        return self._domain

    def node_positions(self) -> np.ndarray:
        """(Nx*Ny*Nz, 3) node coordinates, x varying fastest."""
        axes = [
            np.linspace(self._domain.min[a], self._domain.max[a], self.resolution[a])
            for a in range(3)
        ]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1)  # (nx, ny, nz, 3)
        return pts.transpose(2, 1, 0, 3).reshape(-1, 3)

    def _grid_coords(self, p: np.ndarray):
        """Continuous grid coordinates + inside mask for (M,3) positions."""
        res = np.asarray(self.resolution, dtype=np.float64)
        extent = np.maximum(self._domain.extent, 1e-300)
        g = (p - self._domain.min) / extent * (res - 1.0)
        inside = self._domain.contains(p)
        # snap to the lattice so node queries reproduce stored values exactly
        nearest = np.rint(g)
        snap = np.abs(g - nearest) < 1e-9
        g = np.where(snap, nearest, g)
        return g, inside

    def query_many(self, positions, directions=None):
        p = _check_positions(positions)
        g, inside = self._grid_coords(p)
        g = np.clip(g, 0.0, np.asarray(self.resolution, dtype=np.float64) - 1.0)
        idx = np.minimum(g.astype(np.int64), np.asarray(self.resolution) - 2)
        frac = g - idx

        nx, ny, nz = self.resolution
        base = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]
        sflat = self.sigma.ravel()
        cflat = self.rgb.reshape(-1, 3)

        sigma = np.zeros(len(p))
        rgb = np.zeros((len(p), 3))
        for dx in (0, 1):
            wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
            for dy in (0, 1):
                wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
                for dz in (0, 1):
                    wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                    w = wx * wy * wz
                    corner = base + (dx * ny + dy) * nz + dz
                    sigma += w * sflat[corner]
                    rgb += w[:, None] * cflat[corner]
        sigma[~inside] = 0.0
        rgb[~inside] = 0.0
        return sigma, rgb

    def interp_weights(self, positions: np.ndarray):
        """Corner indices and weights used by the fitter's backward pass.

        Returns (flat_indices (M, 8), weights (M, 8), inside (M,)); weights of
        outside points are zeroed so scattered gradients vanish there.
        """
        p = _check_positions(positions)
        g, inside = self._grid_coords(p)
        g = np.clip(g, 0.0, np.asarray(self.resolution, dtype=np.float64) - 1.0)
        idx = np.minimum(g.astype(np.int64), np.asarray(self.resolution) - 2)
        frac = g - idx
        nx, ny, nz = self.resolution
        base = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]
        indices = np.empty((len(p), 8), dtype=np.int64)
        weights = np.empty((len(p), 8))
        c = 0
        for dx in (0, 1):
            wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
            for dy in (0, 1):
                wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
                for dz in (0, 1):
                    wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                    indices[:, c] = base + (dx * ny + dy) * nz + dz
                    weights[:, c] = wx * wy * wz
                    c += 1
        weights[~inside] = 0.0
        return indices, weights, inside


# ---------------------------------------------------------------------------
# Baking and resolution estimation
# ---------------------------------------------------------------------------

BAKE_DIRECTION = np.array([0.0, 0.0, 1.0])


def bake_grid(oracle: RadianceField, domain: Aabb, resolution, field_id: str = "baked") -> GridField:
    """Sample an oracle field at the grid nodes.

    View-dependent oracles are frozen at the canonical +z direction, so a
    baked grid is strictly direction-independent.
    """
    res = _check_resolution(resolution)
    nx, ny, nz = res
    axes = [np.linspace(domain.min[a], domain.max[a], res[a]) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    dirs = np.broadcast_to(BAKE_DIRECTION, pts.shape)
    sigma, rgb = oracle.query_many(pts, dirs)
    sigma = np.maximum(sigma, 0.0).reshape(res)
    rgb = np.clip(rgb, 0.0, 1.0).reshape(res + (3,))
    return GridField(domain, sigma, rgb, field_id=field_id)


def estimate_n_max(box: Aabb, views, intrinsics_by_camera: dict, cap: int = N_MAX_CAP) -> int:
    """Grid resolution at which a voxel projects to about one pixel.

    Takes the view nearest to the box center (cameras inside the box are
    unusable), converts its pixel footprint at that distance to world units,
    and divides the largest box extent by it. Clamped to [2, cap].

    Raises:
        NoUsableView: every camera center falls inside the box.
    """
    best = None
    for view in views:
        c = view.camera_center()
        if bool(box.contains(c)):
            continue
        dist = float(np.linalg.norm(c - box.center))
        if best is None or dist < best[0]:
            best = (dist, view)
    if best is None:
        raise NoUsableView("all camera centers inside the box")
    dist, view = best
    intr = intrinsics_by_camera[view.camera_id]
    footprint = dist / min(intr.fx, intr.fy)
    n = int(np.ceil(np.max(box.extent) / footprint))
    return max(2, min(cap, n))


# ---------------------------------------------------------------------------
# Grid file format
# ---------------------------------------------------------------------------

def save_grid(grid: GridField, path) -> None:
    """ROIGRID1 binary: magic, f64 domain, u32 resolution, f32 payload, crc32.

    Payload is x-fastest: flat index = ix + Nx*(iy + Ny*iz). The checksum
    covers header + payload.
    """
    nx, ny, nz = grid.resolution
    header = struct.pack(
        "<6d3I",
        *grid._domain.min, *grid._domain.max, nx, ny, nz,
    )
    payload = (
        grid.sigma.astype("<f4").ravel(order="F").tobytes()
        + np.ascontiguousarray(grid.rgb.astype("<f4").transpose(2, 1, 0, 3)).tobytes()
    )
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    Path(path).write_bytes(GRID_MAGIC + header + payload + struct.pack("<I", crc))


def load_grid(path) -> GridField:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    blob = p.read_bytes()
    header_size = 8 + 6 * 8 + 3 * 4
    if len(blob) < header_size + 4:
        raise CorruptHeader(f"{p}: file too short ({len(blob)} bytes)")
    if blob[:8] != GRID_MAGIC:
        raise CorruptHeader(f"{p}: bad magic {blob[:8]!r}")
    vals = struct.unpack("<6d3I", blob[8:header_size])
    lo, hi = vals[0:3], vals[3:6]
    nx, ny, nz = vals[6:9]
    if min(nx, ny, nz) < 2:
        raise ResolutionTooSmall(f"{p}: resolution {(nx, ny, nz)}")
    n = nx * ny * nz
    expected = header_size + 4 * n + 12 * n + 4
    if len(blob) != expected:
        raise CorruptHeader(f"{p}: expected {expected} bytes, found {len(blob)}")
    body = blob[8:-4]
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatch(f"{p}: checksum mismatch")
    off = header_size
    sigma = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape((nx, ny, nz), order="F")
    off += 4 * n
    rgb = np.frombuffer(blob, dtype="<f4", count=3 * n, offset=off).reshape((n, 3), order="C")
    # payload rgb rows are x-fastest; reshape back to (Nx,Ny,Nz,3)
    rgb = rgb.reshape((nz, ny, nx, 3)).transpose(2, 1, 0, 3)
    try:
        return GridField(Aabb(lo, hi), sigma.copy(), rgb.copy(), field_id=p.stem)
    except ValidationError as exc:
        raise CorruptHeader(f"{p}: {exc}") from None


# ---------------------------------------------------------------------------
# Fitting a grid to rendered targets
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    n_steps: int = 100
    learning_rate: float = 5.0
    n_samples: int = 64
    background: tuple = (0.0, 0.0, 0.0)
    max_backtracks: int = 20


@dataclass
class FitTarget:
    """One training view: pose + intrinsics + reference image (H, W, 3)."""

    view: object
    intrinsics: object
    image: np.ndarray


def _fit_forward(sigma_nodes, rgb_nodes, geom, background):
    """Render + per-step cache for the backward pass.

    geom carries precomputed ray/sample geometry (positions, deltas, corner
    indices/weights), so each step is two gathers and the quadrature chain.
    """
    idx, w8, ts_delta = geom["indices"], geom["weights"], geom["deltas"]
    sflat = sigma_nodes.reshape(-1)
    cflat = rgb_nodes.reshape(-1, 3)
    sig = (w8 * sflat[idx]).sum(axis=-1)                  # (R, K)
    rgb = (w8[..., None] * cflat[idx]).sum(axis=-2)       # (R, K, 3)
    tau = sig * ts_delta
    accum = np.cumsum(tau, axis=-1)
    trans = np.exp(-np.concatenate([np.zeros((tau.shape[0], 1)), accum[:, :-1]], axis=-1))
    alpha = -np.expm1(-tau)
    weights = trans * alpha
    t_end = np.exp(-accum[:, -1:])
    color = (weights[..., None] * rgb).sum(axis=-2) + t_end * np.asarray(background)
    return color, {"sig": sig, "rgb": rgb, "trans": trans, "alpha": alpha,
                   "weights": weights, "t_end": t_end}


def _fit_backward(resid, cache, geom, n_nodes, background):
    """Analytic gradients of the mean-squared loss w.r.t. node values."""
    w_s = cache["weights"]                       # (R, K)
    rgb = cache["rgb"]                           # (R, K, 3)
    trans = cache["trans"]
    alpha = cache["alpha"]
    deltas = geom["deltas"]
    idx, w8 = geom["indices"], geom["weights"]

    # dL/dc_k = resid * w_k per channel
    d_rgb_sample = resid[:, None, :] * w_s[..., None]          # (R, K, 3)

    # dC/dsigma_k = delta_k * (T_{k+1} c_k - suffix_{j>k} w_j c_j - T_end bg)
    wc = w_s[..., None] * rgb
    suffix = np.flip(np.cumsum(np.flip(wc, axis=1), axis=1), axis=1) - wc
    t_next = trans * (1.0 - alpha)
    bg_term = cache["t_end"][:, None, :] * np.asarray(background)
    dC_dsig = deltas[..., None] * (t_next[..., None] * rgb - suffix - bg_term)
    d_sig_sample = (resid[:, None, :] * dC_dsig).sum(axis=-1)  # (R, K)

    g_sigma = np.zeros(n_nodes)
    g_rgb = np.zeros((n_nodes, 3))
    flat_idx = idx.reshape(-1)
    np.add.at(g_sigma, flat_idx, (d_sig_sample[..., None] * w8).reshape(-1))
    contrib = d_rgb_sample[:, :, None, :] * w8[..., None]      # (R, K, 8, 3)
    np.add.at(g_rgb, flat_idx, contrib.reshape(-1, 3))
    return g_sigma, g_rgb


def fit_grid(targets, initial: GridField, cfg: FitConfig | None = None) -> GridField:
    """Projected gradient descent on the photometric L2 loss.

    Sample positions are frozen midpoints of equal strata over each ray's
    intersection with the grid domain, so the loss is a smooth function of
    the node values alone and the analytic chain through transmittance,
    alpha, and the trilinear weights is exact. Steps that fail a backtracking
    line search are halved; the loss never increases across accepted steps.

    Args:
        targets: list of FitTarget (pose, intrinsics, reference image).
        initial: starting grid (also defines domain/resolution).
        cfg: optimizer settings; n_steps=0 returns a copy of `initial`.

    Raises:
        DivergedLoss: loss or gradient became non-finite.
    """
    cfg = cfg or FitConfig()
    domain = initial.domain()
    res = initial.resolution
    sigma = initial.sigma.astype(np.float64).copy()
    rgb = initial.rgb.astype(np.float64).copy()
    out = GridField(domain, sigma.astype(np.float32), np.clip(rgb, 0, 1).astype(np.float32),
                    field_id=initial.field_id)
    if cfg.n_steps == 0:
        return out

    # precompute ray geometry once: all target pixels, midpoint samples
    geoms = []
    refs = []
    scratch = GridField(domain, sigma.astype(np.float32), np.clip(rgb, 0, 1).astype(np.float32))
    for tgt in targets:
        h, w = tgt.image.shape[:2]
        vs, us = np.mgrid[0:h, 0:w]
        origins, dirs = camera_rays_batch(tgt.view, tgt.intrinsics, us.ravel(), vs.ravel())
        hit, t0, t1 = ray_aabb_intersect_batch(origins, dirs, domain, 0.0, np.inf)
        t0, t1 = np.where(hit, t0, 0.0), np.where(hit, t1, 1.0)
        k = np.arange(cfg.n_samples)
        ts = t0[:, None] + (t1 - t0)[:, None] * (k + 0.5) / cfg.n_samples
        deltas = np.diff(ts, axis=-1, append=t1[:, None])
        deltas[~hit] = 0.0
        pos = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
        indices, weights, _ = scratch.interp_weights(pos.reshape(-1, 3))
        geoms.append({
            "indices": indices.reshape(len(ts), cfg.n_samples, 8),
            "weights": weights.reshape(len(ts), cfg.n_samples, 8),
            "deltas": deltas,
        })
        refs.append(np.asarray(tgt.image, dtype=np.float64).reshape(-1, 3))

    n_nodes = res[0] * res[1] * res[2]
    n_terms = sum(r.size for r in refs)

    def loss_of(s_nodes, c_nodes):
        total = 0.0
        caches = []
        for geom, ref in zip(geoms, refs):
            color, cache = _fit_forward(s_nodes, c_nodes, geom, cfg.background)
            caches.append((color, cache, geom, ref))
            total += float(((color - ref) ** 2).sum())
        return total / n_terms, caches

    loss, caches = loss_of(sigma, rgb)
    if not np.isfinite(loss):
        raise DivergedLoss(f"initial loss {loss}")
    step = cfg.learning_rate

    for _ in range(cfg.n_steps):
        g_sigma = np.zeros(n_nodes)
        g_rgb = np.zeros((n_nodes, 3))
        for color, cache, geom, ref in caches:
            resid = 2.0 * (color - ref) / n_terms
            gs, gc = _fit_backward(resid, cache, geom, n_nodes, cfg.background)
            g_sigma += gs
            g_rgb += gc
        if not (np.all(np.isfinite(g_sigma)) and np.all(np.isfinite(g_rgb))):
            raise DivergedLoss("non-finite gradient")

        accepted = False
        for _ in range(cfg.max_backtracks):
            s_new = np.maximum(sigma - step * g_sigma.reshape(res), 0.0)
            c_new = np.clip(rgb - step * g_rgb.reshape(res + (3,)), 0.0, 1.0)
            new_loss, new_caches = loss_of(s_new, c_new)
            if not np.isfinite(new_loss):
                raise DivergedLoss(f"loss {new_loss}")
            if new_loss <= loss:
                sigma, rgb, loss, caches = s_new, c_new, new_loss, new_caches
                step *= 1.2
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # line search exhausted: converged at this resolution

    return GridField(domain, sigma.astype(np.float32), np.clip(rgb, 0, 1).astype(np.float32),
                     field_id=initial.field_id)


def fit_gradients(targets, grid: GridField, cfg: FitConfig | None = None):
    """Loss and analytic node gradients at the grid's current values.

    Exposed for the finite-difference audit; shares all code with fit_grid.
    Returns (loss, grad_sigma (Nx,Ny,Nz), grad_rgb (Nx,Ny,Nz,3)).
    """
    cfg = cfg or FitConfig()
    res = grid.resolution
    n_nodes = res[0] * res[1] * res[2]
    domain = grid.domain()
    sigma = grid.sigma.astype(np.float64)
    rgb = grid.rgb.astype(np.float64)

    total = 0.0
    g_sigma = np.zeros(n_nodes)
    g_rgb = np.zeros((n_nodes, 3))
    n_terms = 0
    for tgt in targets:
        n_terms += np.asarray(tgt.image).size
    for tgt in targets:
        h, w = tgt.image.shape[:2]
        vs, us = np.mgrid[0:h, 0:w]
        origins, dirs = camera_rays_batch(tgt.view, tgt.intrinsics, us.ravel(), vs.ravel())
        hit, t0, t1 = ray_aabb_intersect_batch(origins, dirs, domain, 0.0, np.inf)
        t0, t1 = np.where(hit, t0, 0.0), np.where(hit, t1, 1.0)
        k = np.arange(cfg.n_samples)
        ts = t0[:, None] + (t1 - t0)[:, None] * (k + 0.5) / cfg.n_samples
        deltas = np.diff(ts, axis=-1, append=t1[:, None])
        deltas[~hit] = 0.0
        pos = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
        indices, weights, _ = grid.interp_weights(pos.reshape(-1, 3))
        geom = {
            "indices": indices.reshape(len(ts), cfg.n_samples, 8),
            "weights": weights.reshape(len(ts), cfg.n_samples, 8),
            "deltas": deltas,
        }
        ref = np.asarray(tgt.image, dtype=np.float64).reshape(-1, 3)
        color, cache = _fit_forward(sigma, rgb, geom, cfg.background)
        total += float(((color - ref) ** 2).sum())
        resid = 2.0 * (color - ref) / n_terms
        gs, gc = _fit_backward(resid, cache, geom, n_nodes, cfg.background)
        g_sigma += gs
        g_rgb += gc
    return total / n_terms, g_sigma.reshape(res), g_rgb.reshape(res + (3,))
