"""Boxes, rays, and the pinhole camera model.

Conventions: world and camera frames are right-handed; poses are world->camera
(COLMAP style), so the camera center is C = -R^T t. Pixel (u, v) addresses
column u, row v, and rays pass through the pixel center (u + 0.5, v + 0.5).
Boxes are closed: boundary points count as inside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PixelOutOfBounds, ValidationError


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(3)
    return a


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by two corners, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", _vec3(self.min))
        object.__setattr__(self, "max", _vec3(self.max))
        if not np.all(self.min <= self.max):
            raise ValidationError(f"aabb min {self.min} exceeds max {self.max}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-box membership for points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.min) & (p <= self.max), axis=-1)

    def expanded(self, margin: float) -> "Aabb":
        return Aabb(self.min - margin, self.max + margin)

    def to_json(self) -> dict:
        return {"min": [float(v) for v in self.min], "max": [float(v) for v in self.max]}

    @staticmethod
    def from_json(obj: dict) -> "Aabb":
        return Aabb(obj["min"], obj["max"])


@dataclass(frozen=True)
class Interval:
    """A parametric span [t_enter, t_exit] along a ray."""

    t_enter: float
    t_exit: float

    def __post_init__(self):
        if not (np.isfinite(self.t_enter) and np.isfinite(self.t_exit)):
            raise ValidationError("interval endpoints must be finite")
        if self.t_enter > self.t_exit:
            raise ValidationError(f"interval [{self.t_enter}, {self.t_exit}] is inverted")

    @property
    def length(self) -> float:
        return self.t_exit - self.t_enter

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return (t >= self.t_enter) & (t <= self.t_exit)


@dataclass(frozen=True)
class Ray:
    """Origin + unit direction with a finite marching range [t_near, t_far]."""

    origin: np.ndarray
    direction: np.ndarray
    t_near: float = 0.0
    t_far: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin))
        d = _vec3(self.direction)
        n = np.linalg.norm(d)
        if n == 0.0 or not np.isfinite(n):
            raise ValidationError("ray direction must be a nonzero finite vector")
        object.__setattr__(self, "direction", d / n)
        if not (0.0 <= self.t_near < self.t_far):
            raise ValidationError(f"need 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]")
        if not np.isfinite(self.t_far):
            raise ValidationError("t_far must be finite")

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.origin + t[..., None] * self.direction if t.ndim else self.origin + t * self.direction


def ray_aabb_intersect(ray: Ray, box: Aabb) -> Interval | None:
    """Clip a ray against a closed box. Returns None on a miss.

    Slab method: intersect the three axis slabs and keep the common span,
    then clip to [t_near, t_far]. Zero direction components give +-inf slab
    bounds, which propagate correctly through min/max as long as the origin
    coordinate is tested against the slab itself.
    """
    enter, exit_, hit = _slab_spans(
        ray.origin[None, :], ray.direction[None, :], box,
        np.float64(ray.t_near), np.float64(ray.t_far),
    )
    if not hit[0]:
        return None
    return Interval(float(enter[0]), float(exit_[0]))


def _slab_spans(origins, dirs, box, t_near, t_far):
    """Vectorized slab test. origins/dirs (N,3); t_near/t_far scalar or (N,).

    Returns (t_enter, t_exit, hit) with entries clipped to [t_near, t_far];
    on miss the t values are unspecified.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (box.min - o) * inv
        t1 = (box.max - o) * inv
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    # A zero component makes both t's +-inf or nan; the slab then constrains
    # nothing if the origin lies inside it and everything if outside.
    zero = d == 0.0
    if np.any(zero):
        inside = (o >= box.min) & (o <= box.max)
        lo = np.where(zero, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(zero, np.where(inside, np.inf, -np.inf), hi)
    t_enter = np.maximum(lo.max(axis=-1), t_near)
    t_exit = np.minimum(hi.min(axis=-1), t_far)
    return t_enter, t_exit, t_enter <= t_exit


def ray_aabb_intersect_batch(origins, dirs, box: Aabb, t_near, t_far):
    """Batch form of ray_aabb_intersect over (N,3) arrays.

    Returns (hit (N,), t_enter (N,), t_exit (N,)); t values are only
    meaningful where hit is True.
    """
    return _batch_entry_exit(origins, dirs, box, t_near, t_far)


def _batch_entry_exit(origins, dirs, box, t_near, t_far):
    enter, exit_, hit = _slab_spans(origins, dirs, box, np.asarray(t_near, dtype=np.float64), np.asarray(t_far, dtype=np.float64))
    return hit, enter, exit_


# --- rotations ---

def quat_to_rotmat(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 3x3 rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0 or not np.isfinite(n):
        raise ValidationError("quaternion must be nonzero and finite")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


# --- camera rays ---

def camera_center(view) -> np.ndarray:
    """World-space camera center C = -R^T t for a world->camera pose."""
    R = quat_to_rotmat(view.rotation)
    return -R.T @ _vec3(view.translation)


def camera_ray(view, intrinsics, u: float, v: float, t_near: float = 0.0, t_far: float = np.inf) -> Ray:
    """Ray through the center of pixel (u, v) of the given view.

    Args:
        view: pose record with .rotation (w,x,y,z quaternion) and .translation.
        intrinsics: pinhole record with .fx .fy .cx .cy .width .height.
        u, v: pixel coordinates, 0 <= u < width and 0 <= v < height.
        t_near, t_far: marching range for the returned ray. An infinite t_far
            is replaced by a large finite span so quadrature deltas stay finite.

    Returns:
        Ray with unit world-space direction.
    """
    if not (0 <= u < intrinsics.width and 0 <= v < intrinsics.height):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside {intrinsics.width}x{intrinsics.height}")
    origins, dirs = camera_rays_batch(view, intrinsics, np.asarray([u]), np.asarray([v]))
    if not np.isfinite(t_far):
        t_far = 1e8
    return Ray(origins[0], dirs[0], t_near=t_near, t_far=t_far)


def camera_rays_batch(view, intrinsics, us: np.ndarray, vs: np.ndarray):
    """World-space rays through pixel centers for arrays of pixel coords.

    Returns (origins (N,3) all equal to the camera center, dirs (N,3) unit).
    """
    R = quat_to_rotmat(view.rotation)
    C = -R.T @ _vec3(view.translation)
    x = (np.asarray(us, dtype=np.float64) + 0.5 - intrinsics.cx) / intrinsics.fx
    y = (np.asarray(vs, dtype=np.float64) + 0.5 - intrinsics.cy) / intrinsics.fy
    d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
    d_world = d_cam @ R  # == (R^T @ d_cam^T)^T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(C, d_world.shape).copy()
    return origins, d_world


def look_at_pose(center, target, up=(0.0, 0.0, 1.0)):
    """World->camera (R, t) for a camera at `center` looking at `target`.

    Image down is aligned with -up projected off the view axis, so the world
    up vector appears upright. Degenerate when the view axis is parallel to up.
    """
    C = _vec3(center)
    f = _vec3(target) - C
    n = np.linalg.norm(f)
    if n == 0:
        raise ValidationError("look_at: center and target coincide")
    z_cam = f / n
    u = _vec3(up)
    y_cam = -u + np.dot(u, z_cam) * z_cam
    ny = np.linalg.norm(y_cam)
    if ny < 1e-12:
        raise ValidationError("look_at: view direction parallel to up")
    y_cam /= ny
    x_cam = np.cross(y_cam, z_cam)
    R = np.stack([x_cam, y_cam, z_cam], axis=0)
    t = -R @ C
    return R, t
