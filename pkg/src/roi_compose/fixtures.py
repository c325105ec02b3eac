"""Built-in synthetic scenes: oracle field, ROI boxes, posed capture.

Each fixture bundles an analytic ground-truth field (the stand-in for the
real world), the marching bounds, ROI boxes with grouping knobs, and a
synthetic reconstruction whose cameras orbit the subject. Every quantity is
a pure function of (fixture name, seed).

The three scenes target specific pipeline behaviors:

  checker-table  a finely checkered box on a plane; the scene field baked at
                 low resolution blurs the checker, the ROI field recovers it.
                 48 cameras (32 orbit + 16 close-up), all passing the
                 visibility threshold, so the 15% azimuth split yields 8
                 test views.
  two-spheres    n striped spheres (default 2, up to 6) on a ring, one ROI
                 each; exercises multi-ROI composition and its timing.
  occluder       a checkered sphere inside a roomy ROI box plus a wall
                 outside the box: cameras behind the wall produce occluded
                 box rays, and box corners produce empty-space rays, the two
                 depth-filter rejection classes.

d_max is overridden on every fixture ROI: ring cameras sit at near-identical
distances from the box centers, so a computed d_max would put test cameras
exactly on the cull boundary and the accept/cull outcome would hinge on
floating-point noise. Distance culling behavior is tested with explicitly
placed cameras instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fields import AnalyticField, Box, Checker, Slab, Sphere, Stripes
from .geometry import Aabb
from .grouping import RoiSpec
from .rng import stable_u32
from .sfm import CameraRing, OrbitSpec, Reconstruction, ScenePoints, synth_reconstruction


@dataclass
class Fixture:
    name: str
    oracle: AnalyticField
    scene_domain: Aabb
    rois: list
    recon: Reconstruction
    seed: int

    def roi_spec(self, name: str) -> RoiSpec:
        for spec in self.rois:
            if spec.name == name:
                return spec
        raise ValidationError(f"fixture {self.name!r} has no roi named {name!r}")


def _rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stable_u32(label)]))


def _sphere_surface(rng, center, radius: float, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return np.asarray(center, dtype=np.float64) + radius * v


def _box_surface(rng, box: Aabb, n: int) -> np.ndarray:
    ext = box.extent
    areas = np.asarray([
        ext[1] * ext[2], ext[1] * ext[2],
        ext[0] * ext[2], ext[0] * ext[2],
        ext[0] * ext[1], ext[0] * ext[1],
    ])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    pts = box.min + rng.random((n, 3)) * ext
    for axis in range(3):
        pts[faces == 2 * axis, axis] = box.min[axis]
        pts[faces == 2 * axis + 1, axis] = box.max[axis]
    return pts


def _floor_ring(rng, r_lo: float, r_hi: float, n: int) -> np.ndarray:
    r = np.sqrt(rng.uniform(r_lo ** 2, r_hi ** 2, n))
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)], axis=-1)


def _points_from(oracle, positions: np.ndarray) -> ScenePoints:
    _, rgb = oracle.query_many(positions)
    colors = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.int64)
    return ScenePoints(positions, colors)


def checker_table(seed: int = 0) -> Fixture:
    domain = Aabb((-2.5, -2.5, -0.35), (2.5, 2.5, 2.2))
    table = Box(
        Aabb((-0.5, -0.5, 0.0), (0.5, 0.5, 0.8)),
        density=120.0, color=(0.95, 0.95, 0.92),
        texture=Checker(frequency=8.0, other=(0.06, 0.06, 0.08)),
    )
    floor = Slab(axis=2, lo=-0.2, hi=0.0, density=80.0, color=(0.45, 0.42, 0.40))
    oracle = AnalyticField([table, floor], domain=domain, field_id="checker-table")

    rng = _rng(seed, "checker-table-points")
    pts = np.concatenate([
        _box_surface(rng, table.box, 260),
        _floor_ring(rng, 0.95, 2.1, 160),
    ])
    orbit = OrbitSpec(
        rings=[
            CameraRing(32, radius=2.2, height=1.2, target=(0, 0, 0.4), radius_wobble=0.08),
            CameraRing(16, radius=1.3, height=0.95, target=(0, 0, 0.4),
                       phase=0.13, radius_wobble=0.05),
        ],
        width=200, height=200, focal=240.0,
        visibility_falloff=2.0, visibility_ref_dist=2.0,
    )
    recon = synth_reconstruction(_points_from(oracle, pts), orbit, seed)
    roi = RoiSpec("table", Aabb((-0.7, -0.7, -0.05), (0.7, 0.7, 0.95)), d_max_override=3.0)
    return Fixture("checker-table", oracle, domain, [roi], recon, seed)


_SPHERE_COLORS = [
    (0.85, 0.25, 0.20), (0.20, 0.65, 0.80), (0.85, 0.75, 0.25),
    (0.60, 0.30, 0.80), (0.30, 0.80, 0.40), (0.90, 0.50, 0.20),
]


def two_spheres(seed: int = 0, n_spheres: int = 2) -> Fixture:
    if not (1 <= n_spheres <= 6):
        raise ValidationError("n_spheres must be in [1, 6] (boxes stay disjoint)")
    domain = Aabb((-2.6, -2.6, -0.35), (2.6, 2.6, 2.0))
    radius = 0.28
    ring_r = 0.85 if n_spheres > 1 else 0.0

    prims = [Slab(axis=2, lo=-0.2, hi=0.0, density=80.0, color=(0.42, 0.45, 0.48))]
    rois = []
    for k in range(n_spheres):
        theta = 2.0 * np.pi * k / n_spheres
        c = (ring_r * np.cos(theta), ring_r * np.sin(theta), radius)
        base = _SPHERE_COLORS[k]
        other = tuple(np.clip(1.0 - np.asarray(base), 0.0, 1.0))
        prims.append(Sphere(c, radius, density=100.0, color=base,
                            texture=Stripes(frequency=5.0 + k, axis=k % 3, other=other)))
        box = Aabb((c[0] - 0.42, c[1] - 0.42, -0.04), (c[0] + 0.42, c[1] + 0.42, 0.64))
        rois.append(RoiSpec(f"sphere-{k}", box, d_max_override=5.0))
    oracle = AnalyticField(prims, domain=domain, field_id=f"two-spheres-{n_spheres}")

    rng = _rng(seed, "two-spheres-points")
    chunks = [
        _sphere_surface(rng, prim.center, radius, 90) for prim in prims[1:]
    ]
    chunks.append(_floor_ring(rng, 1.5, 2.3, 120))
    pts = np.concatenate(chunks)
    orbit = OrbitSpec(
        rings=[
            CameraRing(24, radius=2.6, height=1.4, target=(0, 0, 0.3), radius_wobble=0.06),
            CameraRing(12, radius=2.0, height=0.8, target=(0, 0, 0.3),
                       phase=0.26, radius_wobble=0.04),
        ],
        width=200, height=200, focal=200.0,
    )
    recon = synth_reconstruction(_points_from(oracle, pts), orbit, seed)
    return Fixture("two-spheres", oracle, domain, rois, recon, seed)


def occluder(seed: int = 0) -> Fixture:
    domain = Aabb((-2.8, -2.8, -0.35), (2.8, 2.8, 2.2))
    ball = Sphere(
        (0.0, 0.0, 0.32), 0.32, density=120.0, color=(0.85, 0.30, 0.25),
        texture=Checker(frequency=10.0, other=(0.95, 0.92, 0.88)),
    )
    wall = Box(Aabb((1.05, -1.6, 0.0), (1.2, 1.6, 1.5)),
               density=150.0, color=(0.25, 0.30, 0.40))
    floor = Slab(axis=2, lo=-0.2, hi=0.0, density=80.0, color=(0.45, 0.43, 0.40))
    oracle = AnalyticField([ball, wall, floor], domain=domain, field_id="occluder")

    rng = _rng(seed, "occluder-points")
    pts = np.concatenate([
        _sphere_surface(rng, ball.center, ball.radius, 140),
        _floor_ring(rng, 1.3, 2.0, 120),
    ])
    orbit = OrbitSpec(
        rings=[CameraRing(24, radius=2.4, height=1.0, target=(0, 0, 0.35),
                          radius_wobble=0.05)],
        width=200, height=200, focal=220.0,
    )
    recon = synth_reconstruction(_points_from(oracle, pts), orbit, seed)
    # roomy box: the sphere fills the middle, the corners stay empty
    roi = RoiSpec("ball", Aabb((-0.75, -0.75, -0.05), (0.75, 0.75, 0.85)), d_max_override=4.0)
    return Fixture("occluder", oracle, domain, [roi], recon, seed)


_FIXTURES = {
    "checker-table": checker_table,
    "two-spheres": two_spheres,
    "occluder": occluder,
}

FIXTURE_NAMES = tuple(sorted(_FIXTURES))


def make_fixture(name: str, seed: int = 0, **options) -> Fixture:
    if name not in _FIXTURES:
        raise ValidationError(f"unknown fixture {name!r}; have {', '.join(FIXTURE_NAMES)}")
    return _FIXTURES[name](seed=seed, **options)
