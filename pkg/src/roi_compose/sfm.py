"""Sparse reconstruction ingest and synthesis.

Reads COLMAP text exports (cameras.txt / images.txt / points3D.txt), writes
them back, round-trips the same data as JSON ("roi-recon v1"), and fabricates
synthetic reconstructions from analytic scenes for the built-in fixtures.

Only pinhole intrinsics are supported: camera models PINHOLE and
SIMPLE_PINHOLE. Poses are world->camera quaternion + translation as stored by
COLMAP; observations with point3d_id -1 are kept (as None in memory).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import (
    BrokenTrack,
    DegenerateOrbit,
    MalformedJson,
    MalformedLine,
    MissingFile,
    SchemaVersionMismatch,
    UnsupportedCameraModel,
    ValidationError,
)
from .geometry import Aabb, quat_to_rotmat, rotmat_to_quat
from .rng import hash_uniform

RECON_SCHEMA = "roi-recon v1"

_MODELS = {"PINHOLE": "pinhole", "SIMPLE_PINHOLE": "simple-pinhole"}
_MODELS_OUT = {v: k for k, v in _MODELS.items()}


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics for one physical camera."""

    camera_id: int
    model: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.model not in ("pinhole", "simple-pinhole"):
            raise UnsupportedCameraModel(f"camera model {self.model!r}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"camera {self.camera_id}: bad image size {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"camera {self.camera_id}: focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValidationError(f"camera {self.camera_id}: principal point outside image")


@dataclass(frozen=True)
class Observation:
    u: float
    v: float
    point3d_id: int | None = None


@dataclass
class ViewRecord:
    """One registered image: pose (world->camera) plus its 2D observations."""

    view_id: int
    name: str
    camera_id: int
    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    translation: np.ndarray
    observations: list = field(default_factory=list)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValidationError(f"view {self.view_id}: rotation quaternion not unit (|q|={n})")
        self.rotation = q
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.rotation)

    def camera_center(self) -> np.ndarray:
        return geometry.camera_center(self)


@dataclass
class SparsePoint:
    point_id: int
    position: np.ndarray
    color: tuple  # (r, g, b) uint8
    error: float
    track: list = field(default_factory=list)  # [(view_id, obs_index)]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


@dataclass
class Reconstruction:
    intrinsics: dict  # camera_id -> CameraIntrinsics
    views: dict       # view_id -> ViewRecord
    points: dict      # point_id -> SparsePoint

    def validate(self) -> None:
        """Referential integrity: tracks and observations must agree both ways."""
        for view in self.views.values():
            if view.camera_id not in self.intrinsics:
                raise BrokenTrack(f"view {view.view_id} references unknown camera {view.camera_id}")
            for i, obs in enumerate(view.observations):
                if obs.point3d_id is None:
                    continue
                pt = self.points.get(obs.point3d_id)
                if pt is None:
                    raise BrokenTrack(
                        f"view {view.view_id} obs {i} references missing point {obs.point3d_id}"
                    )
                if (view.view_id, i) not in pt.track:
                    raise BrokenTrack(
                        f"point {obs.point3d_id} track missing entry ({view.view_id}, {i})"
                    )
        for pt in self.points.values():
            for view_id, obs_idx in pt.track:
                view = self.views.get(view_id)
                if view is None:
                    raise BrokenTrack(f"point {pt.point_id} tracked in unknown view {view_id}")
                if obs_idx < 0 or obs_idx >= len(view.observations):
                    raise BrokenTrack(
                        f"point {pt.point_id} track entry ({view_id}, {obs_idx}) out of range"
                    )
                if view.observations[obs_idx].point3d_id != pt.point_id:
                    raise BrokenTrack(
                        f"point {pt.point_id} track entry ({view_id}, {obs_idx}) disagrees with observation"
                    )

    def point_positions(self) -> tuple:
        """(ids list, (N,3) array) in ascending id order."""
        ids = sorted(self.points)
        if not ids:
            return ids, np.zeros((0, 3))
        return ids, np.stack([self.points[i].position for i in ids])


# ---------------------------------------------------------------------------
# COLMAP text I/O
# ---------------------------------------------------------------------------

def _data_lines(path: Path):
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_floats(tokens, path, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise MalformedLine(f"{path.name}:{lineno}: expected numbers, got {tokens!r}") from None


def parse_colmap_text(directory) -> Reconstruction:
    """Parse a COLMAP text-format sparse reconstruction directory.

    Args:
        directory: folder containing cameras.txt, images.txt, points3D.txt.

    Returns:
        Validated Reconstruction.

    Raises:
        MissingFile: a required file is absent.
        MalformedLine: a line does not match the format (message carries
            file name and line number).
        UnsupportedCameraModel: camera model other than PINHOLE/SIMPLE_PINHOLE.
        BrokenTrack: tracks and observations disagree.
    """
    directory = Path(directory)
    paths = {}
    for name in ("cameras.txt", "images.txt", "points3D.txt"):
        p = directory / name
        if not p.is_file():
            raise MissingFile(f"{p} not found")
        paths[name] = p

    intrinsics = {}
    p = paths["cameras.txt"]
    for lineno, line in _data_lines(p):
        tokens = line.split()
        if len(tokens) < 4:
            raise MalformedLine(f"{p.name}:{lineno}: too few fields")
        try:
            camera_id = int(tokens[0])
            width, height = int(tokens[2]), int(tokens[3])
        except ValueError:
            raise MalformedLine(f"{p.name}:{lineno}: bad integer field") from None
        model = tokens[1]
        params = _parse_floats(tokens[4:], p, lineno)
        if model == "PINHOLE":
            if len(params) != 4:
                raise MalformedLine(f"{p.name}:{lineno}: PINHOLE expects 4 params")
            fx, fy, cx, cy = params
        elif model == "SIMPLE_PINHOLE":
            if len(params) != 3:
                raise MalformedLine(f"{p.name}:{lineno}: SIMPLE_PINHOLE expects 3 params")
            f, cx, cy = params
            fx = fy = f
        else:
            raise UnsupportedCameraModel(f"{p.name}:{lineno}: model {model!r}")
        if camera_id in intrinsics:
            raise MalformedLine(f"{p.name}:{lineno}: duplicate camera id {camera_id}")
        intrinsics[camera_id] = CameraIntrinsics(
            camera_id, _MODELS[model], width, height, fx, fy, cx, cy
        )

    views = {}
    p = paths["images.txt"]
    pending = None  # header fields waiting for their observation line
    # images.txt cannot go through _data_lines: a blank second line is data
    # (an image with zero observations), not whitespace to skip
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if pending is None and not line:
            continue
        tokens = line.split()
        if pending is None:
            if len(tokens) < 10:
                raise MalformedLine(f"{p.name}:{lineno}: image header needs 10 fields")
            try:
                view_id = int(tokens[0])
                camera_id = int(tokens[8])
            except ValueError:
                raise MalformedLine(f"{p.name}:{lineno}: bad integer field") from None
            pose = _parse_floats(tokens[1:8], p, lineno)
            name = " ".join(tokens[9:])
            pending = (view_id, name, camera_id, pose, lineno)
        else:
            view_id, name, camera_id, pose, header_lineno = pending
            pending = None
            if len(tokens) % 3 != 0:
                raise MalformedLine(f"{p.name}:{lineno}: observations must come in (x, y, id) triplets")
            observations = []
            for i in range(0, len(tokens), 3):
                x, y = _parse_floats(tokens[i:i + 2], p, lineno)
                try:
                    pid = int(tokens[i + 2])
                except ValueError:
                    raise MalformedLine(f"{p.name}:{lineno}: bad point id {tokens[i + 2]!r}") from None
                observations.append(Observation(x, y, None if pid == -1 else pid))
            if view_id in views:
                raise MalformedLine(f"{p.name}:{header_lineno}: duplicate image id {view_id}")
            qw, qx, qy, qz, tx, ty, tz = pose
            try:
                views[view_id] = ViewRecord(
                    view_id, name, camera_id, (qw, qx, qy, qz), (tx, ty, tz), observations
                )
            except ValidationError as exc:
                raise MalformedLine(f"{p.name}:{header_lineno}: {exc}") from None
    if pending is not None:
        raise MalformedLine(f"{p.name}:{pending[4]}: image header without observation line")

    points = {}
    p = paths["points3D.txt"]
    for lineno, line in _data_lines(p):
        tokens = line.split()
        if len(tokens) < 8:
            raise MalformedLine(f"{p.name}:{lineno}: point line needs at least 8 fields")
        if (len(tokens) - 8) % 2 != 0:
            raise MalformedLine(f"{p.name}:{lineno}: track must come in (image, obs) pairs")
        try:
            point_id = int(tokens[0])
            r, g, b = int(tokens[4]), int(tokens[5]), int(tokens[6])
        except ValueError:
            raise MalformedLine(f"{p.name}:{lineno}: bad integer field") from None
        xyz = _parse_floats(tokens[1:4], p, lineno)
        error = _parse_floats(tokens[7:8], p, lineno)[0]
        if not all(0 <= c <= 255 for c in (r, g, b)):
            raise MalformedLine(f"{p.name}:{lineno}: color out of range")
        track = []
        for i in range(8, len(tokens), 2):
            try:
                track.append((int(tokens[i]), int(tokens[i + 1])))
            except ValueError:
                raise MalformedLine(f"{p.name}:{lineno}: bad track entry") from None
        if point_id in points:
            raise MalformedLine(f"{p.name}:{lineno}: duplicate point id {point_id}")
        points[point_id] = SparsePoint(point_id, xyz, (r, g, b), error, track)

    recon = Reconstruction(intrinsics, views, points)
    recon.validate()
    return recon


def write_colmap_text(recon: Reconstruction, directory) -> None:
    """Write a reconstruction in COLMAP text format (inverse of the parser)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    lines = ["# Camera list with one line of data per camera:",
             "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]"]
    for cam in sorted(recon.intrinsics.values(), key=lambda c: c.camera_id):
        if cam.model == "simple-pinhole":
            params = [cam.fx, cam.cx, cam.cy]
        else:
            params = [cam.fx, cam.fy, cam.cx, cam.cy]
        lines.append(
            f"{cam.camera_id} {_MODELS_OUT[cam.model]} {cam.width} {cam.height} "
            # repr(float(...)) is the shortest round-trip decimal; plain repr
            # of a numpy scalar would print np.float64(...)
            + " ".join(repr(float(p)) for p in params)
        )
    (directory / "cameras.txt").write_text("\n".join(lines) + "\n")

    lines = ["# Image list with two lines of data per image:",
             "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
             "#   POINTS2D[] as (X, Y, POINT3D_ID)"]
    for view in sorted(recon.views.values(), key=lambda v: v.view_id):
        q = [repr(float(x)) for x in view.rotation]
        t = [repr(float(x)) for x in view.translation]
        lines.append(
            f"{view.view_id} {' '.join(q)} {' '.join(t)} {view.camera_id} {view.name}"
        )
        obs_tokens = []
        for obs in view.observations:
            pid = -1 if obs.point3d_id is None else obs.point3d_id
            obs_tokens.append(f"{float(obs.u)!r} {float(obs.v)!r} {pid}")
        lines.append(" ".join(obs_tokens))
    (directory / "images.txt").write_text("\n".join(lines) + "\n")

    lines = ["# 3D point list with one line of data per point:",
             "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)"]
    for pt in sorted(recon.points.values(), key=lambda p: p.point_id):
        x, y, z = (repr(float(v)) for v in pt.position)
        track = " ".join(f"{vid} {oidx}" for vid, oidx in pt.track)
        lines.append(
            f"{pt.point_id} {x} {y} {z} {pt.color[0]} {pt.color[1]} {pt.color[2]} "
            f"{float(pt.error)!r} {track}".rstrip()
        )
    (directory / "points3D.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def reconstruction_to_json(recon: Reconstruction) -> dict:
    # plain int()/float() throughout: sources like the synthesizer hand over
    # numpy scalars, which the json encoder rejects
    return {
        "schema": RECON_SCHEMA,
        "cameras": [
            {
                "camera_id": int(c.camera_id), "model": c.model,
                "width": int(c.width), "height": int(c.height),
                "fx": float(c.fx), "fy": float(c.fy), "cx": float(c.cx), "cy": float(c.cy),
            }
            for c in sorted(recon.intrinsics.values(), key=lambda c: c.camera_id)
        ],
        "views": [
            {
                "view_id": int(v.view_id), "name": v.name, "camera_id": int(v.camera_id),
                "rotation": [float(x) for x in v.rotation],
                "translation": [float(x) for x in v.translation],
                "observations": [
                    [float(o.u), float(o.v), -1 if o.point3d_id is None else int(o.point3d_id)]
                    for o in v.observations
                ],
            }
            for v in sorted(recon.views.values(), key=lambda v: v.view_id)
        ],
        "points": [
            {
                "point_id": int(p.point_id),
                "position": [float(x) for x in p.position],
                "color": [int(x) for x in p.color], "error": float(p.error),
                "track": [[int(vid), int(oidx)] for vid, oidx in p.track],
            }
            for p in sorted(recon.points.values(), key=lambda p: p.point_id)
        ],
    }


def reconstruction_from_json(obj: dict) -> Reconstruction:
    if not isinstance(obj, dict):
        raise MalformedJson("reconstruction JSON must be an object")
    schema = obj.get("schema")
    if schema != RECON_SCHEMA:
        raise SchemaVersionMismatch(f"expected {RECON_SCHEMA!r}, got {schema!r}")
    try:
        intrinsics = {
            c["camera_id"]: CameraIntrinsics(
                c["camera_id"], c["model"], c["width"], c["height"],
                c["fx"], c["fy"], c["cx"], c["cy"],
            )
            for c in obj["cameras"]
        }
        views = {}
        for v in obj["views"]:
            observations = [
                Observation(o[0], o[1], None if o[2] == -1 else int(o[2]))
                for o in v["observations"]
            ]
            views[v["view_id"]] = ViewRecord(
                v["view_id"], v["name"], v["camera_id"],
                v["rotation"], v["translation"], observations,
            )
        points = {
            p["point_id"]: SparsePoint(
                p["point_id"], p["position"], tuple(p["color"]), p["error"],
                [tuple(e) for e in p["track"]],
            )
            for p in obj["points"]
        }
    except (KeyError, TypeError, IndexError) as exc:
        raise MalformedJson(f"reconstruction JSON missing or malformed field: {exc}") from None
    recon = Reconstruction(intrinsics, views, points)
    recon.validate()
    return recon


def save_reconstruction(recon: Reconstruction, path) -> None:
    Path(path).write_text(json.dumps(reconstruction_to_json(recon), sort_keys=True, indent=1) + "\n")


def load_reconstruction(path) -> Reconstruction:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{p}: {exc}") from None
    return reconstruction_from_json(obj)


# ---------------------------------------------------------------------------
# Synthetic reconstructions
# ---------------------------------------------------------------------------

@dataclass
class ScenePoints:
    """Point cloud to observe: positions (N,3) and uint8 colors (N,3)."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.int64).reshape(-1, 3)
        if len(self.colors) != len(self.positions):
            raise ValidationError("positions and colors disagree in length")


@dataclass
class CameraRing:
    """A ring of cameras on a circle, all looking at a common target."""

    n_views: int
    radius: float
    height: float
    target: tuple = (0.0, 0.0, 0.0)
    phase: float = 0.0
    radius_wobble: float = 0.0  # sinusoidal radius variation, breaks distance ties


@dataclass
class OrbitSpec:
    """Camera layout for synth_reconstruction: one or more rings."""

    rings: list
    width: int = 200
    height: int = 200
    focal: float = 220.0
    visibility_falloff: float = 0.0  # 0: geometric only; >0: distance dropout
    visibility_ref_dist: float = 1.0

    def __post_init__(self):
        if not self.rings:
            raise DegenerateOrbit("orbit needs at least one camera ring")
        for ring in self.rings:
            if ring.n_views < 1:
                raise DegenerateOrbit(f"ring with {ring.n_views} views")
            if ring.radius <= 0:
                raise DegenerateOrbit(f"ring radius {ring.radius} must be positive")


def ring_camera_centers(ring: CameraRing) -> np.ndarray:
    k = np.arange(ring.n_views)
    theta = ring.phase + 2.0 * np.pi * k / ring.n_views
    r = ring.radius + ring.radius_wobble * np.sin(3.0 * theta)
    return np.stack(
        [r * np.cos(theta), r * np.sin(theta), np.full_like(theta, float(ring.height))],
        axis=-1,
    )


def synth_reconstruction(scene: ScenePoints, orbit: OrbitSpec, seed: int) -> Reconstruction:
    """Fabricate a pinhole reconstruction of a known point cloud.

    Cameras are laid out on the orbit rings looking at each ring's target.
    A point is observed by a view when it projects inside the image in front
    of the camera; with visibility_falloff > 0 an additional deterministic
    dropout keyed by (seed, point, view) thins far cameras more than near
    ones, which is what makes per-view visible-point counts distance
    dependent. Identical inputs and seed give an identical reconstruction.
    """
    cam = CameraIntrinsics(
        1, "pinhole", orbit.width, orbit.height,
        orbit.focal, orbit.focal, orbit.width / 2.0, orbit.height / 2.0,
    )

    centers = []
    targets = []
    for ring in orbit.rings:
        c = ring_camera_centers(ring)
        centers.append(c)
        targets.append(np.broadcast_to(np.asarray(ring.target, dtype=np.float64), c.shape))
    centers = np.concatenate(centers)
    targets = np.concatenate(targets)

    views = {}
    points = {
        pid: SparsePoint(pid, scene.positions[i], tuple(int(c) for c in scene.colors[i]), 0.0, [])
        for i, pid in enumerate(range(1, len(scene.positions) + 1))
    }

    for vi, (center, target) in enumerate(zip(centers, targets)):
        view_id = vi + 1
        R, t = geometry.look_at_pose(center, target)
        q = rotmat_to_quat(R)
        view = ViewRecord(view_id, f"synth_{view_id:04d}.png", 1, q, t, [])

        p_cam = scene.positions @ R.T + t
        z = p_cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam.fx * p_cam[:, 0] / z + cam.cx - 0.5
            v = cam.fy * p_cam[:, 1] / z + cam.cy - 0.5
        visible = (z > 1e-6) & (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)

        if orbit.visibility_falloff > 0:
            dist = np.linalg.norm(scene.positions - center, axis=-1)
            keep_prob = np.minimum(
                1.0, (orbit.visibility_ref_dist / np.maximum(dist, 1e-9)) ** orbit.visibility_falloff
            )
            pids = np.arange(1, len(scene.positions) + 1)
            draws = hash_uniform(np.uint64(seed), pids.astype(np.uint64), np.uint64(view_id))
            visible &= draws < keep_prob

        for pi in np.nonzero(visible)[0]:
            pid = pi + 1
            obs_idx = len(view.observations)
            view.observations.append(Observation(float(u[pi]), float(v[pi]), pid))
            points[pid].track.append((view_id, obs_idx))
        views[view_id] = view

    recon = Reconstruction({1: cam}, views, points)
    recon.validate()
    return recon


def points_in_box(recon: Reconstruction, box: Aabb) -> list:
    """Ids of sparse points inside a closed box."""
    ids, pos = recon.point_positions()
    if not ids:
        return []
    mask = box.contains(pos)
    return [ids[i] for i in np.nonzero(mask)[0]]


def scale_intrinsics(intr: CameraIntrinsics, scale: float) -> CameraIntrinsics:
    """Intrinsics for the same camera rendered at `scale` times the resolution.

    Sizes round to the nearest pixel (floor of 1), and focal lengths and the
    principal point follow the *realized* per-axis ratio, in the pixel-center
    convention: a point at pixel center (u+0.5) lands at (u+0.5)*ratio. At
    scale 1.0 this returns the input unchanged.
    """
    if not (0.0 < scale <= 1.0) or not np.isfinite(scale):
        raise ValidationError(f"intrinsics scale must be in (0, 1], got {scale}")
    if scale == 1.0:
        return intr
    width = max(1, int(round(intr.width * scale)))
    height = max(1, int(round(intr.height * scale)))
    sx = width / intr.width
    sy = height / intr.height
    # principal points within half an input pixel of the border can land just
    # outside after rescaling; clamp rather than reject
    cx = min(max((intr.cx + 0.5) * sx - 0.5, 0.0), float(width))
    cy = min(max((intr.cy + 0.5) * sy - 0.5, 0.0), float(height))
    return CameraIntrinsics(
        camera_id=intr.camera_id, model=intr.model, width=width, height=height,
        fx=intr.fx * sx, fy=intr.fy * sy, cx=cx, cy=cy,
    )
