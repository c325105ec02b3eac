"""Visibility-based camera grouping around regions of interest.

For each ROI box, count the sparse points inside it that each view observes;
views whose count clears threshold_fraction * nbTotalPoints (strictly) join
that ROI's camera set. A held-out test split is taken by azimuth-stratified
striding, the scene set is the complement plus a seeded share of every ROI's
training cameras, and d_max records how far the farthest training camera
sits from the ROI center (cameras beyond it skip that ROI at compose time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyRoi,
    EmptyTrainingSet,
    MalformedJson,
    MissingFile,
    SchemaVersionMismatch,
    SetTooSmall,
    ValidationError,
)
from .geometry import Aabb
from .rng import stable_u32
from .sfm import Reconstruction

GROUPS_SCHEMA = "roi-groups v1"
UP_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class RoiSpec:
    """A named box plus the grouping knobs that apply to it."""

    name: str
    aabb: Aabb
    threshold_fraction: float = 0.10
    scene_integration_fraction: float = 0.50
    test_fraction: float = 0.15
    d_max_override: float | None = None

    def __post_init__(self):
        if not self.name:
            raise ValidationError("roi name must be non-empty")
        if not (0.0 <= self.threshold_fraction <= 1.0):
            raise ValidationError(f"threshold_fraction {self.threshold_fraction} outside [0, 1]")
        if not (0.0 <= self.scene_integration_fraction <= 1.0):
            raise ValidationError("scene_integration_fraction outside [0, 1]")
        if not (0.0 <= self.test_fraction < 1.0):
            raise ValidationError(f"test_fraction {self.test_fraction} outside [0, 1)")
        if self.d_max_override is not None and self.d_max_override <= 0:
            raise ValidationError("d_max_override must be positive")

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "aabb": self.aabb.to_json(),
            "threshold_fraction": self.threshold_fraction,
            "scene_integration_fraction": self.scene_integration_fraction,
            "test_fraction": self.test_fraction,
        }
        if self.d_max_override is not None:
            out["d_max_override"] = self.d_max_override
        return out

    @staticmethod
    def from_json(obj: dict) -> "RoiSpec":
        try:
            return RoiSpec(
                obj["name"], Aabb.from_json(obj["aabb"]),
                obj.get("threshold_fraction", 0.10),
                obj.get("scene_integration_fraction", 0.50),
                obj.get("test_fraction", 0.15),
                obj.get("d_max_override"),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedJson(f"roi spec missing field: {exc}") from None


@dataclass
class RoiGrouping:
    name: str
    nb_total_points: int
    counts: dict           # view_id -> in-box points observed
    selected: list         # view ids clearing the threshold, ascending
    train_views: list
    test_views: list
    d_max: float


@dataclass
class GroupingResult:
    seed: int
    rois: list                 # RoiGrouping, in input order
    scene_views: list          # scene training set, ascending view ids


class VisibilityIndex:
    """Flattened observation arrays for repeated in-box visibility counts.

    Building walks every observation once; count() afterwards is pure array
    work (a box containment test plus a bincount), which is what keeps
    interactive regrouping cheap on large reconstructions.
    """

    def __init__(self, recon: Reconstruction):
        ids, pos = recon.point_positions()
        self.view_ids = sorted(recon.views)
        self.positions = pos
        self._code = {vid: i for i, vid in enumerate(self.view_ids)}
        row_of = {pid: i for i, pid in enumerate(ids)}
        rows = []
        codes = []
        for vid in self.view_ids:
            code = self._code[vid]
            for obs in recon.views[vid].observations:
                if obs.point3d_id is None:
                    continue
                row = row_of.get(obs.point3d_id)
                if row is not None:
                    rows.append(row)
                    codes.append(code)
        self.obs_row = np.asarray(rows, dtype=np.int64)
        self.obs_view = np.asarray(codes, dtype=np.int64)

    def count(self, box: Aabb):
        """(counts dict view_id -> int, nb_total in-box points)."""
        n_views = len(self.view_ids)
        if self.positions.shape[0] == 0:
            return {vid: 0 for vid in self.view_ids}, 0
        member = box.contains(self.positions)
        nb_total = int(member.sum())
        if self.obs_row.size:
            per_view = np.bincount(self.obs_view[member[self.obs_row]], minlength=n_views)
        else:
            per_view = np.zeros(n_views, dtype=np.int64)
        return {vid: int(per_view[i]) for i, vid in enumerate(self.view_ids)}, nb_total


def count_visible_points(recon: Reconstruction, box: Aabb, index: VisibilityIndex | None = None):
    """Per-view count of in-box points each view observes.

    Returns (counts dict view_id -> int, nb_total in-box points). Views that
    observe none of them are present with count 0. Pass a prebuilt
    VisibilityIndex to amortize the observation walk across many boxes.
    """
    if index is None:
        index = VisibilityIndex(recon)
    return index.count(box)


def select_roi_cameras(recon: Reconstruction, spec: RoiSpec, strict: bool = True,
                       index: VisibilityIndex | None = None):
    """Views whose in-box observation count clears the visibility threshold.

    The cut is count > threshold_fraction * nbTotalPoints (strict by
    default; strict=False admits equality).

    Raises:
        EmptyRoi: no sparse points inside the box.
    """
    counts, nb_total = count_visible_points(recon, spec.aabb, index=index)
    if nb_total == 0:
        raise EmptyRoi(f"roi {spec.name!r}: no points inside box")
    cut = spec.threshold_fraction * nb_total
    if strict:
        chosen = [vid for vid, n in counts.items() if n > cut]
    else:
        chosen = [vid for vid, n in counts.items() if n >= cut]
    return sorted(chosen), counts, nb_total


def group_payload(recon: Reconstruction, aabb: Aabb, threshold_fraction: float,
                  index: VisibilityIndex | None = None) -> dict:
    """The {nbTotalPoints, counts, selected} record for one box.

    Shared by the HTTP grouping endpoint and the CLI so both interfaces
    produce identical JSON for identical inputs.
    """
    spec = RoiSpec(name="query", aabb=aabb, threshold_fraction=threshold_fraction)
    selected, counts, nb_total = select_roi_cameras(recon, spec, index=index)
    return {
        "nbTotalPoints": nb_total,
        "counts": {str(k): counts[k] for k in sorted(counts)},
        "selected": selected,
    }


def canonical_json(obj) -> bytes:
    """Compact, key-sorted JSON encoding used for cross-interface equality."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


def compute_d_max(roi_center, camera_centers) -> float:
    """Distance from the ROI center to the farthest training camera."""
    centers = np.asarray(camera_centers, dtype=np.float64).reshape(-1, 3)
    if len(centers) == 0:
        raise EmptyTrainingSet("no training cameras to measure d_max from")
    return float(np.linalg.norm(centers - np.asarray(roi_center), axis=-1).max())


def split_test_set(recon: Reconstruction, view_ids, roi_center, test_fraction: float,
                   seed: int, up_axis: str = "z"):
    """Azimuth-stratified test split: every floor(1/f)-th view by angle.

    Views are sorted by azimuth about the up axis as seen from the ROI
    center, then every stride-th view starting from a seeded offset goes to
    the test set. test_fraction = 0 keeps everything in training. A stride
    larger than the set yields a single test view.

    Raises:
        SetTooSmall: fewer than 2 views to split (when test_fraction > 0).
    """
    view_ids = sorted(view_ids)
    if test_fraction == 0.0:
        return list(view_ids), []
    if len(view_ids) < 2:
        raise SetTooSmall(f"cannot hold out a test view from {len(view_ids)} views")
    axis = UP_AXES[up_axis]
    ax_u = (axis + 1) % 3
    ax_v = (axis + 2) % 3
    center = np.asarray(roi_center, dtype=np.float64)
    azimuth = []
    for vid in view_ids:
        rel = recon.views[vid].camera_center() - center
        azimuth.append(np.arctan2(rel[ax_v], rel[ax_u]))
    order = np.argsort(azimuth, kind="stable")
    sorted_ids = [view_ids[i] for i in order]

    stride = int(np.floor(1.0 / test_fraction))
    rng = np.random.default_rng(np.random.SeedSequence([seed, stable_u32("test-split")]))
    offset = int(rng.integers(0, min(stride, len(sorted_ids))))
    test = sorted_ids[offset::stride] if stride >= 1 else list(sorted_ids)
    if len(test) >= len(sorted_ids):  # degenerate fractions must leave a train set
        test = test[: len(sorted_ids) - 1]
    test_set = set(test)
    train = [vid for vid in view_ids if vid not in test_set]
    return train, sorted(test)


def build_scene_set(recon: Reconstruction, roi_view_sets: dict, fractions: dict, seed: int,
                    selected_sets: dict | None = None):
    """Scene training set: unclaimed views plus a seeded slice of each ROI set.

    roi_view_sets maps roi name -> iterable of view ids (the ROI's training
    cameras); fractions maps roi name -> share to fold back in
    (ceil(fraction * |set|) views, chosen uniformly by a per-roi seeded
    draw). The unclaimed complement is taken against selected_sets when
    given (so a ROI's held-out test views never fall back into the scene
    set by omission), against roi_view_sets otherwise.
    """
    claimed = set()
    for views in (selected_sets or roi_view_sets).values():
        claimed.update(views)
    scene = set(recon.views) - claimed
    for name in sorted(roi_view_sets):
        views = sorted(roi_view_sets[name])
        frac = fractions[name]
        k = int(np.ceil(frac * len(views)))
        if k <= 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, stable_u32(name)]))
        take = rng.choice(len(views), size=min(k, len(views)), replace=False)
        scene.update(views[i] for i in take)
    return sorted(scene)


def group_cameras(recon: Reconstruction, specs, seed: int, strict: bool = True,
                  up_axis: str = "z") -> GroupingResult:
    """Full grouping pipeline over a list of RoiSpec.

    Per ROI: threshold selection, azimuth test split, d_max from the training
    cameras (override wins). The scene set folds in each ROI's training
    cameras at its scene_integration_fraction. Deterministic per seed.
    """
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate roi names")
    rois = []
    train_sets = {}
    selected_sets = {}
    fractions = {}
    for spec in specs:
        selected, counts, nb_total = select_roi_cameras(recon, spec, strict=strict)
        train, test = split_test_set(
            recon, selected, spec.aabb.center, spec.test_fraction, seed, up_axis
        )
        if spec.d_max_override is not None:
            d_max = spec.d_max_override
        else:
            centers = [recon.views[vid].camera_center() for vid in train]
            d_max = compute_d_max(spec.aabb.center, centers)
        rois.append(RoiGrouping(spec.name, nb_total, counts, selected, train, test, d_max))
        train_sets[spec.name] = train
        selected_sets[spec.name] = selected
        fractions[spec.name] = spec.scene_integration_fraction
    scene_views = build_scene_set(recon, train_sets, fractions, seed, selected_sets)
    return GroupingResult(seed, rois, scene_views)


# ---------------------------------------------------------------------------
# roi-groups v1 JSON
# ---------------------------------------------------------------------------

def grouping_to_json(result: GroupingResult, specs) -> dict:
    by_name = {s.name: s for s in specs}
    return {
        "schema": GROUPS_SCHEMA,
        "seed": result.seed,
        "scene_views": list(result.scene_views),
        "rois": [
            {
                "spec": by_name[r.name].to_json(),
                "nb_total_points": r.nb_total_points,
                "counts": {str(k): v for k, v in sorted(r.counts.items())},
                "selected": list(r.selected),
                "train_views": list(r.train_views),
                "test_views": list(r.test_views),
                "d_max": r.d_max,
            }
            for r in result.rois
        ],
    }


def grouping_from_json(obj: dict):
    """Returns (GroupingResult, [RoiSpec])."""
    if not isinstance(obj, dict):
        raise MalformedJson("groups JSON must be an object")
    if obj.get("schema") != GROUPS_SCHEMA:
        raise SchemaVersionMismatch(f"expected {GROUPS_SCHEMA!r}, got {obj.get('schema')!r}")
    try:
        specs = [RoiSpec.from_json(r["spec"]) for r in obj["rois"]]
        rois = [
            RoiGrouping(
                r["spec"]["name"], r["nb_total_points"],
                {int(k): v for k, v in r["counts"].items()},
                list(r["selected"]), list(r["train_views"]), list(r["test_views"]),
                r["d_max"],
            )
            for r in obj["rois"]
        ]
        result = GroupingResult(obj["seed"], rois, list(obj["scene_views"]))
    except (KeyError, TypeError) as exc:
        raise MalformedJson(f"groups JSON missing field: {exc}") from None
    return result, specs


def save_grouping(result: GroupingResult, specs, path) -> None:
    Path(path).write_text(json.dumps(grouping_to_json(result, specs), sort_keys=True, indent=1) + "\n")


def load_grouping(path):
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{p}: {exc}") from None
    return grouping_from_json(obj)


def load_roi_specs(path):
    """Read ROI specs from {"rois": [...]} or a bare JSON list.

    Entries may be bare spec objects or {"spec": {...}} records, so a
    "roi-groups v1" grouping file works as a spec source too.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{p}: {exc}") from None
    if isinstance(obj, dict):
        obj = obj.get("rois")
    if not isinstance(obj, list):
        raise MalformedJson(f"{p}: expected a list of roi specs")
    specs = []
    for entry in obj:
        if isinstance(entry, dict) and "spec" in entry:
            entry = entry["spec"]
        specs.append(RoiSpec.from_json(entry))
    return specs
