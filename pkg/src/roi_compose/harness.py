"""Experiment runner: renders a fixture under several modes and reports metrics.

A run bakes a coarse scene grid and a fine grid per ROI from the fixture's
analytic oracle, groups the cameras, then renders every requested mode on the
held-out test views. The oracle render at each view is the reference image
for PSNR/SSIM/masked PSNR.

Modes:

  scene-only      coarse scene grid alone
  roi-only        first ROI's fine grid alone (marching only its box)
  ours-single     ray-level composition with the first ROI only
  ours-multiple   ray-level composition with every ROI
  pixel-baseline  full per-ROI frame renders merged pixel-wise
  ablation-a      composition with replacement off, depth filter off
  ablation-b      replacement off, depth filter on
  ablation-c      replacement on, depth filter off (single ROI only; on a
                  multi-ROI config the cell records the refusal and the run
                  continues)
  ablation-d      the full method (replacement on, depth filter on)

Reports are plain data ("roi-report v1"): cells are per-(mode, view) dicts,
aggregates are per-mode means. Everything except wall_time fields is a pure
function of the config, so two runs of the same config differ only in
timings. PSNR of identical images is +Infinity; reports therefore use
Python's JSON extension that writes bare `Infinity`, and the CSV writes
`inf`.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .composition import (
    CompositionConfig,
    RoiRuntime,
    render_image_composed,
    render_image_pixel_baseline,
)
from .errors import RoiComposeError, ValidationError
from .fields import bake_grid, estimate_n_max
from .fixtures import make_fixture
from .geometry import Aabb
from .grouping import (
    GroupingResult,
    RoiSpec,
    group_cameras,
    grouping_to_json,
    load_roi_specs,
)
from .image_io import write_pfm, write_png
from .metrics import masked_psnr, psnr, roi_mask, ssim
from .rendering import ImageBuffer, SamplerConfig, render_image
from .sfm import load_reconstruction, scale_intrinsics

REPORT_SCHEMA = "roi-report v1"

MODES = (
    "scene-only", "roi-only", "ours-single", "ours-multiple", "pixel-baseline",
    "ablation-a", "ablation-b", "ablation-c", "ablation-d",
)

_ABLATION_FLAGS = {
    "ablation-a": dict(enable_rsr=False, enable_drf=False),
    "ablation-b": dict(enable_rsr=False, enable_drf=True),
    "ablation-c": dict(enable_rsr=True, enable_drf=False),
    "ablation-d": dict(enable_rsr=True, enable_drf=True),
}


@dataclass
class ExperimentConfig:
    fixture: str = "checker-table"
    fixture_options: dict = dc_field(default_factory=dict)
    recon_path: str | None = None      # replaces the fixture's synthetic capture
    rois_path: str | None = None       # replaces the fixture's ROI boxes
    scene_resolution: int = 32
    roi_resolution: int | None = 128   # None: estimate_n_max per ROI
    n_max_cap: int = 4096
    sampler: SamplerConfig = dc_field(default_factory=SamplerConfig)
    modes: tuple = ("scene-only", "ours-multiple")
    seed: int = 0
    test_views: list | None = None     # explicit view ids; default: roi test split
    max_views: int | None = None
    image_scale: float = 1.0           # scales the capture intrinsics
    timing_repeats: int = 1            # renders per cell; wall_time is the median
    write_images: bool = False

    def __post_init__(self):
        if not self.modes:
            raise ValidationError("config needs at least one mode")
        unknown = [m for m in self.modes if m not in MODES]
        if unknown:
            raise ValidationError(f"unknown modes {unknown}; have {', '.join(MODES)}")
        if not (0.0 < self.image_scale <= 1.0):
            raise ValidationError("image_scale must be in (0, 1]")
        if self.timing_repeats < 1:
            raise ValidationError("timing_repeats must be >= 1")

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["sampler"] = {
            "n_coarse": self.sampler.n_coarse, "n_fine": self.sampler.n_fine,
            "jitter": self.sampler.jitter, "seed": self.sampler.seed,
            "background": list(self.sampler.background),
        }
        out["modes"] = list(self.modes)
        return out

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ValidationError("experiment config must be a JSON object")
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(obj)
        if "sampler" in kw:
            s = dict(kw["sampler"])
            if "background" in s:
                s["background"] = tuple(s["background"])
            kw["sampler"] = SamplerConfig(**s)
        if "modes" in kw:
            kw["modes"] = tuple(kw["modes"])
        return ExperimentConfig(**kw)


@dataclass
class ExperimentSession:
    """Everything run_experiment builds before rendering: fields and grouping."""

    config: ExperimentConfig
    fixture: object
    grouping: GroupingResult
    scene_field: object
    roi_runtimes: list
    test_views: list


def _roi_runtime(fixture, spec: RoiSpec, grouping: GroupingResult, config: ExperimentConfig):
    record = next(r for r in grouping.rois if r.name == spec.name)
    res = config.roi_resolution
    if res is None:
        recon = fixture.recon
        views = [recon.views[v] for v in record.train_views]
        res = estimate_n_max(spec.aabb, views, recon.intrinsics, cap=config.n_max_cap)
    grid = bake_grid(fixture.oracle, spec.aabb, (res, res, res))
    return RoiRuntime(spec, grid, d_max=record.d_max)


def build_session(config: ExperimentConfig) -> ExperimentSession:
    fixture = make_fixture(config.fixture, seed=config.seed, **config.fixture_options)
    if config.recon_path is not None:
        fixture.recon = load_reconstruction(config.recon_path)
    if config.rois_path is not None:
        fixture.rois = load_roi_specs(config.rois_path)
    grouping = group_cameras(fixture.recon, fixture.rois, seed=config.seed)

    n = config.scene_resolution
    scene_field = bake_grid(fixture.oracle, fixture.scene_domain, (n, n, n))
    rois = [_roi_runtime(fixture, spec, grouping, config) for spec in fixture.rois]

    if config.test_views is not None:
        test_views = list(config.test_views)
        missing = [v for v in test_views if v not in fixture.recon.views]
        if missing:
            raise ValidationError(f"test views not in reconstruction: {missing}")
    else:
        seen = set()
        test_views = []
        for record in grouping.rois:
            for v in record.test_views:
                if v not in seen:
                    seen.add(v)
                    test_views.append(v)
    if config.max_views is not None:
        test_views = test_views[: config.max_views]
    if not test_views:
        raise ValidationError("no test views to evaluate")
    return ExperimentSession(config, fixture, grouping, scene_field, rois, test_views)


def _render_mode(mode: str, session: ExperimentSession, view, intr):
    cfg = session.config
    scene = session.scene_field
    rois = session.roi_runtimes
    sampler = cfg.sampler
    if mode == "scene-only":
        return render_image(scene, view, intr, sampler, bounds=session.fixture.scene_domain), None
    if mode == "roi-only":
        return render_image(rois[0].field, view, intr, sampler), None
    if mode == "ours-single":
        img, stats = render_image_composed(scene, rois[:1], view, intr, sampler,
                                           bounds=session.fixture.scene_domain)
        return img, stats
    if mode in ("ours-multiple", "ablation-a", "ablation-b", "ablation-c", "ablation-d"):
        comp = CompositionConfig(**_ABLATION_FLAGS.get(mode, {}))
        img, stats = render_image_composed(scene, rois, view, intr, sampler,
                                           config=comp, bounds=session.fixture.scene_domain)
        return img, stats
    if mode == "pixel-baseline":
        img, info = render_image_pixel_baseline(scene, rois, view, intr, sampler,
                                                bounds=session.fixture.scene_domain)
        return img, info
    raise ValidationError(f"unknown mode {mode!r}")


def _metrics_cell(img: ImageBuffer, reference: ImageBuffer, session, view, intr) -> dict:
    cell = {
        "psnr": psnr(img.rgb, reference.rgb),
        "ssim": ssim(img.rgb, reference.rgb),
        "masked_psnr": {},
    }
    for spec in session.fixture.rois:
        mask = roi_mask(view, intr, spec.aabb)
        if mask.any():
            cell["masked_psnr"][spec.name] = masked_psnr(img.rgb, reference.rgb, mask)
    return cell


def run_experiment(config: ExperimentConfig, output_dir=None) -> dict:
    """Render all configured modes over the test views; return a report dict.

    Per-cell errors (e.g. an unsupported ablation) are recorded in the cell
    and the run continues. With write_images, per-cell PFM/PNG pairs land
    under output_dir/images.
    """
    session = build_session(config)
    recon = session.fixture.recon
    out = Path(output_dir) if output_dir is not None else None
    if out is not None and config.write_images:
        (out / "images").mkdir(parents=True, exist_ok=True)

    references = {}
    scaled = {}
    for vid in session.test_views:
        view = recon.views[vid]
        intr = scale_intrinsics(recon.intrinsics[view.camera_id], config.image_scale)
        scaled[vid] = (view, intr)
        references[vid] = render_image(session.fixture.oracle, view, intr, config.sampler,
                                       bounds=session.fixture.scene_domain)

    cells = []
    stats_store = {}
    for mode in config.modes:
        for vid in session.test_views:
            view, intr = scaled[vid]
            cell = {"mode": mode, "view_id": vid, "error": None,
                    "psnr": None, "ssim": None, "masked_psnr": {}, "wall_time": None}
            try:
                times = []
                img = stats = None
                for _ in range(config.timing_repeats):
                    t0 = time.perf_counter()
                    img, stats = _render_mode(mode, session, view, intr)
                    times.append(time.perf_counter() - t0)
                cell["wall_time"] = float(np.median(times))
                cell.update(_metrics_cell(img, references[vid], session, view, intr))
                if hasattr(stats, "to_json"):
                    cell["stats"] = stats.to_json()
                    stats_store[(mode, vid)] = stats
                elif isinstance(stats, dict):
                    cell["stats"] = stats
                if out is not None and config.write_images:
                    stem = out / "images" / f"{mode}_view{vid:04d}"
                    write_pfm(stem.with_suffix(".pfm"), img.rgb)
                    write_png(stem.with_suffix(".png"), img.rgb)
            except RoiComposeError as exc:
                cell["error"] = f"{type(exc).__name__}: {exc}"
            cells.append(cell)

    report = {
        "schema": REPORT_SCHEMA,
        "config": config.to_json(),
        "grouping": grouping_to_json(session.grouping, session.fixture.rois),
        "test_views": list(session.test_views),
        "cells": cells,
        "aggregates": _aggregate(cells),
    }
    if out is not None:
        emit_tables(report, out, stats_store=stats_store)
    return report


def _aggregate(cells) -> dict:
    agg = {}
    by_mode = {}
    for c in cells:
        by_mode.setdefault(c["mode"], []).append(c)
    for mode, group in by_mode.items():
        ok = [c for c in group if c["error"] is None]
        entry = {"views": len(group), "errors": len(group) - len(ok)}
        if ok:
            entry["psnr_mean"] = float(np.mean([c["psnr"] for c in ok]))
            entry["ssim_mean"] = float(np.mean([c["ssim"] for c in ok]))
            masked = [v for c in ok for v in c["masked_psnr"].values()]
            entry["masked_psnr_mean"] = float(np.mean(masked)) if masked else None
            entry["wall_time_mean"] = float(np.mean([c["wall_time"] for c in ok]))
        agg[mode] = entry
    return agg


def strip_timings(report: dict) -> dict:
    """Copy of the report with wall-time fields zeroed, for byte comparisons."""
    out = json.loads(json.dumps(report))
    for c in out["cells"]:
        c["wall_time"] = 0.0
    for entry in out["aggregates"].values():
        if "wall_time_mean" in entry:
            entry["wall_time_mean"] = 0.0
    return out


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=1) + "\n").encode()


# ---------------------------------------------------------------------------
# tables and figures
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("mode", "views", "errors", "psnr_mean", "ssim_mean",
                "masked_psnr_mean", "wall_time_mean")


def emit_tables(report: dict, output_dir, stats_store: dict | None = None) -> dict:
    """Write report.json, report.csv, bar-chart figures, and ROI ray heatmaps.

    Returns the paths written, keyed by artifact kind.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    json_path = out / "report.json"
    json_path.write_bytes(report_json_bytes(report))
    paths["json"] = json_path

    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for mode in report["config"]["modes"]:
            entry = report["aggregates"].get(mode, {})
            writer.writerow([
                mode, entry.get("views", 0), entry.get("errors", 0),
                _csv_num(entry.get("psnr_mean")), _csv_num(entry.get("ssim_mean")),
                _csv_num(entry.get("masked_psnr_mean")), _csv_num(entry.get("wall_time_mean")),
            ])
    paths["csv"] = csv_path

    paths["figures"] = _emit_figures(report, out)
    if stats_store:
        paths["heatmaps"] = _emit_heatmaps(stats_store, out)
    return paths


def _csv_num(v):
    if v is None:
        return ""
    return repr(float(v))


def _emit_figures(report: dict, out: Path) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    agg = report["aggregates"]
    modes = [m for m in report["config"]["modes"] if agg.get(m, {}).get("views")]
    written = []

    def bars(key, title, fname, fmt="{:.2f}"):
        vals = [agg[m].get(key) for m in modes]
        pairs = [(m, v) for m, v in zip(modes, vals) if v is not None and np.isfinite(v)]
        if not pairs:
            return
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(pairs), 3.2))
        names = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        ax.bar(names, ys, color="#4878a8")
        ax.set_ylabel(title)
        ax.set_title(title + " by mode")
        for i, y in enumerate(ys):
            ax.annotate(fmt.format(y), (i, y), ha="center", va="bottom", fontsize=8)
        ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        path = figdir / fname
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    bars("psnr_mean", "PSNR (dB)", "psnr_by_mode.png")
    bars("ssim_mean", "SSIM", "ssim_by_mode.png", fmt="{:.3f}")
    bars("masked_psnr_mean", "masked PSNR (dB)", "masked_psnr_by_mode.png")
    bars("wall_time_mean", "render time (s)", "time_by_mode.png", fmt="{:.2f}")
    return written


def _emit_heatmaps(stats_store: dict, out: Path) -> list:
    """Per-ROI intersect/accept ray maps for the first view of each mode."""
    heatdir = out / "heatmaps"
    heatdir.mkdir(exist_ok=True)
    written = []
    done_modes = set()
    for (mode, vid), stats in sorted(stats_store.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if mode in done_modes or not getattr(stats, "intersect_maps", None):
            continue
        done_modes.add(mode)
        for name in sorted(stats.intersect_maps):
            for kind, arr in (("intersect", stats.intersect_maps[name]),
                              ("accept", stats.accept_maps[name])):
                stem = heatdir / f"{mode}_view{vid:04d}_{name}_{kind}"
                write_pfm(stem.with_suffix(".pfm"), arr)
                write_png(stem.with_suffix(".png"), np.repeat(arr[..., None], 3, axis=-1))
                written.append(stem.with_suffix(".pfm"))
    return written
