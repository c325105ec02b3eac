"""Command-line front end.

Every command is a thin shell over a library call; the work of parsing,
grouping, baking, rendering, composing, and serving lives in the modules.
Failures print one machine-readable JSON line on stderr and exit with the
category code: 3 I/O, 4 validation, 5 numeric (2 is argument misuse, from
the parser itself).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import RoiComposeError, ValidationError
from .geometry import Aabb

EXIT_CODES = {"io": 3, "validation": 4, "numeric": 5}


def _fail(exc: RoiComposeError):
    line = json.dumps({
        "error": type(exc).__name__,
        "category": exc.category,
        "detail": str(exc),
    }, sort_keys=True)
    click.echo(line, err=True)
    sys.exit(EXIT_CODES.get(exc.category, 4))


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RoiComposeError as exc:
            _fail(exc)
    return wrapper


def _parse_aabb_flag(text: str) -> Aabb:
    """Six comma-separated numbers: minx,miny,minz,maxx,maxy,maxz."""
    parts = text.split(",")
    if len(parts) != 6:
        raise ValidationError(f"--aabb needs 6 comma-separated numbers, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"--aabb has a non-numeric entry: {text!r}") from None
    return Aabb(vals[:3], vals[3:])


def _write_image(img_rgb, path: str):
    from .image_io import write_pfm, write_png, write_ppm

    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, img_rgb)
    elif suffix == ".png":
        write_png(path, img_rgb)
    elif suffix == ".ppm":
        write_ppm(path, img_rgb)
    else:
        raise ValidationError(f"unsupported image extension {suffix!r} (use .pfm, .png, or .ppm)")


def _load_view(recon, view_id: int):
    view = recon.views.get(view_id)
    if view is None:
        raise ValidationError(f"view {view_id} not in reconstruction "
                              f"(has {sorted(recon.views)[:8]}...)")
    return view, recon.intrinsics[view.camera_id]


def _sampler_from_flags(n_coarse, n_fine, seed, jitter):
    from .rendering import SamplerConfig

    return SamplerConfig(n_coarse=n_coarse, n_fine=n_fine, jitter=jitter, seed=seed)


@click.group(name="roi-compose")
def main():
    """Compositional volume rendering pipeline: ingest, group, bake, render."""


@main.command()
@click.argument("colmap_dir", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="Output recon JSON.")
@_cli_errors
def ingest(colmap_dir, output):
    """Parse a COLMAP text export into a reconstruction JSON."""
    from .sfm import parse_colmap_text, save_reconstruction

    recon = parse_colmap_text(colmap_dir)
    save_reconstruction(recon, output)
    click.echo(f"{len(recon.views)} views, {len(recon.points)} points -> {output}")


@main.command()
@click.option("--fixture", "fixture_name", required=True,
              help="Built-in fixture: checker-table, two-spheres, occluder.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("-o", "--output", required=True, type=click.Path(), help="Output recon JSON.")
@click.option("--rois-out", type=click.Path(), default=None,
              help="Also write the fixture's ROI specs here.")
@click.option("--option", "options", multiple=True, metavar="KEY=VALUE",
              help="Fixture option override, e.g. n_spheres=4.")
@_cli_errors
def synth(fixture_name, seed, output, rois_out, options):
    """Generate a synthetic reconstruction from a built-in fixture."""
    from .fixtures import make_fixture
    from .grouping import GROUPS_SCHEMA
    from .sfm import save_reconstruction

    kwargs = {}
    for opt in options:
        if "=" not in opt:
            raise ValidationError(f"--option must be KEY=VALUE, got {opt!r}")
        key, value = opt.split("=", 1)
        try:
            kwargs[key] = json.loads(value)
        except json.JSONDecodeError:
            kwargs[key] = value
    fx = make_fixture(fixture_name, seed=seed, **kwargs)
    save_reconstruction(fx.recon, output)
    click.echo(f"fixture {fixture_name!r}: {len(fx.recon.views)} views, "
               f"{len(fx.recon.points)} points -> {output}")
    if rois_out is not None:
        payload = {"schema": GROUPS_SCHEMA, "rois": [{"spec": s.to_json()} for s in fx.rois]}
        Path(rois_out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        click.echo(f"{len(fx.rois)} roi specs -> {rois_out}")


@main.command()
@click.option("--recon", "recon_path", required=True, type=click.Path())
@click.option("--rois", "rois_path", required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="Output groups JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
@_cli_errors
def group(recon_path, rois_path, output, seed):
    """Group cameras per ROI and derive the scene training set."""
    from .grouping import group_cameras, load_roi_specs, save_grouping
    from .sfm import load_reconstruction

    recon = load_reconstruction(recon_path)
    specs = load_roi_specs(rois_path)
    result = group_cameras(recon, specs, seed=seed)
    save_grouping(result, specs, output)
    for record in result.rois:
        click.echo(f"{record.name}: {len(record.selected)} selected "
                   f"({len(record.train_views)} train / {len(record.test_views)} test), "
                   f"d_max {record.d_max:.3f}")
    click.echo(f"scene set: {len(result.scene_views)} views -> {output}")


@main.command()
@click.option("--oracle", "fixture_name", required=True,
              help="Fixture whose analytic field to sample.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--roi", "roi_name", default=None,
              help="Bake this ROI's box; omit for the scene domain.")
@click.option("--aabb", "aabb_text", default=None, metavar="X0,Y0,Z0,X1,Y1,Z1",
              help="Explicit domain override.")
@click.option("--res", "resolution", default=None, type=int, help="Grid nodes per axis.")
@click.option("--auto-nmax", is_flag=True,
              help="Pick the resolution where a voxel covers about one pixel.")
@click.option("--cap", default=1024, show_default=True, type=int,
              help="Upper bound for --auto-nmax.")
@click.option("-o", "--output", required=True, type=click.Path(), help="Output .roigrid file.")
@_cli_errors
def bake(fixture_name, seed, roi_name, aabb_text, resolution, auto_nmax, cap, output):
    """Sample a fixture's field onto a dense grid and save it."""
    from .fields import bake_grid, estimate_n_max, save_grid
    from .fixtures import make_fixture

    if resolution is None and not auto_nmax:
        raise ValidationError("need --res N or --auto-nmax")
    if resolution is not None and auto_nmax:
        raise ValidationError("--res and --auto-nmax are mutually exclusive")

    fx = make_fixture(fixture_name, seed=seed)
    if aabb_text is not None:
        domain = _parse_aabb_flag(aabb_text)
    elif roi_name is not None:
        domain = fx.roi_spec(roi_name).aabb
    else:
        domain = fx.scene_domain

    if auto_nmax:
        views = list(fx.recon.views.values())
        resolution = estimate_n_max(domain, views, fx.recon.intrinsics, cap=cap)
        click.echo(f"auto resolution: {resolution}")

    grid = bake_grid(fx.oracle, domain, (resolution, resolution, resolution),
                     field_id=roi_name or "scene")
    save_grid(grid, output)
    lo = [float(x) for x in domain.min]
    hi = [float(x) for x in domain.max]
    click.echo(f"{resolution}^3 grid over {lo}..{hi} -> {output}")


_RENDER_FLAGS = [
    click.option("--recon", "recon_path", required=True, type=click.Path()),
    click.option("--view", "view_id", required=True, type=int),
    click.option("--scale", default=1.0, show_default=True, type=float,
                 help="Render at this fraction of the capture resolution."),
    click.option("--n-coarse", default=64, show_default=True, type=int),
    click.option("--n-fine", default=64, show_default=True, type=int),
    click.option("--jitter", is_flag=True, help="Stratified jitter instead of midpoints."),
    click.option("--seed", default=0, show_default=True, type=int),
    click.option("-o", "--output", required=True, type=click.Path(),
                 help="Output image (.pfm lossless, .png/.ppm preview)."),
]


def _with_flags(flags):
    def deco(fn):
        for flag in reversed(flags):
            fn = flag(fn)
        return fn
    return deco


@main.command()
@click.option("--field", "field_path", required=True, type=click.Path(),
              help="Baked .roigrid to render.")
@_with_flags(_RENDER_FLAGS)
@_cli_errors
def render(field_path, recon_path, view_id, scale, n_coarse, n_fine, jitter, seed, output):
    """Render one view of a baked field."""
    from .fields import load_grid
    from .rendering import render_image
    from .sfm import load_reconstruction, scale_intrinsics

    grid = load_grid(field_path)
    recon = load_reconstruction(recon_path)
    view, intr = _load_view(recon, view_id)
    intr = scale_intrinsics(intr, scale)
    sampler = _sampler_from_flags(n_coarse, n_fine, seed, jitter)
    img = render_image(grid, view, intr, sampler)
    _write_image(img.rgb, output)
    click.echo(f"view {view_id} at {intr.width}x{intr.height} -> {output}")


@main.command()
@click.option("--scene-field", "scene_path", required=True, type=click.Path(),
              help="Baked scene .roigrid.")
@click.option("--groups", "groups_path", required=True, type=click.Path(),
              help="Grouping JSON from `group` (d_max and specs come from here).")
@click.option("--roi", "roi_fields", multiple=True, metavar="NAME=GRID.roigrid",
              help="Detail field for one ROI; repeatable. Zero ROIs is allowed.")
@click.option("--mode", default="full", show_default=True,
              type=click.Choice(["full", "no-rsr", "no-drf", "no-rsr-no-drf"]),
              help="Composition ablation switches.")
@click.option("--stats", "stats_path", default=None, type=click.Path(),
              help="Write per-ROI ray statistics JSON here.")
@_with_flags(_RENDER_FLAGS)
@_cli_errors
def compose(scene_path, groups_path, roi_fields, mode, stats_path,
            recon_path, view_id, scale, n_coarse, n_fine, jitter, seed, output):
    """Render one view with ROI fields composed into the scene field."""
    from .composition import CompositionConfig, RoiRuntime, render_image_composed
    from .fields import load_grid
    from .grouping import load_grouping
    from .sfm import load_reconstruction, scale_intrinsics

    scene = load_grid(scene_path)
    result, specs = load_grouping(groups_path)
    by_name = {s.name: s for s in specs}
    record_by_name = {r.name: r for r in result.rois}

    runtimes = []
    for entry in roi_fields:
        if "=" not in entry:
            raise ValidationError(f"--roi must be NAME=GRID, got {entry!r}")
        name, grid_path = entry.split("=", 1)
        if name not in by_name:
            raise ValidationError(f"roi {name!r} not in {groups_path} "
                                  f"(has {sorted(by_name)})")
        runtimes.append(RoiRuntime(by_name[name], load_grid(grid_path),
                                   d_max=record_by_name[name].d_max))

    flags = {
        "full": {},
        "no-rsr": {"enable_rsr": False},
        "no-drf": {"enable_drf": False},
        "no-rsr-no-drf": {"enable_rsr": False, "enable_drf": False},
    }[mode]
    config = CompositionConfig(**flags)

    recon = load_reconstruction(recon_path)
    view, intr = _load_view(recon, view_id)
    intr = scale_intrinsics(intr, scale)
    sampler = _sampler_from_flags(n_coarse, n_fine, seed, jitter)
    img, stats = render_image_composed(scene, runtimes, view, intr, sampler, config=config)
    _write_image(img.rgb, output)
    if stats_path is not None:
        Path(stats_path).write_text(json.dumps(stats.to_json(), sort_keys=True, indent=1) + "\n")
    accepted = {name: s.rays_accepted for name, s in stats.rois.items()}
    click.echo(f"view {view_id} composed with {len(runtimes)} roi(s), accepted {accepted} -> {output}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Experiment JSON (unknown keys rejected).")
@click.option("-o", "--output", "output_dir", default=None, type=click.Path(),
              help="Report directory (default: alongside the config).")
@click.option("--fixture", "fixture_override", default=None)
@click.option("--seed", "seed_override", default=None, type=int)
@click.option("--max-views", "max_views_override", default=None, type=int)
@click.option("--write-images/--no-write-images", default=None)
@_cli_errors
def evaluate(config_path, output_dir, fixture_override, seed_override,
             max_views_override, write_images):
    """Run a full experiment from a config file and write the report."""
    from .errors import MalformedJson, MissingFile
    from .harness import ExperimentConfig, run_experiment

    p = Path(config_path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{p}: {exc}") from None

    # flags override file values
    if fixture_override is not None:
        obj["fixture"] = fixture_override
    if seed_override is not None:
        obj["seed"] = seed_override
    if max_views_override is not None:
        obj["max_views"] = max_views_override
    if write_images is not None:
        obj["write_images"] = write_images

    config = ExperimentConfig.from_json(obj)
    out = Path(output_dir) if output_dir is not None else p.parent / (p.stem + "-report")
    report = run_experiment(config, output_dir=out)
    for mode, agg in report["aggregates"].items():
        psnr = agg.get("psnr_mean")
        shown = "n/a" if psnr is None else f"{psnr:.2f}"
        click.echo(f"{mode}: psnr {shown} dB over {agg['views']} view(s), "
                   f"{agg['errors']} error(s)")
    click.echo(f"report -> {out / 'report.json'}")


@main.command()
@click.option("--recon", "recon_path", required=True, type=click.Path())
@click.option("--fixture", "fixture_name", default=None,
              help="Load this fixture's fields so /api/preview works.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--rois", "rois_path", default=None, type=click.Path(),
              help="ROI working-set file; loaded at start, rewritten on POST /api/rois.")
@click.option("--port", default=8742, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--point-budget", default=50000, show_default=True, type=int)
@click.option("--scene-res", default=48, show_default=True, type=int)
@click.option("--roi-res", default=96, show_default=True, type=int)
@click.option("--static", "static_dir", default=None, type=click.Path(),
              help="Directory with the browser UI; served at /.")
@_cli_errors
def serve(recon_path, fixture_name, seed, rois_path, port, host, point_budget,
          scene_res, roi_res, static_dir):
    """Serve the grouping/preview API for the browser UI."""
    import uvicorn

    from .service import build_state, create_app
    from .sfm import load_reconstruction

    recon = load_reconstruction(recon_path)
    fixture = None
    if fixture_name is not None:
        from .fixtures import make_fixture

        fixture = make_fixture(fixture_name, seed=seed)
    rois = None
    if rois_path is not None and Path(rois_path).is_file():
        from .grouping import load_roi_specs

        rois = load_roi_specs(rois_path)
    if static_dir is not None and not Path(static_dir).is_dir():
        from .errors import MissingFile

        raise MissingFile(f"static directory {static_dir} not found")
    state = build_state(recon, fixture=fixture, rois=rois, rois_path=rois_path,
                        point_budget=point_budget, seed=seed,
                        scene_resolution=scene_res, roi_resolution=roi_res,
                        static_dir=static_dir)
    app = create_app(state)
    click.echo(f"serving on http://{host}:{port} "
               f"(preview fields: {'loaded' if state.fields else 'not loaded'})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
