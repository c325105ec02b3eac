"""Local HTTP/JSON API for interactive grouping and preview rendering.

The server owns an immutable reconstruction snapshot plus a working ROI set.
Reads never block: every request handler reads one reference to the current
state, and POST /api/rois replaces the whole ROI tuple in a single assignment,
so concurrent readers see either the old set or the new one, never a mix.

Grouping requests share group_payload with the CLI, which is what makes the
two interfaces byte-identical for identical inputs. Preview renders go
through the same render functions as offline output, at intrinsics scaled
down to the requested size.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from .composition import RoiRuntime, render_image_composed
from .errors import EmptyRoi, MalformedJson, RoiComposeError, ValidationError
from .geometry import Aabb
from .grouping import (
    GROUPS_SCHEMA,
    RoiSpec,
    VisibilityIndex,
    canonical_json,
    group_payload,
)
from .image_io import png_bytes
from .rendering import SamplerConfig, render_image
from .sfm import Reconstruction, ViewRecord, scale_intrinsics

DEFAULT_POINT_BUDGET = 50_000


@dataclass
class LoadedFields:
    """Render inputs for previews: scene field, bounds, composed ROI runtimes."""

    scene_field: object
    scene_bounds: Aabb
    rois: list
    sampler: SamplerConfig = dc_field(default_factory=SamplerConfig)


@dataclass
class ServiceState:
    recon: Reconstruction | None = None
    point_budget: int = DEFAULT_POINT_BUDGET
    seed: int = 0
    rois: tuple = ()
    rois_path: str | None = None
    fields: LoadedFields | None = None
    index: VisibilityIndex | None = None
    static_dir: str | None = None      # browser UI bundle, mounted at /

    def __post_init__(self):
        if self.recon is not None and self.index is None:
            self.index = VisibilityIndex(self.recon)
        self.rois = tuple(self.rois)


def _json_response(obj, status_code: int = 200) -> Response:
    return Response(content=canonical_json(obj), status_code=status_code,
                    media_type="application/json")


def _error_response(exc: RoiComposeError, status_code: int) -> Response:
    return _json_response(
        {"error": type(exc).__name__, "category": exc.category, "detail": str(exc)},
        status_code=status_code,
    )


def _decimate_points(recon: Reconstruction, budget: int, seed: int):
    """Seeded uniform subsample of the sparse cloud, stable per seed."""
    ids, pos = recon.point_positions()
    n = len(ids)
    if budget <= 0 or n == 0:
        return [], np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    colors = np.asarray([recon.points[pid].color for pid in ids], dtype=np.int64)
    if n <= budget:
        return list(ids), pos, colors
    keep = np.sort(np.random.default_rng(seed).permutation(n)[:budget])
    return [ids[i] for i in keep], pos[keep], colors[keep]


def _view_payload(view: ViewRecord) -> dict:
    return {
        "view_id": view.view_id,
        "name": view.name,
        "camera_id": view.camera_id,
        "rotation": [float(x) for x in view.rotation],
        "translation": [float(x) for x in view.translation],
        "center": [float(x) for x in view.camera_center()],
    }


def _parse_aabb(obj) -> Aabb:
    if not isinstance(obj, dict) or "min" not in obj or "max" not in obj:
        raise MalformedJson("aabb must be {min: [x,y,z], max: [x,y,z]}")
    return Aabb.from_json(obj)


def _rois_file_payload(rois) -> dict:
    # rois[].spec envelope: the shape load_roi_specs and the grouping file share
    return {"schema": GROUPS_SCHEMA, "rois": [{"spec": s.to_json()} for s in rois]}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="roi-compose service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )
    app.state.service = state

    @app.exception_handler(RoiComposeError)
    async def _domain_error(request: Request, exc: RoiComposeError):
        status = {"io": 404, "validation": 400, "numeric": 500}.get(exc.category, 400)
        if isinstance(exc, EmptyRoi):
            status = 422
        return _error_response(exc, status)

    @app.get("/api/health")
    async def health():
        st: ServiceState = app.state.service
        return _json_response({
            "status": "ok",
            "reconstruction": st.recon is not None,
            "fields": st.fields is not None,
            "rois": len(st.rois),
        })

    @app.get("/api/reconstruction")
    async def reconstruction():
        st: ServiceState = app.state.service
        if st.recon is None:
            return _json_response({"error": "NoSession", "detail": "no reconstruction loaded"}, 404)
        ids, pos, colors = _decimate_points(st.recon, st.point_budget, st.seed)
        payload = {
            "schema": "roi-recon-summary v1",
            "seed": st.seed,
            "point_budget": st.point_budget,
            "nbTotalPoints": len(st.recon.points),
            "points": {
                "ids": ids,
                "positions": [[float(v) for v in row] for row in pos],
                "colors": [[int(v) for v in row] for row in colors],
            },
            "views": [_view_payload(st.recon.views[vid]) for vid in sorted(st.recon.views)],
            "intrinsics": [
                {
                    "camera_id": c.camera_id, "model": c.model,
                    "width": c.width, "height": c.height,
                    "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
                }
                for c in (st.recon.intrinsics[k] for k in sorted(st.recon.intrinsics))
            ],
        }
        return _json_response(payload)

    @app.post("/api/group")
    async def group(request: Request):
        st: ServiceState = app.state.service
        if st.recon is None:
            return _json_response({"error": "NoSession", "detail": "no reconstruction loaded"}, 404)
        body = await _read_json(request)
        box = _parse_aabb(body.get("aabb"))
        threshold = body.get("threshold_fraction", 0.10)
        if not isinstance(threshold, (int, float)) or not (0.0 <= threshold <= 1.0):
            raise ValidationError(f"threshold_fraction {threshold!r} outside [0, 1]")
        # response is exactly canonical_json(group_payload(...)): the
        # cross-interface byte-equality contract leaves no room for extras
        return _json_response(group_payload(st.recon, box, float(threshold), index=st.index))

    @app.get("/api/rois")
    async def get_rois():
        st: ServiceState = app.state.service
        return _json_response(_rois_file_payload(st.rois))

    @app.post("/api/rois")
    async def post_rois(request: Request):
        st: ServiceState = app.state.service
        body = await _read_json(request)
        entries = body.get("rois")
        if not isinstance(entries, list):
            raise MalformedJson('body must be {"rois": [spec, ...]}')
        specs = []
        for entry in entries:
            if isinstance(entry, dict) and "spec" in entry:
                entry = entry["spec"]
            specs.append(RoiSpec.from_json(entry))
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate roi names: {sorted(names)}")
        payload = _rois_file_payload(specs)
        blob = canonical_json(payload)
        config_id = hashlib.sha256(blob).hexdigest()[:16]
        if st.rois_path is not None:
            tmp = Path(st.rois_path).with_suffix(".tmp")
            tmp.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
            tmp.replace(st.rois_path)
        st.rois = tuple(specs)  # single reference assignment: swap is atomic
        return _json_response({"config_id": config_id, "count": len(specs)})

    @app.post("/api/preview")
    async def preview(request: Request):
        st: ServiceState = app.state.service
        if st.recon is None:
            return _json_response({"error": "NoSession", "detail": "no reconstruction loaded"}, 404)
        if st.fields is None:
            return _json_response(
                {"error": "FieldsNotLoaded", "detail": "no render fields loaded"}, 409)
        body = await _read_json(request)
        mode = body.get("mode", "scene-only")
        if mode not in ("scene-only", "composed"):
            raise ValidationError(f"preview mode must be scene-only or composed, got {mode!r}")
        max_dim = body.get("max_dim", 256)
        if not isinstance(max_dim, int) or max_dim < 1:
            raise ValidationError(f"max_dim must be a positive integer, got {max_dim!r}")

        view, intr = _resolve_view(st, body)
        scale = min(1.0, max_dim / max(intr.width, intr.height))
        intr = scale_intrinsics(intr, scale)

        t0 = time.perf_counter()
        stats_json = None
        if mode == "scene-only":
            img = render_image(st.fields.scene_field, view, intr, st.fields.sampler,
                               bounds=st.fields.scene_bounds)
        else:
            img, stats = render_image_composed(
                st.fields.scene_field, st.fields.rois, view, intr,
                st.fields.sampler, bounds=st.fields.scene_bounds)
            stats_json = stats.to_json()
        elapsed = time.perf_counter() - t0

        return _json_response({
            "mode": mode,
            "width": intr.width,
            "height": intr.height,
            "png": base64.b64encode(png_bytes(img.rgb)).decode("ascii"),
            "stats": stats_json,
            "elapsed_ms": round(elapsed * 1000.0, 3),
        })

    if state.static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # mounted last so /api/* keeps routing priority
        app.mount("/", StaticFiles(directory=state.static_dir, html=True),
                  name="ui")

    return app


async def _read_json(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise MalformedJson("request body is not valid JSON") from None
    if not isinstance(body, dict):
        raise MalformedJson("request body must be a JSON object")
    return body


def _resolve_view(state: ServiceState, body: dict):
    """View record + intrinsics from {"view": id} or {"pose": {...}}."""
    recon = state.recon
    if "view" in body and body["view"] is not None:
        vid = body["view"]
        view = recon.views.get(vid)
        if view is None:
            raise ValidationError(f"view {vid!r} not in reconstruction")
        return view, recon.intrinsics[view.camera_id]
    pose = body.get("pose")
    if pose is None:
        raise ValidationError('preview needs "view" or "pose"')
    if not isinstance(pose, dict) or "rotation" not in pose or "translation" not in pose:
        raise MalformedJson('pose must be {"rotation": [w,x,y,z], "translation": [x,y,z]}')
    cam_id = sorted(recon.intrinsics)[0]
    view = ViewRecord(-1, "preview", cam_id, np.asarray(pose["rotation"], dtype=np.float64),
                      np.asarray(pose["translation"], dtype=np.float64))
    return view, recon.intrinsics[cam_id]


def build_state(recon: Reconstruction, fixture=None, rois=None, rois_path=None,
                point_budget: int = DEFAULT_POINT_BUDGET, seed: int = 0,
                scene_resolution: int = 48, roi_resolution: int = 96,
                sampler: SamplerConfig | None = None,
                static_dir: str | None = None) -> ServiceState:
    """Assemble ServiceState; with a fixture, bake preview fields up front."""
    from .fields import bake_grid
    from .grouping import group_cameras

    fields = None
    roi_specs = tuple(rois) if rois is not None else ()
    if fixture is not None:
        if not roi_specs:
            roi_specs = tuple(fixture.rois)
        grouping = group_cameras(recon, list(roi_specs), seed=seed)
        n = scene_resolution
        scene_field = bake_grid(fixture.oracle, fixture.scene_domain, (n, n, n))
        runtimes = []
        for spec in roi_specs:
            record = next(r for r in grouping.rois if r.name == spec.name)
            m = roi_resolution
            grid = bake_grid(fixture.oracle, spec.aabb, (m, m, m))
            runtimes.append(RoiRuntime(spec, grid, d_max=record.d_max))
        fields = LoadedFields(scene_field, fixture.scene_domain, runtimes,
                              sampler or SamplerConfig())
    return ServiceState(recon=recon, point_budget=point_budget, seed=seed,
                        rois=roi_specs, rois_path=rois_path, fields=fields,
                        static_dir=static_dir)
