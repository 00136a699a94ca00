"""HTTP service: a thin, faithful serialization of the library surface.

Every endpoint body is a pure serialization of the corresponding module
call; no filtering or analytics happens at the HTTP layer. The error
taxonomy is closed: each library error code maps to exactly one status,
4xx for caller faults and 5xx for store faults, and requests carrying
parameters an endpoint does not define fail with 400 instead of being
silently ignored. An optional static bearer token (PHENONET_TOKEN) guards
all /v1 routes.
"""

from __future__ import annotations

import io
import json
import os
from datetime import datetime

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import derive, health, ingest, query, spatial
from .errors import BadParams, EnvNetError
from .model import QualityFlag, UTC, ts_from_text, ts_to_text
from .store import Store, open_store

STATUS_BY_CODE = {
    "inverted_range": 400, "empty_spec": 400, "bad_params": 400,
    "unsorted_input": 400, "missing_header": 400, "no_calibration": 400,
    "unknown_dialect": 400, "ambiguous_dialect": 400, "unknown_parameter": 400,
    "unknown_channel": 404, "unknown_deployment": 404, "unknown_upload": 404,
    "unknown_variable": 404,
    "duplicate_upload": 409, "overlap_after_shift": 409,
    "insufficient_days": 422, "polar_day_night": 422,
    "night_or_degenerate": 422, "empty_points": 422,
    "not_a_store": 500, "corrupt_manifest": 500, "store_write_failure": 500,
}

DATA_PARAMS = {"channel", "from", "to", "tod", "bounds", "exclude_flags",
               "par_min", "agg", "raw", "format"}
FRAME_PARAMS = {"deployment", "variable", "from", "to", "step", "nx", "ny",
                "origin_x", "origin_y", "cell_size", "power", "cutoff"}
GAP_PARAMS = {"channel", "from", "to", "cadence"}
NODE_PARAMS = {"deployment", "from", "to"}


def _error_response(exc: EnvNetError) -> JSONResponse:
    status = STATUS_BY_CODE.get(exc.code, 500)
    body = {"code": exc.code, "message": str(exc)}
    if exc.detail:
        body["detail"] = exc.detail
    return JSONResponse(status_code=status, content=body)


def _check_params(request: Request, allowed: set[str]) -> None:
    unknown = set(request.query_params.keys()) - allowed
    if unknown:
        err = BadParams(f"unknown parameters: {sorted(unknown)}")
        err.code = "unknown_parameter"
        raise err


def _parse_ts(value: str, name: str) -> datetime:
    try:
        return ts_from_text(value)
    except ValueError:
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise BadParams(f"bad {name} timestamp: {value!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=UTC)
        return dt.astimezone(UTC)


def _build_spec(request: Request, channels: list[str]) -> query.QuerySpec:
    qp = request.query_params
    if "from" not in qp or "to" not in qp:
        raise BadParams("from and to are required")
    kwargs = {
        "channels": tuple(channels),
        "from_utc": _parse_ts(qp["from"], "from"),
        "to_utc": _parse_ts(qp["to"], "to"),
    }
    if "tod" in qp:
        try:
            start, end = qp["tod"].split("-")
            kwargs["tod_window"] = (int(start), int(end))
        except ValueError:
            raise BadParams(f"bad tod window: {qp['tod']!r} (want start-end minutes)")
    bounds = {}
    for token in qp.getlist("bounds"):
        try:
            var, lo, hi = token.split(":")
            bounds[var] = (float(lo), float(hi))
        except ValueError:
            raise BadParams(f"bad bounds: {token!r} (want variable:min:max)")
    if bounds:
        kwargs["value_bounds"] = bounds
    if "exclude_flags" in qp:
        raw = qp["exclude_flags"]
        if raw in ("", "none"):
            kwargs["exclude_flagged"] = frozenset()
        else:
            try:
                kwargs["exclude_flagged"] = frozenset(
                    QualityFlag(tok) for tok in raw.split(","))
            except ValueError:
                raise BadParams(f"bad exclude_flags: {raw!r}")
    if "par_min" in qp:
        kwargs["clear_sky_par_min"] = float(qp["par_min"])
    if "agg" in qp:
        try:
            bin_, stat = qp["agg"].split(":")
        except ValueError:
            raise BadParams(f"bad agg: {qp['agg']!r} (want bin:stat)")
        kwargs["agg"] = (bin_, stat)
    if qp.get("raw") in ("1", "true", "yes"):
        kwargs["raw_values"] = True
    try:
        return query.QuerySpec(**kwargs).validate()
    except ValueError as exc:
        raise BadParams(str(exc)) from exc


def series_to_csv(result: dict[str, list[query.SeriesPoint]]) -> str:
    buf = io.StringIO()
    buf.write("channel,ts,value,count\n")
    for channel_id in sorted(result):
        for p in result[channel_id]:
            value = "" if p.value is None else format(p.value, ".10g")
            buf.write(f"{channel_id},{ts_to_text(p.ts)},{value},{p.count}\n")
    return buf.getvalue()


def series_to_json(result: dict[str, list[query.SeriesPoint]]) -> dict:
    return {"channels": {cid: [p.to_json() for p in pts]
                         for cid, pts in result.items()}}


def create_app(store: Store | str) -> FastAPI:
    if not isinstance(store, Store):
        store = open_store(store)
    app = FastAPI(title="envnet", version="0.1.0", openapi_url=None)
    app.state.store = store

    @app.exception_handler(EnvNetError)
    async def _handle(request: Request, exc: EnvNetError):
        return _error_response(exc)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        token = os.environ.get("PHENONET_TOKEN")
        if token and request.url.path.startswith("/v1"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse(status_code=401, content={
                    "code": "unauthorized", "message": "bad or missing bearer token"})
        return await call_next(request)

    @app.get("/v1/deployments")
    async def deployments(request: Request):
        _check_params(request, set())
        out = []
        for dep in store.manifest.deployments.values():
            site = store.site(dep.site_id)
            out.append({
                "deployment_id": dep.deployment_id,
                "site_id": dep.site_id,
                "site_name": site.name,
                "kind": dep.kind,
                "cadence_s": dep.cadence_s,
                "nodes": len(dep.nodes),
                "latitude": site.latitude,
                "longitude": site.longitude,
                "utc_offset_standard": site.utc_offset_standard,
            })
        return {"deployments": sorted(out, key=lambda d: d["deployment_id"])}

    @app.get("/v1/deployments/{deployment_id}/channels")
    async def channels(deployment_id: str, request: Request):
        _check_params(request, set())
        dep = store.deployment(deployment_id)
        out = []
        for node in dep.nodes:
            for ch in node.channels:
                entry = ch.to_json()
                entry["node_id"] = node.node_id
                entry["x_m"] = node.x_m
                entry["y_m"] = node.y_m
                out.append(entry)
        return {"deployment_id": deployment_id, "channels": out}

    @app.get("/v1/data")
    async def data(request: Request):
        _check_params(request, DATA_PARAMS)
        channels = request.query_params.getlist("channel")
        spec = _build_spec(request, channels)
        result = query.run_query(store, spec)
        if request.query_params.get("format") == "csv":
            return PlainTextResponse(series_to_csv(result), media_type="text/csv")
        return series_to_json(result)

    @app.get("/v1/derived/{product}")
    async def derived(product: str, request: Request):
        _check_params(request, DATA_PARAMS | {"target"})
        if product not in derive.PRODUCTS:
            raise BadParams(f"unknown product: {product} (want one of {derive.PRODUCTS})")
        targets = request.query_params.getlist("target")
        if not targets:
            raise BadParams("target is required")
        channels = [f"derived:{product}:{t}" for t in targets]
        spec = _build_spec(request, channels)
        result = query.run_query(store, spec)
        if request.query_params.get("format") == "csv":
            return PlainTextResponse(series_to_csv(result), media_type="text/csv")
        body = series_to_json(result)
        body["method"] = derive.DERIVED_METHOD if product in ("ndvi", "evi2") else product
        return body

    @app.get("/v1/spatial/frames")
    async def frames(request: Request):
        _check_params(request, FRAME_PARAMS)
        qp = request.query_params
        for name in ("deployment", "variable", "from", "to", "step"):
            if name not in qp:
                raise BadParams(f"{name} is required")
        grid = None
        if all(k in qp for k in ("nx", "ny", "origin_x", "origin_y", "cell_size")):
            grid = spatial.GridSpec(nx=int(qp["nx"]), ny=int(qp["ny"]),
                                    origin_x=float(qp["origin_x"]),
                                    origin_y=float(qp["origin_y"]),
                                    cell_size=float(qp["cell_size"]))
        result = spatial.frame_sequence(
            store, qp["deployment"], qp["variable"],
            _parse_ts(qp["from"], "from"), _parse_ts(qp["to"], "to"),
            int(qp["step"]), grid=grid,
            power=float(qp.get("power", 2.0)),
            cutoff_m=float(qp["cutoff"]) if "cutoff" in qp else None)
        finite = [v for f in result for row in f.values.tolist()
                  for v in row if v == v]
        return {
            "deployment": qp["deployment"],
            "variable": qp["variable"],
            "grid": result[0].grid.to_json() if result else None,
            "vmin": min(finite) if finite else None,
            "vmax": max(finite) if finite else None,
            "frames": [f.to_json() for f in result],
        }

    @app.get("/v1/health/gaps")
    async def gaps(request: Request):
        _check_params(request, GAP_PARAMS)
        qp = request.query_params
        for name in ("channel", "from", "to"):
            if name not in qp:
                raise BadParams(f"{name} is required")
        report = health.detect_gaps(
            store, qp["channel"], _parse_ts(qp["from"], "from"),
            _parse_ts(qp["to"], "to"),
            cadence_s=int(qp["cadence"]) if "cadence" in qp else None)
        return report.to_json()

    @app.get("/v1/health/nodes")
    async def nodes(request: Request):
        _check_params(request, NODE_PARAMS)
        qp = request.query_params
        for name in ("deployment", "from", "to"):
            if name not in qp:
                raise BadParams(f"{name} is required")
        summary = health.node_health_summary(
            store, qp["deployment"], _parse_ts(qp["from"], "from"),
            _parse_ts(qp["to"], "to"))
        return {"deployment_id": qp["deployment"],
                "nodes": [n.to_json() for n in summary]}

    @app.get("/v1/provenance/{upload_id}")
    async def provenance(upload_id: str, request: Request):
        _check_params(request, set())
        return ingest.get_provenance(store, upload_id)

    @app.post("/v1/uploads", status_code=201)
    async def uploads(request: Request, file: UploadFile,
                      deployment: str = Form(""), site: str = Form(""),
                      user: str = Form("system"), options: str = Form("")):
        _check_params(request, set())
        data = await file.read()
        try:
            opts = json.loads(options) if options else {}
        except json.JSONDecodeError:
            raise BadParams(f"options must be a JSON object: {options[:80]!r}")
        if site:
            opts.setdefault("site", site)
        result = ingest.ingest_file(store, data, file.filename or "upload",
                                    user=user, deployment_id=deployment or None,
                                    options=opts)
        return {
            "upload_id": result.upload_id,
            "written": result.written,
            "duplicates": result.duplicates,
            "report": result.report.to_json(),
        }

    return app


def serve(store_path: str, host: str = "127.0.0.1", port: int = 8000,
          webui_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(store_path)
    if webui_dir and os.path.isdir(webui_dir):
        app.mount("/", StaticFiles(directory=webui_dir, html=True), name="webui")
    uvicorn.run(app, host=host, port=port, log_level="warning")
