"""Command-line surface for the sensor data engine.

Exit codes: 0 ok, 1 caller error, 2 data error (e.g. too few usable days
for a time check), 3 store error.
"""

from __future__ import annotations

import json
import sys
from datetime import date, datetime, timedelta
from pathlib import Path

import click

from . import derive, health, ingest, query, simgen, spatial, timecal
from .api import series_to_csv, series_to_json
from .errors import EnvNetError
from .model import Deployment, QualityFlag, Site, UTC, ts_from_text
from .store import open_store


def _parse_ts(value: str) -> datetime:
    try:
        return ts_from_text(value)
    except ValueError:
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=UTC)
        return dt.astimezone(UTC)


def _emit(ctx, payload, csv_text=None):
    if ctx.obj["quiet"]:
        return
    if ctx.obj["format"] == "csv" and csv_text is not None:
        click.echo(csv_text, nl=False)
    else:
        click.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))


@click.group()
@click.option("--store", "store_path", default="./store", show_default=True,
              help="Store directory.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
              show_default=True, help="Output format where applicable.")
@click.option("--quiet", is_flag=True, help="Suppress normal output.")
@click.pass_context
def main(ctx, store_path, fmt, quiet):
    """Manage, verify and serve ground-based sensor network data."""
    ctx.ensure_object(dict)
    ctx.obj.update(store=store_path, format=fmt, quiet=quiet)


def _open(ctx, create=False):
    return open_store(ctx.obj["store"], create_if_missing=create)


def _run(fn):
    try:
        fn()
    except EnvNetError as exc:
        click.echo(f"error[{exc.code}]: {exc}", err=True)
        sys.exit(exc.exit_code)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.option("--import-manifest", "manifest_file", type=click.Path(exists=True),
              help="JSON fragment with sites/deployments to register.")
@click.pass_context
def init(ctx, manifest_file):
    """Create a store (optionally seeding sites and deployments)."""
    def go():
        store = _open(ctx, create=True)
        if manifest_file:
            frag = json.loads(Path(manifest_file).read_text(encoding="utf-8"))
            for s in frag.get("sites", []):
                store.add_site(Site.from_json(s))
            for d in frag.get("deployments", []):
                store.add_deployment(Deployment.from_json(d))
        _emit(ctx, {"store": ctx.obj["store"],
                    "sites": sorted(store.manifest.sites),
                    "deployments": sorted(store.manifest.deployments)})
    _run(go)


@main.command("ingest")
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--deployment", required=True, help="Target deployment id.")
@click.option("--user", default="system", show_default=True)
@click.option("--option", "options", multiple=True, metavar="KEY=VALUE",
              help="Pre-processing option recorded in provenance.")
@click.pass_context
def ingest_cmd(ctx, files, deployment, user, options):
    """Ingest datalogger export files."""
    def go():
        store = _open(ctx)
        opts = dict(tok.split("=", 1) for tok in options)
        out = []
        for path in files:
            data = Path(path).read_bytes()
            result = ingest.ingest_file(store, data, Path(path).name, user=user,
                                        deployment_id=deployment, options=opts)
            out.append({"file": path, "upload_id": result.upload_id,
                        "rows_ok": result.report.rows_ok,
                        "rows_rejected": result.report.rows_rejected,
                        "written": result.written,
                        "duplicates": result.duplicates,
                        "warnings": result.report.warnings})
        _emit(ctx, out)
    _run(go)


@main.command("simgen")
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True),
              help="SimSpec JSON file.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for emitted files and the truth ledger.")
@click.pass_context
def simgen_cmd(ctx, spec_file, out_dir):
    """Generate synthetic deployment files with fault injection."""
    def go():
        spec = simgen.load_spec(spec_file)
        truth = simgen.emit_files(spec, out_dir)
        _emit(ctx, {"out": out_dir,
                    "files": [f["path"] for f in truth["files"]],
                    "gap_channels": sorted(truth["gaps"])})
    _run(go)


@main.command("check-time")
@click.option("--channel", required=True)
@click.option("--from", "from_date", required=True, help="Start date (YYYY-MM-DD).")
@click.option("--to", "to_date", required=True, help="End date, exclusive.")
@click.option("--threshold", default=timecal.DEFAULT_THRESHOLD, show_default=True)
@click.option("--sustain", default=timecal.DEFAULT_SUSTAIN, show_default=True)
@click.pass_context
def check_time(ctx, channel, from_date, to_date, threshold, sustain):
    """Check a radiation channel's timestamps against expected sunrise."""
    def go():
        store = _open(ctx)
        verdict = timecal.detect_utc_offset_error(
            store, channel, date.fromisoformat(from_date),
            date.fromisoformat(to_date), threshold=threshold, sustain=sustain)
        _emit(ctx, {"channel": channel,
                    "offset_hours": verdict.offset_hours,
                    "confidence": verdict.confidence,
                    "days_used": verdict.days_used,
                    "drift_warning": verdict.drift_warning,
                    "median_residual_min": verdict.median_residual_min})
        if verdict.offset_hours != 0:
            sys.exit(2)
    _run(go)


@main.command("fix-time")
@click.option("--channel", required=True)
@click.option("--from", "from_ts", required=True, help="UTC start of the window.")
@click.option("--to", "to_ts", required=True, help="UTC end, exclusive.")
@click.option("--offset-hours", required=True, type=int)
@click.option("--user", default="system", show_default=True)
@click.pass_context
def fix_time(ctx, channel, from_ts, to_ts, offset_hours, user):
    """Shift a window of records by a confirmed whole-hour offset."""
    def go():
        store = _open(ctx)
        count = timecal.apply_time_correction(
            store, channel, _parse_ts(from_ts), _parse_ts(to_ts),
            offset_hours, user=user)
        _emit(ctx, {"channel": channel, "corrected": count,
                    "offset_hours": offset_hours})
    _run(go)


def _spec_from_flags(channels, from_ts, to_ts, tod, bounds, exclude_flags,
                     par_min, agg, raw) -> query.QuerySpec:
    kwargs = {"channels": tuple(channels), "from_utc": _parse_ts(from_ts),
              "to_utc": _parse_ts(to_ts)}
    if tod:
        start, end = tod.split("-")
        kwargs["tod_window"] = (int(start), int(end))
    vb = {}
    for token in bounds:
        var, lo, hi = token.split(":")
        vb[var] = (float(lo), float(hi))
    if vb:
        kwargs["value_bounds"] = vb
    if exclude_flags is not None:
        if exclude_flags in ("", "none"):
            kwargs["exclude_flagged"] = frozenset()
        else:
            kwargs["exclude_flagged"] = frozenset(
                QualityFlag(tok) for tok in exclude_flags.split(","))
    if par_min is not None:
        kwargs["clear_sky_par_min"] = par_min
    if agg:
        bin_, stat = agg.split(":")
        kwargs["agg"] = (bin_, stat)
    if raw:
        kwargs["raw_values"] = True
    return query.QuerySpec(**kwargs)


@main.command("query")
@click.option("--channel", "channels", multiple=True, required=True)
@click.option("--from", "from_ts", required=True)
@click.option("--to", "to_ts", required=True)
@click.option("--tod", help="Local time-of-day window, minutes (start-end).")
@click.option("--bounds", multiple=True, metavar="VAR:MIN:MAX")
@click.option("--exclude-flags", default=None,
              help="Comma-separated flags, or 'none' to keep everything.")
@click.option("--par-min", type=float, help="Clear-sky co-timed PAR threshold.")
@click.option("--agg", help="Aggregation bin:stat, e.g. day:mean.")
@click.option("--raw", is_flag=True, help="Return raw values.")
@click.pass_context
def query_cmd(ctx, channels, from_ts, to_ts, tod, bounds, exclude_flags,
              par_min, agg, raw):
    """Run a filtered/aggregated query over stored records."""
    def go():
        store = _open(ctx)
        spec = _spec_from_flags(channels, from_ts, to_ts, tod, bounds,
                                exclude_flags, par_min, agg, raw)
        result = query.run_query(store, spec)
        _emit(ctx, series_to_json(result), series_to_csv(result))
    _run(go)


@main.command("derive")
@click.option("--product", required=True,
              type=click.Choice(list(derive.PRODUCTS)))
@click.option("--target", required=True,
              help="Tower deployment id (ndvi/evi2) or node id (fapar/lai/vpd).")
@click.option("--from", "from_ts", required=True)
@click.option("--to", "to_ts", required=True)
@click.option("--tod", help="Local time-of-day window, minutes (start-end).")
@click.option("--par-min", type=float)
@click.option("--agg", help="Aggregation bin:stat, e.g. day:mean.")
@click.pass_context
def derive_cmd(ctx, product, target, from_ts, to_ts, tod, par_min, agg):
    """Compute a derived product series through the query engine."""
    def go():
        store = _open(ctx)
        spec = _spec_from_flags([f"derived:{product}:{target}"], from_ts, to_ts,
                                tod, (), None, par_min, agg, False)
        result = query.run_query(store, spec)
        _emit(ctx, series_to_json(result), series_to_csv(result))
    _run(go)


@main.command("frames")
@click.option("--deployment", required=True)
@click.option("--variable", required=True)
@click.option("--from", "from_ts", required=True)
@click.option("--to", "to_ts", required=True)
@click.option("--step", required=True, type=int, help="Frame bin seconds.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--nx", type=int)
@click.option("--ny", type=int)
@click.option("--origin-x", type=float)
@click.option("--origin-y", type=float)
@click.option("--cell-size", type=float)
@click.option("--cutoff", type=float)
@click.pass_context
def frames_cmd(ctx, deployment, variable, from_ts, to_ts, step, out_dir,
               nx, ny, origin_x, origin_y, cell_size, cutoff):
    """Export an interpolated frame sequence with reliability maps."""
    def go():
        store = _open(ctx)
        grid = None
        if all(v is not None for v in (nx, ny, origin_x, origin_y, cell_size)):
            grid = spatial.GridSpec(nx=nx, ny=ny, origin_x=origin_x,
                                    origin_y=origin_y, cell_size=cell_size)
        frames = spatial.frame_sequence(store, deployment, variable,
                                        _parse_ts(from_ts), _parse_ts(to_ts),
                                        step, grid=grid, cutoff_m=cutoff)
        manifest = spatial.export_frames(frames, out_dir, {
            "deployment": deployment, "variable": variable})
        _emit(ctx, manifest)
    _run(go)


@main.group("health")
def health_group():
    """Gap detection and per-node deployment health."""


@health_group.command("gaps")
@click.option("--channel", required=True)
@click.option("--from", "from_ts", required=True)
@click.option("--to", "to_ts", required=True)
@click.option("--cadence", type=int, help="Override deployment cadence seconds.")
@click.pass_context
def health_gaps(ctx, channel, from_ts, to_ts, cadence):
    """Report missing-sample gaps for one channel."""
    def go():
        store = _open(ctx)
        report = health.detect_gaps(store, channel, _parse_ts(from_ts),
                                    _parse_ts(to_ts), cadence_s=cadence)
        _emit(ctx, report.to_json())
    _run(go)


@health_group.command("nodes")
@click.option("--deployment", required=True)
@click.option("--from", "from_ts", required=True)
@click.option("--to", "to_ts", required=True)
@click.pass_context
def health_nodes(ctx, deployment, from_ts, to_ts):
    """Rank a deployment's nodes worst-first by uptime and reject rate."""
    def go():
        store = _open(ctx)
        summary = health.node_health_summary(store, deployment,
                                             _parse_ts(from_ts), _parse_ts(to_ts))
        _emit(ctx, [n.to_json() for n in summary])
    _run(go)


@main.command("provenance")
@click.option("--upload-id", help="Show one entry (default lists all).")
@click.pass_context
def provenance_cmd(ctx, upload_id):
    """Inspect the upload ledger."""
    def go():
        store = _open(ctx)
        if upload_id:
            _emit(ctx, ingest.get_provenance(store, upload_id))
        else:
            _emit(ctx, store.provenance_entries())
    _run(go)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--webui", "webui_dir", type=click.Path(),
              help="Static web client directory to serve at /.")
@click.pass_context
def serve_cmd(ctx, host, port, webui_dir):
    """Run the HTTP API (plus the web client when built)."""
    def go():
        from .api import serve
        serve(ctx.obj["store"], host=host, port=port, webui_dir=webui_dir)
    _run(go)


if __name__ == "__main__":
    main()
