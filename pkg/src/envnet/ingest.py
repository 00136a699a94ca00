"""Ingest pipeline: parse -> validate -> time sanity -> store, atomically.

No record enters the store without a provenance entry. Each upload is
hashed; re-uploading identical bytes is refused with the original upload
id, so overlapping manual retrievals are harmless. Rejected lines survive
verbatim in a quarantine sidecar since their error patterns are often the
first sign of a failing sensor or radio interference, and a rejection rate
above the tripwire marks the worst-offending nodes as suspect in the
report and the ledger.

The write is all-or-nothing: accepted records, the quarantine sidecar and
the provenance entry land together or not at all (see store.UploadTxn).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import datetime

from . import formats
from .errors import DuplicateUpload, UnknownUpload
from .model import UTC
from .store import Store

REJECT_TRIPWIRE = 0.25


@dataclass
class IngestResult:
    upload_id: str
    report: formats.ParseReport
    written: int
    duplicates: int


def _upload_id(sha256: str) -> str:
    return f"u-{sha256[:12]}"


def ingest_file(store: Store, data: bytes, source_name: str, user: str = "system",
                deployment_id: str | None = None,
                options: dict | None = None) -> IngestResult:
    """Ingest one datalogger export file.

    Returns the new upload id and the full parse report (also returned for
    rejection-heavy files so callers can show per-line errors). Raises
    DuplicateUpload when the store already contains these exact bytes; the
    original upload id rides along in the error detail.
    """
    options = dict(options or {})
    sha = hashlib.sha256(data).hexdigest()
    existing = store.find_upload_by_sha(sha)
    if existing is not None:
        raise DuplicateUpload(
            f"identical content already ingested as {existing['upload_id']}",
            original_upload_id=existing["upload_id"])
    upload_id = _upload_id(sha)

    dialect = formats.detect_dialect(data[:4096])
    if deployment_id is None:
        deployment_id = options.get("deployment")
    dep = store.deployment(deployment_id)
    site = store.site(dep.site_id)

    rows, parse_report = formats.parse_file(data, dialect, site)
    records, delta = formats.validate_structure(rows, dep, site)
    report = formats.combine_reports(parse_report, delta)

    _apply_tripwire(report)

    by_channel: dict[str, list] = {}
    for rec in records:
        by_channel.setdefault(rec.channel_id, []).append(rec)

    source_lines = data.decode("utf-8", errors="replace").split("\n")
    quarantine = []
    for e in report.errors:
        idx = e.line_number - 1
        line = (source_lines[idx].rstrip("\r")
                if 0 <= idx < len(source_lines) else e.excerpt)
        quarantine.append(f"{e.line_number}:{line}")

    txn = store.transaction(upload_id)
    try:
        for channel_id, recs in sorted(by_channel.items()):
            recs.sort(key=lambda r: r.ts_utc)
            txn.stage_channel(channel_id, recs)
        if quarantine:
            txn.stage_quarantine(quarantine)
        entry = {
            "upload_id": upload_id,
            "kind": "ingest",
            "ingested_at_utc": datetime.now(UTC).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "source_name": source_name,
            "source_sha256": sha,
            "user": user or "system",
            "dialect": dialect.kind.value,
            "dialect_version": dialect.version,
            "deployment_id": deployment_id,
            "options": sorted(f"{k}={v}" for k, v in options.items()),
            "rows_ok": report.rows_ok,
            "rows_rejected": report.rows_rejected,
            "duplicates": 0,
            "channels": txn.channel_coverage,
            "node_rows": dict(report.node_rows),
            "node_errors": dict(report.node_errors),
            "warnings": report.warnings,
            "unmapped_columns": report.unmapped_columns,
            "notes": "",
        }
        entry["duplicates"] = txn.duplicates
        txn.commit(entry)
    except Exception:
        txn.abort()
        raise

    return IngestResult(upload_id=upload_id, report=report,
                        written=txn.written, duplicates=txn.duplicates)


def _apply_tripwire(report: formats.ParseReport) -> None:
    total = report.data_rows
    if total and report.rows_rejected / total > REJECT_TRIPWIRE:
        worst = sorted(report.node_errors.items(), key=lambda kv: (-kv[1], kv[0]))
        names = ",".join(node for node, _ in worst[:3]) or "unknown"
        report.warnings.append(f"DEPLOYMENT_SUSPECT nodes={names} "
                               f"rejected={report.rows_rejected}/{total}")


def get_provenance(store: Store, upload_id: str) -> dict:
    """The immutable ledger entry for one upload.

    Entries are never edited in place; time corrections and other
    amendments appear as separate linked entries whose ``amends`` field
    names the uploads they touched.
    """
    entry = store.find_upload(upload_id)
    if entry is None:
        raise UnknownUpload(f"unknown upload: {upload_id}")
    amendments = [e["upload_id"] for e in store.provenance_entries()
                  if upload_id in (e.get("amends") or [])]
    if amendments:
        entry = dict(entry)
        entry["amended_by"] = amendments
    return entry
