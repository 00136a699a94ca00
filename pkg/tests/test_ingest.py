import json
import random
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import FIXTURES, utc
from envnet.errors import DuplicateUpload, UnknownDialect, UnknownUpload
from envnet.ingest import get_provenance, ingest_file
from envnet.store import open_store

WIRED = (FIXTURES / "golden_wired.csv").read_bytes()
AGG = (FIXTURES / "golden_agg.csv").read_bytes()


def test_clean_ingest_end_to_end(populated_store):
    result = ingest_file(populated_store, WIRED, "tower.csv", "alice", "tw")
    assert result.report.rows_ok == 8 and result.report.rows_rejected == 0
    assert result.written == 8 * 4
    got = populated_store.read_records("tw.mast:par_in",
                                       utc(2024, 3, 5), utc(2024, 3, 6))
    assert len(got) == 8
    entry = get_provenance(populated_store, result.upload_id)
    assert entry["user"] == "alice"
    assert entry["rows_ok"] == 8
    assert entry["dialect"] == "WIRED_LOGGER"
    assert entry["source_name"] == "tower.csv"
    assert len(entry["source_sha256"]) == 64


def test_duplicate_upload_leaves_store_unchanged(populated_store):
    first = ingest_file(populated_store, WIRED, "a.csv", "alice", "tw")
    snapshot = populated_store.read_all_records("tw.mast:par_in")
    with pytest.raises(DuplicateUpload) as exc:
        ingest_file(populated_store, WIRED, "b.csv", "bob", "tw")
    assert exc.value.detail["original_upload_id"] == first.upload_id
    assert len(populated_store.provenance_entries()) == 1
    assert populated_store.read_all_records("tw.mast:par_in") == snapshot


def test_overlapping_retrievals_deduplicate(populated_store):
    ingest_file(populated_store, WIRED, "a.csv", "alice", "tw")
    # a second retrieval overlapping the first: same rows plus a new one
    extra = WIRED.decode().rstrip("\n").split("\n")
    extra.append("2024-03-05 12:00:00,1731.0,52.0,780.0,157.5")
    result = ingest_file(populated_store, "\n".join(extra).encode() + b"\n",
                         "b.csv", "alice", "tw")
    assert result.written == 4          # only the new timestamp's columns
    assert result.duplicates == 8 * 4


def test_partial_reject_keeps_good_rows_and_quarantines(populated_store):
    src = AGG.decode().split("\n")
    bad_lines = [3, 7]
    for i in bad_lines:
        fields = src[i - 1].split(",")
        fields[2] = "T@#k"
        src[i - 1] = ",".join(fields)
    data = "\n".join(src).encode()
    result = ingest_file(populated_store, data, "agg.csv", "alice", "un")
    assert result.report.rows_rejected == 2
    assert result.report.rows_ok == 10
    qpath = populated_store.quarantine_dir / f"{result.upload_id}.txt"
    lines = qpath.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("3:") and "T@#k" in lines[0]


def test_unknown_dialect_propagates(populated_store):
    with pytest.raises(UnknownDialect):
        ingest_file(populated_store, b"time,temp\n1,2\n", "x.csv", "a", "tw")
    assert populated_store.provenance_entries() == []


def test_tripwire_warning_names_worst_node(populated_store):
    src = AGG.decode().split("\n")
    for i in (3, 5, 7, 9):   # corrupt four of the twelve data rows
        fields = src[i - 1].split(",")
        fields[2] = "@@@"
        src[i - 1] = ",".join(fields)
    result = ingest_file(populated_store, "\n".join(src).encode(), "x.csv", "a", "un")
    warnings = result.report.warnings
    assert warnings and warnings[0].startswith("DEPLOYMENT_SUSPECT")
    entry = get_provenance(populated_store, result.upload_id)
    assert entry["warnings"] == warnings


def test_unknown_upload(populated_store):
    with pytest.raises(UnknownUpload):
        get_provenance(populated_store, "u-nope")


def test_every_record_reachable_from_provenance(populated_store):
    ingest_file(populated_store, WIRED, "a.csv", "alice", "tw")
    ingest_file(populated_store, AGG, "b.csv", "alice", "un")
    covered = set()
    for entry in populated_store.provenance_entries():
        covered.update(entry.get("channels", {}))
    for channel_id in populated_store.channel_ids():
        if populated_store.read_all_records(channel_id):
            assert channel_id in covered


CRASH_POINTS = [
    ("stage.file", 1, False),
    ("stage.file", 2, False),
    ("stage.backup", 1, False),
    ("stage.meta", 1, False),
    ("stage.ready", 1, False),
    ("apply.file", 1, False),
    ("apply.file", 3, False),
    ("apply.quarantine", 1, False),
    ("provenance.pre", 1, False),
    ("provenance.torn", 1, True),
]


def _shift_agg(hours: int) -> bytes:
    out = []
    for line in AGG.decode().rstrip("\n").split("\n"):
        if line.startswith("#") or line.startswith("epoch_s"):
            out.append(line)
        else:
            epoch, rest = line.split(",", 1)
            out.append(f"{int(epoch) + hours * 3600},{rest}")
    return ("\n".join(out) + "\n").encode()


def _snapshot(store):
    return {ch: [(r.ts_utc, r.raw_value, r.eng_value, tuple(sorted(f.value for f in r.flags)))
                 for r in store.read_all_records(ch)]
            for ch in store.channel_ids()}


@pytest.mark.parametrize("point,occurrence,torn", CRASH_POINTS)
def test_crash_mid_ingest_leaves_store_clean(tmp_path, populated_store,
                                             point, occurrence, torn):
    """SIGKILL at any write point before commit: readable store, upload absent."""
    store = populated_store
    # existing data in the same channels/month so backups are exercised
    ingest_file(store, _shift_agg(-6), "earlier.csv", "ops", "un")
    baseline_entries = len(store.provenance_entries())
    baseline = _snapshot(store)

    src = AGG.decode().split("\n")
    fields = src[2].split(",")
    fields[2] = "T@#k"                       # force a quarantine sidecar
    src[2] = ",".join(fields)
    data_file = tmp_path / "upload.csv"
    data_file.write_text("\n".join(src))

    driver = Path(__file__).parent / "_crash_driver.py"
    proc = subprocess.run(
        [sys.executable, str(driver), str(store.root), str(data_file),
         "un", point, str(occurrence)] + (["torn"] if torn else []),
        capture_output=True, text=True, timeout=60)
    assert proc.returncode == -9, f"driver did not hit {point}: {proc.stderr}"

    reopened = open_store(store.root)        # recovery runs here
    assert len(reopened.provenance_entries()) == baseline_entries
    assert _snapshot(reopened) == baseline
    leftovers = [p.name for p in reopened.quarantine_dir.glob("*")] \
        if reopened.quarantine_dir.exists() else []
    assert leftovers == []
    assert not (reopened.txn_dir.exists() and list(reopened.txn_dir.iterdir()))

    # the same upload goes through cleanly afterwards
    result = ingest_file(reopened, data_file.read_bytes(), "upload.csv",
                         "retry", "un")
    assert result.report.rows_ok == 11


def test_crash_after_commit_upload_complete(tmp_path, populated_store):
    """Past the provenance append the upload is durable, crash or not."""
    store = populated_store
    data_file = tmp_path / "upload.csv"
    data_file.write_bytes(AGG)
    driver = Path(__file__).parent / "_crash_driver.py"
    proc = subprocess.run(
        [sys.executable, str(driver), str(store.root), str(data_file),
         "un", "cleanup.pre", "1"],
        capture_output=True, text=True, timeout=60)
    assert proc.returncode == -9
    reopened = open_store(store.root)
    entries = reopened.provenance_entries()
    assert len(entries) == 1 and entries[0]["rows_ok"] == 12
    assert len(reopened.read_all_records("un.n01:air_temp")) == 6
