"""Append-oriented time-series repository.

Layout under one root directory:

    manifest.json                      sites, deployments, nodes, channels
    data/<channel_id>/<YYYY-MM>.csv    header: ts_utc,raw,eng,flags
    provenance.jsonl                   one upload/amendment entry per line
    quarantine/<upload_id>.txt         verbatim rejected lines
    .txn/<upload_id>/                  staging area for in-flight ingests

Record files are partitioned by UTC month and only ever appended or
atomically replaced. Many readers may share a store; writes serialize
through the in-process writer lock. Re-appending an existing
(channel, ts) pair is dropped and counted, never an error.

Opening a store normally never mutates it; the one exception is crash
recovery, which rolls back any ingest transaction that did not reach its
commit point so interrupted uploads are never half-visible.
"""

from __future__ import annotations

import json
import os
import shutil
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import (
    CorruptManifest,
    InvertedRange,
    NotAStore,
    StoreWriteFailure,
    UnknownChannel,
    UnknownDeployment,
    UnknownUpload,
    UnsortedInput,
)
from .model import (
    Deployment,
    SensorRecord,
    Site,
    ensure_utc,
    flags_from_text,
    flags_to_text,
    format_value,
    parse_value,
    ts_from_text,
    ts_to_text,
)

RECORD_HEADER = "ts_utc,raw,eng,flags"

# Test hook: maps named write points to a callable, lets the crash tests
# kill the process at precise syscall boundaries. Never set in production.
_crash_hook = None


def _crash_point(name: str) -> None:
    if _crash_hook is not None:
        _crash_hook(name)


@dataclass
class AppendResult:
    written: int
    duplicates: int


@dataclass
class Manifest:
    sites: dict[str, Site] = field(default_factory=dict)
    deployments: dict[str, Deployment] = field(default_factory=dict)

    def channel_index(self) -> dict[str, tuple[Deployment, "object", "object"]]:
        idx = {}
        for dep in self.deployments.values():
            for node in dep.nodes:
                for ch in node.channels:
                    idx[ch.channel_id] = (dep, node, ch)
        return idx

    def to_json(self) -> dict:
        return {
            "version": 1,
            "sites": [s.to_json() for s in self.sites.values()],
            "deployments": [d.to_json() for d in self.deployments.values()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Manifest":
        m = cls()
        for s in obj.get("sites", []):
            site = Site.from_json(s)
            m.sites[site.site_id] = site
        for d in obj.get("deployments", []):
            dep = Deployment.from_json(d)
            if dep.site_id not in m.sites:
                raise ValueError(f"deployment {dep.deployment_id} references "
                                 f"unknown site {dep.site_id}")
            m.deployments[dep.deployment_id] = dep
        seen = set()
        for dep in m.deployments.values():
            for node in dep.nodes:
                for ch in node.channels:
                    if ch.channel_id in seen:
                        raise ValueError(f"duplicate channel id {ch.channel_id}")
                    seen.add(ch.channel_id)
        return m


class Store:
    def __init__(self, root: Path, manifest: Manifest):
        self.root = Path(root)
        self.manifest = manifest
        self._channels = manifest.channel_index()
        self._writer_lock = threading.RLock()

    # -- paths ---------------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def provenance_path(self) -> Path:
        return self.root / "provenance.jsonl"

    @property
    def quarantine_dir(self) -> Path:
        return self.root / "quarantine"

    @property
    def txn_dir(self) -> Path:
        return self.root / ".txn"

    def channel_dir(self, channel_id: str) -> Path:
        return self.root / "data" / channel_id

    def month_path(self, channel_id: str, year: int, month: int) -> Path:
        return self.channel_dir(channel_id) / f"{year:04d}-{month:02d}.csv"

    # -- manifest lookups ------------------------------------------------------

    def site(self, site_id: str) -> Site:
        try:
            return self.manifest.sites[site_id]
        except KeyError:
            raise UnknownDeployment(f"unknown site: {site_id}") from None

    def deployment(self, deployment_id: str) -> Deployment:
        try:
            return self.manifest.deployments[deployment_id]
        except KeyError:
            raise UnknownDeployment(f"unknown deployment: {deployment_id}") from None

    def channel(self, channel_id: str):
        """Returns (deployment, node, descriptor) for a channel id."""
        try:
            return self._channels[channel_id]
        except KeyError:
            raise UnknownChannel(f"unknown channel: {channel_id}") from None

    def channel_ids(self) -> list[str]:
        return sorted(self._channels)

    def site_of_channel(self, channel_id: str) -> Site:
        dep, _, _ = self.channel(channel_id)
        return self.site(dep.site_id)

    # -- manifest mutation -------------------------------------------------------

    def add_site(self, site: Site) -> None:
        with self._writer_lock:
            self.manifest.sites[site.site_id] = site
            self._write_manifest()

    def add_deployment(self, dep: Deployment) -> None:
        with self._writer_lock:
            if dep.site_id not in self.manifest.sites:
                raise UnknownDeployment(f"unknown site: {dep.site_id}")
            self.manifest.deployments[dep.deployment_id] = dep
            self._channels = self.manifest.channel_index()
            self._write_manifest()

    def _write_manifest(self) -> None:
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.manifest.to_json(), indent=2) + "\n",
                       encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    # -- record io -------------------------------------------------------------

    def append_records(self, channel_id: str, records: list[SensorRecord]) -> AppendResult:
        """Append records for one channel, dropping (channel, ts) duplicates.

        Records must arrive sorted by ts_utc (non-decreasing). Returns the
        count actually written plus the count dropped as duplicates.
        """
        self.channel(channel_id)
        prepared = self._prepare(channel_id, records)
        with self._writer_lock:
            written = 0
            duplicates = 0
            by_month: dict[tuple[int, int], list[SensorRecord]] = {}
            for rec in prepared:
                by_month.setdefault((rec.ts_utc.year, rec.ts_utc.month), []).append(rec)
            for (year, month), recs in sorted(by_month.items()):
                path = self.month_path(channel_id, year, month)
                existing = self._month_timestamps(path)
                fresh = []
                for rec in recs:
                    if rec.ts_utc in existing:
                        duplicates += 1
                    else:
                        existing.add(rec.ts_utc)
                        fresh.append(rec)
                if fresh:
                    self._append_month(path, fresh)
                    written += len(fresh)
            return AppendResult(written=written, duplicates=duplicates)

    def _prepare(self, channel_id: str, records: list[SensorRecord]) -> list[SensorRecord]:
        prev = None
        for rec in records:
            if rec.channel_id and rec.channel_id != channel_id:
                raise ValueError(f"record channel {rec.channel_id} does not match {channel_id}")
            rec.channel_id = channel_id
            rec.validate()
            if prev is not None and rec.ts_utc < prev:
                raise UnsortedInput(f"records for {channel_id} not sorted by ts_utc")
            prev = rec.ts_utc
        return list(records)

    def _month_timestamps(self, path: Path) -> set[datetime]:
        if not path.exists():
            return set()
        out = set()
        for rec in self._read_month(path, ""):
            out.add(rec.ts_utc)
        return out

    def _append_month(self, path: Path, records: list[SensorRecord]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        is_new = not path.exists()
        try:
            with open(path, "a", encoding="utf-8", newline="") as f:
                if is_new:
                    f.write(RECORD_HEADER + "\n")
                for rec in records:
                    f.write(record_to_line(rec) + "\n")
        except OSError as exc:
            raise StoreWriteFailure(str(exc)) from exc

    def read_records(self, channel_id: str, from_utc: datetime,
                     to_utc: datetime) -> list[SensorRecord]:
        """All records with from_utc <= ts < to_utc, sorted ascending."""
        self.channel(channel_id)
        from_utc = ensure_utc(from_utc, "from_utc")
        to_utc = ensure_utc(to_utc, "to_utc")
        if from_utc > to_utc:
            raise InvertedRange(f"from {ts_to_text(from_utc)} > to {ts_to_text(to_utc)}")
        out: list[SensorRecord] = []
        for path in self._months_covering(channel_id, from_utc, to_utc):
            for rec in self._read_month(path, channel_id):
                if from_utc <= rec.ts_utc < to_utc:
                    out.append(rec)
        out.sort(key=lambda r: r.ts_utc)
        return out

    def read_all_records(self, channel_id: str) -> list[SensorRecord]:
        self.channel(channel_id)
        out = []
        cdir = self.channel_dir(channel_id)
        if cdir.is_dir():
            for path in sorted(cdir.glob("*.csv")):
                out.extend(self._read_month(path, channel_id))
        out.sort(key=lambda r: r.ts_utc)
        return out

    def _months_covering(self, channel_id: str, from_utc: datetime,
                         to_utc: datetime) -> list[Path]:
        cdir = self.channel_dir(channel_id)
        if not cdir.is_dir():
            return []
        lo = (from_utc.year, from_utc.month)
        hi = (to_utc.year, to_utc.month)
        paths = []
        for path in sorted(cdir.glob("*.csv")):
            try:
                y, m = path.stem.split("-")
                key = (int(y), int(m))
            except ValueError:
                continue
            if lo <= key <= hi:
                paths.append(path)
        return paths

    def _read_month(self, path: Path, channel_id: str) -> list[SensorRecord]:
        out = []
        with open(path, encoding="utf-8", newline="") as f:
            header = f.readline().rstrip("\r\n")
            if header != RECORD_HEADER:
                raise CorruptManifest(f"bad record file header in {path}")
            for line in f:
                line = line.rstrip("\r\n")
                if not line:
                    continue
                out.append(record_from_line(line, channel_id, path))
        return out

    def rewrite_channel(self, channel_id: str, records: list[SensorRecord]) -> None:
        """Replace a channel's full record set (used by time correction)."""
        self.channel(channel_id)
        with self._writer_lock:
            records = sorted(records, key=lambda r: r.ts_utc)
            by_month: dict[tuple[int, int], list[SensorRecord]] = {}
            for rec in records:
                rec.validate()
                by_month.setdefault((rec.ts_utc.year, rec.ts_utc.month), []).append(rec)
            cdir = self.channel_dir(channel_id)
            cdir.mkdir(parents=True, exist_ok=True)
            keep = set()
            for (year, month), recs in sorted(by_month.items()):
                path = self.month_path(channel_id, year, month)
                keep.add(path)
                tmp = path.with_suffix(".csv.tmp")
                with open(tmp, "w", encoding="utf-8", newline="") as f:
                    f.write(RECORD_HEADER + "\n")
                    for rec in recs:
                        f.write(record_to_line(rec) + "\n")
                os.replace(tmp, path)
            for path in cdir.glob("*.csv"):
                if path not in keep:
                    path.unlink()

    # -- provenance --------------------------------------------------------------

    def provenance_entries(self) -> list[dict]:
        if not self.provenance_path.exists():
            return []
        entries = []
        with open(self.provenance_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError:
                    # torn tail from an interrupted append; recovery truncates
                    continue
        return entries

    def find_upload(self, upload_id: str) -> dict:
        for entry in self.provenance_entries():
            if entry.get("upload_id") == upload_id:
                return entry
        raise UnknownUpload(f"unknown upload: {upload_id}")

    def find_upload_by_sha(self, sha256: str) -> dict | None:
        for entry in self.provenance_entries():
            if entry.get("source_sha256") == sha256:
                return entry
        return None

    def append_provenance(self, entry: dict) -> None:
        with self._writer_lock:
            _append_provenance_line(self.provenance_path, entry)

    # -- ingest transaction --------------------------------------------------------

    def transaction(self, upload_id: str) -> "UploadTxn":
        return UploadTxn(self, upload_id)

    def writer(self):
        return self._writer_lock


def record_to_line(rec: SensorRecord) -> str:
    return ",".join([
        ts_to_text(rec.ts_utc),
        format_value(rec.raw_value),
        format_value(rec.eng_value),
        flags_to_text(rec.flags),
    ])


def record_from_line(line: str, channel_id: str, path: Path) -> SensorRecord:
    parts = line.split(",")
    if len(parts) != 4:
        raise CorruptManifest(f"bad record row in {path}: {line[:80]!r}")
    try:
        return SensorRecord(
            channel_id=channel_id,
            ts_utc=ts_from_text(parts[0]),
            raw_value=parse_value(parts[1]),
            eng_value=parse_value(parts[2]),
            flags=flags_from_text(parts[3]),
        )
    except (ValueError, KeyError) as exc:
        raise CorruptManifest(f"bad record row in {path}: {line[:80]!r}") from exc


def _append_provenance_line(path: Path, entry: dict, torn: bool = False) -> None:
    data = (json.dumps(entry, sort_keys=True) + "\n").encode("utf-8")
    _crash_point("provenance.pre")
    if torn:
        data = data[: len(data) // 2]
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
    try:
        os.write(fd, data)
    finally:
        os.close(fd)
    if torn:
        _crash_point("provenance.torn")


class UploadTxn:
    """All-or-nothing ingest write.

    Stages complete replacement month files plus the quarantine sidecar
    under .txn/<upload_id>/, backs up every file it will touch, then
    applies and commits by appending the provenance line. Recovery at
    open rolls back anything that never reached the provenance append.
    """

    def __init__(self, store: Store, upload_id: str):
        self.store = store
        self.upload_id = upload_id
        self.dir = store.txn_dir / upload_id
        self._staged: list[dict] = []           # {"rel": ..., "content": bytes}
        self._quarantine: list[str] | None = None
        self.written = 0
        self.duplicates = 0
        self.channel_coverage: dict[str, dict] = {}

    def stage_channel(self, channel_id: str, records: list[SensorRecord]) -> None:
        store = self.store
        store.channel(channel_id)
        prepared = store._prepare(channel_id, records)
        by_month: dict[tuple[int, int], list[SensorRecord]] = {}
        for rec in prepared:
            by_month.setdefault((rec.ts_utc.year, rec.ts_utc.month), []).append(rec)
        fresh_ts: list[datetime] = []
        for (year, month), recs in sorted(by_month.items()):
            path = store.month_path(channel_id, year, month)
            existing = store._month_timestamps(path)
            fresh = []
            for rec in recs:
                if rec.ts_utc in existing:
                    self.duplicates += 1
                else:
                    existing.add(rec.ts_utc)
                    fresh.append(rec)
            if not fresh:
                continue
            self.written += len(fresh)
            fresh_ts.extend(r.ts_utc for r in fresh)
            lines = []
            if path.exists():
                base = path.read_text(encoding="utf-8")
                if not base.endswith("\n"):
                    base += "\n"
            else:
                base = RECORD_HEADER + "\n"
            lines.append(base)
            for rec in fresh:
                lines.append(record_to_line(rec) + "\n")
            rel = os.path.join("data", channel_id, f"{year:04d}-{month:02d}.csv")
            self._staged.append({"rel": rel, "content": "".join(lines).encode("utf-8")})
        if fresh_ts:
            cov = self.channel_coverage.setdefault(
                channel_id, {"count": 0, "first_ts": None, "last_ts": None})
            cov["count"] += len(fresh_ts)
            first, last = min(fresh_ts), max(fresh_ts)
            if cov["first_ts"] is None or ts_to_text(first) < cov["first_ts"]:
                cov["first_ts"] = ts_to_text(first)
            if cov["last_ts"] is None or ts_to_text(last) > cov["last_ts"]:
                cov["last_ts"] = ts_to_text(last)

    def stage_quarantine(self, lines: list[str]) -> None:
        self._quarantine = list(lines)

    def commit(self, entry: dict) -> None:
        store = self.store
        with store._writer_lock:
            try:
                self._commit_locked(entry)
            except OSError as exc:
                self.abort()
                raise StoreWriteFailure(str(exc)) from exc

    def _commit_locked(self, entry: dict) -> None:
        store = self.store
        new_dir = self.dir / "new"
        backup_dir = self.dir / "backup"
        new_dir.mkdir(parents=True, exist_ok=True)
        backup_dir.mkdir(parents=True, exist_ok=True)

        files = []
        for item in self._staged:
            rel = item["rel"]
            staged = new_dir / rel.replace(os.sep, "__")
            staged.write_bytes(item["content"])
            _crash_point("stage.file")
            live = store.root / rel
            had_backup = live.exists()
            if had_backup:
                shutil.copy2(live, backup_dir / rel.replace(os.sep, "__"))
                _crash_point("stage.backup")
            files.append({"rel": rel, "staged": staged.name, "had_backup": had_backup})

        quarantine_rel = None
        if self._quarantine:
            quarantine_rel = os.path.join("quarantine", f"{self.upload_id}.txt")

        meta = {
            "upload_id": self.upload_id,
            "files": files,
            "quarantine_rel": quarantine_rel,
            "provenance_len": (store.provenance_path.stat().st_size
                               if store.provenance_path.exists() else 0),
        }
        (self.dir / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
        _crash_point("stage.meta")
        (self.dir / "READY").write_text("", encoding="utf-8")
        _crash_point("stage.ready")

        # apply: live files only change past this point
        for item in files:
            live = store.root / item["rel"]
            live.parent.mkdir(parents=True, exist_ok=True)
            os.replace(new_dir / item["staged"], live)
            _crash_point("apply.file")

        if quarantine_rel:
            qpath = store.root / quarantine_rel
            qpath.parent.mkdir(parents=True, exist_ok=True)
            tmp = qpath.with_suffix(".tmp")
            tmp.write_text("".join(line + "\n" for line in self._quarantine),
                           encoding="utf-8")
            os.replace(tmp, qpath)
            _crash_point("apply.quarantine")

        _append_provenance_line(store.provenance_path, entry,
                                torn=_torn_mode())
        _crash_point("cleanup.pre")
        shutil.rmtree(self.dir, ignore_errors=True)

    def abort(self) -> None:
        if self.dir.exists():
            _rollback_txn(self.store, self.dir)


def _torn_mode() -> bool:
    return getattr(_crash_hook, "torn_provenance", False) if _crash_hook else False


# -- open / recovery --------------------------------------------------------------


def open_store(root_path, create_if_missing: bool = False) -> Store:
    """Open a store directory, creating an empty one when asked.

    Performs crash recovery for interrupted ingests before returning:
    uncommitted transactions are rolled back so the store is always
    readable and never shows a partial upload.
    """
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        if not create_if_missing:
            raise NotAStore(f"no store manifest at {manifest_path}")
        root.mkdir(parents=True, exist_ok=True)
        (root / "data").mkdir(exist_ok=True)
        manifest = Manifest()
        tmp = manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, manifest_path)
        return Store(root, manifest)

    try:
        obj = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest = Manifest.from_json(obj)
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CorruptManifest(f"corrupt manifest {manifest_path}: {exc}") from exc

    store = Store(root, manifest)
    _recover(store)
    return store


def _recover(store: Store) -> None:
    txn_root = store.txn_dir
    if not txn_root.is_dir():
        _truncate_torn_provenance(store)
        return
    committed_ids = {e.get("upload_id") for e in store.provenance_entries()}
    for tdir in sorted(txn_root.iterdir()):
        if not tdir.is_dir():
            continue
        if tdir.name in committed_ids:
            shutil.rmtree(tdir, ignore_errors=True)
            continue
        _rollback_txn(store, tdir)
    _truncate_torn_provenance(store)
    try:
        txn_root.rmdir()
    except OSError:
        pass


def _rollback_txn(store: Store, tdir: Path) -> None:
    ready = (tdir / "READY").exists()
    meta_path = tdir / "meta.json"
    if ready and meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        backup_dir = tdir / "backup"
        for item in meta.get("files", []):
            live = store.root / item["rel"]
            if item["had_backup"]:
                backup = backup_dir / item["rel"].replace(os.sep, "__")
                if backup.exists():
                    live.parent.mkdir(parents=True, exist_ok=True)
                    os.replace(backup, live)
            elif live.exists():
                live.unlink()
        qrel = meta.get("quarantine_rel")
        if qrel and (store.root / qrel).exists():
            (store.root / qrel).unlink()
        plen = meta.get("provenance_len", 0)
        if store.provenance_path.exists() and store.provenance_path.stat().st_size > plen:
            with open(store.provenance_path, "r+b") as f:
                f.truncate(plen)
    shutil.rmtree(tdir, ignore_errors=True)


def _truncate_torn_provenance(store: Store) -> None:
    """Drop a torn tail left by an interrupted provenance append."""
    path = store.provenance_path
    if not path.exists():
        return
    data = path.read_bytes()
    keep = 0
    start = 0
    while start < len(data):
        nl = data.find(b"\n", start)
        if nl == -1:
            break
        line = data[start:nl]
        if line.strip():
            try:
                json.loads(line.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                break
        keep = nl + 1
        start = nl + 1
    if keep != len(data):
        with open(path, "r+b") as f:
            f.truncate(keep)
