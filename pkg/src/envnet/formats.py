"""Datalogger export dialects: detection, parsing, structural validation.

Three canonical grammars are supported, all UTF-8 text with LF or CRLF
line endings, a ``#``-prefixed header block, one CSV header row, then
data rows:

  WIRED_LOGGER        ``# PHN-WIRED v<k>`` then ``# logger_sn=``,
                      ``# columns=<n>``; rows ``ts_local,<v1>,...`` with
                      ts_local = ``YYYY-MM-DD hh:mm:ss`` site standard time.
  WIRELESS_AGGREGATOR ``# PHN-AGG v<k>``; rows ``epoch_s,node_id,<v1>,...``
                      where epoch_s counts seconds since 1970-01-01 00:00
                      in site STANDARD time, not UTC.
  NODE_LOGGER         ``# PHN-NODE v<k>`` then ``# node_sn=``; rows like
                      the wired grammar, one file per node.

A malformed data row never aborts a file: each one becomes exactly one
ParseReport error carrying its line number, an error kind and a short
excerpt, and the raw text survives for quarantine. Parsing is a pure
function of (bytes, dialect, site).
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .errors import MissingHeader, UnknownDialect
from .model import (
    Deployment,
    QualityFlag,
    SensorRecord,
    Site,
    from_local,
)
from .query import convert_raw

EXCERPT_LEN = 80
EPOCH_2000_LOCAL = 946684800  # 2000-01-01T00:00:00 in local-standard seconds
_TS_RE = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}$")
_SIGNATURE_RE = re.compile(r"^# PHN-(WIRED|AGG|NODE) v(\d+)\s*$")


class DialectKind(enum.Enum):
    WIRED_LOGGER = "WIRED_LOGGER"
    WIRELESS_AGGREGATOR = "WIRELESS_AGGREGATOR"
    NODE_LOGGER = "NODE_LOGGER"


_KIND_BY_TOKEN = {
    "WIRED": DialectKind.WIRED_LOGGER,
    "AGG": DialectKind.WIRELESS_AGGREGATOR,
    "NODE": DialectKind.NODE_LOGGER,
}


@dataclass(frozen=True)
class Dialect:
    kind: DialectKind
    version: int = 1


class ErrorKind(enum.Enum):
    ARITY = "ARITY"
    BAD_TIMESTAMP = "BAD_TIMESTAMP"
    EPOCH_RESET = "EPOCH_RESET"
    CORRUPT_VALUE = "CORRUPT_VALUE"
    UNKNOWN_NODE = "UNKNOWN_NODE"


@dataclass
class ParseError:
    line_number: int
    kind: ErrorKind
    excerpt: str


@dataclass
class RawRow:
    line_number: int
    ts_local: datetime                      # naive, site standard time
    node_id: str
    values: list[tuple[str, float | None]]  # ordered (column, number or absent)
    raw_text: str


@dataclass
class ParseReport:
    dialect: Dialect
    rows_ok: int = 0
    rows_rejected: int = 0
    errors: list[ParseError] = field(default_factory=list)
    channel_map: dict[str, list[str]] = field(default_factory=dict)
    unmapped_columns: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    node_rows: Counter = field(default_factory=Counter)
    node_errors: Counter = field(default_factory=Counter)

    @property
    def data_rows(self) -> int:
        return self.rows_ok + self.rows_rejected

    def to_json(self) -> dict:
        return {
            "dialect": self.dialect.kind.value,
            "version": self.dialect.version,
            "rows_ok": self.rows_ok,
            "rows_rejected": self.rows_rejected,
            "errors": [{"line_number": e.line_number, "kind": e.kind.value,
                        "excerpt": e.excerpt} for e in self.errors],
            "channel_map": self.channel_map,
            "unmapped_columns": self.unmapped_columns,
            "warnings": self.warnings,
            "node_rows": dict(self.node_rows),
            "node_errors": dict(self.node_errors),
        }


def detect_dialect(first_bytes: bytes) -> Dialect:
    """Identify the dialect from the signature line in the first 4 KiB.

    Only header content is examined, never data rows. Each signature
    matches exactly one grammar; ambiguity cannot arise for the canonical
    three (asserted in tests), but the error is reserved for future
    grammar additions.
    """
    if not first_bytes:
        raise UnknownDialect("empty input")
    head = first_bytes[:4096].decode("utf-8", errors="replace")
    for raw_line in head.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        m = _SIGNATURE_RE.match(line)
        if not m:
            raise UnknownDialect(f"no dialect signature in: {line[:EXCERPT_LEN]!r}")
        version = int(m.group(2))
        if version < 1:
            raise UnknownDialect(f"bad dialect version in: {line[:EXCERPT_LEN]!r}")
        return Dialect(_KIND_BY_TOKEN[m.group(1)], version)
    raise UnknownDialect("no content in input")


def _excerpt(line: str) -> str:
    return line[:EXCERPT_LEN]


def _parse_number(token: str) -> float | None:
    """Strict numeric token: no padding, no underscores, finite value.

    Leniency here would let corrupted bytes slip through as silently
    altered readings, so anything float() would merely tolerate is an
    error instead.
    """
    if token == "":
        return None
    if token != token.strip() or "_" in token:
        raise ValueError(token)
    try:
        value = float(token)
    except ValueError:
        raise ValueError(token)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(token)
    return value


def parse_file(data: bytes, dialect: Dialect, site: Site) -> tuple[list[RawRow], ParseReport]:
    """Parse one export file into RawRows plus a complete error report.

    Every data row either yields exactly one RawRow or exactly one report
    error; nothing is dropped silently. File-level problems (missing
    header declarations, signature mismatch) raise MissingHeader.
    """
    text = data.decode("utf-8", errors="replace")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]

    report = ParseReport(dialect=dialect)
    rows: list[RawRow] = []

    idx = 0
    header_meta: dict[str, str] = {}
    signature_seen = False
    while idx < len(lines) and (lines[idx].startswith("#") or lines[idx].strip() == ""):
        line = lines[idx].strip()
        idx += 1
        if not line:
            continue
        m = _SIGNATURE_RE.match(line)
        if m:
            if _KIND_BY_TOKEN[m.group(1)] is not dialect.kind:
                raise MissingHeader(f"signature {line!r} does not match "
                                    f"dialect {dialect.kind.value}")
            signature_seen = True
            continue
        body = line[1:].strip()
        if "=" in body:
            key, _, value = body.partition("=")
            header_meta[key.strip()] = value.strip()
    if not signature_seen:
        raise MissingHeader("missing dialect signature line")
    if idx >= len(lines):
        raise MissingHeader("missing CSV header row")

    csv_header = lines[idx].split(",")
    header_line_number = idx + 1
    idx += 1

    if dialect.kind is DialectKind.WIRED_LOGGER:
        if "logger_sn" not in header_meta:
            raise MissingHeader("wired file missing '# logger_sn=' header")
        if "columns" not in header_meta:
            raise MissingHeader("wired file missing '# columns=' header")
        try:
            declared = int(header_meta["columns"])
        except ValueError:
            raise MissingHeader(f"bad '# columns=' value: {header_meta['columns']!r}")
        if csv_header[:1] != ["ts_local"] or len(csv_header) != declared + 1:
            raise MissingHeader(
                f"wired CSV header must be ts_local plus {declared} columns, "
                f"got {len(csv_header)} fields")
        columns = csv_header[1:]
        file_node = header_meta["logger_sn"]
    elif dialect.kind is DialectKind.NODE_LOGGER:
        if "node_sn" not in header_meta:
            raise MissingHeader("node file missing '# node_sn=' header")
        if csv_header[:1] != ["ts_local"] or len(csv_header) < 2:
            raise MissingHeader("node CSV header must be ts_local plus columns")
        columns = csv_header[1:]
        file_node = header_meta["node_sn"]
    else:
        if csv_header[:2] != ["epoch_s", "node_id"] or len(csv_header) < 3:
            raise MissingHeader("aggregator CSV header must be epoch_s,node_id,columns...")
        columns = csv_header[2:]
        file_node = None

    arity = len(csv_header)

    for offset, line in enumerate(lines[idx:]):
        line_number = header_line_number + 1 + offset
        if line.strip() == "":
            continue
        fields = line.split(",")
        node_for_stats = file_node
        if file_node is None and len(fields) >= 2 and fields[1].strip():
            node_for_stats = fields[1].strip()

        def reject(kind: ErrorKind):
            report.rows_rejected += 1
            report.errors.append(ParseError(line_number, kind, _excerpt(line)))
            if node_for_stats:
                report.node_errors[node_for_stats] += 1

        if len(fields) != arity:
            reject(ErrorKind.ARITY)
            continue

        if dialect.kind is DialectKind.WIRELESS_AGGREGATOR:
            epoch_token = fields[0]
            node_id = fields[1]
            value_tokens = fields[2:]
            if not epoch_token.isdigit():
                reject(ErrorKind.BAD_TIMESTAMP)
                continue
            epoch = int(epoch_token)
            if epoch < EPOCH_2000_LOCAL:
                reject(ErrorKind.EPOCH_RESET)
                continue
            ts_local = datetime(1970, 1, 1) + timedelta(seconds=epoch)
            if not node_id:
                reject(ErrorKind.CORRUPT_VALUE)
                continue
        else:
            ts_token = fields[0]
            node_id = file_node
            value_tokens = fields[1:]
            if not _TS_RE.match(ts_token):
                reject(ErrorKind.BAD_TIMESTAMP)
                continue
            try:
                ts_local = datetime.strptime(ts_token, "%Y-%m-%d %H:%M:%S")
            except ValueError:
                reject(ErrorKind.BAD_TIMESTAMP)
                continue
            if ts_local.year < 2000:
                reject(ErrorKind.EPOCH_RESET)
                continue

        try:
            values = [(col, _parse_number(tok))
                      for col, tok in zip(columns, value_tokens)]
        except ValueError:
            reject(ErrorKind.CORRUPT_VALUE)
            continue

        report.rows_ok += 1
        report.node_rows[node_id] += 1
        rows.append(RawRow(line_number=line_number, ts_local=ts_local,
                           node_id=node_id, values=values, raw_text=line))

    return rows, report


@dataclass
class ValidationDelta:
    """Adjustments from structural validation, merged into the final report."""
    demoted: list[ParseError] = field(default_factory=list)
    channel_map: dict[str, list[str]] = field(default_factory=dict)
    unmapped_columns: list[str] = field(default_factory=list)
    quarantine_rows: list[RawRow] = field(default_factory=list)
    node_demotions: Counter = field(default_factory=Counter)


def validate_structure(rows: list[RawRow], deployment: Deployment,
                       site: Site) -> tuple[list[SensorRecord], ValidationDelta]:
    """Map parsed rows onto manifest channels and emit flagged records.

    Columns resolve per (node_id, column token). A column no node knows is
    quarantined whole and listed in the delta; the rest of the file still
    ingests. Rows naming an unknown node are demoted to rejected. Values
    convert raw -> engineering when the channel has a calibration, get
    range-checked against the channel bounds (out-of-range values are kept
    and flagged), and timestamps move from site standard time to UTC.
    """
    by_node: dict[str, dict[str, object]] = {}
    for node in deployment.nodes:
        by_node[node.node_id] = {ch.column: ch for ch in node.channels}

    delta = ValidationDelta()
    seen_columns: dict[str, list[str]] = {}
    records: list[SensorRecord] = []

    for row in rows:
        node_channels = by_node.get(row.node_id)
        if node_channels is None:
            delta.demoted.append(ParseError(row.line_number, ErrorKind.UNKNOWN_NODE,
                                            _excerpt(row.raw_text)))
            delta.quarantine_rows.append(row)
            delta.node_demotions[row.node_id] += 1
            continue
        for column, value in row.values:
            candidates = seen_columns.get(column)
            if candidates is None:
                candidates = sorted(
                    ch.channel_id
                    for channels in by_node.values()
                    for col, ch in channels.items() if col == column)
                seen_columns[column] = candidates
            ch = node_channels.get(column)
            if ch is None:
                continue
            if value is None:
                continue
            raw = value
            eng = convert_raw(ch.variable, raw, ch.calibration) if ch.calibration else raw
            flags = set()
            if not ch.in_range(eng):
                flags.add(QualityFlag.OUT_OF_RANGE)
            records.append(SensorRecord(
                channel_id=ch.channel_id,
                ts_utc=from_local(row.ts_local, site.utc_offset_standard),
                raw_value=raw,
                eng_value=eng,
                flags=flags,
            ))

    delta.channel_map = {col: ids for col, ids in seen_columns.items() if ids}
    delta.unmapped_columns = sorted(col for col, ids in seen_columns.items() if not ids)
    return records, delta


def combine_reports(parse_report: ParseReport, delta: ValidationDelta) -> ParseReport:
    """Fold validation demotions into the parse-stage report."""
    out = ParseReport(dialect=parse_report.dialect)
    demoted = len(delta.demoted)
    out.rows_ok = parse_report.rows_ok - demoted
    out.rows_rejected = parse_report.rows_rejected + demoted
    out.errors = sorted(parse_report.errors + delta.demoted,
                        key=lambda e: e.line_number)
    out.channel_map = dict(delta.channel_map)
    out.unmapped_columns = list(delta.unmapped_columns)
    out.warnings = list(parse_report.warnings)
    out.node_rows = parse_report.node_rows - delta.node_demotions
    out.node_errors = parse_report.node_errors + delta.node_demotions
    return out
