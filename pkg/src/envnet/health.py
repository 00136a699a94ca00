"""Network health: gap detection against expected cadence, per-node summary.

The expected sample times form a cadence lattice anchored at the query
start, which keeps reports comparable across channels regardless of when
each logger began. Records landing within half a cadence of a lattice
point count toward it, tolerating small clock drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .errors import InvertedRange
from .model import ts_to_text


@dataclass
class Gap:
    start_utc: datetime
    end_utc: datetime          # last missing lattice point, inclusive
    missing_count: int

    def to_json(self) -> dict:
        return {"start_utc": ts_to_text(self.start_utc),
                "end_utc": ts_to_text(self.end_utc),
                "missing": self.missing_count}


@dataclass
class GapReport:
    channel_id: str
    gaps: list[Gap]
    expected: int
    present: int

    @property
    def uptime_fraction(self) -> float:
        return self.present / self.expected if self.expected else 1.0

    def to_json(self) -> dict:
        return {"channel_id": self.channel_id,
                "expected": self.expected,
                "present": self.present,
                "uptime_fraction": self.uptime_fraction,
                "gaps": [g.to_json() for g in self.gaps]}


def detect_gaps(store, channel_id: str, from_utc: datetime, to_utc: datetime,
                cadence_s: int | None = None) -> GapReport:
    """Find maximal runs of missing samples on the cadence lattice.

    present + sum(missing) always equals expected; adjacent gaps merge.
    """
    dep, _node, _ch = store.channel(channel_id)
    cadence = cadence_s if cadence_s is not None else dep.cadence_s
    if cadence <= 0:
        raise ValueError("cadence must be > 0")
    if from_utc > to_utc:
        raise InvertedRange("from_utc is after to_utc")

    span = (to_utc - from_utc).total_seconds()
    expected = int(span // cadence) + (1 if span % cadence else 0)
    if expected <= 0:
        return GapReport(channel_id, [], 0, 0)

    present = [False] * expected
    half = cadence / 2.0
    for rec in store.read_records(channel_id, from_utc - timedelta(seconds=int(half)),
                                  to_utc):
        offset = (rec.ts_utc - from_utc).total_seconds()
        idx = round(offset / cadence)
        if 0 <= idx < expected and abs(offset - idx * cadence) < half:
            present[idx] = True

    gaps: list[Gap] = []
    run_start = None
    for i, ok in enumerate(present):
        if not ok and run_start is None:
            run_start = i
        elif ok and run_start is not None:
            gaps.append(_gap(from_utc, cadence, run_start, i - 1))
            run_start = None
    if run_start is not None:
        gaps.append(_gap(from_utc, cadence, run_start, expected - 1))

    return GapReport(channel_id=channel_id, gaps=gaps, expected=expected,
                     present=sum(present))


def _gap(from_utc: datetime, cadence: int, first: int, last: int) -> Gap:
    return Gap(start_utc=from_utc + timedelta(seconds=first * cadence),
               end_utc=from_utc + timedelta(seconds=last * cadence),
               missing_count=last - first + 1)


@dataclass
class NodeHealth:
    node_id: str
    uptime_fraction: float
    reject_rate: float
    flags_rate: float
    channels: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"node_id": self.node_id,
                "uptime_fraction": self.uptime_fraction,
                "reject_rate": self.reject_rate,
                "flags_rate": self.flags_rate,
                "channels": self.channels}


def node_health_summary(store, deployment_id: str, from_utc: datetime,
                        to_utc: datetime) -> list[NodeHealth]:
    """Per-node uptime, ingest reject rate and flag rate, worst node first.

    Uptime aggregates gap reports across the node's channels; reject rates
    come from the per-node error counters the ingest pipeline records in
    provenance, so a node whose rows keep failing to parse surfaces here
    even though those rows never reached the store.
    """
    dep = store.deployment(deployment_id)

    node_rows: dict[str, int] = {}
    node_errors: dict[str, int] = {}
    for entry in store.provenance_entries():
        if entry.get("deployment_id") not in (None, deployment_id):
            continue
        for node_id, n in (entry.get("node_rows") or {}).items():
            node_rows[node_id] = node_rows.get(node_id, 0) + n
        for node_id, n in (entry.get("node_errors") or {}).items():
            node_errors[node_id] = node_errors.get(node_id, 0) + n

    out = []
    for node in dep.nodes:
        expected = present = 0
        flagged = total = 0
        channels = []
        for ch in node.channels:
            channels.append(ch.channel_id)
            report = detect_gaps(store, ch.channel_id, from_utc, to_utc,
                                 cadence_s=dep.cadence_s)
            expected += report.expected
            present += report.present
            for rec in store.read_records(ch.channel_id, from_utc, to_utc):
                total += 1
                if rec.flags:
                    flagged += 1
        rows = node_rows.get(node.node_id, 0)
        errors = node_errors.get(node.node_id, 0)
        out.append(NodeHealth(
            node_id=node.node_id,
            uptime_fraction=present / expected if expected else 1.0,
            reject_rate=errors / (rows + errors) if rows + errors else 0.0,
            flags_rate=flagged / total if total else 0.0,
            channels=channels,
        ))
    out.sort(key=lambda n: (n.uptime_fraction, -n.reject_rate, -n.flags_rate, n.node_id))
    return out
