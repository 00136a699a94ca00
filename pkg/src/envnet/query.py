"""Declarative filter and aggregation engine over stored records.

A QuerySpec composes conjunctive filters (time span, local time-of-day
window, per-variable value bounds, quality-flag exclusion, a clear-sky
gate on co-timed incoming PAR) with optional binned aggregation. Filters
commute; aggregation bins are keyed to local-standard hour/day/month
boundaries and empty bins are emitted explicitly so gaps stay visible
downstream. Derived products are addressable through the same interface
as virtual channel ids (``derived:<product>:<target>``).
"""

from __future__ import annotations

import bisect
import calendar
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

from .errors import EmptySpec, InvertedRange, NoCalibration, UnknownChannel
from .model import (
    CalibrationSpec,
    QualityFlag,
    ensure_utc,
    from_local,
    local_minutes,
    to_local,
)

DEFAULT_EXCLUDE_FLAGS = frozenset({
    QualityFlag.OUT_OF_RANGE, QualityFlag.MISSING, QualityFlag.DUPLICATE})

AGG_BINS = ("hour", "day", "month")
AGG_STATS = ("mean", "min", "max", "count", "sum")


def convert_raw(variable: str, raw_value: float, calibration: CalibrationSpec | None) -> float:
    """Apply a channel's raw -> engineering conversion. Pure."""
    if calibration is None:
        raise NoCalibration(f"no calibration defined for {variable}")
    return calibration.apply(raw_value)


@dataclass(frozen=True)
class QuerySpec:
    channels: tuple[str, ...]
    from_utc: datetime
    to_utc: datetime
    tod_window: tuple[int, int] | None = None        # minutes local standard, may wrap
    value_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    exclude_flagged: frozenset[QualityFlag] = DEFAULT_EXCLUDE_FLAGS
    clear_sky_par_min: float | None = None
    agg: tuple[str, str] | None = None               # (bin, stat)
    raw_values: bool = False

    def validate(self) -> "QuerySpec":
        if not self.channels:
            raise EmptySpec("query names no channels")
        from_utc = ensure_utc(self.from_utc, "from_utc")
        to_utc = ensure_utc(self.to_utc, "to_utc")
        if from_utc > to_utc:
            raise InvertedRange("from_utc is after to_utc")
        if self.tod_window is not None:
            start, end = self.tod_window
            if not (0 <= start < 1440 and 0 <= end < 1440):
                raise ValueError("tod_window minutes must be in [0, 1440)")
        if self.agg is not None:
            bin_, stat = self.agg
            if bin_ not in AGG_BINS or stat not in AGG_STATS:
                raise ValueError(f"agg must be one of {AGG_BINS} x {AGG_STATS}")
        return replace(self, channels=tuple(self.channels),
                       from_utc=from_utc, to_utc=to_utc)


@dataclass
class SeriesPoint:
    ts: datetime
    value: float | None
    count: int

    def to_json(self) -> dict:
        return {"ts": self.ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "value": self.value, "count": self.count}


@dataclass
class _ChannelSeries:
    """Uniform view over physical and derived channels for filtering."""
    channel_id: str
    variable: str
    utc_offset_min: int
    deployment_id: str
    points: list[tuple[datetime, float, frozenset]]  # (ts, value, flags)


def _physical_series(store, channel_id: str, spec: QuerySpec) -> _ChannelSeries:
    dep, _node, ch = store.channel(channel_id)
    site = store.site(dep.site_id)
    records = store.read_records(channel_id, spec.from_utc, spec.to_utc)
    points = []
    for rec in records:
        value = rec.raw_value if spec.raw_values else rec.eng_value
        if value is None:
            continue
        points.append((rec.ts_utc, value, frozenset(rec.flags)))
    return _ChannelSeries(channel_id, ch.variable, site.utc_offset_standard,
                          dep.deployment_id, points)


def _series_for(store, channel_id: str, spec: QuerySpec) -> _ChannelSeries:
    if channel_id.startswith("derived:"):
        from . import derive
        series = derive.materialize(store, channel_id, spec.from_utc, spec.to_utc)
        return _ChannelSeries(channel_id, series.product, series.utc_offset_min,
                              series.deployment_id,
                              [(ts, v, frozenset()) for ts, v in series.points])
    return _physical_series(store, channel_id, spec)


def _par_gate(store, deployment_id: str, spec: QuerySpec):
    """Lookup from timestamp to co-timed incoming PAR, nearest within half cadence."""
    dep = store.deployment(deployment_id)
    par_channel = None
    for node in dep.nodes:
        for ch in node.channels:
            if ch.variable == "par_umol_m2_s" and ch.orientation == "incoming":
                par_channel = ch.channel_id
                break
        if par_channel:
            break
    if par_channel is None:
        raise UnknownChannel(
            f"clear-sky filter needs an incoming PAR channel on {deployment_id}")
    records = store.read_records(par_channel, spec.from_utc, spec.to_utc)
    clean = [(r.ts_utc, r.eng_value) for r in records
             if r.eng_value is not None
             and not ({QualityFlag.OUT_OF_RANGE, QualityFlag.MISSING} & r.flags)]
    exact = {ts: v for ts, v in clean}
    times = [ts for ts, _ in clean]
    half = timedelta(seconds=dep.cadence_s / 2)

    def lookup(ts: datetime) -> float | None:
        hit = exact.get(ts)
        if hit is not None:
            return hit
        if not times:
            return None
        i = bisect.bisect_left(times, ts)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(times):
                d = abs(times[j] - ts)
                if d <= half and (best is None or d < best[0]):
                    best = (d, exact[times[j]])
        return best[1] if best else None

    return lookup


def _tod_match(minutes: float, window: tuple[int, int]) -> bool:
    start, end = window
    if start <= end:
        return start <= minutes < end
    return minutes >= start or minutes < end


def _bin_start_local(local: datetime, bin_: str) -> datetime:
    if bin_ == "hour":
        return local.replace(minute=0, second=0, microsecond=0)
    if bin_ == "day":
        return local.replace(hour=0, minute=0, second=0, microsecond=0)
    return local.replace(day=1, hour=0, minute=0, second=0, microsecond=0)


def _next_bin_local(local: datetime, bin_: str) -> datetime:
    if bin_ == "hour":
        return local + timedelta(hours=1)
    if bin_ == "day":
        return local + timedelta(days=1)
    days = calendar.monthrange(local.year, local.month)[1]
    return (local + timedelta(days=days)).replace(day=1)


def run_query(store, spec: QuerySpec) -> dict[str, list[SeriesPoint]]:
    """Execute a QuerySpec; returns per-channel points ordered by (channel, ts).

    Filters apply conjunctively and order-independently, then aggregation.
    With aggregation, every bin in the query range is emitted, including
    empty ones (count 0, absent value).
    """
    spec = spec.validate()
    out: dict[str, list[SeriesPoint]] = {}
    gates: dict[str, object] = {}

    for channel_id in spec.channels:
        series = _series_for(store, channel_id, spec)

        gate = None
        if spec.clear_sky_par_min is not None:
            if series.deployment_id not in gates:
                gates[series.deployment_id] = _par_gate(store, series.deployment_id, spec)
            gate = gates[series.deployment_id]

        bounds = spec.value_bounds.get(series.variable)
        kept: list[tuple[datetime, float]] = []
        for ts, value, flags in series.points:
            if flags & spec.exclude_flagged:
                continue
            if spec.tod_window is not None and not _tod_match(
                    local_minutes(ts, series.utc_offset_min), spec.tod_window):
                continue
            if bounds is not None and not (bounds[0] <= value <= bounds[1]):
                continue
            if gate is not None:
                par = gate(ts)
                if par is None or par < spec.clear_sky_par_min:
                    continue
            kept.append((ts, value))

        if spec.agg is None:
            out[channel_id] = [SeriesPoint(ts, value, 1) for ts, value in kept]
            continue

        bin_, stat = spec.agg
        offset = series.utc_offset_min
        acc: dict[datetime, list[float]] = {}
        for ts, value in kept:
            start_local = _bin_start_local(to_local(ts, offset), bin_)
            acc.setdefault(start_local, []).append(value)

        points = []
        cursor = _bin_start_local(to_local(spec.from_utc, offset), bin_)
        end_local = to_local(spec.to_utc, offset)
        while cursor < end_local:
            values = acc.get(cursor, [])
            n = len(values)
            if n == 0:
                value = None
            elif stat == "mean":
                value = sum(values) / n
            elif stat == "min":
                value = min(values)
            elif stat == "max":
                value = max(values)
            elif stat == "sum":
                value = sum(values)
            else:
                value = float(n)
            points.append(SeriesPoint(from_local(cursor, offset), value, n))
            cursor = _next_bin_local(cursor, bin_)
        out[channel_id] = points

    return out
