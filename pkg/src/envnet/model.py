"""Canonical data model: sites, deployments, nodes, channels, records.

Timestamps are stored UTC-only (timezone-aware, whole seconds); local
standard time is derived at query time from the site's fixed UTC offset.
Daylight saving never enters the model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

UTC = timezone.utc

# Default engineering ranges per variable, from the deployed sensor spec
# sheets (temperature/RH combo probe, tipping bucket, quantum PAR sensor,
# silicon pyranometer, capacitance soil probe, leaf thermocouple).
VARIABLE_RANGES: dict[str, tuple[float, float, str]] = {
    "air_temp_C": (-40.0, 75.0, "degC"),
    "rel_humidity_pct": (0.0, 100.0, "%RH"),
    "rainfall_mm": (0.0, 1270.0, "mm"),
    "par_umol_m2_s": (0.0, 2500.0, "umol/m2/s"),
    "solar_W_m2": (0.0, 1280.0, "W/m2"),
    "soil_moisture_vwc_pct": (0.0, 100.0, "%VWC"),
    "leaf_temp_C": (-40.0, 123.8, "degC"),
}

ORIENTATIONS = ("incoming", "reflected", "none")
DEPLOYMENT_KINDS = ("tower", "understory")


class QualityFlag(enum.Enum):
    OUT_OF_RANGE = "OUT_OF_RANGE"
    FORMAT_REPAIRED = "FORMAT_REPAIRED"
    TIME_CORRECTED = "TIME_CORRECTED"
    SUSPECT_DRIFT = "SUSPECT_DRIFT"
    MISSING = "MISSING"
    DUPLICATE = "DUPLICATE"


def flags_to_text(flags: set[QualityFlag]) -> str:
    return "|".join(sorted(f.value for f in flags))


def flags_from_text(text: str) -> set[QualityFlag]:
    if not text:
        return set()
    return {QualityFlag(tok) for tok in text.split("|")}


def ensure_utc(ts: datetime, what: str = "timestamp") -> datetime:
    if ts.tzinfo is None:
        raise ValueError(f"{what} must be timezone-aware UTC: {ts!r}")
    ts = ts.astimezone(UTC)
    if ts.microsecond:
        raise ValueError(f"{what} must have whole-second resolution: {ts!r}")
    return ts


def ts_to_text(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def ts_from_text(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=UTC)


def local_minutes(ts_utc: datetime, utc_offset_min: int) -> float:
    """Minutes after local-standard midnight for a UTC instant."""
    local = ts_utc + timedelta(minutes=utc_offset_min)
    return local.hour * 60 + local.minute + local.second / 60.0


def to_local(ts_utc: datetime, utc_offset_min: int) -> datetime:
    """Naive local-standard wall clock for a UTC instant."""
    return (ts_utc + timedelta(minutes=utc_offset_min)).replace(tzinfo=None)


def from_local(local_naive: datetime, utc_offset_min: int) -> datetime:
    """UTC instant for a naive local-standard wall clock time."""
    return (local_naive - timedelta(minutes=utc_offset_min)).replace(tzinfo=UTC)


@dataclass
class CalibrationSpec:
    """Linear raw -> engineering conversion: eng = a * raw + b.

    Covers the deployed sensor set: tipping-bucket rainfall is a=mm_per_tip,
    b=0; capacitance soil probes are an affine mV mapping; channels already
    logged in engineering units carry no calibration at all.
    """
    a: float
    b: float = 0.0
    kind: str = "linear"

    def apply(self, raw: float) -> float:
        return self.a * raw + self.b

    def to_json(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationSpec":
        if obj.get("kind", "linear") != "linear":
            raise ValueError(f"unsupported calibration kind: {obj.get('kind')!r}")
        return cls(a=float(obj["a"]), b=float(obj.get("b", 0.0)))


@dataclass
class ChannelDescriptor:
    channel_id: str
    variable: str
    orientation: str = "none"
    column: str = ""              # column token this channel binds to in files
    valid_min: float | None = None
    valid_max: float | None = None
    raw_unit: str = ""
    calibration: CalibrationSpec | None = None

    def __post_init__(self):
        if self.variable not in VARIABLE_RANGES:
            raise ValueError(f"unknown variable {self.variable!r} for channel {self.channel_id}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"bad orientation {self.orientation!r} for channel {self.channel_id}")
        lo, hi, unit = VARIABLE_RANGES[self.variable]
        if self.valid_min is None:
            self.valid_min = lo
        if self.valid_max is None:
            self.valid_max = hi
        if not self.raw_unit:
            self.raw_unit = unit
        if not self.column:
            self.column = self.channel_id.rsplit(":", 1)[-1]
        if not self.valid_min < self.valid_max:
            raise ValueError(f"valid_min must be < valid_max for channel {self.channel_id}")

    def in_range(self, value: float) -> bool:
        return self.valid_min <= value <= self.valid_max

    def to_json(self) -> dict:
        out = {
            "channel_id": self.channel_id,
            "variable": self.variable,
            "orientation": self.orientation,
            "column": self.column,
            "valid_min": self.valid_min,
            "valid_max": self.valid_max,
            "raw_unit": self.raw_unit,
        }
        if self.calibration is not None:
            out["calibration"] = self.calibration.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ChannelDescriptor":
        cal = obj.get("calibration")
        return cls(
            channel_id=obj["channel_id"],
            variable=obj["variable"],
            orientation=obj.get("orientation", "none"),
            column=obj.get("column", ""),
            valid_min=obj.get("valid_min"),
            valid_max=obj.get("valid_max"),
            raw_unit=obj.get("raw_unit", ""),
            calibration=CalibrationSpec.from_json(cal) if cal else None,
        )


@dataclass
class NodeDescriptor:
    node_id: str
    x_m: float = 0.0
    y_m: float = 0.0
    height_m: float = 0.0
    channels: list[ChannelDescriptor] = field(default_factory=list)

    def __post_init__(self):
        if self.height_m < 0:
            raise ValueError(f"node {self.node_id}: height_m must be >= 0")

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "x_m": self.x_m,
            "y_m": self.y_m,
            "height_m": self.height_m,
            "channels": [c.to_json() for c in self.channels],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NodeDescriptor":
        return cls(
            node_id=obj["node_id"],
            x_m=float(obj.get("x_m", 0.0)),
            y_m=float(obj.get("y_m", 0.0)),
            height_m=float(obj.get("height_m", 0.0)),
            channels=[ChannelDescriptor.from_json(c) for c in obj.get("channels", [])],
        )


@dataclass
class Deployment:
    deployment_id: str
    site_id: str
    kind: str
    cadence_s: int = 900
    nodes: list[NodeDescriptor] = field(default_factory=list)
    extinction_k: float = 0.5           # canopy light-extinction coefficient
    par_energy_umol_per_j: float = 4.57  # PAR quantum-to-energy constant

    def __post_init__(self):
        if self.kind not in DEPLOYMENT_KINDS:
            raise ValueError(f"deployment {self.deployment_id}: bad kind {self.kind!r}")
        if self.cadence_s <= 0:
            raise ValueError(f"deployment {self.deployment_id}: cadence must be > 0")
        if not self.nodes:
            raise ValueError(f"deployment {self.deployment_id}: needs at least one node")
        if self.extinction_k <= 0:
            raise ValueError(f"deployment {self.deployment_id}: extinction_k must be > 0")

    def to_json(self) -> dict:
        return {
            "deployment_id": self.deployment_id,
            "site_id": self.site_id,
            "kind": self.kind,
            "cadence_s": self.cadence_s,
            "extinction_k": self.extinction_k,
            "par_energy_umol_per_j": self.par_energy_umol_per_j,
            "nodes": [n.to_json() for n in self.nodes],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Deployment":
        return cls(
            deployment_id=obj["deployment_id"],
            site_id=obj["site_id"],
            kind=obj["kind"],
            cadence_s=int(obj.get("cadence_s", 900)),
            extinction_k=float(obj.get("extinction_k", 0.5)),
            par_energy_umol_per_j=float(obj.get("par_energy_umol_per_j", 4.57)),
            nodes=[NodeDescriptor.from_json(n) for n in obj.get("nodes", [])],
        )


@dataclass
class Site:
    site_id: str
    name: str
    latitude: float
    longitude: float
    utc_offset_standard: int  # minutes, local standard time, never DST

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"site {self.site_id}: latitude out of bounds")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"site {self.site_id}: longitude out of bounds")
        off = self.utc_offset_standard
        if not -720 <= off <= 840 or off % 15 != 0:
            raise ValueError(f"site {self.site_id}: utc_offset_standard must be a "
                             f"multiple of 15 in [-720, 840], got {off}")

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "name": self.name,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "utc_offset_standard": self.utc_offset_standard,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Site":
        return cls(
            site_id=obj["site_id"],
            name=obj.get("name", obj["site_id"]),
            latitude=float(obj["latitude"]),
            longitude=float(obj["longitude"]),
            utc_offset_standard=int(obj["utc_offset_standard"]),
        )


VALUE_BEARING_FLAGS = {QualityFlag.OUT_OF_RANGE, QualityFlag.FORMAT_REPAIRED,
                       QualityFlag.SUSPECT_DRIFT, QualityFlag.DUPLICATE}


@dataclass
class SensorRecord:
    channel_id: str
    ts_utc: datetime
    raw_value: float | None = None
    eng_value: float | None = None
    flags: set[QualityFlag] = field(default_factory=set)

    def validate(self) -> "SensorRecord":
        self.ts_utc = ensure_utc(self.ts_utc, f"record on {self.channel_id}")
        for v, name in ((self.raw_value, "raw_value"), (self.eng_value, "eng_value")):
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite on {self.channel_id}")
        if QualityFlag.MISSING in self.flags:
            if self.flags & VALUE_BEARING_FLAGS:
                raise ValueError("MISSING may only combine with TIME_CORRECTED")
        elif self.raw_value is None and self.eng_value is None:
            raise ValueError("record needs raw_value or eng_value unless flagged MISSING")
        return self

    def value(self, raw: bool = False) -> float | None:
        return self.raw_value if raw else self.eng_value


def format_value(x: float | None) -> str:
    """Decimal text, 6 significant digits when that round-trips exactly.

    Falls back to repr() so read-after-write is always bit-equal; the short
    form keeps persisted files diffable for ordinary sensor magnitudes.
    """
    if x is None:
        return ""
    s = format(x, ".6g")
    return s if float(s) == x else repr(x)


def parse_value(text: str) -> float | None:
    return float(text) if text else None
