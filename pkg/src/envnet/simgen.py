"""Deterministic synthetic deployment and data generator with fault injection.

Generates a site with an optional phenology tower (paired incoming and
reflected PAR + pyranometer channels) and a wireless understory deployment
whose nodes are placed by one of three strategies: a linear transect,
concentric rings around a point of interest, or a regular grid. Clear-sky
radiation follows the same solar geometry the time-verification module
uses, canopy optics come from configurable ground truth (rho_par, rho_nir,
tau), and temperature/humidity are smooth diurnal curves with bounded,
seeded noise. Identical specs produce byte-identical output files.

Injectable faults mirror the failure modes seen in the field: whole-hour
clock misconfiguration, sub-hour drift, a DST-style shift inside a window,
data gaps, corrupted value tokens, and rows with the wrong column count.
Every injected fault lands in a ground-truth ledger (offsets, gap windows,
malformed line numbers) so pipeline stages can be checked exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

from .errors import BadParams
from .model import (
    CalibrationSpec,
    ChannelDescriptor,
    Deployment,
    NodeDescriptor,
    SensorRecord,
    Site,
    from_local,
    ts_to_text,
)
from .timecal import solar_elevation_deg

PAR_MAX_DEFAULT = 2000.0   # umol/m2/s, clear-sky peak
PYR_MAX_DEFAULT = 900.0    # W/m2, clear-sky peak (PAR band + NIR band)
NOISE_FRACTION = 0.02

# variable tokens usable in spec files; token -> (variable, orientation)
TOKEN_CHANNELS = {
    "par_in": ("par_umol_m2_s", "incoming"),
    "par_refl": ("par_umol_m2_s", "reflected"),
    "pyr_in": ("solar_W_m2", "incoming"),
    "pyr_refl": ("solar_W_m2", "reflected"),
    "par_under": ("par_umol_m2_s", "incoming"),
    "air_temp": ("air_temp_C", "none"),
    "rel_humidity": ("rel_humidity_pct", "none"),
    "soil_moisture": ("soil_moisture_vwc_pct", "none"),
    "rainfall": ("rainfall_mm", "none"),
    "leaf_temp": ("leaf_temp_C", "none"),
}

TOWER_TOKENS = ["par_in", "par_refl", "pyr_in", "pyr_refl", "air_temp", "rel_humidity"]
DEFAULT_NODE_TOKENS = ["par_under", "air_temp", "rel_humidity"]

FAULT_KINDS = ("CLOCK_OFFSET_H", "CLOCK_DRIFT_MIN", "GAP",
               "MALFORMED_ROWS_PCT", "COLUMN_ARITY", "DST_SHIFT")


@dataclass
class Canopy:
    rho_par: float = 0.03
    rho_nir: float = 0.36
    tau: float = 0.3679

    def to_json(self) -> dict:
        return {"rho_par": self.rho_par, "rho_nir": self.rho_nir, "tau": self.tau}


@dataclass
class FaultSpec:
    kind: str
    target: str                       # deployment, node, or channel id
    magnitude: float = 0.0
    window: tuple[datetime, datetime] | None = None   # naive local standard

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise BadParams(f"unknown fault kind: {self.kind}")


@dataclass
class SimSpec:
    seed: int
    site: Site
    date_from: date
    date_to: date                     # exclusive
    strategy: str = "grid"
    strategy_params: dict = field(default_factory=lambda: {"rows": 3, "cols": 4,
                                                           "spacing_m": 20.0})
    node_count: int = 12
    cadence_s: int = 900
    node_variables: list[str] = field(default_factory=lambda: list(DEFAULT_NODE_TOKENS))
    canopy: Canopy = field(default_factory=Canopy)
    faults: list[FaultSpec] = field(default_factory=list)
    include_tower: bool = True
    par_max: float = PAR_MAX_DEFAULT
    pyr_max: float = PYR_MAX_DEFAULT
    node_file_nodes: list[str] = field(default_factory=list)

    @property
    def tower_id(self) -> str:
        return f"{self.site.site_id}-tower"

    @property
    def understory_id(self) -> str:
        return f"{self.site.site_id}-under"


def load_spec(path) -> SimSpec:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    faults = []
    for f in obj.get("faults", []):
        window = None
        if f.get("window"):
            window = (datetime.fromisoformat(f["window"][0]),
                      datetime.fromisoformat(f["window"][1]))
        faults.append(FaultSpec(kind=f["kind"], target=f["target"],
                                magnitude=float(f.get("magnitude", 0.0)),
                                window=window))
    canopy = Canopy(**obj.get("canopy", {}))
    return SimSpec(
        seed=int(obj["seed"]),
        site=Site.from_json(obj["site"]),
        date_from=date.fromisoformat(obj["date_range"]["from"]),
        date_to=date.fromisoformat(obj["date_range"]["to"]),
        strategy=obj.get("strategy", "grid"),
        strategy_params=obj.get("strategy_params",
                                {"rows": 3, "cols": 4, "spacing_m": 20.0}),
        node_count=int(obj.get("node_count", 12)),
        cadence_s=int(obj.get("cadence_s", 900)),
        node_variables=obj.get("node_variables", list(DEFAULT_NODE_TOKENS)),
        canopy=canopy,
        faults=faults,
        include_tower=bool(obj.get("include_tower", True)),
        par_max=float(obj.get("par_max", PAR_MAX_DEFAULT)),
        pyr_max=float(obj.get("pyr_max", PYR_MAX_DEFAULT)),
        node_file_nodes=obj.get("node_file_nodes", []),
    )


def place_nodes(strategy: str, params: dict, n: int) -> list[tuple[float, float]]:
    """Node coordinates in meters for a placement strategy.

    transect: collinear along x at uniform spacing. star: evenly spaced
    around concentric rings. grid: row-major lattice, rows x cols must
    equal n.
    """
    if n < 1:
        raise BadParams("need at least one node")
    if strategy == "transect":
        spacing = float(params.get("spacing_m", 10.0))
        if spacing <= 0:
            raise BadParams("transect spacing_m must be > 0")
        return [(i * spacing, 0.0) for i in range(n)]
    if strategy == "star":
        radii = [float(r) for r in params.get("radii", [])]
        if not radii:
            raise BadParams("star needs radii")
        per_ring = int(params.get("per_ring", 0)) or n // len(radii)
        if per_ring * len(radii) != n:
            raise BadParams(f"star: {len(radii)} rings x {per_ring} per ring != {n}")
        out = []
        for radius in radii:
            for j in range(per_ring):
                angle = 2.0 * math.pi * j / per_ring
                out.append((radius * math.cos(angle), radius * math.sin(angle)))
        return out
    if strategy == "grid":
        rows = int(params.get("rows", 0))
        cols = int(params.get("cols", 0))
        spacing = float(params.get("spacing_m", 10.0))
        if rows * cols != n:
            raise BadParams(f"grid: {rows}x{cols} != {n}")
        if spacing <= 0:
            raise BadParams("grid spacing_m must be > 0")
        return [(k % cols * spacing, k // cols * spacing) for k in range(n)]
    raise BadParams(f"unknown strategy: {strategy}")


def build_manifest(spec: SimSpec) -> tuple[Site, list[Deployment]]:
    deployments = []
    if spec.include_tower:
        channels = [_channel(spec.tower_id, f"{spec.tower_id}.mast", tok)
                    for tok in TOWER_TOKENS]
        mast = NodeDescriptor(node_id=f"{spec.tower_id}.mast", x_m=0.0, y_m=0.0,
                              height_m=8.0, channels=channels)
        deployments.append(Deployment(
            deployment_id=spec.tower_id, site_id=spec.site.site_id, kind="tower",
            cadence_s=spec.cadence_s, nodes=[mast]))
    positions = place_nodes(spec.strategy, spec.strategy_params, spec.node_count)
    nodes = []
    for i, (x, y) in enumerate(positions, start=1):
        node_id = f"{spec.understory_id}.n{i:02d}"
        channels = [_channel(spec.understory_id, node_id, tok)
                    for tok in spec.node_variables]
        nodes.append(NodeDescriptor(node_id=node_id, x_m=x, y_m=y,
                                    height_m=1.0, channels=channels))
    deployments.append(Deployment(
        deployment_id=spec.understory_id, site_id=spec.site.site_id,
        kind="understory", cadence_s=spec.cadence_s, nodes=nodes))
    return spec.site, deployments


def _channel(deployment_id: str, node_id: str, token: str) -> ChannelDescriptor:
    if token not in TOKEN_CHANNELS:
        raise BadParams(f"unknown variable token: {token}")
    variable, orientation = TOKEN_CHANNELS[token]
    calibration = CalibrationSpec(a=0.2) if token == "rainfall" else None
    return ChannelDescriptor(channel_id=f"{node_id}:{token}", variable=variable,
                             orientation=orientation, column=token,
                             calibration=calibration)


# -- value models -------------------------------------------------------------


def _daylight(site: Site, d: date, minutes: float) -> float:
    el = solar_elevation_deg(site.latitude, site.longitude,
                             site.utc_offset_standard, d, minutes)
    return max(0.0, math.sin(math.radians(el)))


def synth_value(spec: SimSpec, token: str, d: date, minutes: float) -> float:
    """Noise-free clear-sky model value for one variable token."""
    day = _daylight(spec.site, d, minutes)
    par_band_w = spec.par_max / 4.57
    nir_max = spec.pyr_max - par_band_w
    if token == "par_in":
        return spec.par_max * day
    if token == "par_refl":
        return spec.par_max * day * spec.canopy.rho_par
    if token == "pyr_in":
        return (par_band_w + nir_max) * day
    if token == "pyr_refl":
        return (par_band_w * spec.canopy.rho_par + nir_max * spec.canopy.rho_nir) * day
    if token == "par_under":
        return spec.par_max * day * spec.canopy.tau
    if token == "air_temp":
        return 22.0 + 6.0 * math.sin(2.0 * math.pi * (minutes - 540.0) / 1440.0)
    if token == "rel_humidity":
        return 70.0 - 15.0 * math.sin(2.0 * math.pi * (minutes - 540.0) / 1440.0)
    if token == "soil_moisture":
        return 25.0
    if token == "rainfall":
        return 0.0
    if token == "leaf_temp":
        return (22.0 + 6.0 * math.sin(2.0 * math.pi * (minutes - 540.0) / 1440.0)
                + 2.0 * day)
    raise BadParams(f"unknown variable token: {token}")


def synth_clear_sky(spec: SimSpec, channel_id: str, token: str
                    ) -> list[tuple[datetime, float]]:
    """Seeded clear-sky stream for one channel over the spec's date range.

    Returns (true_local_naive, value) pairs on the cadence lattice anchored
    at local-standard midnight, with bounded multiplicative noise so sunrise
    detection stays deterministic.
    """
    rng = random.Random(f"{spec.seed}|{channel_id}")
    out = []
    step = timedelta(seconds=spec.cadence_s)
    t = datetime(spec.date_from.year, spec.date_from.month, spec.date_from.day)
    end = datetime(spec.date_to.year, spec.date_to.month, spec.date_to.day)
    while t < end:
        minutes = t.hour * 60 + t.minute + t.second / 60.0
        base = synth_value(spec, token, t.date(), minutes)
        noise = 1.0 + NOISE_FRACTION * rng.uniform(-1.0, 1.0)
        out.append((t, base * noise))
        t += step
    return out


# -- fault application ----------------------------------------------------------


def _clock_shift_min(spec: SimSpec, deployment_id: str, true_local: datetime) -> float:
    shift = 0.0
    for f in spec.faults:
        if f.target not in (deployment_id, "*"):
            continue
        if f.kind == "CLOCK_OFFSET_H":
            shift += f.magnitude * 60.0
        elif f.kind == "CLOCK_DRIFT_MIN":
            shift += f.magnitude
        elif f.kind == "DST_SHIFT" and f.window:
            if f.window[0] <= true_local < f.window[1]:
                shift += (f.magnitude or 1.0) * 60.0
    return shift


def _gap_faults(spec: SimSpec, deployment_id: str, node_id: str,
                channel_id: str) -> list[FaultSpec]:
    return [f for f in spec.faults if f.kind == "GAP"
            and f.target in (deployment_id, node_id, channel_id)]


@dataclass
class SimData:
    spec: SimSpec
    site: Site
    deployments: list[Deployment]
    # channel -> list of (recorded_local_naive, value), gap samples removed
    streams: dict[str, list[tuple[datetime, float]]]
    truth: dict


def generate(spec: SimSpec) -> SimData:
    """Synthesize all channel streams and the ground-truth ledger."""
    site, deployments = build_manifest(spec)
    streams: dict[str, list[tuple[datetime, float]]] = {}
    gaps: dict[str, list[dict]] = {}
    counts: dict[str, int] = {}

    for dep in deployments:
        for node in dep.nodes:
            for ch in node.channels:
                token = ch.column
                raw_stream = synth_clear_sky(spec, ch.channel_id, token)
                gap_windows = _gap_faults(spec, dep.deployment_id, node.node_id,
                                          ch.channel_id)
                kept = []
                missing_runs: list[list[datetime]] = []
                for true_local, value in raw_stream:
                    dropped = any(f.window and f.window[0] <= true_local < f.window[1]
                                  for f in gap_windows)
                    shift = _clock_shift_min(spec, dep.deployment_id, true_local)
                    recorded = true_local + timedelta(minutes=shift)
                    if dropped:
                        if missing_runs and missing_runs[-1][-1] is not None and \
                                (recorded - missing_runs[-1][-1]).total_seconds() == spec.cadence_s:
                            missing_runs[-1].append(recorded)
                        else:
                            missing_runs.append([recorded])
                    else:
                        kept.append((recorded, value))
                streams[ch.channel_id] = kept
                counts[ch.channel_id] = len(kept)
                if missing_runs:
                    gaps[ch.channel_id] = [{
                        "start_utc": ts_to_text(from_local(run[0], site.utc_offset_standard)),
                        "end_utc": ts_to_text(from_local(run[-1], site.utc_offset_standard)),
                        "missing": len(run),
                    } for run in missing_runs]

    clock_shift = {}
    for dep in deployments:
        base = _clock_shift_min(spec, dep.deployment_id,
                                datetime(spec.date_from.year, spec.date_from.month,
                                         spec.date_from.day, 12, 0, 0))
        if base:
            clock_shift[dep.deployment_id] = base

    truth = {
        "seed": spec.seed,
        "site": site.to_json(),
        "canopy": spec.canopy.to_json(),
        "par_max": spec.par_max,
        "pyr_max": spec.pyr_max,
        "cadence_s": spec.cadence_s,
        "date_range": {"from": spec.date_from.isoformat(),
                       "to": spec.date_to.isoformat()},
        "clock_shift_min": clock_shift,
        "gaps": gaps,
        "channel_counts": counts,
        "node_positions": {
            node.node_id: [node.x_m, node.y_m]
            for dep in deployments for node in dep.nodes},
        "files": [],
        "malformed_lines": {},
        "arity_lines": {},
    }
    return SimData(spec=spec, site=site, deployments=deployments,
                   streams=streams, truth=truth)


def seed_store(spec: SimSpec, store) -> dict:
    """Register the synthetic site in a store and append all records.

    Direct path for tests and local experiments; file-shaped ingestion
    goes through emit_files + the ingest pipeline instead. A generator
    provenance entry keeps every record auditable.
    """
    data = generate(spec)
    store.add_site(data.site)
    for dep in data.deployments:
        store.add_deployment(dep)
    offset = data.site.utc_offset_standard
    total = 0
    channels = {}
    for channel_id, stream in data.streams.items():
        records = [SensorRecord(channel_id=channel_id,
                                ts_utc=from_local(local, offset),
                                raw_value=value, eng_value=value)
                   for local, value in stream]
        records.sort(key=lambda r: r.ts_utc)
        result = store.append_records(channel_id, records)
        total += result.written
        if records:
            channels[channel_id] = {
                "count": result.written,
                "first_ts": ts_to_text(records[0].ts_utc),
                "last_ts": ts_to_text(records[-1].ts_utc),
            }
    store.append_provenance({
        "upload_id": f"sim-{spec.site.site_id}-{spec.seed}",
        "kind": "simgen",
        "ingested_at_utc": "1970-01-01T00:00:00Z",
        "source_name": f"simgen(seed={spec.seed})",
        "source_sha256": hashlib.sha256(
            json.dumps(data.truth, sort_keys=True).encode()).hexdigest(),
        "user": "simgen",
        "rows_ok": total,
        "rows_rejected": 0,
        "duplicates": 0,
        "channels": channels,
        "notes": "synthetic clear-sky data",
    })
    return data.truth


# -- file emission ------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(value, ".6g")


def emit_files(spec: SimSpec, out_dir) -> dict:
    """Write dialect files plus groundtruth.json and a manifest fragment.

    The tower becomes a wired-logger file and the understory an aggregator
    file; nodes listed in node_file_nodes are split out as individual
    node-logger files instead. File-level faults are applied last and their
    line numbers recorded in the ledger.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(spec)
    truth = data.truth

    files: list[tuple[str, list[str], str, str]] = []  # (name, lines, dialect, dep)

    if spec.include_tower:
        name = f"{spec.tower_id}.csv"
        lines = _emit_wired(spec, data)
        files.append((name, lines, "WIRED_LOGGER", spec.tower_id))

    node_file_set = set(spec.node_file_nodes)
    agg_lines = _emit_agg(spec, data, exclude_nodes=node_file_set)
    files.append((f"{spec.understory_id}.csv", agg_lines,
                  "WIRELESS_AGGREGATOR", spec.understory_id))
    for node_id in sorted(node_file_set):
        files.append((f"{node_id}.csv", _emit_node(spec, data, node_id),
                      "NODE_LOGGER", spec.understory_id))

    for name, lines, dialect, dep_id in files:
        lines, malformed, arity = _apply_file_faults(spec, dep_id, name, lines)
        content = "\n".join(lines) + "\n"
        path = out / name
        path.write_text(content, encoding="utf-8")
        truth["files"].append({
            "path": name,
            "dialect": dialect,
            "deployment_id": dep_id,
            "data_rows": sum(1 for ln in lines
                             if ln and not ln.startswith("#")) - 1,
            "sha256": hashlib.sha256(content.encode("utf-8")).hexdigest(),
        })
        if malformed:
            truth["malformed_lines"][name] = malformed
        if arity:
            truth["arity_lines"][name] = arity

    (out / "groundtruth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "manifest_fragment.json").write_text(
        json.dumps({"sites": [data.site.to_json()],
                    "deployments": [d.to_json() for d in data.deployments]},
                   indent=2) + "\n", encoding="utf-8")
    return truth


def _dep_by_id(data: SimData, deployment_id: str) -> Deployment:
    return next(d for d in data.deployments if d.deployment_id == deployment_id)


def _pivot(data: SimData, deployment_id: str,
           node_ids: list[str]) -> dict[datetime, dict[tuple[str, str], float]]:
    dep = _dep_by_id(data, deployment_id)
    table: dict[datetime, dict[tuple[str, str], float]] = {}
    for node in dep.nodes:
        if node.node_id not in node_ids:
            continue
        for ch in node.channels:
            for recorded, value in data.streams[ch.channel_id]:
                table.setdefault(recorded, {})[(node.node_id, ch.column)] = value
    return table


def _emit_wired(spec: SimSpec, data: SimData) -> list[str]:
    dep = _dep_by_id(data, spec.tower_id)
    node = dep.nodes[0]
    tokens = [ch.column for ch in node.channels]
    table = _pivot(data, spec.tower_id, [node.node_id])
    lines = ["# PHN-WIRED v1",
             f"# logger_sn={node.node_id}",
             f"# columns={len(tokens)}",
             "ts_local," + ",".join(tokens)]
    for recorded in sorted(table):
        cells = table[recorded]
        row = [recorded.strftime("%Y-%m-%d %H:%M:%S")]
        row += [_fmt(cells[(node.node_id, t)]) if (node.node_id, t) in cells else ""
                for t in tokens]
        lines.append(",".join(row))
    return lines


def _emit_agg(spec: SimSpec, data: SimData, exclude_nodes: set[str]) -> list[str]:
    dep = _dep_by_id(data, spec.understory_id)
    node_ids = [n.node_id for n in dep.nodes if n.node_id not in exclude_nodes]
    tokens = list(dict.fromkeys(ch.column for n in dep.nodes for ch in n.channels))
    table = _pivot(data, spec.understory_id, node_ids)
    lines = ["# PHN-AGG v1",
             "epoch_s,node_id," + ",".join(tokens)]
    epoch0 = datetime(1970, 1, 1)
    for recorded in sorted(table):
        cells = table[recorded]
        epoch = int((recorded - epoch0).total_seconds())
        present_nodes = sorted({nid for nid, _ in cells})
        for nid in present_nodes:
            row = [str(epoch), nid]
            row += [_fmt(cells[(nid, t)]) if (nid, t) in cells else "" for t in tokens]
            lines.append(",".join(row))
    return lines


def _emit_node(spec: SimSpec, data: SimData, node_id: str) -> list[str]:
    dep = _dep_by_id(data, spec.understory_id)
    node = next(n for n in dep.nodes if n.node_id == node_id)
    tokens = [ch.column for ch in node.channels]
    table = _pivot(data, spec.understory_id, [node_id])
    lines = ["# PHN-NODE v1",
             f"# node_sn={node_id}",
             "ts_local," + ",".join(tokens)]
    for recorded in sorted(table):
        cells = table[recorded]
        row = [recorded.strftime("%Y-%m-%d %H:%M:%S")]
        row += [_fmt(cells[(node_id, t)]) if (node_id, t) in cells else "" for t in tokens]
        lines.append(",".join(row))
    return lines


def _apply_file_faults(spec: SimSpec, deployment_id: str, name: str,
                       lines: list[str]) -> tuple[list[str], list[int], list[int]]:
    """Corrupt emitted lines per MALFORMED_ROWS_PCT / COLUMN_ARITY faults."""
    data_start = next(i for i, ln in enumerate(lines) if not ln.startswith("#")) + 1
    data_indexes = list(range(data_start, len(lines)))
    malformed: list[int] = []
    arity: list[int] = []

    for f in spec.faults:
        if f.target not in (deployment_id, "*"):
            continue
        if f.kind == "MALFORMED_ROWS_PCT" and data_indexes:
            rng = random.Random(f"{spec.seed}|malformed|{name}")
            k = round(len(data_indexes) * f.magnitude / 100.0)
            chosen = sorted(rng.sample(data_indexes, min(k, len(data_indexes))))
            for idx in chosen:
                fields = lines[idx].split(",")
                fields[-1] = "T@#k"
                lines[idx] = ",".join(fields)
                malformed.append(idx + 1)
        elif f.kind == "COLUMN_ARITY" and data_indexes:
            rng = random.Random(f"{spec.seed}|arity|{name}")
            if f.window:
                chosen = [i for i in data_indexes
                          if f.window[0] <= _row_local_time(lines[i]) < f.window[1]]
            else:
                k = max(1, round(len(data_indexes) * 0.05))
                chosen = sorted(rng.sample(data_indexes, min(k, len(data_indexes))))
            for idx in chosen:
                if f.magnitude >= 0:
                    lines[idx] = lines[idx] + ",999"
                else:
                    lines[idx] = lines[idx].rsplit(",", 1)[0]
                arity.append(idx + 1)
    return lines, sorted(set(malformed)), sorted(set(arity))


def _row_local_time(line: str) -> datetime:
    head = line.split(",", 1)[0]
    try:
        return datetime.strptime(head, "%Y-%m-%d %H:%M:%S")
    except ValueError:
        return datetime(1970, 1, 1) + timedelta(seconds=int(head))
