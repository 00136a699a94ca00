"""Spatial interpolation over a deployment area with reliability maps.

Point readings interpolate onto a regular grid by inverse-distance
weighting (weights 1/d^power inside a cutoff radius); the method is
deterministic and has no fitted parameters. Each value frame pairs with a
co-registered reliability field in [0, 1]: the distance-weighted fraction
of live sensors, which drops visibly around a dead node and is identically
1 where every sensor reports. Grids are local planar meters; deployments
are far too small for geodetic projections to matter.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import EmptyPoints, UnknownVariable
from .model import QualityFlag, ts_to_text

SNAP_DISTANCE_M = 1e-6


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    origin_x: float
    origin_y: float
    cell_size: float

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell coordinates as (X, Y) arrays of shape (ny, nx)."""
        xs = self.origin_x + np.arange(self.nx) * self.cell_size
        ys = self.origin_y + np.arange(self.ny) * self.cell_size
        return np.meshgrid(xs, ys)

    def to_json(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "origin_x": self.origin_x,
                "origin_y": self.origin_y, "cell_size": self.cell_size}


@dataclass
class GridFrame:
    ts: datetime
    grid: GridSpec
    values: np.ndarray       # (ny, nx), NaN where no sensor in cutoff
    reliability: np.ndarray  # (ny, nx) in [0, 1]

    def to_json(self) -> dict:
        vals = [[None if math.isnan(v) else v for v in row]
                for row in self.values.tolist()]
        return {"ts": ts_to_text(self.ts), "values": vals,
                "reliability": self.reliability.tolist()}


def idw_interpolate(points: list[tuple[float, float, float]], grid: GridSpec,
                    power: float = 2.0, cutoff_m: float = 100.0) -> np.ndarray:
    """Inverse-distance-weighted field over the grid.

    Cells within the snap distance of a sensor take that sensor's value
    exactly; cells with no sensor inside the cutoff are NaN. Interpolated
    values always stay within [min(inputs), max(inputs)].
    """
    if not points:
        raise EmptyPoints("idw needs at least one point")
    if power <= 0 or cutoff_m <= 0:
        raise ValueError("power and cutoff_m must be > 0")
    px = np.array([p[0] for p in points])
    py = np.array([p[1] for p in points])
    pv = np.array([p[2] for p in points])
    gx, gy = grid.coords()
    d = np.sqrt((gx[..., None] - px) ** 2 + (gy[..., None] - py) ** 2)

    w = np.where(d <= cutoff_m,
                 1.0 / np.power(np.maximum(d, SNAP_DISTANCE_M), power), 0.0)
    wsum = w.sum(axis=-1)
    out = np.full(gx.shape, np.nan)
    covered = wsum > 0
    out[covered] = (w * pv).sum(axis=-1)[covered] / wsum[covered]

    snap = d < SNAP_DISTANCE_M
    has_snap = snap.any(axis=-1)
    if has_snap.any():
        first = snap.argmax(axis=-1)
        out[has_snap] = pv[first[has_snap]]
    return out


def reliability_map(points: list[tuple[float, float, bool]], grid: GridSpec,
                    cutoff_m: float = 100.0) -> np.ndarray:
    """Distance-weighted live-sensor fraction per cell, 0 without coverage."""
    if not points:
        return np.zeros((grid.ny, grid.nx))
    px = np.array([p[0] for p in points])
    py = np.array([p[1] for p in points])
    alive = np.array([bool(p[2]) for p in points])
    gx, gy = grid.coords()
    d = np.sqrt((gx[..., None] - px) ** 2 + (gy[..., None] - py) ** 2)
    w = np.where(d <= cutoff_m, 1.0 / np.maximum(d, SNAP_DISTANCE_M) ** 2, 0.0)
    denom = w.sum(axis=-1)
    num = (w * alive).sum(axis=-1)
    out = np.zeros(gx.shape)
    covered = denom > 0
    out[covered] = num[covered] / denom[covered]

    snap = d < SNAP_DISTANCE_M
    has_snap = snap.any(axis=-1)
    if has_snap.any():
        first = snap.argmax(axis=-1)
        out[has_snap] = alive[first[has_snap]].astype(float)
    return np.clip(out, 0.0, 1.0)


def default_grid(positions: list[tuple[float, float]], nx: int = 50,
                 ny: int = 50) -> GridSpec:
    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    span_x = max(xs) - min(xs) or 10.0
    span_y = max(ys) - min(ys) or 10.0
    pad_x, pad_y = 0.1 * span_x, 0.1 * span_y
    cell = max((span_x + 2 * pad_x) / (nx - 1), (span_y + 2 * pad_y) / (ny - 1))
    return GridSpec(nx=nx, ny=ny, origin_x=min(xs) - pad_x,
                    origin_y=min(ys) - pad_y, cell_size=cell)


def default_cutoff(positions: list[tuple[float, float]]) -> float:
    """Three times the median nearest-neighbor spacing."""
    if len(positions) < 2:
        return 100.0
    nearest = []
    for i, (x, y) in enumerate(positions):
        best = min(math.hypot(x - ox, y - oy)
                   for j, (ox, oy) in enumerate(positions) if j != i)
        nearest.append(best)
    nearest.sort()
    mid = len(nearest) // 2
    median = (nearest[mid] if len(nearest) % 2
              else 0.5 * (nearest[mid - 1] + nearest[mid]))
    return 3.0 * median if median > 0 else 100.0


def frame_sequence(store, deployment_id: str, variable: str, from_utc: datetime,
                   to_utc: datetime, step_s: int, grid: GridSpec | None = None,
                   power: float = 2.0, cutoff_m: float | None = None) -> list[GridFrame]:
    """One interpolated frame per step bin with per-bin sensor liveness.

    Each bin takes the mean of every sensor's readings inside it; a sensor
    silent for the whole bin is dead for that frame, reducing reliability
    around its position. Frame count is exactly ceil((to-from)/step).
    """
    dep = store.deployment(deployment_id)
    if step_s < dep.cadence_s:
        raise ValueError(f"step must be >= deployment cadence ({dep.cadence_s}s)")

    sensors = []   # (node, channel)
    for node in dep.nodes:
        for ch in node.channels:
            if ch.variable == variable:
                sensors.append((node, ch))
                break
    if not sensors:
        raise UnknownVariable(f"no {variable} channels on {deployment_id}")

    positions = [(node.x_m, node.y_m) for node, _ in sensors]
    if grid is None:
        grid = default_grid(positions)
    if cutoff_m is None:
        cutoff_m = default_cutoff(positions)

    span = (to_utc - from_utc).total_seconds()
    n_frames = int(span // step_s) + (1 if span % step_s else 0)

    bad = {QualityFlag.OUT_OF_RANGE, QualityFlag.MISSING}
    per_sensor: list[dict[int, list[float]]] = []
    for _node, ch in sensors:
        bins: dict[int, list[float]] = {}
        for rec in store.read_records(ch.channel_id, from_utc, to_utc):
            if rec.eng_value is None or (rec.flags & bad):
                continue
            idx = int((rec.ts_utc - from_utc).total_seconds() // step_s)
            if 0 <= idx < n_frames:
                bins.setdefault(idx, []).append(rec.eng_value)
        per_sensor.append(bins)

    frames = []
    for k in range(n_frames):
        ts = from_utc + timedelta(seconds=k * step_s)
        live_points = []
        alive_points = []
        for (node, _ch), bins in zip(sensors, per_sensor):
            values = bins.get(k)
            alive = bool(values)
            alive_points.append((node.x_m, node.y_m, alive))
            if alive:
                live_points.append((node.x_m, node.y_m, sum(values) / len(values)))
        if live_points:
            values_arr = idw_interpolate(live_points, grid, power, cutoff_m)
        else:
            values_arr = np.full((grid.ny, grid.nx), np.nan)
        rel = reliability_map(alive_points, grid, cutoff_m)
        frames.append(GridFrame(ts=ts, grid=grid, values=values_arr, reliability=rel))
    return frames


def export_frames(frames: list[GridFrame], out_dir, meta: dict | None = None) -> dict:
    """Write one CSV matrix per frame per field plus a sequence manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    finite = [v for f in frames for v in f.values.ravel() if not math.isnan(v)]
    manifest = {
        "frames": len(frames),
        "timestamps": [ts_to_text(f.ts) for f in frames],
        "grid": frames[0].grid.to_json() if frames else None,
        "vmin": min(finite) if finite else None,
        "vmax": max(finite) if finite else None,
    }
    if meta:
        manifest.update(meta)
    for i, frame in enumerate(frames):
        for name, arr in (("values", frame.values), ("reliability", frame.reliability)):
            path = out / f"frame_{i:04d}_{name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                for row in arr:
                    writer.writerow(["" if (isinstance(v, float) and math.isnan(v))
                                     else format(v, ".10g") for v in row])
    (out / "sequence.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    return manifest
