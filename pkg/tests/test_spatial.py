import math
import random
from datetime import date, timedelta

import numpy as np
import pytest

from conftest import utc
from envnet.errors import EmptyPoints, UnknownVariable
from envnet.model import SensorRecord, Site
from envnet.simgen import FaultSpec, SimSpec, seed_store
from envnet.spatial import (
    GridSpec,
    default_cutoff,
    default_grid,
    export_frames,
    frame_sequence,
    idw_interpolate,
    reliability_map,
)
from oracles import idw_oracle

G = GridSpec(nx=5, ny=5, origin_x=0.0, origin_y=0.0, cell_size=1.0)


def test_single_point_constant_field():
    out = idw_interpolate([(2.0, 2.0, 7.5)], G, 2.0, 10.0)
    assert np.allclose(out, 7.5)


def test_equidistant_midpoint_average():
    grid = GridSpec(nx=3, ny=1, origin_x=0.0, origin_y=0.0, cell_size=1.0)
    out = idw_interpolate([(0.0, 0.0, 10.0), (2.0, 0.0, 20.0)], grid, 2.0, 10.0)
    assert out[0][1] == 15.0


def test_exact_at_sensor_location():
    out = idw_interpolate([(1.0, 3.0, 42.0), (4.0, 0.0, 7.0)], G, 2.0, 100.0)
    assert out[3][1] == 42.0
    assert out[0][4] == 7.0


def test_cells_outside_cutoff_absent():
    out = idw_interpolate([(0.0, 0.0, 5.0)], G, 2.0, 1.5)
    assert math.isnan(out[4][4])
    assert out[0][0] == 5.0


def test_empty_points_rejected():
    with pytest.raises(EmptyPoints):
        idw_interpolate([], G, 2.0, 10.0)


def test_matches_double_loop_oracle():
    rng = random.Random(77)
    for trial in range(25):
        pts = [(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(-5, 35))
               for _ in range(12)]
        grid = GridSpec(nx=20, ny=20, origin_x=0.0, origin_y=0.0, cell_size=2.0)
        cutoff = rng.uniform(10, 60)
        power = rng.choice([1.0, 2.0, 3.0])
        got = idw_interpolate(pts, grid, power, cutoff)
        want = idw_oracle.interpolate(pts, 20, 20, 0.0, 0.0, 2.0, power, cutoff)
        for iy in range(20):
            for ix in range(20):
                w = want[iy][ix]
                if w is None:
                    assert math.isnan(got[iy][ix])
                else:
                    assert got[iy][ix] == pytest.approx(w, rel=1e-12, abs=1e-12)


def test_bounded_by_inputs():
    rng = random.Random(3)
    for _ in range(50):
        pts = [(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(-100, 100))
               for _ in range(rng.randint(1, 15))]
        out = idw_interpolate(pts, G, 2.0, 50.0)
        lo = min(p[2] for p in pts)
        hi = max(p[2] for p in pts)
        finite = out[~np.isnan(out)]
        assert (finite >= lo - 1e-9).all() and (finite <= hi + 1e-9).all()


# -- reliability -------------------------------------------------------------------

def test_all_alive_is_one():
    pts = [(1.0, 1.0, True), (3.0, 3.0, True), (2.0, 0.0, True)]
    rel = reliability_map(pts, G, 100.0)
    assert (rel == 1.0).all()


def test_all_dead_is_zero():
    pts = [(1.0, 1.0, False), (3.0, 3.0, False)]
    rel = reliability_map(pts, G, 100.0)
    assert (rel == 0.0).all()


def test_half_dead_midpoint():
    grid = GridSpec(nx=3, ny=1, origin_x=0.0, origin_y=0.0, cell_size=1.0)
    rel = reliability_map([(0.0, 0.0, True), (2.0, 0.0, False)], grid, 10.0)
    assert rel[0][1] == 0.5


def test_no_coverage_is_zero():
    rel = reliability_map([(100.0, 100.0, True)], G, 5.0)
    assert (rel == 0.0).all()


def test_reviving_never_decreases():
    rng = random.Random(11)
    pts = [(rng.uniform(0, 4), rng.uniform(0, 4), rng.random() < 0.5)
           for _ in range(8)]
    base = reliability_map(pts, G, 50.0)
    for i in range(len(pts)):
        if not pts[i][2]:
            revived = list(pts)
            revived[i] = (pts[i][0], pts[i][1], True)
            up = reliability_map(revived, G, 50.0)
            assert (up >= base - 1e-12).all()


def test_reliability_matches_oracle():
    rng = random.Random(19)
    pts = [(rng.uniform(0, 8), rng.uniform(0, 8), rng.random() < 0.7)
           for _ in range(10)]
    got = reliability_map(pts, G, 30.0)
    want = idw_oracle.reliability(pts, 5, 5, 0.0, 0.0, 1.0, 30.0)
    for iy in range(5):
        for ix in range(5):
            assert got[iy][ix] == pytest.approx(want[iy][ix], rel=1e-12, abs=1e-12)


# -- frames ------------------------------------------------------------------------

@pytest.fixture
def outage_store(store):
    site = Site("mx", "Chamela", 19.5, -105.05, -360)
    spec = SimSpec(
        seed=21, site=site, date_from=date(2024, 3, 1), date_to=date(2024, 3, 2),
        node_count=4, strategy="grid",
        strategy_params={"rows": 2, "cols": 2, "spacing_m": 20.0},
        include_tower=False,
        faults=[FaultSpec("GAP", "mx-under.n02",
                          window=(utc(2024, 3, 1, 10).replace(tzinfo=None),
                                  utc(2024, 3, 1, 12).replace(tzinfo=None)))])
    seed_store(spec, store)
    return store


def test_frame_count_exact(outage_store):
    frm = utc(2024, 3, 1, 6)
    frames = frame_sequence(outage_store, "mx-under", "air_temp_C",
                            frm, frm + timedelta(hours=24), 3600)
    assert len(frames) == 24
    assert frames[0].ts == frm
    assert frames[-1].ts == frm + timedelta(hours=23)


def test_outage_reduces_reliability_near_node(outage_store):
    frm = utc(2024, 3, 1, 6)
    frames = frame_sequence(outage_store, "mx-under", "air_temp_C",
                            frm, frm + timedelta(hours=24), 3600)
    # local 10:00-12:00 is 16:00-18:00 UTC: frames 10 and 11
    healthy = frames[2].reliability
    degraded = frames[10].reliability
    assert degraded.sum() < healthy.sum()
    assert (healthy == 1.0).all()


def test_constant_field_is_spatially_constant(store):
    site = Site("mx", "Chamela", 19.5, -105.05, -360)
    spec = SimSpec(seed=5, site=site, date_from=date(2024, 3, 1),
                   date_to=date(2024, 3, 2), node_count=4, strategy="grid",
                   strategy_params={"rows": 2, "cols": 2, "spacing_m": 20.0},
                   include_tower=False)
    seed_store(spec, store)
    # overwrite soil channel? use air_temp: rewrite with constant values
    for node in store.deployment("mx-under").nodes:
        ch = f"{node.node_id}:air_temp"
        records = store.read_all_records(ch)
        for r in records:
            r.raw_value = r.eng_value = 19.25
        store.rewrite_channel(ch, records)
    frm = utc(2024, 3, 1, 6)
    frames = frame_sequence(store, "mx-under", "air_temp_C",
                            frm, frm + timedelta(hours=6), 3600)
    for f in frames:
        finite = f.values[~np.isnan(f.values)]
        assert np.allclose(finite, 19.25)


def test_unknown_variable(outage_store):
    with pytest.raises(UnknownVariable):
        frame_sequence(outage_store, "mx-under", "rainfall_mm",
                       utc(2024, 3, 1), utc(2024, 3, 2), 3600)


def test_step_below_cadence_rejected(outage_store):
    with pytest.raises(ValueError):
        frame_sequence(outage_store, "mx-under", "air_temp_C",
                       utc(2024, 3, 1), utc(2024, 3, 2), 60)


def test_export_frames_layout(outage_store, tmp_path):
    frm = utc(2024, 3, 1, 6)
    frames = frame_sequence(outage_store, "mx-under", "air_temp_C",
                            frm, frm + timedelta(hours=3), 3600)
    manifest = export_frames(frames, tmp_path / "out",
                             {"deployment": "mx-under", "variable": "air_temp_C"})
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert "sequence.json" in names
    assert "frame_0000_values.csv" in names
    assert "frame_0002_reliability.csv" in names
    assert manifest["frames"] == 3
    assert manifest["vmin"] is not None and manifest["vmax"] >= manifest["vmin"]


def test_default_grid_and_cutoff():
    positions = [(0.0, 0.0), (30.0, 0.0), (0.0, 30.0), (30.0, 30.0)]
    grid = default_grid(positions)
    assert grid.nx == 50 and grid.ny == 50
    assert grid.origin_x < 0 < 30 < grid.origin_x + grid.cell_size * 49
    assert default_cutoff(positions) == pytest.approx(90.0)
