import json
import math
from datetime import date, timedelta

import pytest

from conftest import utc
from envnet.errors import BadParams
from envnet.model import Site, VARIABLE_RANGES, from_local
from envnet.simgen import (
    Canopy,
    FaultSpec,
    SimSpec,
    build_manifest,
    emit_files,
    generate,
    load_spec,
    place_nodes,
    seed_store,
)

SITE = Site("mx", "Chamela", 19.5, -105.05, -360)


def spec_for(**kw):
    defaults = dict(seed=1, site=SITE, date_from=date(2024, 3, 1),
                    date_to=date(2024, 3, 3), node_count=4, strategy="grid",
                    strategy_params={"rows": 2, "cols": 2, "spacing_m": 15.0})
    defaults.update(kw)
    return SimSpec(**defaults)


# -- placement ---------------------------------------------------------------------

def test_transect_placement():
    pts = place_nodes("transect", {"spacing_m": 10.0}, 5)
    assert pts == [(0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (30.0, 0.0), (40.0, 0.0)]


def test_star_placement_two_rings():
    pts = place_nodes("star", {"radii": [10.0, 20.0], "per_ring": 6}, 12)
    assert len(pts) == 12
    dists = sorted(round(math.hypot(x, y), 6) for x, y in pts)
    assert dists[:6] == [10.0] * 6 and dists[6:] == [20.0] * 6


def test_grid_placement():
    pts = place_nodes("grid", {"rows": 3, "cols": 4, "spacing_m": 15.0}, 12)
    assert len(pts) == 12
    assert pts[0] == (0.0, 0.0)
    assert pts[3] == (45.0, 0.0)
    assert pts[4] == (0.0, 15.0)


def test_bad_params():
    with pytest.raises(BadParams):
        place_nodes("grid", {"rows": 3, "cols": 4, "spacing_m": 15.0}, 11)
    with pytest.raises(BadParams):
        place_nodes("star", {"radii": [10.0], "per_ring": 5}, 12)
    with pytest.raises(BadParams):
        place_nodes("helix", {}, 5)


# -- value model --------------------------------------------------------------------

def test_midnight_par_is_zero():
    data = generate(spec_for(include_tower=True))
    stream = data.streams["mx-tower.mast:par_in"]
    midnight = [v for t, v in stream if t.hour == 0]
    assert midnight and all(v == 0.0 for v in midnight)


def test_noon_par_near_peak():
    data = generate(spec_for())
    stream = data.streams["mx-tower.mast:par_in"]
    noonish = [v for t, v in stream if t.hour == 12 and t.minute == 0]
    assert noonish and all(1500 < v <= 2040 for v in noonish)


def test_physicality_within_sensor_ranges():
    data = generate(spec_for(node_variables=["par_under", "air_temp",
                                             "rel_humidity", "soil_moisture",
                                             "leaf_temp"]))
    for channel_id, stream in data.streams.items():
        dep_id, _, token = channel_id.rpartition(":")
        variable = None
        for dep in data.deployments:
            for node in dep.nodes:
                for ch in node.channels:
                    if ch.channel_id == channel_id:
                        variable = ch.variable
        lo, hi, _unit = VARIABLE_RANGES[variable]
        for _t, v in stream:
            assert lo <= v <= hi, (channel_id, v)


def test_reflected_follows_canopy_rho():
    data = generate(spec_for(canopy=Canopy(rho_par=0.05, rho_nir=0.4, tau=0.5)))
    par_in = dict(data.streams["mx-tower.mast:par_in"])
    par_refl = dict(data.streams["mx-tower.mast:par_refl"])
    for t, v in par_in.items():
        if v > 100:
            assert par_refl[t] / v == pytest.approx(0.05, rel=0.05)


# -- determinism --------------------------------------------------------------------

def test_identical_spec_byte_identical_files(tmp_path):
    spec = spec_for(faults=[FaultSpec("MALFORMED_ROWS_PCT", "mx-under", 10.0)])
    emit_files(spec, tmp_path / "a")
    emit_files(spec, tmp_path / "b")
    for name in ("mx-tower.csv", "mx-under.csv", "groundtruth.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path):
    emit_files(spec_for(seed=1), tmp_path / "a")
    emit_files(spec_for(seed=2), tmp_path / "b")
    assert (tmp_path / "a" / "mx-under.csv").read_bytes() != \
        (tmp_path / "b" / "mx-under.csv").read_bytes()


# -- faults and ledger ---------------------------------------------------------------

def test_clock_offset_shifts_emitted_timestamps(tmp_path):
    clean = generate(spec_for())
    shifted = generate(spec_for(faults=[FaultSpec("CLOCK_OFFSET_H", "mx-tower", 1)]))
    c = clean.streams["mx-tower.mast:par_in"]
    s = shifted.streams["mx-tower.mast:par_in"]
    assert all((st - ct) == timedelta(hours=1) for (ct, _), (st, _) in zip(c, s))
    assert shifted.truth["clock_shift_min"] == {"mx-tower": 60.0}


def test_dst_shift_only_inside_window():
    window = (utc(2024, 3, 2, 0).replace(tzinfo=None),
              utc(2024, 3, 3, 0).replace(tzinfo=None))
    data = generate(spec_for(faults=[FaultSpec("DST_SHIFT", "mx-under", 1,
                                               window=window)]))
    stream = data.streams["mx-under.n01:air_temp"]
    lattice = {t.minute % 15 for t, _ in stream}
    assert lattice == {0}
    day1 = [t for t, _ in stream if t.day == 1 and t.hour == 5]
    assert day1   # day one keeps its nominal lattice hours


def test_gap_fault_ledger_counts():
    window = (utc(2024, 3, 1, 10).replace(tzinfo=None),
              utc(2024, 3, 1, 12).replace(tzinfo=None))
    data = generate(spec_for(faults=[FaultSpec("GAP", "mx-under.n01", window=window)]))
    for token in ("par_under", "air_temp", "rel_humidity"):
        gaps = data.truth["gaps"][f"mx-under.n01:{token}"]
        assert len(gaps) == 1 and gaps[0]["missing"] == 8
    assert data.truth["channel_counts"]["mx-under.n01:air_temp"] == 2 * 96 - 8


def test_malformed_ledger_matches_file(tmp_path):
    spec = spec_for(faults=[FaultSpec("MALFORMED_ROWS_PCT", "mx-under", 10.0)])
    truth = emit_files(spec, tmp_path)
    lines = (tmp_path / "mx-under.csv").read_text().split("\n")
    listed = truth["malformed_lines"]["mx-under.csv"]
    assert len(listed) == round(0.10 * 4 * 96 * 2)
    for ln in listed:
        assert "T@#k" in lines[ln - 1]


def test_arity_ledger_matches_file(tmp_path):
    spec = spec_for(faults=[FaultSpec("COLUMN_ARITY", "mx-under", 1)])
    truth = emit_files(spec, tmp_path)
    lines = (tmp_path / "mx-under.csv").read_text().split("\n")
    header_fields = len(lines[1].split(","))
    for ln in truth["arity_lines"]["mx-under.csv"]:
        assert len(lines[ln - 1].split(",")) == header_fields + 1


def test_node_file_nodes_split_out(tmp_path):
    spec = spec_for(node_file_nodes=["mx-under.n01"])
    truth = emit_files(spec, tmp_path)
    names = {f["path"]: f["dialect"] for f in truth["files"]}
    assert names["mx-under.n01.csv"] == "NODE_LOGGER"
    agg = (tmp_path / "mx-under.csv").read_text()
    assert "mx-under.n01" not in agg


def test_load_spec_round_trip(tmp_path):
    obj = {
        "seed": 9,
        "site": SITE.to_json(),
        "date_range": {"from": "2024-03-01", "to": "2024-03-03"},
        "strategy": "transect",
        "strategy_params": {"spacing_m": 12.0},
        "node_count": 5,
        "faults": [{"kind": "CLOCK_OFFSET_H", "target": "mx-tower", "magnitude": 2}],
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(obj))
    spec = load_spec(path)
    assert spec.seed == 9 and spec.node_count == 5
    assert spec.faults[0].kind == "CLOCK_OFFSET_H"
    _site, deployments = build_manifest(spec)
    assert {d.deployment_id for d in deployments} == {"mx-tower", "mx-under"}


def test_seed_store_registers_and_appends(store):
    truth = seed_store(spec_for(), store)
    assert set(store.manifest.deployments) == {"mx-tower", "mx-under"}
    count = truth["channel_counts"]["mx-tower.mast:par_in"]
    recs = store.read_all_records("mx-tower.mast:par_in")
    assert len(recs) == count == 192
    entries = store.provenance_entries()
    assert entries and entries[0]["kind"] == "simgen"
