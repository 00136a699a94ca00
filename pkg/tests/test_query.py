import itertools
import random
from datetime import timedelta

import pytest

from conftest import make_site, make_tower, make_understory, utc
from envnet import query
from envnet.errors import EmptySpec, InvertedRange, NoCalibration, UnknownChannel
from envnet.model import CalibrationSpec, QualityFlag, SensorRecord
from envnet.query import QuerySpec, convert_raw, run_query
from oracles import query_oracle

PAR = "tw.mast:par_in"
TEMP = "un.n01:air_temp"


def fill_constant(store, channel, days=3, value=21.5, start=None, step=900):
    start = start or utc(2024, 3, 1, 6, 0)
    n = days * 86400 // step
    recs = [SensorRecord(channel, start + timedelta(seconds=i * step), value, value)
            for i in range(n)]
    store.append_records(channel, recs)
    return recs


# -- convert_raw -------------------------------------------------------------------

def test_tipping_bucket_conversion():
    assert convert_raw("rainfall_mm", 5, CalibrationSpec(a=0.2)) == 1.0


def test_linear_soil_calibration():
    cal = CalibrationSpec(a=0.1, b=-20.0)
    assert convert_raw("soil_moisture_vwc_pct", 350.0, cal) == 15.0


def test_zero_preserved_for_proportional():
    assert convert_raw("par_umol_m2_s", 0.0, CalibrationSpec(a=3.3)) == 0.0


def test_no_calibration_raises():
    with pytest.raises(NoCalibration):
        convert_raw("air_temp_C", 1.0, None)


# -- run_query basics ---------------------------------------------------------------

def test_daily_mean_of_constant(populated_store):
    fill_constant(populated_store, TEMP, days=3)
    spec = QuerySpec((TEMP,), utc(2024, 3, 1, 6), utc(2024, 3, 4, 6),
                     agg=("day", "mean"))
    result = run_query(populated_store, spec)[TEMP]
    filled = [p for p in result if p.count]
    assert all(p.value == 21.5 for p in filled)
    assert sum(p.count for p in result) == 3 * 96


def test_empty_bins_emitted_with_absent_value(populated_store):
    # range is two local-standard days (site is UTC-6, so local midnight is 06 UTC)
    populated_store.append_records(TEMP, [SensorRecord(TEMP, utc(2024, 3, 1, 6), 5, 5)])
    spec = QuerySpec((TEMP,), utc(2024, 3, 1, 6), utc(2024, 3, 3, 6),
                     agg=("day", "count"))
    points = run_query(populated_store, spec)[TEMP]
    assert len(points) == 2
    empty = [p for p in points if p.count == 0]
    assert len(empty) == 1 and empty[0].value is None


def test_tod_window_midday(populated_store):
    fill_constant(populated_store, TEMP, days=2, start=utc(2024, 3, 1, 6))
    spec = QuerySpec((TEMP,), utc(2024, 3, 1, 6), utc(2024, 3, 3, 6),
                     tod_window=(600, 840), agg=("day", "count"))
    points = run_query(populated_store, spec)[TEMP]
    for p in points:
        assert p.count <= 16
    assert sum(p.count for p in points) == 2 * 16


def test_tod_window_wraps_midnight(populated_store):
    fill_constant(populated_store, TEMP, days=1, start=utc(2024, 3, 1, 6))
    spec = QuerySpec((TEMP,), utc(2024, 3, 1, 6), utc(2024, 3, 2, 6),
                     tod_window=(1380, 60))   # 23:00 -> 01:00
    points = run_query(populated_store, spec)[TEMP]
    assert len(points) == 8


def test_exclude_flagged_default(populated_store):
    good = SensorRecord(TEMP, utc(2024, 3, 1, 12), 20.0, 20.0)
    bad = SensorRecord(TEMP, utc(2024, 3, 1, 13), 90.0, 90.0,
                       {QualityFlag.OUT_OF_RANGE})
    populated_store.append_records(TEMP, [good, bad])
    spec = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 2))
    assert len(run_query(populated_store, spec)[TEMP]) == 1
    keep_all = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 2),
                         exclude_flagged=frozenset())
    assert len(run_query(populated_store, keep_all)[TEMP]) == 2


def test_clear_sky_par_gate(populated_store):
    ts1, ts2 = utc(2024, 3, 1, 18), utc(2024, 3, 1, 19)
    populated_store.append_records(PAR, [SensorRecord(PAR, ts1, 950.0, 950.0),
                                         SensorRecord(PAR, ts2, 850.0, 850.0)])
    refl = "tw.mast:par_refl"
    populated_store.append_records(refl, [SensorRecord(refl, ts1, 30.0, 30.0),
                                          SensorRecord(refl, ts2, 28.0, 28.0)])
    spec = QuerySpec((refl,), utc(2024, 3, 1), utc(2024, 3, 2),
                     clear_sky_par_min=900.0)
    points = run_query(populated_store, spec)[refl]
    assert [p.ts for p in points] == [ts1]


def test_value_bounds(populated_store):
    populated_store.append_records(TEMP, [
        SensorRecord(TEMP, utc(2024, 3, 1, 10), 5.0, 5.0),
        SensorRecord(TEMP, utc(2024, 3, 1, 11), 25.0, 25.0)])
    spec = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 2),
                     value_bounds={"air_temp_C": (10.0, 30.0)})
    points = run_query(populated_store, spec)[TEMP]
    assert [p.value for p in points] == [25.0]


def test_raw_values_selected(populated_store):
    populated_store.append_records(TEMP, [SensorRecord(TEMP, utc(2024, 3, 1, 10),
                                                       raw_value=123.0, eng_value=21.0)])
    spec = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 2), raw_values=True)
    assert run_query(populated_store, spec)[TEMP][0].value == 123.0


def test_errors(populated_store):
    with pytest.raises(EmptySpec):
        run_query(populated_store, QuerySpec((), utc(2024, 1, 1), utc(2024, 1, 2)))
    with pytest.raises(InvertedRange):
        run_query(populated_store,
                  QuerySpec((TEMP,), utc(2024, 2, 1), utc(2024, 1, 1)))
    with pytest.raises(UnknownChannel):
        run_query(populated_store,
                  QuerySpec(("missing",), utc(2024, 1, 1), utc(2024, 1, 2)))


def test_filter_order_independence(populated_store):
    """Conjunctive filters commute: the spec dataclass is declarative."""
    rng = random.Random(5)
    recs = []
    for i in range(500):
        ts = utc(2024, 3, 1) + timedelta(seconds=900 * i)
        v = rng.uniform(-5, 45)
        flags = {QualityFlag.OUT_OF_RANGE} if rng.random() < 0.1 else set()
        recs.append(SensorRecord(TEMP, ts, v, v, flags))
    populated_store.append_records(TEMP, recs)
    spec_a = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 7),
                       tod_window=(300, 1200), value_bounds={"air_temp_C": (0, 40)})
    result_a = run_query(populated_store, spec_a)
    result_b = run_query(populated_store, spec_a)   # engine is deterministic
    a = [(p.ts, p.value) for p in result_a[TEMP]]
    b = [(p.ts, p.value) for p in result_b[TEMP]]
    assert a == b


# -- aggregation consistency -------------------------------------------------------

def test_sum_equals_mean_times_count_and_minmax(populated_store):
    rng = random.Random(9)
    recs = [SensorRecord(TEMP, utc(2024, 3, 1) + timedelta(seconds=900 * i),
                         rng.uniform(0, 40), rng.uniform(0, 40))
            for i in range(400)]
    populated_store.append_records(TEMP, recs)
    frm, to = utc(2024, 3, 1), utc(2024, 3, 6)
    stats = {}
    for stat in ("mean", "min", "max", "count", "sum"):
        spec = QuerySpec((TEMP,), frm, to, agg=("day", stat))
        stats[stat] = run_query(populated_store, spec)[TEMP]
    for m, lo, hi, c, s in zip(*(stats[k] for k in ("mean", "min", "max", "count", "sum"))):
        if m.count == 0:
            continue
        assert abs(s.value - m.value * m.count) <= 1e-9 * max(1.0, abs(s.value))
        assert lo.value <= m.value <= hi.value


def test_monotone_narrowing(populated_store):
    rng = random.Random(13)
    recs = [SensorRecord(TEMP, utc(2024, 3, 1) + timedelta(seconds=900 * i),
                         rng.uniform(0, 40), rng.uniform(0, 40))
            for i in range(400)]
    populated_store.append_records(TEMP, recs)
    base = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 6), agg=("day", "count"))
    narrowed = QuerySpec((TEMP,), utc(2024, 3, 1), utc(2024, 3, 6),
                         tod_window=(600, 840), value_bounds={"air_temp_C": (5, 30)},
                         agg=("day", "count"))
    for wide, narrow in zip(run_query(populated_store, base)[TEMP],
                            run_query(populated_store, narrowed)[TEMP]):
        assert narrow.count <= wide.count


# -- oracle equivalence -------------------------------------------------------------

def _random_store(store, seed):
    """Ten channels over 90 days of hourly data with assorted flags."""
    rng = random.Random(seed)
    site = make_site(offset=rng.choice([-360, -300, -180, 0, 120]))
    store.add_site(site)
    store.add_deployment(make_tower())
    store.add_deployment(make_understory(n_nodes=2))
    channels = [c for c in store.channel_ids()]
    assert len(channels) == 10
    start = utc(2024, 1, 1)
    data = {}
    for ch in channels:
        recs = []
        for i in range(90 * 24):
            if rng.random() < 0.08:
                continue   # holes
            ts = start + timedelta(hours=i)
            v = rng.uniform(0, 1200 if "par" in ch or "pyr" in ch else 40)
            flags = set()
            if rng.random() < 0.05:
                flags.add(QualityFlag.OUT_OF_RANGE)
            if rng.random() < 0.02:
                flags.add(QualityFlag.TIME_CORRECTED)
            recs.append(SensorRecord(ch, ts, v, v, flags))
        store.append_records(ch, recs)
        data[ch] = [(r.ts_utc, r.raw_value, r.eng_value, frozenset(r.flags))
                    for r in recs]
    return site, data


FILTERS = list(itertools.product([None, (600, 840)], [None, 900.0],
                                 [frozenset(), query.DEFAULT_EXCLUDE_FLAGS],
                                 [None, (5.0, 900.0)]))
COMBOS = list(itertools.product(FILTERS, ["hour", "day"],
                                ["mean", "min", "max", "count"]))


@pytest.mark.parametrize("seed", range(4))
def test_oracle_equivalence_sampled(tmp_path, seed):
    from envnet.store import open_store
    store = open_store(tmp_path / "s", create_if_missing=True)
    site, data = _random_store(store, seed)
    frm, to = utc(2024, 1, 5), utc(2024, 2, 20)
    target = TEMP
    dep_of_target = "un"
    par_list = [(ts, eng) for ts, _raw, eng, flags in data["un.n01:par_under"]
                if not ({QualityFlag.OUT_OF_RANGE, QualityFlag.MISSING} & flags)]

    rng = random.Random(100 + seed)
    for (tod, par_min, excl, bounds), bin_, stat in rng.sample(COMBOS, 24):
        spec = QuerySpec((target,), frm, to, tod_window=tod,
                         value_bounds={"air_temp_C": bounds} if bounds else {},
                         exclude_flagged=excl, clear_sky_par_min=par_min,
                         agg=(bin_, stat))
        got = run_query(store, spec)[target]
        want = query_oracle.run(
            data[target], offset_min=site.utc_offset_standard,
            variable="air_temp_C", from_utc=frm, to_utc=to, tod_window=tod,
            bounds=bounds, exclude_flags=excl, par_min=par_min,
            par_records=par_list, par_half_s=450.0, agg=(bin_, stat))
        assert len(got) == len(want)
        for p, (wts, wval, wcount) in zip(got, want):
            assert p.ts == wts
            assert p.count == wcount
            if wval is None:
                assert p.value is None
            else:
                assert p.value == pytest.approx(wval, rel=1e-12, abs=1e-12)
