"""Timestamp verification against the sun.

Field laptops configured with the wrong time zone or with daylight saving
enabled shift every logged timestamp by whole hours. Those shifts are
recoverable: the morning rise of a solar-radiation channel pins the true
local time. This module computes astronomical sunrise, extracts the
observed rise from PAR data, votes a whole-hour offset across many days,
and rewrites timestamps once an offset is confirmed. Sub-hour clock drift
is reported but deliberately never corrected; the method does not resolve
finer than an hour.

Solar position model
--------------------
Declination uses Spencer's Fourier series (day-angle B = 2*pi*(n-1)/365):

    decl = 0.006918 - 0.399912 cos B + 0.070257 sin B - 0.006758 cos 2B
           + 0.000907 sin 2B - 0.002697 cos 3B + 0.00148 sin 3B   [rad]

The equation of time is Spencer's as well (minutes):

    eot = 229.18 (0.000075 + 0.001868 cos B - 0.032077 sin B
                  - 0.014615 cos 2B - 0.04089 sin 2B)

Sunrise is the hour angle where the solar zenith reaches 90.833 degrees
(atmospheric refraction plus the solar radius), converted to local
standard time with the site longitude and fixed UTC offset. Worst-case
error against the NOAA calculator is under 3 minutes for |lat| <= 60.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

from .errors import InsufficientDays, OverlapAfterShift, PolarDayNight
from .model import UTC, QualityFlag, SensorRecord, Site, from_local, to_local

SUNRISE_ZENITH_DEG = 90.833
DEFAULT_THRESHOLD = 10.0   # umol/m2/s
DEFAULT_SUSTAIN = 2
CLOUDY_OUTLIER_MIN = 120.0
DRIFT_WARNING_MIN = 15.0
MIN_USABLE_DAYS = 5


def _day_angle(d: date) -> float:
    return 2.0 * math.pi * (d.timetuple().tm_yday - 1) / 365.0


def solar_declination_deg(d: date) -> float:
    b = _day_angle(d)
    decl = (0.006918
            - 0.399912 * math.cos(b) + 0.070257 * math.sin(b)
            - 0.006758 * math.cos(2 * b) + 0.000907 * math.sin(2 * b)
            - 0.002697 * math.cos(3 * b) + 0.00148 * math.sin(3 * b))
    return math.degrees(decl)


def equation_of_time_min(d: date) -> float:
    b = _day_angle(d)
    return 229.18 * (0.000075
                     + 0.001868 * math.cos(b) - 0.032077 * math.sin(b)
                     - 0.014615 * math.cos(2 * b) - 0.04089 * math.sin(2 * b))


def _sunrise_hour_angle_deg(latitude: float, decl_deg: float, zenith_deg: float) -> float:
    phi = math.radians(latitude)
    decl = math.radians(decl_deg)
    cos_ha = ((math.cos(math.radians(zenith_deg)) - math.sin(phi) * math.sin(decl))
              / (math.cos(phi) * math.cos(decl)))
    if cos_ha < -1.0 or cos_ha > 1.0:
        raise PolarDayNight(f"no sunrise at latitude {latitude} for zenith {zenith_deg}")
    return math.degrees(math.acos(cos_ha))


def sunrise_local_std_minutes(latitude: float, longitude: float, utc_offset_min: int,
                              d: date, zenith_deg: float = SUNRISE_ZENITH_DEG) -> float:
    """Sunrise as minutes after local-standard midnight for a given zenith."""
    ha = _sunrise_hour_angle_deg(latitude, solar_declination_deg(d), zenith_deg)
    solar_minutes = 720.0 - 4.0 * ha
    # solar time -> local standard: remove the equation of time and the
    # offset between the site meridian and the zone's standard meridian
    local = solar_minutes - equation_of_time_min(d) - 4.0 * longitude + utc_offset_min
    return local % 1440.0


def expected_sunrise(latitude: float, longitude: float, utc_offset_standard: int,
                     d: date) -> float:
    """Astronomical sunrise (zenith 90.833 deg), minutes after local midnight."""
    return sunrise_local_std_minutes(latitude, longitude, utc_offset_standard, d)


def solar_elevation_deg(latitude: float, longitude: float, utc_offset_min: int,
                        d: date, local_std_minutes: float) -> float:
    """Sun elevation above the horizon at a local-standard instant."""
    decl = math.radians(solar_declination_deg(d))
    phi = math.radians(latitude)
    solar_minutes = (local_std_minutes + equation_of_time_min(d)
                     + 4.0 * longitude - utc_offset_min)
    ha = math.radians((solar_minutes - 720.0) / 4.0)
    sin_el = (math.sin(phi) * math.sin(decl)
              + math.cos(phi) * math.cos(decl) * math.cos(ha))
    return math.degrees(math.asin(max(-1.0, min(1.0, sin_el))))


@dataclass
class SunriseEstimate:
    date: date
    observed_local_std: float | None
    expected_local_std: float | None
    residual_min: float | None = None

    def __post_init__(self):
        if self.residual_min is None and self.observed_local_std is not None \
                and self.expected_local_std is not None:
            self.residual_min = self.observed_local_std - self.expected_local_std


@dataclass
class OffsetVerdict:
    offset_hours: int
    confidence: float
    days_used: int
    drift_warning: bool
    median_residual_min: float | None = None
    estimates: list[SunriseEstimate] = field(default_factory=list)


def observed_sunrise(par_records: list[SensorRecord], threshold: float = DEFAULT_THRESHOLD,
                     sustain: int = DEFAULT_SUSTAIN, utc_offset_min: int = 0) -> float | None:
    """First sustained threshold crossing, minutes after local midnight.

    Scans one civil day of incoming PAR (or solar) records in time order and
    returns the timestamp of the first sample at or above the threshold whose
    next sustain-1 samples also hold the threshold. Returns None when the
    channel never crosses (dead sensor, overcast, polar night). Single noise
    spikes shorter than the sustain window are skipped.
    """
    usable = [r for r in sorted(par_records, key=lambda r: r.ts_utc)
              if r.eng_value is not None and QualityFlag.MISSING not in r.flags]
    n = len(usable)
    for i, rec in enumerate(usable):
        if rec.eng_value < threshold:
            continue
        if all(j < n and usable[j].eng_value >= threshold
               for j in range(i, i + sustain)):
            local = to_local(rec.ts_utc, utc_offset_min)
            return local.hour * 60 + local.minute + local.second / 60.0
    return None


def _expected_first_sample(site: Site, d: date, cadence_s: int, threshold: float,
                           day_max: float | None) -> float | None:
    """Model-predicted sample time of the sunrise threshold crossing.

    The raw astronomical sunrise reads systematically early relative to a
    sampled PAR channel: radiation needs several minutes to climb to the
    threshold and the logger only reports on its cadence lattice. Both
    effects are predictable, so the comparison baseline is the first
    lattice point (midnight-anchored, local standard) at or after the
    modeled threshold crossing. Whole-hour shifts move the observation by
    exactly 60k minutes against it.
    """
    noon_el = solar_elevation_deg(site.latitude, site.longitude,
                                  site.utc_offset_standard, d, 720.0)
    if noon_el <= 0.5:
        return None
    sin_noon = math.sin(math.radians(noon_el))
    if day_max is not None and day_max > 2.0 * threshold:
        flux_peak = day_max / sin_noon
    else:
        flux_peak = 1000.0  # nominal clear-sky flux; keeps dead days countable
    ratio = threshold / flux_peak
    if ratio >= 1.0:
        return None
    zenith = 90.0 - math.degrees(math.asin(ratio))
    try:
        t_cross = sunrise_local_std_minutes(site.latitude, site.longitude,
                                            site.utc_offset_standard, d, zenith)
    except PolarDayNight:
        return None
    cadence_min = cadence_s / 60.0
    return math.ceil(t_cross / cadence_min - 1e-9) * cadence_min


def detect_utc_offset_error(store, channel_id: str, from_date: date, to_date: date,
                            threshold: float = DEFAULT_THRESHOLD,
                            sustain: int = DEFAULT_SUSTAIN) -> OffsetVerdict:
    """Vote a whole-hour timestamp offset from several days of sunrises.

    For each civil day in [from_date, to_date) the observed first-sample
    sunrise is compared with the modeled one; the offset is the rounded
    median of the per-day residuals. Days without an observable sunrise
    count against confidence but not toward the median, and days more than
    two hours off the consensus are treated as cloudy-morning outliers.
    A consistent sub-hour residual raises drift_warning instead of an
    offset; drift is out of scope for correction.
    """
    dep, _node, _ch = store.channel(channel_id)
    site = store.site(dep.site_id)
    offset_min = site.utc_offset_standard

    estimates: list[SunriseEstimate] = []
    days_used = 0
    d = from_date
    while d < to_date:
        day_start = from_local(datetime(d.year, d.month, d.day), offset_min)
        records = store.read_records(channel_id, day_start, day_start + timedelta(days=1))
        values = [r.eng_value for r in records if r.eng_value is not None]
        day_max = max(values) if values else None
        expected = _expected_first_sample(site, d, dep.cadence_s, threshold, day_max)
        if expected is None:
            # no sunrise here on this date (polar day/night)
            d += timedelta(days=1)
            continue
        days_used += 1
        observed = observed_sunrise(records, threshold, sustain, offset_min)
        estimates.append(SunriseEstimate(d, observed, expected))
        d += timedelta(days=1)

    residuals = [e.residual_min for e in estimates if e.residual_min is not None]
    if len(residuals) < MIN_USABLE_DAYS:
        raise InsufficientDays(f"{len(residuals)} days with observable sunrise, "
                               f"need {MIN_USABLE_DAYS}")

    first_median = statistics.median(residuals)
    inliers = [r for r in residuals if abs(r - first_median) <= CLOUDY_OUTLIER_MIN]
    median_res = statistics.median(inliers) if inliers else first_median

    offset_hours = int(round(median_res / 60.0))
    offset_hours = max(-12, min(12, offset_hours))
    agree = sum(1 for r in residuals if int(round(r / 60.0)) == offset_hours)
    confidence = agree / days_used if days_used else 0.0
    drift_warning = abs(median_res - 60.0 * offset_hours) > DRIFT_WARNING_MIN

    return OffsetVerdict(offset_hours=offset_hours, confidence=confidence,
                         days_used=days_used, drift_warning=drift_warning,
                         median_residual_min=median_res, estimates=estimates)


def apply_time_correction(store, channel_id: str, from_utc: datetime, to_utc: datetime,
                          offset_hours: int, user: str = "system") -> int:
    """Shift recorded timestamps back by a detected whole-hour offset.

    Every record in [from_utc, to_utc) moves by -offset_hours and gains a
    TIME_CORRECTED flag; values are untouched. The rewrite is refused
    whole when any shifted timestamp would collide with a record outside
    the corrected window. The operation is recorded in the provenance
    ledger so the original offset stays auditable.
    """
    if offset_hours == 0:
        raise ValueError("offset_hours must be non-zero")
    store.channel(channel_id)
    shift = timedelta(hours=-offset_hours)
    with store.writer():
        all_records = store.read_all_records(channel_id)
        inside = [r for r in all_records if from_utc <= r.ts_utc < to_utc]
        outside = [r for r in all_records if not (from_utc <= r.ts_utc < to_utc)]
        outside_ts = {r.ts_utc for r in outside}
        shifted_ts = {r.ts_utc + shift for r in inside}
        collisions = shifted_ts & outside_ts
        if collisions:
            raise OverlapAfterShift(
                f"shift of {len(inside)} records collides with "
                f"{len(collisions)} existing timestamps")
        for rec in inside:
            rec.ts_utc = rec.ts_utc + shift
            rec.flags = set(rec.flags) | {QualityFlag.TIME_CORRECTED}
        store.rewrite_channel(channel_id, outside + inside)

        touched = sorted({e.get("upload_id") for e in store.provenance_entries()
                          if channel_id in (e.get("channels") or {})})
        store.append_provenance({
            "upload_id": f"tc-{channel_id}-{datetime.now(UTC).strftime('%Y%m%dT%H%M%S')}",
            "kind": "time_correction",
            "ingested_at_utc": datetime.now(UTC).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "user": user,
            "channel_id": channel_id,
            "offset_hours": offset_hours,
            "window": [from_utc.strftime("%Y-%m-%dT%H:%M:%SZ"),
                       to_utc.strftime("%Y-%m-%dT%H:%M:%SZ")],
            "corrected_count": len(inside),
            "amends": touched,
            "notes": f"shifted ts_utc by {-offset_hours}h after sunrise check",
        })
    return len(inside)
