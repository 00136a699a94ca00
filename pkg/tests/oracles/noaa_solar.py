"""Independent sunrise oracle: the NOAA solar calculator spreadsheet algorithm.

Implements the full NOAA workbook chain (Julian century, mean anomaly,
orbital eccentricity, apparent longitude, corrected obliquity) rather than
the production code's compact Fourier model, so the two act as independent
routes to the same quantity. Used to generate and cross-check the frozen
sunrise fixture table.
"""

import math
from datetime import date


def sunrise_minutes(lat: float, lon: float, tz_hours: float, d: date) -> float | None:
    """Sunrise in minutes after local midnight, or None for polar day/night."""
    excel_date = d.toordinal() - date(1899, 12, 30).toordinal()
    jd = excel_date + 2415018.5 + 0.5 - tz_hours / 24.0
    jc = (jd - 2451545.0) / 36525.0

    gmls = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    gmas = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    eeo = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    seoc = (math.sin(math.radians(gmas)) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
            + math.sin(math.radians(2 * gmas)) * (0.019993 - 0.000101 * jc)
            + math.sin(math.radians(3 * gmas)) * 0.000289)
    sal = gmls + seoc - 0.00569 - 0.00478 * math.sin(math.radians(125.04 - 1934.136 * jc))
    moe = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    oc = moe + 0.00256 * math.cos(math.radians(125.04 - 1934.136 * jc))
    decl = math.degrees(math.asin(math.sin(math.radians(oc)) * math.sin(math.radians(sal))))
    vary = math.tan(math.radians(oc / 2.0)) ** 2
    eot = 4.0 * math.degrees(
        vary * math.sin(2.0 * math.radians(gmls))
        - 2.0 * eeo * math.sin(math.radians(gmas))
        + 4.0 * eeo * vary * math.sin(math.radians(gmas)) * math.cos(2.0 * math.radians(gmls))
        - 0.5 * vary * vary * math.sin(4.0 * math.radians(gmls))
        - 1.25 * eeo * eeo * math.sin(2.0 * math.radians(gmas)))

    cos_ha = (math.cos(math.radians(90.833))
              / (math.cos(math.radians(lat)) * math.cos(math.radians(decl)))
              - math.tan(math.radians(lat)) * math.tan(math.radians(decl)))
    if cos_ha < -1.0 or cos_ha > 1.0:
        return None
    ha = math.degrees(math.acos(cos_ha))
    solar_noon_frac = (720.0 - 4.0 * lon - eot + tz_hours * 60.0) / 1440.0
    return (solar_noon_frac - ha * 4.0 / 1440.0) * 1440.0
