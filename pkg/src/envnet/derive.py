"""Derived data products from radiation, temperature and humidity channels.

A phenology mast carries paired incoming/reflected quantum (PAR band,
400-700 nm) and silicon pyranometer (roughly 300-1100 nm) sensors.
Band reflectances come from flux ratios:

    rho_par = par_refl / par_in
    rho_nir = (pyr_refl - E(par_refl)) / (pyr_in - E(par_in))

where E() converts quantum flux to energy flux (default 4.57 umol/J),
so the NIR band is the pyranometer band with the PAR band subtracted.
NDVI and the two-band EVI2 follow from the reflectance pair. Understory
nodes measuring transmitted PAR give canopy transmittance tau, hence
fAPAR = 1 - tau and LAI = -ln(tau)/k (Beer-Lambert, per-ecosystem k).
Vapour pressure deficit uses the Magnus saturation curve.

Products are exposed to the query engine as virtual channels:

    derived:ndvi:<tower_deployment>    derived:evi2:<tower_deployment>
    derived:fapar:<node>               derived:lai:<node>
    derived:vpd:<node>
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime

from .errors import NightOrDegenerate, UnknownChannel, UnknownDeployment
from .model import QualityFlag

PAR_ENERGY_UMOL_PER_J = 4.57
INDEX_EPS_W_M2 = 1.0
LAI_MAX = 10.0
DERIVED_METHOD = "broadband-band-subtraction"
PRODUCTS = ("ndvi", "evi2", "fapar", "lai", "vpd")


def par_energy(par_flux: float, umol_per_j: float = PAR_ENERGY_UMOL_PER_J) -> float:
    """Quantum PAR flux (umol/m2/s) to energy flux (W/m2)."""
    return par_flux / umol_per_j


@dataclass
class RadiationQuadruple:
    ts: datetime
    par_in: float
    par_refl: float
    pyr_in: float
    pyr_refl: float


@dataclass
class IndexPoint:
    ts: datetime
    ndvi: float
    evi2: float
    rho_par: float
    rho_nir: float
    clamped: bool = False


def broadband_ndvi(q: RadiationQuadruple,
                   umol_per_j: float = PAR_ENERGY_UMOL_PER_J) -> IndexPoint:
    """Broadband NDVI from one co-timed radiation quadruple.

    Raises NightOrDegenerate when the inputs cannot support the ratio
    (pre-dawn, sensor failure); batch derivation skips such points.
    Non-physical inputs clamp the index into [-1, 1] and set the marker.
    """
    e_par_in = par_energy(q.par_in, umol_per_j)
    nir_in = q.pyr_in - e_par_in
    if nir_in <= INDEX_EPS_W_M2 or e_par_in <= INDEX_EPS_W_M2:
        raise NightOrDegenerate(
            f"insufficient radiation at {q.ts:%Y-%m-%dT%H:%M:%SZ}")
    rho_par = q.par_refl / q.par_in
    rho_nir = (q.pyr_refl - par_energy(q.par_refl, umol_per_j)) / nir_in
    denom = rho_nir + rho_par
    ndvi = (rho_nir - rho_par) / denom if denom > 0 else 0.0
    clamped = False
    if not -1.0 <= ndvi <= 1.0:
        ndvi = max(-1.0, min(1.0, ndvi))
        clamped = True
    return IndexPoint(ts=q.ts, ndvi=ndvi, evi2=evi2(rho_nir, rho_par),
                      rho_par=rho_par, rho_nir=rho_nir, clamped=clamped)


def evi2(rho_nir: float, rho_par: float) -> float:
    """Two-band enhanced vegetation index (no blue band required)."""
    return 2.5 * (rho_nir - rho_par) / (rho_nir + 2.4 * rho_par + 1.0)


@dataclass
class FaparLai:
    fapar: float
    lai: float
    capped: bool = False
    flagged: bool = False


def fapar_and_lai(par_above_in: float, par_understory: float,
                  k: float = 0.5) -> FaparLai:
    """Canopy absorption and leaf area from above/below PAR.

    tau = below/above; fapar = 1 - tau; lai = -ln(tau)/k capped at 10 so
    a dark understory reads as saturation rather than infinity. Readings
    with below > above (sensor noise) are clamped and flagged.
    """
    if k <= 0:
        raise ValueError("extinction coefficient k must be > 0")
    if par_above_in <= INDEX_EPS_W_M2 * PAR_ENERGY_UMOL_PER_J:
        raise NightOrDegenerate("above-canopy PAR too low")
    flagged = False
    if par_understory < 0 or par_understory > par_above_in:
        flagged = True
        par_understory = min(max(par_understory, 0.0), par_above_in)
    tau = par_understory / par_above_in
    fapar = 1.0 - tau
    if tau <= 0:
        return FaparLai(fapar=fapar, lai=LAI_MAX, capped=True, flagged=flagged)
    lai = -math.log(tau) / k
    if lai > LAI_MAX:
        return FaparLai(fapar=fapar, lai=LAI_MAX, capped=True, flagged=flagged)
    return FaparLai(fapar=fapar, lai=lai, flagged=flagged)


def vpd(temp_C: float, rh_pct: float) -> float:
    """Vapour pressure deficit in kPa (Magnus saturation curve)."""
    if not 0.0 <= rh_pct <= 100.0:
        raise ValueError("relative humidity must be in [0, 100]")
    es = 0.6108 * math.exp(17.27 * temp_C / (temp_C + 237.3))
    return es * (1.0 - rh_pct / 100.0)


def footprint_radius(h: float) -> float:
    """Ground radius seen by a radiation sensor h meters above the target.

    Flux sensors accept view angles out to 85 degrees from vertical, so
    the footprint radius is tan(85 deg) * h, about 11.43 m per meter of
    clearance.
    """
    if h < 0:
        raise ValueError("height must be >= 0")
    return math.tan(math.radians(85.0)) * h


# -- virtual channels ---------------------------------------------------------


@dataclass
class DerivedSeries:
    channel_id: str
    product: str
    target: str
    deployment_id: str
    utc_offset_min: int
    method: str
    points: list[tuple[datetime, float]]


def parse_virtual_id(channel_id: str) -> tuple[str, str]:
    parts = channel_id.split(":")
    if len(parts) != 3 or parts[0] != "derived" or parts[1] not in PRODUCTS:
        raise UnknownChannel(f"not a derived channel id: {channel_id}")
    return parts[1], parts[2]


def _clean_series(store, channel_id, from_utc, to_utc) -> dict[datetime, float]:
    bad = {QualityFlag.OUT_OF_RANGE, QualityFlag.MISSING}
    return {r.ts_utc: r.eng_value
            for r in store.read_records(channel_id, from_utc, to_utc)
            if r.eng_value is not None and not (bad & r.flags)}


def _find_channel(dep, variable: str, orientation: str, node_id: str | None = None) -> str | None:
    for node in dep.nodes:
        if node_id is not None and node.node_id != node_id:
            continue
        for ch in node.channels:
            if ch.variable == variable and ch.orientation == orientation:
                return ch.channel_id
    return None


def _tower_for_site(store, site_id: str):
    for dep in store.manifest.deployments.values():
        if dep.site_id == site_id and dep.kind == "tower" \
                and _find_channel(dep, "par_umol_m2_s", "incoming"):
            return dep
    return None


def materialize(store, channel_id: str, from_utc: datetime,
                to_utc: datetime) -> DerivedSeries:
    """Compute a derived virtual channel as a per-record series.

    Derivation is defined per record; any aggregation happens afterwards
    in the query engine, so derive-then-aggregate is the contract.
    """
    product, target = parse_virtual_id(channel_id)
    if product in ("ndvi", "evi2"):
        return _materialize_index(store, channel_id, product, target, from_utc, to_utc)
    if product in ("fapar", "lai"):
        return _materialize_canopy(store, channel_id, product, target, from_utc, to_utc)
    return _materialize_vpd(store, channel_id, target, from_utc, to_utc)


def _materialize_index(store, channel_id, product, deployment_id, from_utc, to_utc):
    try:
        dep = store.deployment(deployment_id)
    except UnknownDeployment:
        raise UnknownChannel(f"unknown derived target: {channel_id}") from None
    site = store.site(dep.site_id)
    ids = {
        "par_in": _find_channel(dep, "par_umol_m2_s", "incoming"),
        "par_refl": _find_channel(dep, "par_umol_m2_s", "reflected"),
        "pyr_in": _find_channel(dep, "solar_W_m2", "incoming"),
        "pyr_refl": _find_channel(dep, "solar_W_m2", "reflected"),
    }
    missing = [k for k, v in ids.items() if v is None]
    if missing:
        raise UnknownChannel(
            f"deployment {deployment_id} lacks radiation channels: {missing}")
    series = {k: _clean_series(store, v, from_utc, to_utc) for k, v in ids.items()}
    common = sorted(set(series["par_in"]) & set(series["par_refl"])
                    & set(series["pyr_in"]) & set(series["pyr_refl"]))
    points = []
    for ts in common:
        q = RadiationQuadruple(ts=ts,
                               par_in=series["par_in"][ts],
                               par_refl=series["par_refl"][ts],
                               pyr_in=series["pyr_in"][ts],
                               pyr_refl=series["pyr_refl"][ts])
        try:
            point = broadband_ndvi(q, dep.par_energy_umol_per_j)
        except NightOrDegenerate:
            continue
        points.append((ts, point.ndvi if product == "ndvi" else point.evi2))
    return DerivedSeries(channel_id, product, deployment_id, dep.deployment_id,
                         site.utc_offset_standard, DERIVED_METHOD, points)


def _materialize_canopy(store, channel_id, product, node_id, from_utc, to_utc):
    dep, node = _deployment_of_node(store, node_id)
    site = store.site(dep.site_id)
    below_id = _find_channel(dep, "par_umol_m2_s", "incoming", node_id=node_id)
    if below_id is None:
        raise UnknownChannel(f"node {node_id} has no understory PAR channel")
    tower = _tower_for_site(store, dep.site_id)
    if tower is None:
        raise UnknownChannel(
            f"no tower deployment with incoming PAR at site {dep.site_id}")
    above_id = _find_channel(tower, "par_umol_m2_s", "incoming")
    below = _clean_series(store, below_id, from_utc, to_utc)
    above = _clean_series(store, above_id, from_utc, to_utc)
    points = []
    for ts in sorted(set(below) & set(above)):
        try:
            result = fapar_and_lai(above[ts], below[ts], k=dep.extinction_k)
        except NightOrDegenerate:
            continue
        points.append((ts, result.fapar if product == "fapar" else result.lai))
    return DerivedSeries(channel_id, product, node_id, dep.deployment_id,
                         site.utc_offset_standard, "beer-lambert", points)


def _materialize_vpd(store, channel_id, node_id, from_utc, to_utc):
    dep, node = _deployment_of_node(store, node_id)
    site = store.site(dep.site_id)
    temp_id = _find_channel(dep, "air_temp_C", "none", node_id=node_id)
    rh_id = _find_channel(dep, "rel_humidity_pct", "none", node_id=node_id)
    if temp_id is None or rh_id is None:
        raise UnknownChannel(f"node {node_id} lacks temperature/humidity channels")
    temp = _clean_series(store, temp_id, from_utc, to_utc)
    rh = _clean_series(store, rh_id, from_utc, to_utc)
    points = []
    for ts in sorted(set(temp) & set(rh)):
        rh_val = min(max(rh[ts], 0.0), 100.0)
        points.append((ts, vpd(temp[ts], rh_val)))
    return DerivedSeries(channel_id, "vpd", node_id, dep.deployment_id,
                         site.utc_offset_standard, "magnus", points)


def _deployment_of_node(store, node_id: str):
    for dep in store.manifest.deployments.values():
        for node in dep.nodes:
            if node.node_id == node_id:
                return dep, node
    raise UnknownChannel(f"unknown node: {node_id}")
