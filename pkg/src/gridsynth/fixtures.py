"""Deterministic synthetic-region dataset for tests and demos.

Builds a fictional service territory on a ~130 km square: a 230 kV backbone
ring with spurs, 115 kV subtransmission in the north and south, a few 66 kV
radial feeders, multi-segment corridors that need interconnection nodes, a
line that tees into another mid-path, a two-bus island that the connectivity
pass must drop, and a year (or any horizon) of hourly tract loads plus
system-wide solar/wind totals.  Everything is generated from a fixed seed, so
two builds of the same fixture are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .config import RunConfig

LAT0 = 37.0
LON0 = -120.0
KM_PER_DEG_LAT = 111.1949
KM_PER_DEG_LON = KM_PER_DEG_LAT * math.cos(math.radians(LAT0))


def _pt(km_e: float, km_n: float) -> tuple[float, float]:
    """(lat, lon) for a point km east/north of the region origin."""
    return (LAT0 + km_n / KM_PER_DEG_LAT, LON0 + km_e / KM_PER_DEG_LON)


SUBSTATIONS = {
    # id: (km_e, km_n)
    "S01": (0.0, 0.0), "S02": (40.0, 10.0), "S03": (80.0, 0.0),
    "S04": (70.0, 40.0), "S05": (30.0, 50.0), "S06": (-10.0, 35.0),
    "S07": (110.0, 20.0), "S08": (55.0, 75.0), "S09": (10.0, 75.0),
    "S10": (-20.0, 70.0), "S11": (60.0, -25.0), "S12": (90.0, 55.0),
    "S13": (100.0, -10.0), "S14": (-30.0, 45.0), "S15": (20.0, -30.0),
    "S16": (-15.0, -20.0), "S18": (120.0, 35.0),
    # island pair, disconnected from the mainland
    "S90": (160.0, 120.0), "S91": (170.0, 125.0),
}

# loose points where radial feeders end or corridors join (no substation)
POINT_M = (20.0, 6.0)      # join of the two S01-S02 230 kV segments
POINT_M2 = (76.0, 20.0)    # join of the two S03-S04 230 kV segments
POINT_J = (45.0, 65.0)     # tee point on the S05-S08 115 kV line
POINT_E1 = (8.0, 85.0)     # 66 kV radial end north
POINT_E2 = (-25.0, -28.0)  # 66 kV radial end south
POINT_E3 = (-25.0, 78.0)   # 66 kV radial end west

LINES = [
    # (id, kv, owner, [(km_e, km_n), ...])
    ("L230_1a", 230, "NorthGrid", [SUBSTATIONS["S01"], (10.0, 4.0), POINT_M]),
    ("L230_1b", 230, "NorthGrid", [POINT_M, (30.0, 9.0), SUBSTATIONS["S02"]]),
    ("L230_2", 230, "NorthGrid", [SUBSTATIONS["S02"], (60.0, 6.0), SUBSTATIONS["S03"]]),
    ("L230_3a", 230, "NorthGrid", [SUBSTATIONS["S03"], POINT_M2]),
    ("L230_3b", 230, "NorthGrid", [POINT_M2, SUBSTATIONS["S04"]]),
    ("L230_4", 230, "NorthGrid", [SUBSTATIONS["S04"], (50.0, 46.0), SUBSTATIONS["S05"]]),
    ("L230_5", 230, "NorthGrid", [SUBSTATIONS["S05"], (8.0, 44.0), SUBSTATIONS["S06"]]),
    ("L230_6", 230, "NorthGrid", [SUBSTATIONS["S06"], SUBSTATIONS["S01"]]),
    ("L230_7", 230, None, [SUBSTATIONS["S03"], (95.0, 12.0), SUBSTATIONS["S07"]]),
    ("L230_8", 230, None, [SUBSTATIONS["S07"], SUBSTATIONS["S18"]]),
    ("L115_N1", 115, "NorthGrid", [SUBSTATIONS["S05"], POINT_J, SUBSTATIONS["S08"]]),
    ("L115_N2", 115, "NorthGrid", [SUBSTATIONS["S12"], (70.0, 60.0), POINT_J]),
    ("L115_N3", 115, "NorthGrid", [SUBSTATIONS["S08"], SUBSTATIONS["S12"]]),
    ("L115_N4", 115, "NorthGrid", [SUBSTATIONS["S05"], (18.0, 62.0), SUBSTATIONS["S09"]]),
    ("L115_N5", 115, "NorthGrid", [SUBSTATIONS["S09"], SUBSTATIONS["S10"]]),
    ("L115_N7", 115, None, [SUBSTATIONS["S02"], (52.0, -8.0), SUBSTATIONS["S11"]]),
    ("L115_N8", 115, "NorthGrid", [SUBSTATIONS["S10"], SUBSTATIONS["S14"]]),
    ("L115_S1", 115, "SouthGrid", [SUBSTATIONS["S01"], (-8.0, -12.0), SUBSTATIONS["S16"]]),
    ("L115_S2", 115, "SouthGrid", [SUBSTATIONS["S16"], (2.0, -27.0), SUBSTATIONS["S15"]]),
    ("L115_S3", 115, "SouthGrid", [SUBSTATIONS["S15"], SUBSTATIONS["S11"]]),
    ("L115_S4", 115, "SouthGrid", [SUBSTATIONS["S11"], SUBSTATIONS["S13"]]),
    ("L115_S5", 115, "SouthGrid", [SUBSTATIONS["S03"], (70.0, -14.0), SUBSTATIONS["S11"]]),
    ("L66_1", 66, "NorthGrid", [SUBSTATIONS["S09"], (9.0, 80.0), POINT_E1]),
    ("L66_2", 66, "SouthGrid", [SUBSTATIONS["S16"], POINT_E2]),
    ("L66_3", 66, None, [SUBSTATIONS["S10"], POINT_E3]),
    ("L230_ISL", 230, None, [SUBSTATIONS["S90"], SUBSTATIONS["S91"]]),
]

GENERATORS = [
    # (id, at, fuel, pmax, pmin, pf, plant_code, unit_id)
    ("G01", "S01", "natural_gas_cc", 300.0, 50.0, 0.90, "P100", "U1"),
    ("G02", "S02", "import", 250.0, 0.0, 0.95, "", ""),
    ("G03", "S03", "nuclear", 400.0, 150.0, 0.90, "", ""),
    ("G04", "S04", "natural_gas_cc", 250.0, 40.0, 0.90, "", ""),
    ("G05", "S05", "hydro", 150.0, 0.0, 0.90, "", ""),
    ("G06", "S06", "natural_gas_ct", 120.0, 0.0, 0.85, "", ""),
    ("G07", "S07", "natural_gas_st", 100.0, 20.0, 0.85, "", ""),
    ("G08", "S12", "wind", 120.0, 0.0, 0.95, "", ""),
    ("G09", "S10", "solar", 100.0, 0.0, 1.00, "", ""),
    ("G10", "S11", "solar", 150.0, 0.0, 1.00, "", ""),
    ("G11", "S08", "wind", 80.0, 0.0, 0.95, "", ""),
    ("G12", "S15", "natural_gas_ct", 90.0, 0.0, 0.85, "", ""),
    ("G13", "S16", "solar", 80.0, 0.0, 1.00, "", ""),
    ("G14", "S13", "biomass", 40.0, 0.0, 0.90, "", ""),
    ("G15", "S14", "geothermal", 60.0, 0.0, 0.95, "", ""),
    ("G16", "S18", "other_natural_gas", 70.0, 0.0, 0.85, "", ""),
    ("G17", "S90", "natural_gas_st", 50.0, 0.0, 0.85, "", ""),
]

TRACT_CLUSTERS = [
    # (center key, tract count, weight factor); radial-end feeders stay light
    ("S01", 2, 1.0), ("S02", 3, 1.0), ("S03", 2, 1.0), ("S04", 2, 1.0),
    ("S05", 2, 1.0), ("S06", 2, 1.0), ("S07", 2, 1.0), ("S08", 2, 1.0),
    ("S09", 3, 1.0), ("S10", 3, 1.0), ("S11", 3, 1.0), ("S12", 2, 1.0),
    ("S13", 2, 1.0), ("S14", 2, 1.0), ("S15", 3, 1.0), ("S16", 3, 1.0),
    ("S18", 2, 1.0),
    ("E1", 1, 0.5), ("E2", 1, 0.5), ("E3", 1, 0.5), ("ISL", 2, 1.0),
]
CLUSTER_POINTS = {
    "E1": POINT_E1, "E2": POINT_E2, "E3": POINT_E3, "ISL": (168.0, 124.0),
}
PEAK_TOTAL_MW = 950.0

COST_CATALOG = [
    # (plant_code, unit_id, fuel, pmax, c2, c1, c0)
    ("P100", "U1", "natural_gas_cc", 300.0, 0.003, 30.0, 600.0),
    ("", "", "natural_gas_cc", 200.0, 0.004, 32.0, 400.0),
    ("", "", "natural_gas_cc", 350.0, 0.0028, 29.0, 650.0),
    ("", "", "natural_gas_ct", 60.0, 0.02, 52.0, 150.0),
    ("", "", "natural_gas_ct", 150.0, 0.014, 48.0, 260.0),
    ("", "", "natural_gas_st", 90.0, 0.009, 42.0, 280.0),
    ("", "", "natural_gas_st", 220.0, 0.007, 39.0, 420.0),
    ("", "", "biomass", 45.0, 0.012, 46.0, 120.0),
    ("", "", "landfill_gas", 25.0, 0.02, 38.0, 60.0),
]

FORM1 = [
    # (utility, kv, length_miles, conductors_per_phase, kcmil)
    ("NorthGrid", 230, 12.0, 1, 795.0),
    ("NorthGrid", 230, 30.0, 1, 795.0),
    ("NorthGrid", 230, 55.0, 1, 954.0),
    ("SouthGrid", 230, 25.0, 1, 795.0),
    ("NorthGrid", 115, 8.0, 1, 336.4),
    ("NorthGrid", 115, 15.0, 1, 397.5),
    ("NorthGrid", 115, 30.0, 1, 477.0),
    ("SouthGrid", 115, 22.0, 1, 477.0),
    ("SouthGrid", 115, 40.0, 1, 556.5),
    ("NorthGrid", 66, 4.0, 1, 266.8),
    ("NorthGrid", 66, 9.0, 1, 336.4),
    ("SouthGrid", 66, 12.0, 1, 397.5),
]


# the annual peak sits around day 45 so short test horizons still include it
PEAK_DAY = 45


def _load_multiplier(hour: int) -> float:
    """Smooth seasonal/daily/weekly load shape, peaking in the evening."""
    day = hour // 24
    hod = hour % 24
    seasonal = 0.82 + 0.18 * math.cos(2.0 * math.pi * (day - PEAK_DAY) / 365.0)
    daily = 0.62 + 0.38 * math.exp(-((hod - 18.5) / 4.5) ** 2)
    weekly = 0.92 if (day % 7) in (5, 6) else 1.0
    return seasonal * daily * weekly


def build_fixture(out_dir, hours: int = 8760, seed: int = 7) -> RunConfig:
    """Write the fixture dataset and a matching run config; returns the config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    features = []
    for lid, kv, owner, waypoints in LINES:
        props = {"id": lid, "kv": kv}
        if owner:
            props["owner"] = owner
        coords = []
        for km_e, km_n in waypoints:
            lat, lon = _pt(km_e, km_n)
            coords.append([lon, lat])
        features.append({
            "type": "Feature", "properties": props,
            "geometry": {"type": "LineString", "coordinates": coords},
        })
    (out / "lines.geojson").write_text(
        json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True)
    )

    with (out / "substations.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "lat", "lon", "name"])
        for sid, (km_e, km_n) in SUBSTATIONS.items():
            lat, lon = _pt(km_e, km_n)
            writer.writerow([sid, repr(lat), repr(lon), f"{sid} substation"])

    with (out / "generators.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "lat", "lon", "fuel", "pmax_mw", "pmin_mw", "pf",
                         "plant_code", "unit_id"])
        for gid, at, fuel, pmax, pmin, pf, plant, unit in GENERATORS:
            km_e, km_n = SUBSTATIONS[at]
            # plants sit a few hundred meters from the substation point
            lat, lon = _pt(km_e + 0.3, km_n + 0.2)
            writer.writerow([gid, repr(lat), repr(lon), fuel, repr(pmax), repr(pmin),
                             repr(pf), plant, unit])

    tracts = []
    total_weight = 0.0
    for center, count in TRACT_CLUSTERS:
        km_e, km_n = CLUSTER_POINTS.get(center, SUBSTATIONS.get(center, (0.0, 0.0)))
        for k in range(count):
            offset_e = float(rng.normal(0.0, 4.0))
            offset_n = float(rng.normal(0.0, 4.0))
            weight = float(rng.uniform(0.7, 1.3))
            tracts.append((f"T id {center} {k}".replace(" ", "_"),
                           km_e + offset_e, km_n + offset_n, weight))
            total_weight += weight
    noise = rng.uniform(-1.0, 1.0, size=(len(tracts), hours))
    multipliers = np.array([_load_multiplier(h) for h in range(hours)])
    with (out / "loads.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tract_id", "lat", "lon"] + [f"h{h}" for h in range(hours)])
        for i, (tid, km_e, km_n, weight) in enumerate(tracts):
            lat, lon = _pt(km_e, km_n)
            base = PEAK_TOTAL_MW * weight / total_weight
            profile = base * multipliers * (1.0 + 0.04 * noise[i])
            writer.writerow([tid, repr(lat), repr(lon)] + [repr(float(v)) for v in profile])

    solar_nameplate = sum(g[3] for g in GENERATORS if g[2] == "solar")
    wind_nameplate = sum(g[3] for g in GENERATORS if g[2] == "wind")
    wind_state = 0.45
    with (out / "renewables.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["hour", "solar_mw", "wind_mw"])
        for h in range(hours):
            day, hod = divmod(h, 24)
            sun = max(0.0, math.sin(math.pi * (hod - 6.0) / 12.0))
            season = 0.75 + 0.25 * math.cos(2.0 * math.pi * (day - PEAK_DAY) / 365.0)
            solar = solar_nameplate * 0.85 * season * sun ** 1.3
            wind_state = min(0.90, max(0.05, wind_state + float(rng.normal(0.0, 0.04))))
            wind = wind_nameplate * wind_state
            writer.writerow([h, repr(solar), repr(wind)])

    with (out / "cost_catalog.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["plant_code", "unit_id", "fuel", "pmax_mw", "c2", "c1", "c0"])
        for row in COST_CATALOG:
            writer.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]),
                             repr(row[5]), repr(row[6])])

    with (out / "form1.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["utility", "kv", "length_miles", "conductors_per_phase",
                         "kcmil", "material"])
        for utility, kv, length, per_phase, kcmil in FORM1:
            writer.writerow([utility, kv, repr(length), per_phase, repr(kcmil), "ACSR"])

    eval_start = max(0, min(hours - 744, 1392))
    config = RunConfig(
        lines_path=str(out / "lines.geojson"),
        substations_path=str(out / "substations.csv"),
        generators_path=str(out / "generators.csv"),
        loads_path=str(out / "loads.csv"),
        renewables_path=str(out / "renewables.csv"),
        cost_catalog_path=str(out / "cost_catalog.csv"),
        form1_path=str(out / "form1.csv"),
        sizing_tau_escalation_start=25,
        eval_start_hour=eval_start,
        eval_end_hour=eval_start + min(744, hours),
        dispatch_windows=[[eval_start, eval_start + 168],
                          [eval_start + 576, eval_start + 744]],
        rng_seed=seed,
    )
    config.to_json(out / "config.json")
    return config
