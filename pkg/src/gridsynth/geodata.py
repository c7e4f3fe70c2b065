"""Geographic infrastructure records and geometric primitives.

Ingests the raw inputs of the synthesis pipeline: transmission-line paths
(GeoJSON LineStrings), substation / generator point records and census-tract
hourly load profiles (CSV).  All distance math is great-circle (haversine) on
a 6,371 km sphere; no projection is ever applied, so thresholds expressed in
meters mean the same thing everywhere in the dataset.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_MILE = 1609.344

# Canonical fuel tokens accepted in generator records.
FUEL_TYPES = frozenset({
    "solar", "wind", "nuclear", "hydro", "geothermal",
    "biomass", "landfill_gas", "municipal_solid_waste",
    "natural_gas_cc", "natural_gas_ct", "natural_gas_st", "other_natural_gas",
    "import", "other",
})
# Zero-cost fuels; solar and wind additionally get per-scenario capacity caps.
RENEWABLE_FUELS = frozenset({"solar", "wind", "hydro", "geothermal"})
SCALABLE_FUELS = frozenset({"solar", "wind"})


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-ish latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValidationError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


def geo_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters.

    Symmetric, nonnegative, and zero only for identical coordinates.
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def ecef_coords(lats, lons) -> np.ndarray:
    """Map degree coordinates onto a sphere of Earth radius, shape (n, 3).

    Chord length between the images is a monotone proxy for great-circle
    distance, which makes KD-trees usable for radius queries in meters.
    """
    phi = np.radians(np.asarray(lats, dtype=float))
    lam = np.radians(np.asarray(lons, dtype=float))
    cos_phi = np.cos(phi)
    return EARTH_RADIUS_M * np.column_stack(
        (cos_phi * np.cos(lam), cos_phi * np.sin(lam), np.sin(phi))
    )


def chord_for_arc(arc_m: float) -> float:
    """Chord length equivalent to a great-circle arc length, both in meters."""
    return 2.0 * EARTH_RADIUS_M * math.sin(min(arc_m, math.pi * EARTH_RADIUS_M) / (2.0 * EARTH_RADIUS_M))


def arc_for_chord(chord_m: float) -> float:
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, chord_m / (2.0 * EARTH_RADIUS_M)))


@dataclass(frozen=True)
class LinePath:
    """A transmission-line polyline with voltage and ownership attributes."""

    id: str
    points: tuple[GeoPoint, ...]
    voltage_kv: float
    owner: str | None = None
    name: str | None = None

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValidationError(f"line {self.id}: needs at least 2 points")
        if self.voltage_kv <= 0:
            raise ValidationError(f"line {self.id}: voltage must be positive")
        for i in range(1, len(self.points)):
            p, q = self.points[i - 1], self.points[i]
            if p.lat == q.lat and p.lon == q.lon:
                raise ValidationError(f"line {self.id}: consecutive duplicate point at index {i}")


def path_length(path: LinePath) -> float:
    """Polyline length in miles: sum of segment great-circle distances."""
    total = 0.0
    for i in range(1, len(path.points)):
        total += geo_distance(path.points[i - 1], path.points[i])
    return total / METERS_PER_MILE


@dataclass(frozen=True)
class SubstationRecord:
    id: str
    location: GeoPoint
    name: str | None = None


@dataclass(frozen=True)
class GeneratorRecord:
    id: str
    location: GeoPoint
    fuel_type: str
    pmax_mw: float
    pmin_mw: float
    power_factor: float
    plant_code: str | None = None
    unit_id: str | None = None

    def __post_init__(self):
        if self.fuel_type not in FUEL_TYPES:
            raise ValidationError(f"generator {self.id}: unknown fuel '{self.fuel_type}'")
        if self.pmax_mw <= 0:
            raise ValidationError(f"generator {self.id}: pmax must be positive")
        if not 0 <= self.pmin_mw <= self.pmax_mw:
            raise ValidationError(f"generator {self.id}: need 0 <= pmin <= pmax")
        if not 0 < self.power_factor <= 1.0:
            raise ValidationError(f"generator {self.id}: power factor must be in (0, 1]")


@dataclass(frozen=True)
class LoadRecord:
    tract_id: str
    location: GeoPoint
    profile: tuple[float, ...]

    def __post_init__(self):
        if any(v < 0 or not math.isfinite(v) for v in self.profile):
            raise ValidationError(f"load {self.tract_id}: profile values must be finite and >= 0")


@dataclass
class Dataset:
    """Validated record collections, keyed by id in input order."""

    lines: dict[str, LinePath] = field(default_factory=dict)
    substations: dict[str, SubstationRecord] = field(default_factory=dict)
    generators: dict[str, GeneratorRecord] = field(default_factory=dict)
    loads: dict[str, LoadRecord] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        for rec in self.loads.values():
            return len(rec.profile)
        return 0


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _fail(path, record, message):
    raise ValidationError(f"{path}: record '{record}': {message}")


def _coord(path, record, name, raw):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        _fail(path, record, f"field '{name}' is not a number: {raw!r}")
    return value


def _point(path, record, lat_raw, lon_raw) -> GeoPoint:
    lat = _coord(path, record, "lat", lat_raw)
    lon = _coord(path, record, "lon", lon_raw)
    try:
        return GeoPoint(lat, lon)
    except ValidationError as exc:
        _fail(path, record, str(exc))


def load_line_paths(path) -> dict[str, LinePath]:
    """Parse a GeoJSON FeatureCollection of LineString features."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise ValidationError(f"{path}: expected a FeatureCollection")
    lines: dict[str, LinePath] = {}
    for n, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        line_id = props.get("id")
        label = str(line_id) if line_id is not None else f"feature #{n}"
        if line_id is None:
            _fail(path, label, "missing property 'id'")
        geom = feature.get("geometry") or {}
        if geom.get("type") != "LineString":
            _fail(path, label, f"geometry type {geom.get('type')!r}, expected LineString")
        if "kv" not in props:
            _fail(path, label, "missing property 'kv'")
        kv = _coord(path, label, "kv", props["kv"])
        coords = geom.get("coordinates") or []
        points = []
        for lon, lat in coords:
            points.append(_point(path, label, lat, lon))
        if str(line_id) in lines:
            _fail(path, label, "duplicate line id")
        try:
            lines[str(line_id)] = LinePath(
                id=str(line_id),
                points=tuple(points),
                voltage_kv=kv,
                owner=props.get("owner"),
                name=props.get("name"),
            )
        except ValidationError as exc:
            _fail(path, label, str(exc))
    return lines


def _read_csv(path, required_prefix):
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[: len(required_prefix)] != list(required_prefix):
            raise ValidationError(
                f"{path}: header must start with {','.join(required_prefix)}, got {','.join(header)}"
            )
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return header, rows


def load_substations(path) -> dict[str, SubstationRecord]:
    """CSV with header id,lat,lon,name."""
    _, rows = _read_csv(path, ("id", "lat", "lon", "name"))
    records: dict[str, SubstationRecord] = {}
    for row in rows:
        sid = row[0].strip()
        if sid in records:
            _fail(path, sid, "duplicate substation id")
        records[sid] = SubstationRecord(
            id=sid,
            location=_point(path, sid, row[1], row[2]),
            name=row[3].strip() or None if len(row) > 3 else None,
        )
    return records


def load_generators(path) -> dict[str, GeneratorRecord]:
    """CSV with header id,lat,lon,fuel,pmax_mw,pmin_mw,pf,plant_code,unit_id."""
    _, rows = _read_csv(path, ("id", "lat", "lon", "fuel", "pmax_mw", "pmin_mw", "pf"))
    records: dict[str, GeneratorRecord] = {}
    for row in rows:
        gid = row[0].strip()
        if gid in records:
            _fail(path, gid, "duplicate generator id")
        try:
            records[gid] = GeneratorRecord(
                id=gid,
                location=_point(path, gid, row[1], row[2]),
                fuel_type=row[3].strip(),
                pmax_mw=_coord(path, gid, "pmax_mw", row[4]),
                pmin_mw=_coord(path, gid, "pmin_mw", row[5]),
                power_factor=_coord(path, gid, "pf", row[6]),
                plant_code=(row[7].strip() or None) if len(row) > 7 else None,
                unit_id=(row[8].strip() or None) if len(row) > 8 else None,
            )
        except ValidationError as exc:
            if str(exc).startswith(str(path)):
                raise
            _fail(path, gid, str(exc))
    return records


def load_loads(path) -> dict[str, LoadRecord]:
    """CSV with header tract_id,lat,lon,h0,h1,...; uniform profile length."""
    header, rows = _read_csv(path, ("tract_id", "lat", "lon"))
    horizon = len(header) - 3
    if horizon < 1:
        raise ValidationError(f"{path}: no hourly columns after tract_id,lat,lon")
    records: dict[str, LoadRecord] = {}
    for row in rows:
        tid = row[0].strip()
        if tid in records:
            _fail(path, tid, "duplicate tract id")
        if len(row) != 3 + horizon:
            _fail(path, tid, f"expected {horizon} hourly values, got {len(row) - 3}")
        profile = tuple(_coord(path, tid, f"h{i}", row[3 + i]) for i in range(horizon))
        try:
            records[tid] = LoadRecord(tract_id=tid, location=_point(path, tid, row[1], row[2]), profile=profile)
        except ValidationError as exc:
            if str(exc).startswith(str(path)):
                raise
            _fail(path, tid, str(exc))
    return records


def load_dataset(lines_path, substations_path, generators_path, loads_path) -> Dataset:
    """Ingest and validate the four raw sources into one Dataset."""
    dataset = Dataset(
        lines=load_line_paths(lines_path),
        substations=load_substations(substations_path),
        generators=load_generators(generators_path),
        loads=load_loads(loads_path),
    )
    lengths = {len(rec.profile) for rec in dataset.loads.values()}
    if len(lengths) > 1:
        raise ValidationError(f"{loads_path}: load profiles have mixed lengths {sorted(lengths)}")
    return dataset


# ---------------------------------------------------------------------------
# export (round-trip counterpart of load_dataset, also used by checkpoints)
# ---------------------------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def export_dataset(dataset: Dataset, out_dir) -> dict[str, Path]:
    """Write the dataset back out in the ingestion schemas; returns file map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "lines": out / "lines.geojson",
        "substations": out / "substations.csv",
        "generators": out / "generators.csv",
        "loads": out / "loads.csv",
    }

    features = []
    for line in dataset.lines.values():
        props = {"id": line.id, "kv": line.voltage_kv}
        if line.owner is not None:
            props["owner"] = line.owner
        if line.name is not None:
            props["name"] = line.name
        features.append({
            "type": "Feature",
            "properties": props,
            "geometry": {
                "type": "LineString",
                "coordinates": [[p.lon, p.lat] for p in line.points],
            },
        })
    files["lines"].write_text(json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True))

    with files["substations"].open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "lat", "lon", "name"])
        for rec in dataset.substations.values():
            writer.writerow([rec.id, _num(rec.location.lat), _num(rec.location.lon), rec.name or ""])

    with files["generators"].open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "lat", "lon", "fuel", "pmax_mw", "pmin_mw", "pf", "plant_code", "unit_id"])
        for rec in dataset.generators.values():
            writer.writerow([
                rec.id, _num(rec.location.lat), _num(rec.location.lon), rec.fuel_type,
                _num(rec.pmax_mw), _num(rec.pmin_mw), _num(rec.power_factor),
                rec.plant_code or "", rec.unit_id or "",
            ])

    horizon = dataset.horizon
    with files["loads"].open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tract_id", "lat", "lon"] + [f"h{i}" for i in range(horizon)])
        for rec in dataset.loads.values():
            writer.writerow([rec.tract_id, _num(rec.location.lat), _num(rec.location.lon)]
                            + [_num(v) for v in rec.profile])

    return files
