"""Case serialization: MATPOWER-style tables, GeoJSON paths, and model JSON.

The model JSON is the lossless canonical form (also used for stage
checkpoints).  `export_case` adds interchange views on top of it: a
MATPOWER-style case text with bus/branch/gen/gencost tables on the 100 MVA
base and a GeoJSON FeatureCollection carrying each line's geographic path,
keyed by branch id.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geodata import GeoPoint, LinePath
from .model import Branch, Bus, Condenser, CostCurve, Generator, GridModel, Load
from .powerflow import default_slack_bus


# ---------------------------------------------------------------------------
# model <-> JSON
# ---------------------------------------------------------------------------

def model_to_dict(model: GridModel, include_profiles: bool = True) -> dict:
    buses = [{
        "id": b.id, "lat": b.location.lat, "lon": b.location.lon, "kind": b.kind,
        "voltage_kv": b.voltage_kv, "origin": b.origin, "parent": b.parent,
        "parent_kind": b.parent_kind,
    } for b in model.buses.values()]
    branches = []
    for br in model.branches.values():
        branches.append({
            "id": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus, "kind": br.kind,
            "voltage_kv": br.voltage_kv, "kv_primary": br.kv_primary,
            "kv_secondary": br.kv_secondary,
            "r_pu": br.r_pu, "x_pu": br.x_pu, "b_pu": br.b_pu,
            "mva_rating": br.mva_rating, "option_index": br.option_index,
            "circuits": br.circuits, "doubled": br.doubled,
            "original_rating": br.original_rating, "xr_ratio": br.xr_ratio,
            "path": [[p.lon, p.lat] for p in br.path.points] if br.path else None,
            "owner": br.path.owner if br.path else None,
            "name": br.path.name if br.path else None,
        })
    generators = [{
        "id": g.id, "bus": g.bus, "fuel_type": g.fuel_type,
        "pmax_mw": g.pmax_mw, "pmin_mw": g.pmin_mw, "power_factor": g.power_factor,
        "qmax_mvar": g.qmax_mvar, "qmin_mvar": g.qmin_mvar,
        "plant_code": g.plant_code, "unit_id": g.unit_id,
        "cost": None if g.cost is None else {
            "c2": g.cost.c2, "c1": g.cost.c1, "c0": g.cost.c0, "kind": g.cost.kind,
        },
    } for g in model.generators.values()]
    loads = [{
        "tract_id": l.tract_id, "bus": l.bus,
        "lat": l.location.lat, "lon": l.location.lon,
        "profile": [float(v) for v in l.profile] if include_profiles else None,
    } for l in model.loads.values()]
    condensers = [{
        "bus": c.bus, "qmax_mvar": c.qmax_mvar, "active": c.active,
    } for c in model.condensers.values()]
    return {
        "base_mva": model.base_mva, "buses": buses, "branches": branches,
        "generators": generators, "loads": loads, "condensers": condensers,
    }


def model_from_dict(doc: dict, profiles: dict[str, np.ndarray] | None = None) -> GridModel:
    model = GridModel(base_mva=doc["base_mva"])
    for b in doc["buses"]:
        model.buses[b["id"]] = Bus(
            id=b["id"], location=GeoPoint(b["lat"], b["lon"]), kind=b["kind"],
            voltage_kv=b["voltage_kv"], origin=b["origin"], parent=b["parent"],
            parent_kind=b.get("parent_kind"),
        )
    for br in doc["branches"]:
        path = None
        if br["path"] is not None:
            path = LinePath(
                id=br["id"], points=tuple(GeoPoint(lat, lon) for lon, lat in br["path"]),
                voltage_kv=br["voltage_kv"], owner=br.get("owner"), name=br.get("name"),
            )
        model.branches[br["id"]] = Branch(
            id=br["id"], from_bus=br["from_bus"], to_bus=br["to_bus"], kind=br["kind"],
            path=path, voltage_kv=br["voltage_kv"], kv_primary=br["kv_primary"],
            kv_secondary=br["kv_secondary"], r_pu=br["r_pu"], x_pu=br["x_pu"],
            b_pu=br["b_pu"], mva_rating=br["mva_rating"],
            option_index=br["option_index"], circuits=br["circuits"],
            doubled=br["doubled"], original_rating=br["original_rating"],
            xr_ratio=br["xr_ratio"],
        )
    for g in doc["generators"]:
        cost = None
        if g["cost"] is not None:
            cost = CostCurve(c2=g["cost"]["c2"], c1=g["cost"]["c1"],
                             c0=g["cost"]["c0"], kind=g["cost"]["kind"])
        model.generators[g["id"]] = Generator(
            id=g["id"], bus=g["bus"], fuel_type=g["fuel_type"],
            pmax_mw=g["pmax_mw"], pmin_mw=g["pmin_mw"], power_factor=g["power_factor"],
            qmax_mvar=g["qmax_mvar"], qmin_mvar=g["qmin_mvar"],
            cost=cost, plant_code=g["plant_code"], unit_id=g["unit_id"],
        )
    for l in doc["loads"]:
        profile = l.get("profile")
        if profile is None and profiles is not None:
            profile = profiles.get(l["tract_id"])
        if profile is None:
            raise ValidationError(f"load {l['tract_id']}: no profile available")
        model.loads[l["tract_id"]] = Load(
            tract_id=l["tract_id"], bus=l["bus"],
            location=GeoPoint(l["lat"], l["lon"]), profile=np.asarray(profile, dtype=float),
        )
    for c in doc["condensers"]:
        model.condensers[c["bus"]] = Condenser(
            bus=c["bus"], qmax_mvar=c["qmax_mvar"], active=c["active"],
        )
    return model


def save_model(model: GridModel, path, include_profiles: bool = True) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model, include_profiles), sort_keys=True) + "\n"
    )


def load_model(path) -> GridModel:
    return model_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# MATPOWER-style export
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "0"
    return repr(float(value))


def export_case(model: GridModel, out_dir, *, vmin: float = 0.95, vmax: float = 1.05,
                load_power_factor: float = 0.95, reference_hour: int | None = None,
                case_name: str = "gridsynth_case") -> dict[str, Path]:
    """Write case.m, paths.geojson, and extras.json into `out_dir`.

    Bus real/reactive demand columns are evaluated at `reference_hour`
    (default: the system peak hour).  Requires a finalized model.
    """
    if not model.finalized():
        raise ValidationError("cannot export: model branches lack electrical parameters")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "case": out / "case.m",
        "paths": out / "paths.geojson",
        "extras": out / "extras.json",
    }

    if reference_hour is None:
        totals = model.total_load_series()
        reference_hour = int(np.argmax(totals)) if totals.size else 0
    bus_ids = sorted(model.buses)
    numbering = {bid: i + 1 for i, bid in enumerate(bus_ids)}
    loads = model.bus_loads_at_hour(reference_hour) if model.loads else {}
    tan_phi = float(np.tan(np.arccos(load_power_factor)))
    slack = default_slack_bus(model) if model.generators else bus_ids[0]
    gen_buses = {g.bus for g in model.generators.values()}
    gen_buses |= {c.bus for c in model.condensers.values() if c.active}

    lines = [f"function mpc = {case_name}", "mpc.version = '2';",
             f"mpc.baseMVA = {_fmt(model.base_mva)};", ""]
    lines.append("%% bus data: bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin")
    lines.append("mpc.bus = [")
    for bid in bus_ids:
        bus = model.buses[bid]
        btype = 3 if bid == slack else (2 if bid in gen_buses else 1)
        pd = loads.get(bid, 0.0)
        lines.append(
            f"\t{numbering[bid]}\t{btype}\t{_fmt(pd)}\t{_fmt(pd * tan_phi)}\t0\t0\t1\t1\t0\t"
            f"{_fmt(bus.voltage_kv)}\t1\t{_fmt(vmax)}\t{_fmt(vmin)};"
        )
    lines.append("];\n")

    lines.append("%% generator data: bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin")
    lines.append("mpc.gen = [")
    gencost = []
    for gid in sorted(model.generators):
        g = model.generators[gid]
        lines.append(
            f"\t{numbering[g.bus]}\t0\t0\t{_fmt(g.qmax_mvar)}\t{_fmt(g.qmin_mvar)}\t1\t"
            f"{_fmt(model.base_mva)}\t1\t{_fmt(g.pmax_mw)}\t{_fmt(g.pmin_mw)};"
        )
        cost = g.cost or CostCurve(kind="zero")
        gencost.append(f"\t2\t0\t0\t3\t{_fmt(cost.c2)}\t{_fmt(cost.c1)}\t{_fmt(cost.c0)};")
    for bid in sorted(model.condensers):
        c = model.condensers[bid]
        lines.append(
            f"\t{numbering[c.bus]}\t0\t0\t{_fmt(c.qmax_mvar)}\t{_fmt(c.qmin_mvar)}\t1\t"
            f"{_fmt(model.base_mva)}\t{1 if c.active else 0}\t0\t0;"
        )
        gencost.append("\t2\t0\t0\t3\t0\t0\t0;")
    lines.append("];\n")

    lines.append("%% branch data: fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax")
    lines.append("mpc.branch = [")
    for brid in sorted(model.branches):
        br = model.branches[brid]
        lines.append(
            f"\t{numbering[br.from_bus]}\t{numbering[br.to_bus]}\t{_fmt(br.r_pu)}\t{_fmt(br.x_pu)}\t"
            f"{_fmt(br.b_pu)}\t{_fmt(br.mva_rating)}\t{_fmt(br.mva_rating)}\t{_fmt(br.mva_rating)}\t"
            f"0\t0\t1\t-360\t360;"
        )
    lines.append("];\n")
    lines.append("%% generator cost data: model startup shutdown n c2 c1 c0")
    lines.append("mpc.gencost = [")
    lines.extend(gencost)
    lines.append("];")
    files["case"].write_text("\n".join(lines) + "\n")

    features = []
    for brid in sorted(model.branches):
        br = model.branches[brid]
        if br.kind != "line" or br.path is None:
            continue
        features.append({
            "type": "Feature",
            "properties": {"id": br.id, "kv": br.voltage_kv, "mva": br.mva_rating,
                           "circuits": br.circuits, "doubled": br.doubled},
            "geometry": {"type": "LineString",
                         "coordinates": [[p.lon, p.lat] for p in br.path.points]},
        })
    files["paths"].write_text(
        json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True)
    )

    extras = {
        "model": model_to_dict(model, include_profiles=False),
        "bus_numbers": numbering,
        "reference_hour": reference_hour,
        "bus_pd_mw": {bid: loads.get(bid, 0.0) for bid in bus_ids},
        "vmin": vmin, "vmax": vmax, "load_power_factor": load_power_factor,
    }
    files["extras"].write_text(json.dumps(extras, sort_keys=True) + "\n")
    return files


def import_case(case_dir) -> GridModel:
    """Re-import an exported case directory.

    Tract-level profiles are not part of the interchange format, so loads come
    back as one-hour profiles holding the exported reference-hour demand.
    """
    case_dir = Path(case_dir)
    extras = json.loads((case_dir / "extras.json").read_text())
    doc = extras["model"]
    pd = extras["bus_pd_mw"]
    for load in doc["loads"]:
        load["profile"] = None
    profiles = {}
    by_bus: dict[str, list[str]] = {}
    for load in doc["loads"]:
        if load["bus"] is not None:
            by_bus.setdefault(load["bus"], []).append(load["tract_id"])
    for bus, tracts in by_bus.items():
        each = pd.get(bus, 0.0) / len(tracts)
        for tract in tracts:
            profiles[tract] = np.array([each])
    for load in doc["loads"]:
        profiles.setdefault(load["tract_id"], np.array([0.0]))
    return model_from_dict(doc, profiles=profiles)


def model_numeric_differences(a: GridModel, b: GridModel, tol: float = 1e-12) -> list[str]:
    """Compare every numeric field of the case tables; returns mismatches."""
    problems = []

    def check(name, x, y):
        if x is None and y is None:
            return
        if x is None or y is None or abs(float(x) - float(y)) > tol * max(1.0, abs(float(x))):
            problems.append(f"{name}: {x} != {y}")

    if sorted(a.buses) != sorted(b.buses):
        return [f"bus sets differ: {sorted(a.buses)} vs {sorted(b.buses)}"]
    for bid in sorted(a.buses):
        x, y = a.buses[bid], b.buses[bid]
        check(f"bus {bid} lat", x.location.lat, y.location.lat)
        check(f"bus {bid} lon", x.location.lon, y.location.lon)
        check(f"bus {bid} kv", x.voltage_kv, y.voltage_kv)
    if sorted(a.branches) != sorted(b.branches):
        return ["branch sets differ"]
    for brid in sorted(a.branches):
        x, y = a.branches[brid], b.branches[brid]
        for f in ("r_pu", "x_pu", "b_pu", "mva_rating", "circuits"):
            check(f"branch {brid} {f}", getattr(x, f), getattr(y, f))
    if sorted(a.generators) != sorted(b.generators):
        return ["generator sets differ"]
    for gid in sorted(a.generators):
        x, y = a.generators[gid], b.generators[gid]
        for f in ("pmax_mw", "pmin_mw", "qmax_mvar", "qmin_mvar", "power_factor"):
            check(f"gen {gid} {f}", getattr(x, f), getattr(y, f))
        if (x.cost is None) != (y.cost is None):
            problems.append(f"gen {gid} cost presence differs")
        elif x.cost is not None:
            for f in ("c2", "c1", "c0"):
                check(f"gen {gid} cost {f}", getattr(x.cost, f), getattr(y.cost, f))
    if sorted(a.condensers) != sorted(b.condensers):
        return ["condenser sets differ"]
    for bid in sorted(a.condensers):
        check(f"condenser {bid} qmax", a.condensers[bid].qmax_mvar, b.condensers[bid].qmax_mvar)
    pd_a: dict[str, float] = {}
    pd_b: dict[str, float] = {}
    if a.loads:
        pd_a = a.bus_loads_at_hour(int(np.argmax(a.total_load_series())))
    if b.loads:
        pd_b = b.bus_loads_at_hour(int(np.argmax(b.total_load_series())))
    for bus in sorted(set(pd_a) | set(pd_b)):
        check(f"bus {bus} pd", pd_a.get(bus, 0.0), pd_b.get(bus, 0.0))
    return problems
