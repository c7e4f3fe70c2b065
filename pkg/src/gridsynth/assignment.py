"""Attach loads, generator cost curves, and renewable capacity scaling.

Load placement is a transportation-style LP: every census tract goes to
exactly one eligible bus, every eligible bus receives at least one tract, and
total tract-to-bus distance is minimized.  The constraint matrix is totally
unimodular, so the LP relaxation lands on an integral vertex and no integer
programming is needed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, ValidationError
from .geodata import METERS_PER_MILE, ecef_coords, geo_distance
from .model import CostCurve, Generator, GridModel
from .solver import LinearProgram, solve_lp

INTEGRALITY_TOL = 1e-7

# Fuels missing from typical reference catalogs borrow a stand-in fuel's curves.
COST_FUEL_ALIASES = {
    "other_natural_gas": "natural_gas_st",
    "municipal_solid_waste": "landfill_gas",
}


@dataclass
class LoadAssignment:
    """Result of the placement LP: tract -> bus plus the solved distances."""

    mapping: dict[str, str]
    distances_miles: dict[str, float]  # tract -> distance to its bus
    total_cost_miles: float


def eligible_load_buses(model: GridModel) -> list[str]:
    """Buses that must receive load: substations plus radial added buses.

    Substations split across voltage levels are represented by their
    lowest-voltage bus.  Added buses qualify when they terminate a radial
    line (line-degree 1) and have no generator attached.
    """
    gens_at = model.generators_at()
    degree = model.line_degree()
    eligible: list[str] = []
    lowest_split: dict[str, str] = {}
    for bid, bus in model.buses.items():
        if bus.kind == "substation":
            eligible.append(bid)
        elif bus.kind == "voltage_split" and bus.parent_kind == "substation":
            cur = lowest_split.get(bus.parent)
            if cur is None or bus.voltage_kv < model.buses[cur].voltage_kv:
                lowest_split[bus.parent] = bid
        elif bus.kind == "added" and degree.get(bid, 0) == 1 and not gens_at.get(bid):
            eligible.append(bid)
    # a split substation contributes its lowest-voltage bus as the load point
    eligible.extend(bid for _, bid in sorted(lowest_split.items()))
    return sorted(eligible)


def assign_loads(model: GridModel, eligible: list[str] | None = None,
                 k_nearest: int = 50) -> LoadAssignment:
    """Place every tract load on a bus by solving the assignment LP.

    The distance matrix is pruned to each load's `k_nearest` buses to keep the
    LP sparse; if pruning happens to starve a bus, the full matrix is used.
    """
    if eligible is None:
        eligible = eligible_load_buses(model)
    loads = sorted(model.loads)
    if not eligible:
        raise ValidationError("no eligible buses for load assignment")
    if len(loads) < len(eligible):
        raise InfeasibleError(
            f"{len(loads)} loads cannot cover {len(eligible)} eligible buses"
        )

    load_pts = [model.loads[t].location for t in loads]
    bus_pts = [model.buses[b].location for b in eligible]
    a = ecef_coords([p.lat for p in load_pts], [p.lon for p in load_pts])
    b = ecef_coords([p.lat for p in bus_pts], [p.lon for p in bus_pts])
    # chord distance is monotone in arc distance: fine for pruning, and we
    # recompute true great-circle miles for the retained entries below
    chord = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)

    k = min(k_nearest, len(eligible))
    keep = np.argsort(chord, axis=1, kind="stable")[:, :k]
    result = _solve_assignment(model, loads, eligible, keep)
    if result is None and k < len(eligible):
        keep_all = np.argsort(chord, axis=1, kind="stable")
        result = _solve_assignment(model, loads, eligible, keep_all)
    if result is None:
        raise InfeasibleError("load assignment LP infeasible")
    return result


def _solve_assignment(model, loads, eligible, keep):
    edges = []  # (load_idx, bus_idx, miles)
    for li, tract in enumerate(loads):
        loc = model.loads[tract].location
        for bj in keep[li]:
            miles = geo_distance(loc, model.buses[eligible[bj]].location) / METERS_PER_MILE
            edges.append((li, int(bj), miles))

    lp = LinearProgram(len(edges), objective=[e[2] for e in edges])
    for j in range(len(edges)):
        lp.set_bounds(j, 0.0, 1.0)
    by_load: dict[int, list[int]] = {}
    by_bus: dict[int, list[int]] = {}
    for idx, (li, bj, _) in enumerate(edges):
        by_load.setdefault(li, []).append(idx)
        by_bus.setdefault(bj, []).append(idx)
    for li in range(len(loads)):
        lp.add_eq([(idx, 1.0) for idx in by_load[li]], 1.0)
    for bj in range(len(eligible)):
        if bj not in by_bus:
            return None
        lp.add_ge([(idx, 1.0) for idx in by_bus[bj]], 1.0)

    res = solve_lp(lp)
    if not res.optimal:
        return None
    rounded = np.round(res.x)
    if np.abs(res.x - rounded).max() > INTEGRALITY_TOL:
        raise ValidationError("assignment LP returned a non-integral vertex")

    mapping: dict[str, str] = {}
    distances: dict[str, float] = {}
    for idx, (li, bj, miles) in enumerate(edges):
        if rounded[idx] > 0.5:
            mapping[loads[li]] = eligible[bj]
            distances[loads[li]] = miles
    return LoadAssignment(mapping=mapping, distances_miles=distances,
                          total_cost_miles=float(res.objective))


def apply_assignment(model: GridModel, assignment: LoadAssignment) -> None:
    for tract, bus in assignment.mapping.items():
        model.loads[tract].bus = bus


# ---------------------------------------------------------------------------
# cost curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostReference:
    plant_code: str | None
    unit_id: str | None
    fuel: str
    pmax_mw: float
    c2: float
    c1: float
    c0: float


def load_cost_catalog(path) -> list[CostReference]:
    """CSV with header plant_code,unit_id,fuel,pmax_mw,c2,c1,c0."""
    path = Path(path)
    refs = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        needed = {"plant_code", "unit_id", "fuel", "pmax_mw", "c2", "c1", "c0"}
        if not needed.issubset(reader.fieldnames or ()):
            raise ValidationError(f"{path}: header must contain {sorted(needed)}")
        for n, row in enumerate(reader):
            try:
                refs.append(CostReference(
                    plant_code=row["plant_code"].strip() or None,
                    unit_id=row["unit_id"].strip() or None,
                    fuel=row["fuel"].strip(),
                    pmax_mw=float(row["pmax_mw"]),
                    c2=float(row["c2"]), c1=float(row["c1"]), c0=float(row["c0"]),
                ))
            except (ValueError, AttributeError) as exc:
                raise ValidationError(f"{path}: row {n}: {exc}") from exc
    return refs


def _curve_from(c2: float, c1: float, c0: float) -> CostCurve:
    if c2 == 0.0 and c1 == 0.0 and c0 == 0.0:
        return CostCurve(kind="zero")
    if c2 == 0.0:
        return CostCurve(c1=c1, c0=c0, kind="linear")
    return CostCurve(c2=c2, c1=c1, c0=c0, kind="quadratic")


def assign_costs(generators: dict[str, Generator], catalog: list[CostReference],
                 nuclear_usd_per_mwh: float, import_usd_per_mwh: float) -> None:
    """Attach a cost curve to every generator.

    Renewables get zero curves; nuclear and imports get configured linear
    prices; exact (plant_code, unit_id) matches copy their reference curve;
    everything else borrows the curve of the closest-capacity reference of
    the same (possibly aliased) fuel.
    """
    by_key = {}
    for ref in catalog:
        if ref.plant_code and ref.unit_id:
            by_key.setdefault((ref.plant_code, ref.unit_id), ref)
    by_fuel: dict[str, list[CostReference]] = {}
    for ref in catalog:
        by_fuel.setdefault(ref.fuel, []).append(ref)

    for gid in sorted(generators):
        gen = generators[gid]
        if gen.is_renewable:
            gen.cost = CostCurve(kind="zero")
            continue
        if gen.fuel_type == "nuclear":
            gen.cost = CostCurve(c1=nuclear_usd_per_mwh, kind="linear")
            continue
        if gen.fuel_type == "import":
            gen.cost = CostCurve(c1=import_usd_per_mwh, kind="linear")
            continue
        key = (gen.plant_code, gen.unit_id)
        if key in by_key:
            ref = by_key[key]
            gen.cost = _curve_from(ref.c2, ref.c1, ref.c0)
            continue
        fuel = COST_FUEL_ALIASES.get(gen.fuel_type, gen.fuel_type)
        candidates = by_fuel.get(fuel)
        if not candidates:
            raise ValidationError(
                f"generator {gid}: no reference cost curve for fuel '{fuel}'"
            )
        ref = min(candidates, key=lambda r: (abs(r.pmax_mw - gen.pmax_mw), catalog.index(r)))
        gen.cost = _curve_from(ref.c2, ref.c1, ref.c0)


# ---------------------------------------------------------------------------
# renewable capacity scaling
# ---------------------------------------------------------------------------

def scale_renewables(generators: dict[str, Generator], p_total_solar_mw: float,
                     p_total_wind_mw: float) -> dict[str, float]:
    """Per-scenario capacity caps for solar and wind, MW.

    Each unit's cap is its nameplate share of the system-wide total for the
    scenario; caps sum exactly to the scenario total unless the total exceeds
    installed capacity, in which case caps saturate at nameplate.
    Non-scalable units keep their nameplate as the cap.
    """
    caps: dict[str, float] = {}
    for fuel, total in (("solar", p_total_solar_mw), ("wind", p_total_wind_mw)):
        if total < 0:
            raise ValidationError(f"{fuel} scenario total must be nonnegative, got {total}")
        units = [g for g in generators.values() if g.fuel_type == fuel]
        if not units:
            continue
        installed = sum(g.pmax_mw for g in units)
        if total > installed:
            warnings.warn(
                f"{fuel} scenario total {total} MW exceeds installed {installed} MW; capping at nameplate"
            )
            for g in units:
                caps[g.id] = g.pmax_mw
        else:
            for g in units:
                caps[g.id] = g.pmax_mw / installed * total
    for g in generators.values():
        if g.id not in caps:
            caps[g.id] = g.pmax_mw
    return caps


def load_renewable_totals(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with header hour,solar_mw,wind_mw; returns hourly (solar, wind)."""
    path = Path(path)
    solar, wind = [], []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        needed = {"hour", "solar_mw", "wind_mw"}
        if not needed.issubset(reader.fieldnames or ()):
            raise ValidationError(f"{path}: header must contain {sorted(needed)}")
        for n, row in enumerate(reader):
            try:
                if int(row["hour"]) != n:
                    raise ValidationError(f"{path}: hours must be contiguous from 0, got {row['hour']} at row {n}")
                solar.append(float(row["solar_mw"]))
                wind.append(float(row["wind_mw"]))
            except ValueError as exc:
                raise ValidationError(f"{path}: row {n}: {exc}") from exc
    if not solar:
        raise ValidationError(f"{path}: no data rows")
    return np.array(solar), np.array(wind)
