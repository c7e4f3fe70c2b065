"""Build the electrical graph from geographic records.

The passes here mirror how a transmission dataset becomes a connected model:
line endpoints cluster onto substations or freshly added interconnection
nodes, lines that branch mid-path get segmented at the junction, buses touched
by several voltage levels split into transformer-linked nodes, and everything
outside the largest connected component is discarded.  Connectivity defects
that historically needed manual GIS repair are surfaced as diagnostics and
fixed through a declarative edit script instead.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geodata import (
    METERS_PER_MILE,
    Dataset,
    GeoPoint,
    LinePath,
    arc_for_chord,
    chord_for_arc,
    ecef_coords,
    geo_distance,
    path_length,
)
from .model import Branch, Bus, Generator, GridModel

DEFAULT_RADIUS_M = 12.0
MICRO_SEGMENT_M = 1.0


@dataclass(frozen=True)
class TopologyDiagnostic:
    defect_kind: str  # distance_discrepancy | same_node_both_ends | micro_segment
    bus_a: str
    bus_b: str
    graph_distance_miles: float
    geo_distance_miles: float
    ratio: float


def write_diagnostics_csv(diagnostics, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kind", "bus_a", "bus_b", "graph_mi", "geo_mi", "ratio"])
        for d in diagnostics:
            writer.writerow([
                d.defect_kind, d.bus_a, d.bus_b,
                repr(d.graph_distance_miles), repr(d.geo_distance_miles), repr(d.ratio),
            ])


# ---------------------------------------------------------------------------
# endpoint clustering
# ---------------------------------------------------------------------------

def substation_buses(substations) -> dict[str, Bus]:
    """Seed the bus set: one bus per substation record, voltage unknown yet."""
    return {
        rec.id: Bus(id=rec.id, location=rec.location, kind="substation", origin=rec.id)
        for rec in substations.values()
    }


def _next_added_seq(buses) -> int:
    seq = 0
    for bid in buses:
        if bid.startswith("N") and bid[1:].isdigit():
            seq = max(seq, int(bid[1:]) + 1)
    return seq


def connect_endpoints(lines, buses, radius_m: float = DEFAULT_RADIUS_M):
    """Map every line endpoint to a bus, adding interconnection nodes as needed.

    An endpoint attaches to the nearest existing bus within `radius_m`
    (ties broken by lowest bus id).  Endpoints with no bus in range get a new
    `added` bus; later endpoints falling within range of a new bus share it,
    so mutually close endpoints cluster greedily in id order.  Running the
    pass again creates no further buses.

    Returns (buses, endpoint_map) where endpoint_map[(line_id, end)] = bus_id
    with end 0 for the first path point and 1 for the last.
    """
    if radius_m <= 0:
        raise ValidationError("search radius must be positive")
    buses = dict(buses)
    endpoint_map: dict[tuple[str, int], str] = {}

    endpoints = []
    for lid in sorted(lines):
        line = lines[lid]
        endpoints.append((lid, 0, line.points[0]))
        endpoints.append((lid, 1, line.points[-1]))

    chord = chord_for_arc(radius_m)
    existing_ids = list(buses)
    tree = None
    if existing_ids:
        coords = ecef_coords(
            [buses[b].location.lat for b in existing_ids],
            [buses[b].location.lon for b in existing_ids],
        )
        tree = cKDTree(coords)

    pending = []
    for lid, end, pt in endpoints:
        target = None
        if tree is not None:
            xyz = ecef_coords([pt.lat], [pt.lon])[0]
            hits = tree.query_ball_point(xyz, r=chord)
            if hits:
                target = min(
                    (geo_distance(pt, buses[existing_ids[i]].location), existing_ids[i])
                    for i in hits
                )[1]
        if target is None:
            pending.append((lid, end, pt))
        else:
            endpoint_map[(lid, end)] = target

    seq = _next_added_seq(buses)
    new_ids: list[str] = []
    new_xyz: list[np.ndarray] = []
    for lid, end, pt in pending:
        target = None
        if new_ids:
            xyz = ecef_coords([pt.lat], [pt.lon])[0]
            dist = np.linalg.norm(np.asarray(new_xyz) - xyz, axis=1)
            close = np.where(dist <= chord)[0]
            if close.size:
                target = min(
                    (geo_distance(pt, buses[new_ids[i]].location), new_ids[i]) for i in close
                )[1]
        if target is None:
            target = f"N{seq:05d}"
            seq += 1
            buses[target] = Bus(id=target, location=pt, kind="added")
            new_ids.append(target)
            new_xyz.append(ecef_coords([pt.lat], [pt.lon])[0])
        endpoint_map[(lid, end)] = target

    _assign_bus_voltages(lines, buses, endpoint_map)
    return buses, endpoint_map


def _assign_bus_voltages(lines, buses, endpoint_map):
    """Record the highest line voltage touching each bus (None if isolated)."""
    touched: dict[str, float] = {}
    for (lid, _end), bid in endpoint_map.items():
        kv = lines[lid].voltage_kv
        touched[bid] = max(touched.get(bid, 0.0), kv)
    for bid, bus in buses.items():
        if bus.kind != "voltage_split":
            bus.voltage_kv = touched.get(bid)


# ---------------------------------------------------------------------------
# segmentation of branching lines
# ---------------------------------------------------------------------------

def segment_branching_lines(lines, buses, endpoint_map,
                            radius_m: float = DEFAULT_RADIUS_M,
                            micro_m: float = MICRO_SEGMENT_M):
    """Split lines at interior vertices that pass within `radius_m` of a bus.

    Pieces shorter than `micro_m` are merged into their longer neighbor and
    reported as micro_segment diagnostics instead of being kept.  Returns
    (lines, diagnostics); endpoint clustering must be re-run afterwards so the
    new endpoints attach to the junction buses.
    """
    bus_ids = list(buses)
    if not bus_ids:
        return dict(lines), []
    coords = ecef_coords(
        [buses[b].location.lat for b in bus_ids],
        [buses[b].location.lon for b in bus_ids],
    )
    tree = cKDTree(coords)
    chord = chord_for_arc(radius_m)

    out: dict[str, LinePath] = {}
    diagnostics: list[TopologyDiagnostic] = []
    for lid in sorted(lines):
        line = lines[lid]
        pts = line.points
        cuts: dict[int, str] = {}
        for i in range(1, len(pts) - 1):
            xyz = ecef_coords([pts[i].lat], [pts[i].lon])[0]
            hits = tree.query_ball_point(xyz, r=chord)
            if hits:
                cuts[i] = min(
                    (geo_distance(pts[i], buses[bus_ids[h]].location), bus_ids[h]) for h in hits
                )[1]
        if not cuts:
            out[lid] = line
            continue

        boundaries = [0] + sorted(cuts) + [len(pts) - 1]

        def piece_len_m(a, b):
            return sum(geo_distance(pts[k], pts[k + 1]) for k in range(a, b))

        merged = True
        while merged and len(boundaries) > 2:
            merged = False
            for p in range(len(boundaries) - 1):
                a, b = boundaries[p], boundaries[p + 1]
                if piece_len_m(a, b) >= micro_m:
                    continue
                left_len = piece_len_m(boundaries[p - 1], a) if p > 0 else -1.0
                right_len = piece_len_m(b, boundaries[p + 2]) if p + 2 < len(boundaries) else -1.0
                drop = a if (p > 0 and left_len >= right_len) else b
                cut_bus = cuts[drop]
                nearest_end = 0 if drop < (len(pts) - 1) / 2 else 1
                end_bus = endpoint_map.get((lid, nearest_end), cut_bus)
                miles = piece_len_m(a, b) / METERS_PER_MILE
                diagnostics.append(TopologyDiagnostic(
                    defect_kind="micro_segment", bus_a=cut_bus or end_bus, bus_b=end_bus or cut_bus,
                    graph_distance_miles=miles, geo_distance_miles=miles, ratio=1.0,
                ))
                boundaries.remove(drop)
                merged = True
                break

        if len(boundaries) == 2:
            out[lid] = line
            continue
        for k in range(len(boundaries) - 1):
            a, b = boundaries[k], boundaries[k + 1]
            piece_id = f"{lid}~{k + 1}"
            out[piece_id] = LinePath(
                id=piece_id, points=tuple(pts[a:b + 1]),
                voltage_kv=line.voltage_kv, owner=line.owner, name=line.name,
            )
    return out, diagnostics


# ---------------------------------------------------------------------------
# edit scripts (declarative replacement for manual GIS repair)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Edit:
    op: str  # delete_node | merge_lines | delete_line | extend_line | move_endpoint
    node: str | None = None
    line: str | None = None
    other: str | None = None
    point: GeoPoint | None = None
    end: int | None = None


EDIT_OPS = ("delete_node", "merge_lines", "delete_line", "extend_line", "move_endpoint")


def parse_edit_script(doc) -> list[Edit]:
    """Parse a JSON-style list of tagged edit objects."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text())
    edits = []
    for i, item in enumerate(doc):
        op = item.get("op")
        if op not in EDIT_OPS:
            raise ValidationError(f"edit #{i}: unknown op {op!r}")
        point = None
        if "lat" in item or "lon" in item:
            point = GeoPoint(float(item["lat"]), float(item["lon"]))
        edits.append(Edit(
            op=op, node=item.get("node"), line=item.get("line"),
            other=item.get("other"), point=point,
            end=int(item["end"]) if "end" in item else None,
        ))
    return edits


def apply_edits(lines, buses, script: list[Edit]):
    """Apply edits in order; endpoint re-clustering is the caller's job."""
    lines = dict(lines)
    buses = dict(buses)
    for i, edit in enumerate(script):
        where = f"edit #{i} ({edit.op})"
        if edit.op == "delete_node":
            if edit.node not in buses:
                raise ValidationError(f"{where}: unknown node '{edit.node}'")
            del buses[edit.node]
        elif edit.op == "delete_line":
            if edit.line not in lines:
                raise ValidationError(f"{where}: unknown line '{edit.line}'")
            del lines[edit.line]
        elif edit.op == "merge_lines":
            for ref in (edit.line, edit.other):
                if ref not in lines:
                    raise ValidationError(f"{where}: unknown line '{ref}'")
            first, second = lines[edit.line], lines[edit.other]
            if abs(first.voltage_kv - second.voltage_kv) > 1e-9:
                raise ValidationError(f"{where}: voltage mismatch {first.voltage_kv} vs {second.voltage_kv}")
            merged = _join_paths(first, second, where)
            del lines[edit.other]
            lines[edit.line] = LinePath(
                id=edit.line, points=merged, voltage_kv=first.voltage_kv,
                owner=first.owner, name=first.name,
            )
        elif edit.op == "extend_line":
            if edit.line not in lines:
                raise ValidationError(f"{where}: unknown line '{edit.line}'")
            if edit.point is None:
                raise ValidationError(f"{where}: missing lat/lon")
            line = lines[edit.line]
            d_start = geo_distance(edit.point, line.points[0])
            d_end = geo_distance(edit.point, line.points[-1])
            pts = ((edit.point,) + line.points) if d_start < d_end else (line.points + (edit.point,))
            lines[edit.line] = LinePath(
                id=line.id, points=pts, voltage_kv=line.voltage_kv,
                owner=line.owner, name=line.name,
            )
        else:  # move_endpoint
            if edit.line not in lines:
                raise ValidationError(f"{where}: unknown line '{edit.line}'")
            if edit.node not in buses:
                raise ValidationError(f"{where}: unknown node '{edit.node}'")
            if edit.end not in (0, 1):
                raise ValidationError(f"{where}: end must be 0 or 1")
            line = lines[edit.line]
            loc = buses[edit.node].location
            pts = list(line.points)
            pts[0 if edit.end == 0 else -1] = loc
            lines[edit.line] = LinePath(
                id=line.id, points=tuple(pts), voltage_kv=line.voltage_kv,
                owner=line.owner, name=line.name,
            )
    return lines, buses


def _join_paths(first: LinePath, second: LinePath, where: str):
    ends_a = (first.points[0], first.points[-1])
    ends_b = (second.points[0], second.points[-1])
    for ia, pa in enumerate(ends_a):
        for ib, pb in enumerate(ends_b):
            if pa.lat == pb.lat and pa.lon == pb.lon:
                a = first.points if ia == 1 else tuple(reversed(first.points))
                b = second.points if ib == 0 else tuple(reversed(second.points))
                return a + b[1:]
    raise ValidationError(f"{where}: lines share no endpoint")


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

def build_model(lines, buses, endpoint_map, generator_records=None,
                base_mva: float = 100.0) -> GridModel:
    """Assemble a GridModel from clustered lines and attach generators.

    Self-loop lines (both endpoints on one bus) are kept here so diagnose()
    can flag them; drop_self_loops() removes the survivors before splitting.
    Generators attach to the nearest line-connected bus.
    """
    model = GridModel(base_mva=base_mva)
    model.buses = {bid: buses[bid] for bid in buses}
    for lid in sorted(lines):
        line = lines[lid]
        model.branches[lid] = Branch(
            id=lid, from_bus=endpoint_map[(lid, 0)], to_bus=endpoint_map[(lid, 1)],
            kind="line", path=line, voltage_kv=line.voltage_kv,
        )
    if generator_records:
        connected = [bid for bid, bus in model.buses.items() if bus.voltage_kv is not None]
        if not connected:
            raise ValidationError("no line-connected buses to attach generators to")
        coords = ecef_coords(
            [model.buses[b].location.lat for b in connected],
            [model.buses[b].location.lon for b in connected],
        )
        tree = cKDTree(coords)
        for gid in sorted(generator_records):
            rec = generator_records[gid]
            xyz = ecef_coords([rec.location.lat], [rec.location.lon])[0]
            k = min(8, len(connected))
            dists, idxs = tree.query(xyz, k=k)
            dists = np.atleast_1d(dists)
            idxs = np.atleast_1d(idxs)
            best = min(
                (geo_distance(rec.location, model.buses[connected[i]].location), connected[i])
                for d, i in zip(dists, idxs)
            )[1]
            model.generators[gid] = Generator(
                id=gid, bus=best, fuel_type=rec.fuel_type,
                pmax_mw=rec.pmax_mw, pmin_mw=rec.pmin_mw,
                power_factor=rec.power_factor,
                plant_code=rec.plant_code, unit_id=rec.unit_id,
            )
    return model


def find_self_loops(model: GridModel) -> list[TopologyDiagnostic]:
    found = []
    for br in model.branches.values():
        if br.from_bus == br.to_bus:
            found.append(TopologyDiagnostic(
                defect_kind="same_node_both_ends", bus_a=br.from_bus, bus_b=br.to_bus,
                graph_distance_miles=br.length_miles, geo_distance_miles=0.0,
                ratio=float("inf"),
            ))
    return found


def drop_self_loops(model: GridModel) -> list[TopologyDiagnostic]:
    """Remove remaining self-loop lines; returns their diagnostics."""
    diags = find_self_loops(model)
    for br in [b for b in model.branches.values() if b.from_bus == b.to_bus]:
        del model.branches[br.id]
    return diags


# ---------------------------------------------------------------------------
# voltage-level splitting
# ---------------------------------------------------------------------------

def split_voltage_levels(model: GridModel) -> None:
    """Split buses touched by V > 1 line voltages into V transformer-linked buses.

    New buses chain in descending voltage order with V-1 transformers; lines
    reattach at their own voltage and generators move to the highest level.
    """
    touching: dict[str, set[float]] = {bid: set() for bid in model.buses}
    for br in model.branches.values():
        if br.kind != "line":
            continue
        touching[br.from_bus].add(br.voltage_kv)
        touching[br.to_bus].add(br.voltage_kv)

    for bid in list(model.buses):
        voltages = sorted(touching.get(bid, ()), reverse=True)
        if len(voltages) <= 1:
            continue
        bus = model.buses[bid]
        level_ids = {kv: f"{bid}@{kv:g}" for kv in voltages}
        for kv in voltages:
            model.buses[level_ids[kv]] = Bus(
                id=level_ids[kv], location=bus.location, kind="voltage_split",
                voltage_kv=kv, parent=bid, parent_kind=bus.kind,
            )
        for hi, lo in zip(voltages, voltages[1:]):
            xid = f"T_{bid}_{hi:g}_{lo:g}"
            model.branches[xid] = Branch(
                id=xid, from_bus=level_ids[hi], to_bus=level_ids[lo],
                kind="transformer", kv_primary=hi, kv_secondary=lo,
            )
        for br in model.branches.values():
            if br.kind != "line":
                continue
            if br.from_bus == bid:
                br.from_bus = level_ids[br.voltage_kv]
            if br.to_bus == bid:
                br.to_bus = level_ids[br.voltage_kv]
        top = level_ids[voltages[0]]
        for gen in model.generators.values():
            if gen.bus == bid:
                gen.bus = top
        for load in model.loads.values():
            if load.bus == bid:
                load.bus = level_ids[voltages[-1]]
        del model.buses[bid]


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

def _adjacency(model: GridModel, weighted: bool = False) -> csr_matrix:
    idx = model.bus_index()
    n = len(idx)
    rows, cols, vals = [], [], []
    for br in model.branches.values():
        i, j = idx[br.from_bus], idx[br.to_bus]
        w = br.length_miles if weighted else 1.0
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def largest_component(model: GridModel):
    """Prune everything outside the largest connected component.

    Returns (model, retention) where retention maps element class to the
    fraction kept.
    """
    if not model.buses:
        raise ValidationError("cannot take largest component of an empty graph")
    idx = model.bus_index()
    graph = _adjacency(model)
    _, labels = connected_components(graph, directed=False)
    counts = np.bincount(labels)
    keep_label = int(np.argmax(counts))
    keep = {bid for bid, i in idx.items() if labels[i] == keep_label}

    before = {
        "buses": len(model.buses), "branches": len(model.branches),
        "generators": len(model.generators), "loads": len(model.loads),
    }
    model.buses = {k: v for k, v in model.buses.items() if k in keep}
    model.branches = {k: v for k, v in model.branches.items()
                      if v.from_bus in keep and v.to_bus in keep}
    model.generators = {k: v for k, v in model.generators.items() if v.bus in keep}
    model.loads = {k: v for k, v in model.loads.items() if v.bus is None or v.bus in keep}
    model.condensers = {k: v for k, v in model.condensers.items() if v.bus in keep}
    after = {
        "buses": len(model.buses), "branches": len(model.branches),
        "generators": len(model.generators), "loads": len(model.loads),
    }
    retention = {k: (after[k] / before[k] if before[k] else 1.0) for k in before}
    return model, retention


def is_single_component(model: GridModel) -> bool:
    if not model.buses:
        return False
    ncomp, _ = connected_components(_adjacency(model), directed=False)
    return ncomp == 1


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def diagnose(model: GridModel, geo_radius_m: float = 500.0,
             ratio_threshold: float = 10.0) -> list[TopologyDiagnostic]:
    """Flag suspicious topology: close bus pairs that are electrically far.

    For bus pairs within `geo_radius_m` geographically, compares shortest-path
    distance (line miles as edge weights, transformers zero) against geographic
    distance; flags pairs whose ratio exceeds `ratio_threshold` or that are
    unreachable.  Also reports lines whose two endpoints share one bus.
    """
    diags = find_self_loops(model)
    ids = model.bus_order()
    if len(ids) < 2:
        return diags
    coords = ecef_coords(
        [model.buses[b].location.lat for b in ids],
        [model.buses[b].location.lon for b in ids],
    )
    tree = cKDTree(coords)
    pairs = sorted(tree.query_pairs(r=chord_for_arc(geo_radius_m)))
    if not pairs:
        return diags
    graph = _adjacency(model, weighted=True)
    sources = sorted({i for i, _ in pairs})
    dist = dijkstra(graph, directed=False, indices=sources)
    row_of = {s: k for k, s in enumerate(sources)}
    for i, j in pairs:
        geo_mi = geo_distance(model.buses[ids[i]].location, model.buses[ids[j]].location) / METERS_PER_MILE
        graph_mi = float(dist[row_of[i], j])
        if geo_mi == 0.0 and graph_mi == 0.0:
            continue
        if np.isinf(graph_mi):
            ratio = float("inf")
        elif geo_mi == 0.0:
            ratio = float("inf") if graph_mi > 0 else 1.0
        else:
            ratio = graph_mi / geo_mi
        if ratio > ratio_threshold or np.isinf(graph_mi):
            diags.append(TopologyDiagnostic(
                defect_kind="distance_discrepancy", bus_a=ids[i], bus_b=ids[j],
                graph_distance_miles=graph_mi, geo_distance_miles=geo_mi, ratio=ratio,
            ))
    return diags
