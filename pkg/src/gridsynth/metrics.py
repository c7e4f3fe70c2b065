"""Evaluation of the finished grid: yearly OPF runs and summary statistics.

Every hour is solved independently (no ramping or commitment coupling) with a
DC OPF and the AC surrogate, and the per-hour results roll up into the
congestion, cost, and generation statistics used to judge whether the
synthetic grid behaves like a real one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridSynthError, ValidationError
from .geodata import SCALABLE_FUELS
from .model import GridModel
from .powerflow import ac_opf_surrogate, dc_opf
from .scenarios import scenario_at

ROW_FIELDS = ("hour", "dc_cost", "ac_cost", "dc_gen_mw", "ac_gen_mw",
              "dc_binding", "ac_binding", "curtailed_mw", "feasible")
SUMMARY_FIELDS = ("dc_cost", "ac_cost", "dc_gen_mw", "ac_gen_mw",
                  "dc_binding", "ac_binding", "curtailed_mw")


@dataclass
class EvaluationReport:
    rows: list[dict]
    summary: dict[str, dict[str, float]]
    degree_histogram: dict[int, int]
    branch_stats: list[dict]
    fuel_mix: dict[str, float]
    fuel_dispatch: dict[str, dict[str, float]] = field(default_factory=dict)  # hour -> fuel -> MW


def degree_distribution(model: GridModel) -> dict[int, int]:
    """Bus count per line-degree; transformer branches do not count."""
    histogram: dict[int, int] = {}
    for degree in model.line_degree().values():
        histogram[degree] = histogram.get(degree, 0) + 1
    return dict(sorted(histogram.items()))


def branch_stats(model: GridModel) -> list[dict]:
    """Per voltage level: share of lines, circuit miles, and GVA-miles."""
    lines = model.lines()
    if not lines:
        return []
    total = len(lines)
    stats: dict[float, dict[str, float]] = {}
    for br in lines:
        row = stats.setdefault(br.voltage_kv, {"count": 0, "miles": 0.0, "gva_miles": 0.0})
        row["count"] += 1
        miles = br.length_miles
        row["miles"] += miles
        if br.mva_rating is not None:
            row["gva_miles"] += br.mva_rating / 1000.0 * miles
    return [
        {
            "voltage_kv": kv,
            "percent_of_lines": stats[kv]["count"] / total * 100.0,
            "miles": stats[kv]["miles"],
            "gva_miles": stats[kv]["gva_miles"],
        }
        for kv in sorted(stats)
    ]


def fuel_mix(model: GridModel) -> dict[str, float]:
    """Fraction of installed capacity per fuel type."""
    total = sum(g.pmax_mw for g in model.generators.values())
    mix: dict[str, float] = {}
    for gen in model.generators.values():
        mix[gen.fuel_type] = mix.get(gen.fuel_type, 0.0) + gen.pmax_mw
    return {fuel: mw / total for fuel, mw in sorted(mix.items())} if total else {}


def _curtailment(model: GridModel, scenario, pg: dict[str, float]) -> float:
    total = 0.0
    for gid, gen in model.generators.items():
        if gen.fuel_type in SCALABLE_FUELS:
            total += scenario.renewable_caps.get(gid, 0.0) - pg.get(gid, 0.0)
    return max(total, 0.0)


def yearly_evaluation(model: GridModel, solar_mw: np.ndarray, wind_mw: np.ndarray,
                      hours=None, segments: int = 3,
                      vmin: float = 0.95, vmax: float = 1.05, vset: float = 1.0,
                      load_power_factor: float = 0.95) -> EvaluationReport:
    """Hourly DC OPF + AC surrogate over `hours` (default: the whole horizon).

    Hours where either solve fails are recorded as infeasible rather than
    aborting the run.  All generators are committed; renewables are capped by
    the hour's system-wide totals.
    """
    horizon = model.horizon
    if hours is None:
        hours = range(horizon)
    committed = {gid: True for gid in model.generators}
    rows: list[dict] = []
    fuel_dispatch: dict[str, dict[str, float]] = {}
    for hour in hours:
        if not 0 <= hour < horizon:
            raise ValidationError(f"hour {hour} outside profile horizon {horizon}")
        scenario = scenario_at(model, hour, "yearly_eval", solar_mw, wind_mw)
        row = dict.fromkeys(ROW_FIELDS)
        row["hour"] = hour
        try:
            dc = dc_opf(model, scenario, committed, segments=segments)
            ac = ac_opf_surrogate(
                model, scenario, committed, segments=segments,
                vmin=vmin, vmax=vmax, vset=vset, load_power_factor=load_power_factor,
            )
            feasible = ac.feasible
        except GridSynthError:
            row["feasible"] = False
            rows.append(row)
            continue
        row.update({
            "dc_cost": dc.objective, "ac_cost": ac.objective,
            "dc_gen_mw": sum(dc.pg_mw.values()), "ac_gen_mw": sum(ac.pg_mw.values()),
            "dc_binding": dc.binding_lines, "ac_binding": ac.binding_lines,
            "curtailed_mw": _curtailment(model, scenario, ac.pg_mw),
            "feasible": feasible,
        })
        rows.append(row)
        per_fuel: dict[str, float] = {}
        for gid, p in ac.pg_mw.items():
            fuel = model.generators[gid].fuel_type
            per_fuel[fuel] = per_fuel.get(fuel, 0.0) + p
        fuel_dispatch[str(hour)] = dict(sorted(per_fuel.items()))

    summary = summarize(rows)
    return EvaluationReport(
        rows=rows, summary=summary,
        degree_histogram=degree_distribution(model),
        branch_stats=branch_stats(model),
        fuel_mix=fuel_mix(model),
        fuel_dispatch=fuel_dispatch,
    )


def summarize(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Mean/median/max/min per numeric column over feasible hours."""
    feasible = [r for r in rows if r.get("feasible")]
    summary: dict[str, dict[str, float]] = {}
    for name in SUMMARY_FIELDS:
        values = np.array([r[name] for r in feasible], dtype=float)
        if values.size == 0:
            summary[name] = {}
            continue
        summary[name] = {
            "mean": float(values.mean()),
            "median": float(np.median(values)),
            "max": float(values.max()),
            "min": float(values.min()),
        }
    return summary


def dispatch_stack(report: EvaluationReport, window) -> list[tuple[int, str, float]]:
    """Plot-ready per-fuel hourly rows for a [start, end) hour window."""
    start, end = window
    rows = []
    for hour in range(start, end):
        per_fuel = report.fuel_dispatch.get(str(hour))
        if per_fuel is None:
            continue
        for fuel in sorted(per_fuel):
            rows.append((hour, fuel, per_fuel[fuel]))
    return rows


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def report_to_csv(report: EvaluationReport, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ROW_FIELDS)
        for row in report.rows:
            writer.writerow([row[f] if row[f] is not None else "" for f in ROW_FIELDS])


def report_to_json(report: EvaluationReport, path) -> None:
    doc = {
        "summary": report.summary,
        "degree_histogram": {str(k): v for k, v in report.degree_histogram.items()},
        "branch_stats": report.branch_stats,
        "fuel_mix": report.fuel_mix,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def stack_to_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["hour", "fuel", "mw"])
        for hour, fuel, mw in rows:
            writer.writerow([hour, fuel, repr(mw)])
