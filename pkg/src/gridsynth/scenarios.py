"""Scenario selection and unit-commitment / dispatch schedule generation.

Line sizing needs power injections that cover both normal and stressed
operation.  From a year of hourly data we pick 245 load scenarios: the
maximum-load hour with 60 hours either side, the minimum-load hour likewise,
and the maximum-solar, maximum-wind and minimum-renewable hours.  Each load
scenario is dispatched twice, once economically (expensive units decommitted
first) and once "uneconomically" (cheap units decommitted first), for 490
injection schedules in total.

Dispatch itself is a single-balance cost minimization solved analytically by
equal-marginal-cost waterfilling, so no LP is involved at this stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, ValidationError
from .model import Generator, GridModel
from .assignment import scale_renewables

SCENARIO_TAGS = (
    "max_load_window", "min_load_window", "max_solar", "max_wind",
    "min_renewable", "yearly_eval",
)
WINDOW_HALF_WIDTH = 60
BALANCE_TOL_MW = 1e-6


@dataclass
class Scenario:
    """One hour's loading condition plus renewable capacity caps."""

    hour_index: int
    tag: str
    bus_load_mw: dict[str, float]
    renewable_caps: dict[str, float]
    kind: str | None = None  # "economic" | "uneconomic" once dispatched

    @property
    def total_load_mw(self) -> float:
        return sum(self.bus_load_mw.values())


@dataclass
class DispatchResult:
    committed: dict[str, bool]
    pg_mw: dict[str, float]
    total_cost: float


@dataclass
class InjectionCase:
    """A scenario paired with its committed dispatch: one sizing input."""

    scenario: Scenario
    dispatch: DispatchResult


def scenario_at(model: GridModel, hour: int, tag: str,
                solar_mw: np.ndarray, wind_mw: np.ndarray) -> Scenario:
    caps = scale_renewables(model.generators, float(solar_mw[hour]), float(wind_mw[hour]))
    return Scenario(
        hour_index=hour, tag=tag,
        bus_load_mw=model.bus_loads_at_hour(hour),
        renewable_caps=caps,
    )


def _window(center: int, horizon: int) -> range:
    lo = center - WINDOW_HALF_WIDTH
    hi = center + WINDOW_HALF_WIDTH
    if lo < 0:
        hi += -lo
        lo = 0
    if hi > horizon - 1:
        lo -= hi - (horizon - 1)
        hi = horizon - 1
    return range(max(lo, 0), hi + 1)


def select_scenarios(model: GridModel, solar_mw: np.ndarray,
                     wind_mw: np.ndarray) -> list[Scenario]:
    """The 245 load scenarios driving line sizing.

    121 hours around the load peak, 121 around the load minimum, plus the
    max-solar, max-wind and minimum-total-renewable hours.  Windows at the
    data boundary shift inward so the count is preserved.
    """
    horizon = model.horizon
    if horizon < 2 * WINDOW_HALF_WIDTH + 1:
        raise ValidationError(
            f"need at least {2 * WINDOW_HALF_WIDTH + 1} hours of data, got {horizon}"
        )
    if len(solar_mw) != horizon or len(wind_mw) != horizon:
        raise ValidationError("renewable totals must cover the load horizon")

    total = model.total_load_series()
    peak = int(np.argmax(total))
    trough = int(np.argmin(total))
    scenarios = []
    for hour in _window(peak, horizon):
        scenarios.append(scenario_at(model, hour, "max_load_window", solar_mw, wind_mw))
    for hour in _window(trough, horizon):
        scenarios.append(scenario_at(model, hour, "min_load_window", solar_mw, wind_mw))
    scenarios.append(scenario_at(model, int(np.argmax(solar_mw)), "max_solar", solar_mw, wind_mw))
    scenarios.append(scenario_at(model, int(np.argmax(wind_mw)), "max_wind", solar_mw, wind_mw))
    scenarios.append(scenario_at(model, int(np.argmin(solar_mw + wind_mw)), "min_renewable", solar_mw, wind_mw))
    return scenarios


# ---------------------------------------------------------------------------
# unit commitment
# ---------------------------------------------------------------------------

def _average_cost(gen: Generator) -> float:
    if gen.cost is None:
        raise ValidationError(f"generator {gen.id} has no cost curve")
    return gen.cost.value(gen.pmax_mw) / gen.pmax_mw


def _capacity(gen: Generator, caps: dict[str, float]) -> float:
    return min(gen.pmax_mw, caps.get(gen.id, gen.pmax_mw))


def _decommit(scenario: Scenario, generators: dict[str, Generator],
              reserve_frac: float, cheapest_first: bool) -> dict[str, bool]:
    load = scenario.total_load_mw
    floor = (1.0 + reserve_frac) * load
    committed = {gid: True for gid in generators}
    capacity = sum(_capacity(g, scenario.renewable_caps) for g in generators.values())
    if capacity < floor - 1e-9:
        raise InfeasibleError(
            f"hour {scenario.hour_index}: committed capacity {capacity:.1f} MW "
            f"below reserve floor {floor:.1f} MW"
        )
    sign = 1.0 if cheapest_first else -1.0
    candidates = sorted(
        (g for g in generators.values() if not g.is_renewable),
        key=lambda g: (sign * _average_cost(g), g.id),
    )
    for gen in candidates:
        width = _capacity(gen, scenario.renewable_caps)
        if capacity - width >= floor - 1e-9:
            committed[gen.id] = False
            capacity -= width
        else:
            break
    return committed


def unit_commitment(scenario: Scenario, generators: dict[str, Generator],
                    reserve_frac: float = 0.10) -> dict[str, bool]:
    """Decommit the most expensive units while the spinning-reserve floor holds.

    Units rank by average cost at nameplate; renewables are never decommitted.
    Stops at the first unit whose removal would drop committed capacity below
    (1 + reserve_frac) * load.
    """
    return _decommit(scenario, generators, reserve_frac, cheapest_first=False)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _waterfill(units, demand: float):
    """Equal-marginal-cost allocation: min sum c2 p^2 + c1 p, sum p = demand.

    `units` is a list of (uid, lo, hi, c2, c1) with lo <= hi and c2 >= 0;
    exact within float dust, deterministic (plateau ties fill by ascending
    unit order).
    """
    if not units:
        if abs(demand) > BALANCE_TOL_MW:
            raise InfeasibleError(f"no units to cover {demand} MW")
        return {}
    lo_sum = sum(u[1] for u in units)
    hi_sum = sum(u[2] for u in units)
    if demand < lo_sum - BALANCE_TOL_MW or demand > hi_sum + BALANCE_TOL_MW:
        raise InfeasibleError(
            f"demand {demand:.3f} MW outside dispatchable range [{lo_sum:.3f}, {hi_sum:.3f}]"
        )
    demand = min(max(demand, lo_sum), hi_sum)

    def quad_value(unit, lam):
        _, lo, hi, c2, c1 = unit
        return min(max((lam - c1) / (2.0 * c2), lo), hi)

    def supply(lam, linear_high):
        total = 0.0
        for unit in units:
            uid, lo, hi, c2, c1 = unit
            if c2 > 0.0:
                total += quad_value(unit, lam)
            elif c1 < lam or (linear_high and c1 == lam):
                total += hi
            else:
                total += lo
        return total

    breakpoints = sorted({u[4] for u in units if u[3] == 0.0}
                         | {2.0 * u[3] * u[1] + u[4] for u in units if u[3] > 0.0}
                         | {2.0 * u[3] * u[2] + u[4] for u in units if u[3] > 0.0})
    eps = 1e-9 * (1.0 + abs(demand))
    prev = None
    pg: dict[str, float] = {}
    for lam in breakpoints:
        s_low = supply(lam, linear_high=False)
        s_high = supply(lam, linear_high=True)
        if demand <= s_high + eps:
            if demand >= s_low - eps:
                # plateau at lam: linear units priced exactly at lam flex
                remaining = demand
                flexible = []
                for unit in units:
                    uid, lo, hi, c2, c1 = unit
                    if c2 > 0.0:
                        pg[uid] = quad_value(unit, lam)
                    elif c1 < lam:
                        pg[uid] = hi
                    elif c1 > lam:
                        pg[uid] = lo
                    else:
                        pg[uid] = lo
                        flexible.append(unit)
                    remaining -= pg[uid]
                for uid, lo, hi, _, _ in flexible:
                    step = min(max(remaining, 0.0), hi - lo)
                    pg[uid] += step
                    remaining -= step
            else:
                # inside the open interval (prev, lam): only quadratics move
                base = 0.0
                moving = []
                for unit in units:
                    uid, lo, hi, c2, c1 = unit
                    if c2 > 0.0:
                        at_prev = quad_value(unit, prev)
                        if 2.0 * c2 * hi + c1 <= prev:
                            pg[uid] = hi
                        elif 2.0 * c2 * lo + c1 >= lam:
                            pg[uid] = lo
                        else:
                            moving.append(unit)
                            pg[uid] = at_prev
                    else:
                        pg[uid] = hi if c1 <= prev else lo
                    base += pg[uid]
                slope = sum(1.0 / (2.0 * u[3]) for u in moving)
                if slope <= 0.0:
                    raise InfeasibleError("degenerate dispatch interval")
                lam_star = prev + (demand - base) / slope
                for unit in moving:
                    pg[unit[0]] = quad_value(unit, lam_star)
            break
        prev = lam
    else:
        for uid, lo, hi, c2, c1 in units:
            pg[uid] = hi

    # zero out float dust on the balance using a unit with headroom
    residual = demand - sum(pg.values())
    if abs(residual) > 0.0:
        for uid, lo, hi, _, _ in units:
            if residual > 0 and pg[uid] + residual <= hi:
                pg[uid] += residual
                break
            if residual < 0 and pg[uid] + residual >= lo:
                pg[uid] += residual
                break
    return pg


def _dispatch_units(generators, committed, caps):
    units = []
    for gid in sorted(generators):
        gen = generators[gid]
        if not committed.get(gid, False):
            continue
        hi = _capacity(gen, caps)
        lo = 0.0 if gen.is_renewable else min(gen.pmin_mw, hi)
        units.append((gid, lo, hi, gen.cost.c2, gen.cost.c1))
    return units


def economic_dispatch(scenario: Scenario, generators: dict[str, Generator],
                      committed: dict[str, bool]) -> DispatchResult:
    """Cost-minimizing balance-only dispatch of the committed units."""
    units = _dispatch_units(generators, committed, scenario.renewable_caps)
    pg = _waterfill(units, scenario.total_load_mw)
    cost = sum(generators[gid].cost.value(p) for gid, p in pg.items())
    full_pg = {gid: pg.get(gid, 0.0) for gid in sorted(generators)}
    return DispatchResult(committed=dict(committed), pg_mw=full_pg, total_cost=cost)


def uneconomic_dispatch(scenario: Scenario, generators: dict[str, Generator],
                        reserve_frac: float = 0.10) -> DispatchResult:
    """Decommit the cheapest units to the reserve floor, then dispatch the rest."""
    committed = _decommit(scenario, generators, reserve_frac, cheapest_first=True)
    return economic_dispatch(scenario, generators, committed)


def build_injection_cases(model: GridModel, scenarios: list[Scenario],
                          reserve_frac: float = 0.10) -> list[InjectionCase]:
    """Two injection schedules per load scenario: economic and uneconomic."""
    cases = []
    for scenario in scenarios:
        committed = unit_commitment(scenario, model.generators, reserve_frac)
        econ = economic_dispatch(scenario, model.generators, committed)
        cases.append(InjectionCase(replace(scenario, kind="economic"), econ))
        unecon = uneconomic_dispatch(scenario, model.generators, reserve_frac)
        cases.append(InjectionCase(replace(scenario, kind="uneconomic"), unecon))
    return cases


# ---------------------------------------------------------------------------
# serialization (JSON lines)
# ---------------------------------------------------------------------------

def write_injections_jsonl(cases: list[InjectionCase], path) -> None:
    with Path(path).open("w") as handle:
        for case in cases:
            committed_pg = {
                gid: case.dispatch.pg_mw[gid]
                for gid in sorted(case.dispatch.pg_mw)
                if case.dispatch.committed.get(gid, False)
            }
            handle.write(json.dumps({
                "hour": case.scenario.hour_index,
                "kind": case.scenario.kind,
                "tag": case.scenario.tag,
                "pg": committed_pg,
                "caps": {k: case.scenario.renewable_caps[k]
                         for k in sorted(case.scenario.renewable_caps)},
            }, sort_keys=True) + "\n")


def read_injections_jsonl(path, model: GridModel) -> list[InjectionCase]:
    cases = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        committed = {gid: gid in doc["pg"] for gid in model.generators}
        pg = {gid: doc["pg"].get(gid, 0.0) for gid in sorted(model.generators)}
        cost = sum(model.generators[gid].cost.value(p)
                   for gid, p in pg.items() if committed[gid])
        scenario = Scenario(
            hour_index=doc["hour"], tag=doc["tag"],
            bus_load_mw=model.bus_loads_at_hour(doc["hour"]),
            renewable_caps=doc["caps"], kind=doc["kind"],
        )
        cases.append(InjectionCase(scenario, DispatchResult(committed, pg, cost)))
    return cases
