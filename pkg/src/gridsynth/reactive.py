"""Reactive power support: condenser seeding, pruning, and limit restoration.

Generator reactive capability alone rarely holds every bus voltage in band,
so the grid is seeded with a synchronous condenser at every bus, then pruned:
each round removes the fifth of active condensers that the latest AC solution
used least, until fewer than a fifth of buses keep support.  Thermal limits
are doubled for the duration (reactive flow and losses were invisible to the
DC sizing stage) and restored afterwards on lines that ended up lightly
loaded; the rest keep the doubled rating, the steel-supported-conductor
upgrade.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .errors import InfeasibleError, ValidationError
from .model import Condenser, GridModel
from .powerflow import ac_opf_surrogate

DEFAULT_CONDENSER_MVAR = 200.0
DEFAULT_PRUNE_FRAC = 0.20
DEFAULT_COVERAGE_STOP = 0.20
DEFAULT_RESTORE_UTIL = 0.50


def double_limits(model: GridModel) -> dict[str, float]:
    """Double every line's thermal limit, leaving impedances untouched.

    Transformers are not affected.  Returns the saved original ratings.
    """
    originals: dict[str, float] = {}
    for br in model.lines():
        if br.mva_rating is None:
            raise ValidationError(f"line {br.id} has no rating to double")
        originals[br.id] = br.mva_rating
        br.original_rating = br.mva_rating
        br.mva_rating = 2.0 * br.mva_rating
    return originals


def condenser_dispatch(model: GridModel, bus_qg_mvar: dict[str, float],
                       committed: dict[str, bool]) -> dict[str, float]:
    """Split each bus's reactive output across its devices by capability share.

    Returns the per-condenser reactive dispatch in MVAr.
    """
    share: dict[str, float] = {}
    for bus, cond in model.condensers.items():
        if not cond.active:
            continue
        total = cond.qmax_mvar
        for gen in model.generators.values():
            if gen.bus == bus and committed.get(gen.id, False) and gen.qmax_mvar:
                total += gen.qmax_mvar
        q_bus = bus_qg_mvar.get(bus, 0.0)
        share[bus] = q_bus * (cond.qmax_mvar / total) if total > 0 else 0.0
    return share


def place_and_prune(model: GridModel, case, *,
                    condenser_mvar: float = DEFAULT_CONDENSER_MVAR,
                    prune_frac: float = DEFAULT_PRUNE_FRAC,
                    coverage_stop: float = DEFAULT_COVERAGE_STOP,
                    vmin: float = 0.95, vmax: float = 1.05, vset: float = 1.0,
                    load_power_factor: float = 0.95,
                    segments: int = 3) -> list[dict]:
    """Seed every bus with a condenser, then prune while AC feasibility holds.

    `case` must be the maximum-load scenario with economic dispatch.  Each
    round deactivates the `prune_frac` share of active condensers with the
    smallest reactive dispatch in the latest AC solution; a batch that breaks
    feasibility is rolled back and retried at half size.  Stops when active
    condensers drop below `coverage_stop` of all buses.  Returns the trace.
    """
    model.condensers = {
        bid: Condenser(bus=bid, qmax_mvar=condenser_mvar) for bid in model.buses
    }
    kwargs = dict(vmin=vmin, vmax=vmax, vset=vset,
                  load_power_factor=load_power_factor, segments=segments)
    sol = ac_opf_surrogate(model, case.scenario, case.dispatch.committed, **kwargs)
    if not sol.feasible:
        detail = "; ".join(f"{k} {e}={v:.4f}" for k, e, v in sol.violations[:5])
        raise InfeasibleError(f"AC infeasible even with full condenser coverage: {detail}")

    n_buses = len(model.buses)
    trace = [{
        "iter": 0, "active_condensers": n_buses, "feasible": True,
        "pruned": [], "rolled_back": False,
    }]
    iteration = 0
    while _active_count(model) >= coverage_stop * n_buses:
        frac = prune_frac
        pruned_this_round = False
        while True:
            active = _active_count(model)
            batch_size = max(1, math.floor(frac * active))
            usage = condenser_dispatch(model, sol.qg_mvar, case.dispatch.committed)
            ranked = sorted(
                (bid for bid, cond in model.condensers.items() if cond.active),
                key=lambda bid: (abs(usage.get(bid, 0.0)), bid),
            )
            batch = ranked[:batch_size]
            for bid in batch:
                model.condensers[bid].active = False
            iteration += 1
            attempt = ac_opf_surrogate(model, case.scenario, case.dispatch.committed, **kwargs)
            if attempt.feasible:
                sol = attempt
                trace.append({
                    "iter": iteration, "active_condensers": _active_count(model),
                    "feasible": True, "pruned": batch, "rolled_back": False,
                })
                pruned_this_round = True
                break
            for bid in batch:
                model.condensers[bid].active = True
            trace.append({
                "iter": iteration, "active_condensers": _active_count(model),
                "feasible": False, "pruned": batch, "rolled_back": True,
            })
            if batch_size == 1:
                # not even the least-used condenser can go: coverage stays here
                trace[-1]["stalled"] = True
                return trace
            frac /= 2.0
        if not pruned_this_round:
            break
    return trace


def _active_count(model: GridModel) -> int:
    return sum(1 for c in model.condensers.values() if c.active)


def restore_limits(model: GridModel, originals: dict[str, float],
                   utilization: dict[str, float],
                   restore_below: float = DEFAULT_RESTORE_UTIL) -> list[str]:
    """Restore original ratings on lines whose final utilization is light.

    Lines at or above `restore_below` utilization keep the doubled limit and
    are flagged as conductor-upgraded.  Returns the ids left doubled.
    """
    kept_doubled = []
    for lid, original in originals.items():
        br = model.branches[lid]
        if utilization.get(lid, 0.0) < restore_below:
            br.mva_rating = original
            br.doubled = False
            br.original_rating = None
        else:
            br.doubled = True
            kept_doubled.append(lid)
    return kept_doubled


def write_trace_jsonl(trace: list[dict], path) -> None:
    with Path(path).open("w") as handle:
        for entry in trace:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
