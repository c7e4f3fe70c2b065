"""Iterative transmission-line sizing against 490 injection scenarios.

Each pass solves, per scenario, a relaxed DC-OPF LP whose objective trades
generator redispatch against line-limit violations.  Lines with violations
anywhere get upgraded in random batches (next conductor option up, then more
circuits, max 8); chronically underutilized lines get downsized the same way.
The loop ends when the violated-line count falls to the threshold, which
starts at zero and escalates after a configured number of iterations so
cycling between the two batch moves cannot run forever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .lineparams import ConductorCatalog
from .model import GridModel
from .solver import LinearProgram, solve_lp

OVERLOAD_TOL_MW = 1e-6
# secondary objective weight: keeps delta/redispatch minimal at lambda 0 and 1,
# large enough to clear the solver's dual feasibility tolerance
TIEBREAK_EPS = 1e-5


@dataclass
class SizingConfig:
    lambda_: float = 0.5
    batch_frac: float = 0.05
    underutil_frac: float = 0.30
    tau_initial: int = 0
    tau_escalation_start: int = 50
    max_circuits: int = 8
    rng_seed: int = 0
    max_iterations: int = 1000

    def __post_init__(self):
        for name in ("lambda_", "batch_frac", "underutil_frac"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")


@dataclass
class ViolationReport:
    """Worst-case per-line violations and utilizations across all scenarios."""

    delta_mw: dict[str, float]
    utilization: dict[str, float]
    redispatch_mw: list[dict[str, float]] = field(default_factory=list)

    def overloaded(self, tol: float = OVERLOAD_TOL_MW) -> list[str]:
        return sorted(l for l, d in self.delta_mw.items() if d > tol)

    def underutilized(self, frac: float) -> list[str]:
        return sorted(
            l for l, u in self.utilization.items()
            if u < frac and self.delta_mw.get(l, 0.0) <= OVERLOAD_TOL_MW
        )


def line_upgrade_lp(model: GridModel, case, lambda_: float,
                    include_transformers: bool = False):
    """Relaxed DC OPF for one scenario: how far do limits have to stretch?

    Minimizes lambda * sum(redispatch) + (1 - lambda) * sum(violation) subject
    to nodal balance, flow-angle coupling, relaxed line limits and a
    redispatch band around the scheduled injections.  Only committed units
    participate; decommitted ones stay at zero.  Returns (delta_by_line,
    redispatch_by_gen, flow_by_branch) in MW.
    """
    scenario = case.scenario
    dispatch = case.dispatch
    order = model.bus_order()
    idx = model.bus_index()
    gens = [model.generators[g] for g in sorted(model.generators)
            if dispatch.committed.get(g, False)]
    relaxed = [br for br in model.branches.values()
               if br.kind == "line" or include_transformers]

    ng, nb, nl = len(gens), len(order), len(relaxed)
    # variables: [pg] + [theta] + [delta per relaxed branch] + [redispatch per gen]
    off_theta = ng
    off_delta = ng + nb
    off_redis = ng + nb + nl
    lp = LinearProgram(off_redis + ng)

    caps = scenario.renewable_caps
    for k, gen in enumerate(gens):
        hi = min(gen.pmax_mw, caps.get(gen.id, gen.pmax_mw))
        lo = 0.0 if gen.is_renewable else min(gen.pmin_mw, hi)
        lp.set_bounds(k, lo, hi)
        lp.set_objective(off_redis + k, lambda_ + TIEBREAK_EPS)
    for b in range(nb):
        lp.set_bounds(off_theta + b, -np.inf, np.inf)
    lp.set_bounds(off_theta, 0.0, 0.0)  # angle reference
    for l in range(nl):
        lp.set_objective(off_delta + l, (1.0 - lambda_) + TIEBREAK_EPS)

    bus_terms = {b: [] for b in order}
    for k, gen in enumerate(gens):
        bus_terms[gen.bus].append((k, 1.0))
    flow_expr = {}
    for br in model.branches.values():
        if br.x_pu is None or br.x_pu <= 0:
            raise ValidationError(f"branch {br.id} has no positive reactance")
        y = model.base_mva / br.x_pu
        f, t = br.from_bus, br.to_bus
        flow_expr[br.id] = ((off_theta + idx[f], y), (off_theta + idx[t], -y))
        bus_terms[f].append((off_theta + idx[f], -y))
        bus_terms[f].append((off_theta + idx[t], y))
        bus_terms[t].append((off_theta + idx[f], y))
        bus_terms[t].append((off_theta + idx[t], -y))
    loads = scenario.bus_load_mw
    for b in order:
        lp.add_eq(bus_terms[b], loads.get(b, 0.0))

    for l, br in enumerate(relaxed):
        if br.mva_rating is None:
            raise ValidationError(f"branch {br.id} has no thermal rating")
        pos, neg = flow_expr[br.id]
        lp.add_le([pos, neg, (off_delta + l, -1.0)], br.mva_rating)
        lp.add_le([(pos[0], -pos[1]), (neg[0], -neg[1]), (off_delta + l, -1.0)], br.mva_rating)

    for k, gen in enumerate(gens):
        p0 = dispatch.pg_mw.get(gen.id, 0.0)
        lp.add_le([(k, 1.0), (off_redis + k, -1.0)], p0)
        lp.add_le([(k, -1.0), (off_redis + k, -1.0)], -p0)

    res = solve_lp(lp)
    if res.status != "optimal":
        raise NumericalError(f"sizing LP unexpectedly {res.status}")
    delta = {br.id: float(res.x[off_delta + l]) for l, br in enumerate(relaxed)}
    redispatch = {gen.id: float(res.x[off_redis + k]) for k, gen in enumerate(gens)}
    theta = res.x[off_theta:off_theta + nb]
    flows = {}
    for br in model.branches.values():
        y = model.base_mva / br.x_pu
        flows[br.id] = float(y * (theta[idx[br.from_bus]] - theta[idx[br.to_bus]]))
    return delta, redispatch, flows


def aggregate_violations(per_scenario, model: GridModel) -> ViolationReport:
    """Worst violation and utilization per line across the scenario results."""
    delta: dict[str, float] = {br.id: 0.0 for br in model.lines()}
    util: dict[str, float] = {br.id: 0.0 for br in model.lines()}
    redispatch = []
    for d, r, flows in per_scenario:
        redispatch.append(r)
        for lid in delta:
            if lid in d:
                delta[lid] = max(delta[lid], d[lid])
            rating = model.branches[lid].mva_rating
            util[lid] = max(util[lid], abs(flows[lid]) / rating)
    return ViolationReport(delta_mw=delta, utilization=util, redispatch_mw=redispatch)


def _batch_size(candidates: int, total_lines: int, frac: float) -> int:
    return min(candidates, int(round(frac * total_lines)))


def upgrade_batch(model: GridModel, report: ViolationReport, config: SizingConfig,
                  rng: np.random.Generator, catalog: ConductorCatalog) -> list[dict]:
    """Upgrade a random batch of overloaded lines one option step each.

    Lines already at the top option (largest conductor, 8 circuits) are
    saturated: they are excluded from the draw and stay overloaded.
    """
    overloaded = report.overloaded()
    draw = []
    for lid in overloaded:
        br = model.branches[lid]
        table = catalog.options(br.voltage_kv)
        if br.option_index is not None and br.option_index < len(table) - 1:
            draw.append(lid)
    size = _batch_size(len(draw), len(model.lines()), config.batch_frac)
    chosen = _draw(draw, size, rng)
    log = []
    for lid in chosen:
        br = model.branches[lid]
        before = br.mva_rating
        catalog.apply_option(br, br.option_index + 1)
        log.append({"line": lid, "option": br.option_index, "mva_from": before,
                    "mva_to": br.mva_rating, "circuits": br.circuits})
    return log


def downsize_batch(model: GridModel, report: ViolationReport, config: SizingConfig,
                   rng: np.random.Generator, catalog: ConductorCatalog) -> list[dict]:
    """Downsize a random batch of underutilized lines one option step each.

    Lines drawn at the floor option (smallest conductor, one circuit) are
    left untouched.
    """
    under = report.underutilized(config.underutil_frac)
    size = _batch_size(len(under), len(model.lines()), config.batch_frac)
    chosen = _draw(under, size, rng)
    log = []
    for lid in chosen:
        br = model.branches[lid]
        if br.option_index is None or br.option_index <= 0:
            continue
        before = br.mva_rating
        catalog.apply_option(br, br.option_index - 1)
        log.append({"line": lid, "option": br.option_index, "mva_from": before,
                    "mva_to": br.mva_rating, "circuits": br.circuits})
    return log


def _draw(candidates: list[str], size: int, rng: np.random.Generator) -> list[str]:
    if size <= 0 or not candidates:
        return []
    picks = rng.choice(len(candidates), size=size, replace=False)
    return [candidates[i] for i in sorted(picks.tolist())]


def run_sizing(model: GridModel, cases, config: SizingConfig,
               catalog: ConductorCatalog) -> list[dict]:
    """Steps 0-4 of the sizing loop; returns the per-iteration trace.

    Each iteration solves the relaxed LP for every scenario, stops if the
    overloaded-line count is within the threshold tau, and otherwise applies
    one upgrade batch and one downsize batch.  tau escalates by one per
    iteration once `tau_escalation_start` is reached.
    """
    seeds = np.random.SeedSequence(config.rng_seed).spawn(2)
    rng_up = np.random.default_rng(seeds[0])
    rng_down = np.random.default_rng(seeds[1])
    tau = config.tau_initial
    trace: list[dict] = []
    for iteration in range(1, config.max_iterations + 1):
        if iteration >= config.tau_escalation_start:
            tau += 1
        per_scenario = [line_upgrade_lp(model, case, config.lambda_) for case in cases]
        report = aggregate_violations(per_scenario, model)
        overloaded = report.overloaded()
        entry = {
            "iter": iteration, "tau": tau,
            "overloaded": len(overloaded),
            "underutilized": len(report.underutilized(config.underutil_frac)),
            "upgraded": [], "downsized": [],
        }
        if len(overloaded) <= tau:
            trace.append(entry)
            return trace
        up_log = upgrade_batch(model, report, config, rng_up, catalog)
        down_log = downsize_batch(model, report, config, rng_down, catalog)
        entry["upgraded"] = [e["line"] for e in up_log]
        entry["downsized"] = [e["line"] for e in down_log]
        trace.append(entry)
    raise NumericalError(f"sizing failed to terminate in {config.max_iterations} iterations")


def write_trace_jsonl(trace: list[dict], path) -> None:
    with Path(path).open("w") as handle:
        for entry in trace:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
