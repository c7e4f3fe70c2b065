"""DC power flow, DC OPF, Newton AC power flow, and the AC dispatch surrogate.

The AC "OPF" here is deliberately a surrogate: take the DC-OPF dispatch, bump
the cheapest units with headroom to cover network losses, and run a full
Newton power flow with reactive dispatch from generators and condensers.  The
result is either a certified AC-feasible operating point or an itemized list
of voltage/thermal violations, which is exactly the signal the reactive
compensation loop consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InfeasibleError, NumericalError, ValidationError
from .model import GridModel
from .solver import LinearProgram, SparseMatrix, solve_lp, solve_linear

AC_TOL_PU = 1e-8
AC_MAX_ITER = 30
BINDING_LOADING = 0.9999
DEFAULT_VMIN = 0.95
DEFAULT_VMAX = 1.05


@dataclass
class PFSolution:
    theta_rad: dict[str, float]
    v_pu: dict[str, float]
    flows_mw: dict[str, float]            # P at the from end
    converged: bool = True
    iterations: int = 0
    q_from_mvar: dict[str, float] = field(default_factory=dict)
    p_to_mw: dict[str, float] = field(default_factory=dict)
    q_to_mvar: dict[str, float] = field(default_factory=dict)
    bus_qg_mvar: dict[str, float] = field(default_factory=dict)
    total_loss_mw: float = 0.0


@dataclass
class OPFSolution:
    pg_mw: dict[str, float]
    objective: float
    loading: dict[str, float]
    binding_lines: int
    qg_mvar: dict[str, float] = field(default_factory=dict)  # per bus (AC only)
    feasible: bool = True
    violations: list[tuple[str, str, float]] = field(default_factory=list)
    pf: PFSolution | None = None


def default_slack_bus(model: GridModel, committed: dict[str, bool] | None = None) -> str:
    """Bus of the largest-capacity committed generator (ties: lowest gen id)."""
    best = None
    for gid in sorted(model.generators):
        if committed is not None and not committed.get(gid, False):
            continue
        gen = model.generators[gid]
        if best is None or gen.pmax_mw > best[0]:
            best = (gen.pmax_mw, gid)
    if best is None:
        raise ValidationError("no committed generator to anchor the slack bus")
    return model.generators[best[1]].bus


def _require_finalized(model: GridModel):
    for br in model.branches.values():
        if br.x_pu is None or br.x_pu <= 0:
            raise ValidationError(f"branch {br.id} has no positive series reactance")


def _check_connected(model: GridModel):
    idx = model.bus_index()
    n = len(idx)
    rows, cols = [], []
    for br in model.branches.values():
        rows += [idx[br.from_bus], idx[br.to_bus]]
        cols += [idx[br.to_bus], idx[br.from_bus]]
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    if ncomp > 1:
        main = np.bincount(labels).argmax()
        orphan = next(bid for bid, i in idx.items() if labels[i] != main)
        raise NumericalError(f"network is islanded: bus {orphan} unreachable")


# ---------------------------------------------------------------------------
# DC power flow
# ---------------------------------------------------------------------------

def dc_powerflow(model: GridModel, injections_mw: dict[str, float],
                 slack_bus: str | None = None) -> PFSolution:
    """Linear power flow: flows proportional to angle differences.

    `injections_mw` maps bus to net injection (generation minus load); any
    residual imbalance lands on the slack bus.
    """
    _require_finalized(model)
    _check_connected(model)
    order = model.bus_order()
    idx = model.bus_index()
    n = len(order)
    if slack_bus is None:
        slack_bus = default_slack_bus(model)
    if slack_bus not in idx:
        raise ValidationError(f"slack bus {slack_bus} not in model")
    slack = idx[slack_bus]

    entries = []
    for br in model.branches.values():
        i, j = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / br.x_pu
        entries += [(i, i, y), (j, j, y), (i, j, -y), (j, i, -y)]
    p = np.array([injections_mw.get(bid, 0.0) for bid in order]) / model.base_mva

    keep = [i for i in range(n) if i != slack]
    full = SparseMatrix.from_entries(n, entries).to_csc()
    reduced = full[np.ix_(keep, keep)]
    try:
        theta_red = solve_linear(reduced, p[keep])
    except NumericalError as exc:
        raise NumericalError(f"DC power flow singular (check islanding): {exc}") from exc
    theta = np.zeros(n)
    theta[keep] = theta_red

    flows = {}
    for br in model.branches.values():
        i, j = idx[br.from_bus], idx[br.to_bus]
        flows[br.id] = (theta[i] - theta[j]) / br.x_pu * model.base_mva
    return PFSolution(
        theta_rad={bid: float(theta[idx[bid]]) for bid in order},
        v_pu={bid: 1.0 for bid in order},
        flows_mw=flows,
    )


# ---------------------------------------------------------------------------
# DC OPF
# ---------------------------------------------------------------------------

def _dispatch_bounds(gen, committed, caps):
    if not committed.get(gen.id, False):
        return None
    hi = min(gen.pmax_mw, caps.get(gen.id, gen.pmax_mw))
    lo = 0.0 if gen.is_renewable else min(gen.pmin_mw, hi)
    return lo, hi


def _piecewise_segments(curve, lo, hi, segments):
    """Secant-slope linearization of a convex quadratic over [lo, hi]."""
    if hi <= lo:
        return []
    if curve.c2 == 0.0:
        return [(hi - lo, curve.c1)]
    count = max(1, segments)
    width = (hi - lo) / count
    segs = []
    for s in range(count):
        a = lo + s * width
        b = a + width
        slope = curve.c2 * (a + b) + curve.c1  # secant of c2 p^2 + c1 p
        segs.append((width, slope))
    return segs


def dc_opf(model: GridModel, scenario, committed: dict[str, bool] | None = None,
           segments: int = 3, slack_bus: str | None = None) -> OPFSolution:
    """Cost-minimizing DC dispatch under nodal balance and branch limits.

    Quadratic costs enter the LP as convex piecewise-linear segments; the
    reported objective is the true curve cost at the optimal dispatch.
    """
    _require_finalized(model)
    _check_connected(model)
    if committed is None:
        committed = {gid: True for gid in model.generators}
    caps = scenario.renewable_caps
    loads = scenario.bus_load_mw
    order = model.bus_order()
    idx = model.bus_index()
    if slack_bus is None:
        slack_bus = default_slack_bus(model, committed)

    total_load = sum(loads.values())
    gens = [model.generators[g] for g in sorted(model.generators) if committed.get(g, False)]
    lo_sum = sum(_dispatch_bounds(g, committed, caps)[0] for g in gens)
    hi_sum = sum(_dispatch_bounds(g, committed, caps)[1] for g in gens)
    if hi_sum < total_load - 1e-9 or lo_sum > total_load + 1e-9:
        raise InfeasibleError(
            f"dispatchable range [{lo_sum:.1f}, {hi_sum:.1f}] MW cannot meet load {total_load:.1f} MW"
        )

    seg_vars = []  # (gen, width, slope)
    gen_base = {}  # gen id -> (lo, first segment var index, count)
    for gen in gens:
        lo, hi = _dispatch_bounds(gen, committed, caps)
        segs = _piecewise_segments(gen.cost, lo, hi, segments)
        gen_base[gen.id] = (lo, len(seg_vars), len(segs))
        for width, slope in segs:
            seg_vars.append((gen.id, width, slope))

    nseg = len(seg_vars)
    ntheta = len(order)
    lp = LinearProgram(nseg + ntheta)
    for j, (_, width, slope) in enumerate(seg_vars):
        lp.set_bounds(j, 0.0, width)
        lp.set_objective(j, slope)
    for b in range(ntheta):
        lp.set_bounds(nseg + b, -np.inf, np.inf)
    lp.set_bounds(nseg + idx[slack_bus], 0.0, 0.0)

    # nodal balance: sum(pg at bus) - sum(outgoing flows) = load
    bus_terms = {b: [] for b in order}
    for gen in gens:
        lo, start, count = gen_base[gen.id]
        bus_terms[gen.bus].extend((start + s, 1.0) for s in range(count))
    flow_coeff = {}
    for br in model.branches.values():
        y = model.base_mva / br.x_pu
        f, t = br.from_bus, br.to_bus
        flow_coeff[br.id] = y
        bus_terms[f].append((nseg + idx[f], -y))
        bus_terms[f].append((nseg + idx[t], y))
        bus_terms[t].append((nseg + idx[f], y))
        bus_terms[t].append((nseg + idx[t], -y))
    gen_lo_at = {b: 0.0 for b in order}
    for gen in gens:
        gen_lo_at[gen.bus] += gen_base[gen.id][0]
    for b in order:
        lp.add_eq(bus_terms[b], loads.get(b, 0.0) - gen_lo_at[b])

    for br in model.branches.values():
        if br.mva_rating is None:
            raise ValidationError(f"branch {br.id} has no thermal rating")
        y = flow_coeff[br.id]
        f, t = idx[br.from_bus], idx[br.to_bus]
        lp.add_le([(nseg + f, y), (nseg + t, -y)], br.mva_rating)
        lp.add_le([(nseg + f, -y), (nseg + t, y)], br.mva_rating)

    res = solve_lp(lp)
    if res.status != "optimal":
        detail = _diagnose_dc_infeasibility(model, scenario, gens, committed, caps, slack_bus)
        raise InfeasibleError(f"DC OPF {res.status}: {detail}")

    pg = {}
    for gen in gens:
        lo, start, count = gen_base[gen.id]
        pg[gen.id] = lo + float(np.sum(res.x[start:start + count]))
    theta = res.x[nseg:]
    loading = {}
    flows = {}
    for br in model.branches.values():
        flow = flow_coeff[br.id] * (theta[idx[br.from_bus]] - theta[idx[br.to_bus]])
        flows[br.id] = float(flow)
        loading[br.id] = abs(flow) / br.mva_rating
    binding = sum(1 for br in model.lines() if loading[br.id] >= BINDING_LOADING)
    objective = sum(model.generators[g].cost.value(p) for g, p in pg.items())
    full_pg = {gid: pg.get(gid, 0.0) for gid in sorted(model.generators)}
    sol = PFSolution(
        theta_rad={b: float(theta[idx[b]]) for b in order},
        v_pu={b: 1.0 for b in order},
        flows_mw=flows,
    )
    return OPFSolution(pg_mw=full_pg, objective=objective, loading=loading,
                       binding_lines=binding, pf=sol)


def _diagnose_dc_infeasibility(model, scenario, gens, committed, caps, slack_bus):
    """Re-solve with elastic limits to name the most-violated constraint."""
    from .sizing import line_upgrade_lp

    class _Case:
        pass

    case = _Case()
    case.scenario = scenario
    pg0 = {}
    remaining = sum(scenario.bus_load_mw.values())
    for gen in gens:
        lo, hi = _dispatch_bounds(gen, committed, caps)
        take = min(max(remaining, lo), hi)
        pg0[gen.id] = take
        remaining -= take
    case.dispatch = type("D", (), {
        "committed": dict(committed),
        "pg_mw": {gid: pg0.get(gid, 0.0) for gid in model.generators},
    })()
    try:
        delta, _, _ = line_upgrade_lp(model, case, lambda_=0.0, include_transformers=True)
    except Exception:
        return "relaxation also failed (capacity shortfall)"
    worst = max(delta.items(), key=lambda kv: kv[1], default=(None, 0.0))
    if worst[0] is None or worst[1] <= 1e-6:
        return "no single violated branch identified"
    return f"most violated branch {worst[0]} by {worst[1]:.2f} MW"


# ---------------------------------------------------------------------------
# AC power flow (full Newton, PV/PQ switching)
# ---------------------------------------------------------------------------

def _ybus(model: GridModel):
    order = model.bus_order()
    idx = model.bus_index()
    n = len(order)
    rows, cols, vals = [], [], []
    for br in model.branches.values():
        r = br.r_pu or 0.0
        ys = 1.0 / complex(r, br.x_pu)
        bc = 0.5j * (br.b_pu or 0.0)
        i, j = idx[br.from_bus], idx[br.to_bus]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [ys + bc, ys + bc, -ys, -ys]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


def ac_powerflow(model: GridModel, pg_mw: dict[str, float], slack_bus: str,
                 load_mw: dict[str, float], load_q_mvar: dict[str, float],
                 q_limits: dict[str, tuple[float, float]] | None = None,
                 vset: float = 1.0, tol: float = AC_TOL_PU,
                 max_iter: int = AC_MAX_ITER) -> PFSolution:
    """Full Newton-Raphson AC power flow in polar form.

    Buses listed in `q_limits` hold `vset` as PV buses until their aggregate
    reactive range is exhausted, then switch to PQ pinned at the limit.  The
    slack bus absorbs both real and reactive residuals.
    """
    _require_finalized(model)
    _check_connected(model)
    order = model.bus_order()
    idx = model.bus_index()
    n = len(order)
    if slack_bus not in idx:
        raise ValidationError(f"slack bus {slack_bus} not in model")
    slack = idx[slack_bus]
    q_limits = q_limits or {}

    ybus = _ybus(model)
    base = model.base_mva
    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    for bid, i in idx.items():
        p_spec[i] = -load_mw.get(bid, 0.0) / base
        q_spec[i] = -load_q_mvar.get(bid, 0.0) / base
    for gid, p in pg_mw.items():
        p_spec[idx[model.generators[gid].bus]] += p / base

    pv_set = sorted(idx[b] for b in q_limits if idx[b] != slack)
    vm = np.ones(n)
    va = np.zeros(n)
    vm[pv_set] = vset
    vm[slack] = vset
    q_fixed: dict[int, float] = {}  # switched PV buses: pinned device Q (pu)

    iterations = 0
    for _outer in range(len(pv_set) + 1):
        pv = np.array([i for i in pv_set if i not in q_fixed], dtype=int)
        pq = np.array([i for i in range(n) if i != slack and i not in pv], dtype=int)
        for i, q_dev in q_fixed.items():
            q_spec_i = q_dev - load_q_mvar.get(order[i], 0.0) / base
            q_spec[i] = q_spec_i
        pvpq = np.concatenate([pv, pq]).astype(int)

        converged = False
        for _ in range(max_iter):
            V = vm * np.exp(1j * va)
            s_calc = V * np.conj(ybus @ V)
            dp = s_calc.real[pvpq] - p_spec[pvpq]
            dq = s_calc.imag[pq] - q_spec[pq]
            mismatch = np.concatenate([dp, dq])
            if mismatch.size == 0 or np.abs(mismatch).max() <= tol:
                converged = True
                break
            ib = ybus @ V
            diag_v = sp.diags(V)
            diag_ib = sp.diags(ib)
            diag_vn = sp.diags(V / np.abs(V))
            ds_dva = (1j * diag_v @ (diag_ib - ybus @ diag_v).conjugate()).tocsr()
            ds_dvm = (diag_v @ (ybus @ diag_vn).conjugate()
                      + diag_ib.conjugate() @ diag_vn).tocsr()
            j11 = ds_dva[pvpq][:, pvpq].real
            j12 = ds_dvm[pvpq][:, pq].real
            j21 = ds_dva[pq][:, pvpq].imag
            j22 = ds_dvm[pq][:, pq].imag
            jac = sp.bmat([[j11, j12], [j21, j22]], format="csc")
            try:
                dx = solve_linear(jac, -mismatch)
            except NumericalError as exc:
                raise NumericalError(f"AC Jacobian solve failed: {exc}") from exc
            iterations += 1
            va[pvpq] += dx[: len(pvpq)]
            vm[pq] += dx[len(pvpq):]
            if np.any(vm <= 0) or not np.all(np.isfinite(vm)):
                worst = order[int(np.argmin(vm))]
                raise NumericalError(f"AC power flow diverged near bus {worst}")
        if not converged:
            V = vm * np.exp(1j * va)
            s_calc = V * np.conj(ybus @ V)
            worst = order[int(np.argmax(np.abs(s_calc.real - p_spec)))]
            raise NumericalError(
                f"AC power flow did not converge in {max_iter} iterations; worst mismatch at bus {worst}"
            )

        # enforce reactive limits on PV buses: pin violators and re-solve
        V = vm * np.exp(1j * va)
        s_calc = V * np.conj(ybus @ V)
        switched = False
        for i in pv:
            bid = order[i]
            q_dev = s_calc.imag[i] + load_q_mvar.get(bid, 0.0) / base
            qmin, qmax = (lim / base for lim in q_limits[bid])
            if q_dev > qmax + 1e-9:
                q_fixed[i] = qmax
                switched = True
            elif q_dev < qmin - 1e-9:
                q_fixed[i] = qmin
                switched = True
        if not switched:
            break

    V = vm * np.exp(1j * va)
    s_calc = V * np.conj(ybus @ V)
    flows, q_from, p_to, q_to = {}, {}, {}, {}
    loss = 0.0
    for br in model.branches.values():
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r_pu or 0.0, br.x_pu)
        bc = 0.5j * (br.b_pu or 0.0)
        s_f = V[i] * np.conj(ys * (V[i] - V[j]) + bc * V[i]) * base
        s_t = V[j] * np.conj(ys * (V[j] - V[i]) + bc * V[j]) * base
        flows[br.id] = float(s_f.real)
        q_from[br.id] = float(s_f.imag)
        p_to[br.id] = float(s_t.real)
        q_to[br.id] = float(s_t.imag)
        loss += float(s_f.real + s_t.real)

    bus_qg = {}
    for bid, i in idx.items():
        if bid in q_limits or i == slack:
            bus_qg[bid] = float((s_calc.imag[i] + load_q_mvar.get(bid, 0.0) / base) * base)
    return PFSolution(
        theta_rad={b: float(va[idx[b]]) for b in order},
        v_pu={b: float(vm[idx[b]]) for b in order},
        flows_mw=flows, q_from_mvar=q_from, p_to_mw=p_to, q_to_mvar=q_to,
        converged=True, iterations=iterations, bus_qg_mvar=bus_qg,
        total_loss_mw=loss,
    )


# ---------------------------------------------------------------------------
# AC OPF surrogate
# ---------------------------------------------------------------------------

def bus_q_limits(model: GridModel, committed: dict[str, bool]) -> dict[str, tuple[float, float]]:
    """Aggregate reactive capability per bus from generators and condensers."""
    limits: dict[str, tuple[float, float]] = {}

    def widen(bus, qmin, qmax):
        lo, hi = limits.get(bus, (0.0, 0.0))
        limits[bus] = (lo + qmin, hi + qmax)

    for gid in sorted(model.generators):
        gen = model.generators[gid]
        if not committed.get(gid, False):
            continue
        if gen.qmax_mvar is None:
            raise ValidationError(f"generator {gid} has no reactive limits")
        widen(gen.bus, gen.qmin_mvar, gen.qmax_mvar)
    for bus in sorted(model.condensers):
        cond = model.condensers[bus]
        if cond.active:
            widen(cond.bus, cond.qmin_mvar, cond.qmax_mvar)
    return {b: lims for b, lims in limits.items() if lims[1] > lims[0]}


def _allocate_losses(model, committed, caps, pg0, amount):
    """Add `amount` MW to the cheapest committed units with headroom."""
    alloc = {gid: 0.0 for gid in pg0}
    if amount <= 0:
        return alloc
    ranked = sorted(
        (gid for gid in pg0 if committed.get(gid, False)),
        key=lambda gid: (model.generators[gid].cost.marginal(pg0[gid]), gid),
    )
    remaining = amount
    for gid in ranked:
        gen = model.generators[gid]
        hi = min(gen.pmax_mw, caps.get(gid, gen.pmax_mw))
        headroom = max(0.0, hi - pg0[gid])
        take = min(headroom, remaining)
        alloc[gid] = take
        remaining -= take
        if remaining <= 1e-12:
            break
    if remaining > 1e-6:
        raise InfeasibleError(f"no generation headroom for {remaining:.3f} MW of losses")
    return alloc


def ac_opf_surrogate(model: GridModel, scenario, committed: dict[str, bool] | None = None,
                     segments: int = 3, vmin: float = DEFAULT_VMIN, vmax: float = DEFAULT_VMAX,
                     vset: float = 1.0, load_power_factor: float = 0.95,
                     max_outer: int = 10) -> OPFSolution:
    """DC-OPF dispatch plus loss allocation, verified by a full AC power flow.

    Iterates loss redistribution until scheduled generation matches load plus
    AC losses, then reports voltage-band and thermal violations (if any) for
    the reactive-support loop.  The objective is the cost of the final
    dispatch, so it is never below the DC objective for the same hour.
    """
    if committed is None:
        committed = {gid: True for gid in model.generators}
    dc = dc_opf(model, scenario, committed, segments=segments)
    pg0 = {gid: p for gid, p in dc.pg_mw.items() if committed.get(gid, False)}
    slack_bus = default_slack_bus(model, committed)
    caps = scenario.renewable_caps
    loads = scenario.bus_load_mw
    tan_phi = math.tan(math.acos(load_power_factor))
    load_q = {b: p * tan_phi for b, p in loads.items()}
    q_limits = bus_q_limits(model, committed)

    # iterate loss allocation: dispatch never drops below the DC schedule, so
    # AC generation and cost dominate their DC counterparts by construction
    pg = dict(pg0)
    sol = None
    loss = 0.0
    for _ in range(max_outer):
        sol = ac_powerflow(model, pg, slack_bus, loads, load_q, q_limits, vset=vset)
        new_loss = sol.total_loss_mw
        converged = abs(new_loss - loss) <= 1e-9 * model.base_mva
        loss = new_loss
        alloc = _allocate_losses(model, committed, caps, pg0, loss)
        pg = {gid: pg0[gid] + alloc.get(gid, 0.0) for gid in pg0}
        if converged:
            break

    loading = {}
    violations = []
    for br in model.branches.values():
        s_f = math.hypot(sol.flows_mw[br.id], sol.q_from_mvar[br.id])
        s_t = math.hypot(sol.p_to_mw[br.id], sol.q_to_mvar[br.id])
        loading[br.id] = max(s_f, s_t) / br.mva_rating
        if loading[br.id] > 1.0 + 1e-6:
            violations.append(("thermal", br.id, loading[br.id]))
    for bid, v in sol.v_pu.items():
        if v < vmin - 1e-9 or v > vmax + 1e-9:
            violations.append(("voltage", bid, v))

    binding = sum(1 for br in model.lines() if loading[br.id] >= BINDING_LOADING)
    objective = sum(model.generators[g].cost.value(p) for g, p in pg.items())
    full_pg = {gid: pg.get(gid, 0.0) for gid in sorted(model.generators)}
    return OPFSolution(
        pg_mw=full_pg, objective=objective, loading=loading, binding_lines=binding,
        qg_mvar=dict(sol.bus_qg_mvar), feasible=not violations, violations=violations,
        pf=sol,
    )
