"""End-to-end orchestration with per-stage checkpoints.

Stages run in a fixed order: ingest, topology, assign, scenarios, size,
reactive, evaluate, export.  After each stage the full state is checkpointed
(model JSON plus stage artifacts), so any stage can rerun from its
predecessor's checkpoint and reproduce the same downstream results; the only
randomness lives in the sizing batches and is reseeded from the config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assignment as asg
from . import caseio, geodata, lineparams, metrics, reactive, scenarios as scn
from . import sizing as szn
from . import topology as topo
from .config import RunConfig
from .errors import ValidationError
from .model import GridModel, Load, derive_q_limits
from .powerflow import ac_opf_surrogate

STAGES = ("ingest", "topology", "assign", "scenarios", "size", "reactive",
          "evaluate", "export")


@dataclass
class PipelineState:
    config: RunConfig
    dataset: geodata.Dataset | None = None
    model: GridModel | None = None
    diagnostics: list = field(default_factory=list)
    assignment: asg.LoadAssignment | None = None
    retention: dict | None = None
    cases: list[scn.InjectionCase] | None = None
    sizing_trace: list | None = None
    reactive_trace: list | None = None
    report: metrics.EvaluationReport | None = None
    completed: list[str] = field(default_factory=list)


def _catalog(config: RunConfig) -> lineparams.ConductorCatalog:
    kwargs = dict(gmd_ft=config.gmd_table(), max_circuits=config.sizing_max_circuits)
    if config.conductor_catalog_path:
        return lineparams.ConductorCatalog.from_csv(config.conductor_catalog_path, **kwargs)
    return lineparams.ConductorCatalog.default(**kwargs)


def _tables(config: RunConfig) -> lineparams.TransformerTables:
    if config.transformer_impedance_path and config.transformer_xr_path:
        return lineparams.TransformerTables.from_csv(
            config.transformer_impedance_path, config.transformer_xr_path
        )
    return lineparams.TransformerTables.default()


def _ac_kwargs(config: RunConfig) -> dict:
    return dict(vmin=config.vmin, vmax=config.vmax, vset=config.vset,
                load_power_factor=config.load_power_factor,
                segments=config.pwl_segments)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(state: PipelineState) -> None:
    cfg = state.config
    state.dataset = geodata.load_dataset(
        cfg.lines_path, cfg.substations_path, cfg.generators_path, cfg.loads_path
    )
    # validate the side tables early so failures carry the ingest stage name
    asg.load_renewable_totals(cfg.renewables_path)
    asg.load_cost_catalog(cfg.cost_catalog_path)
    lineparams.load_form1(cfg.form1_path)


def stage_topology(state: PipelineState) -> None:
    cfg = state.config
    dataset = state.dataset
    buses = topo.substation_buses(dataset.substations)
    buses, emap = topo.connect_endpoints(dataset.lines, buses, cfg.radius_m)
    lines, diags = topo.segment_branching_lines(
        dataset.lines, buses, emap, cfg.radius_m, cfg.micro_segment_m
    )
    buses, emap = topo.connect_endpoints(lines, buses, cfg.radius_m)
    if cfg.edit_script_path:
        script = topo.parse_edit_script(cfg.edit_script_path)
        lines, buses = topo.apply_edits(lines, buses, script)
        buses, emap = topo.connect_endpoints(lines, buses, cfg.radius_m)
    model = topo.build_model(lines, buses, emap, dataset.generators)
    diags += topo.diagnose(model, cfg.diagnose_radius_m, cfg.diagnose_ratio_threshold)
    diags += topo.drop_self_loops(model)
    topo.split_voltage_levels(model)
    model.validate_topology()
    for tract, rec in dataset.loads.items():
        model.loads[tract] = Load(
            tract_id=tract, bus=None, location=rec.location,
            profile=np.asarray(rec.profile, dtype=float),
        )
    state.model = model
    state.diagnostics = diags


def stage_assign(state: PipelineState) -> None:
    cfg = state.config
    model = state.model
    derive_q_limits(model.generators)
    catalog = asg.load_cost_catalog(cfg.cost_catalog_path)
    asg.assign_costs(model.generators, catalog,
                     cfg.nuclear_usd_per_mwh, cfg.import_usd_per_mwh)
    state.assignment = asg.assign_loads(model, k_nearest=cfg.load_k_nearest)
    asg.apply_assignment(model, state.assignment)
    _, state.retention = topo.largest_component(model)
    if not topo.is_single_component(model):
        raise ValidationError("model is not a single component after pruning")


def stage_scenarios(state: PipelineState) -> None:
    cfg = state.config
    solar, wind = asg.load_renewable_totals(cfg.renewables_path)
    picked = scn.select_scenarios(state.model, solar, wind)
    state.cases = scn.build_injection_cases(state.model, picked, cfg.reserve_frac)


def stage_size(state: PipelineState) -> None:
    cfg = state.config
    model = state.model
    catalog = _catalog(cfg)
    form1 = lineparams.load_form1(cfg.form1_path)
    lineparams.init_line_params(model, catalog, form1)
    tables = _tables(cfg)
    lineparams.init_transformers(model, tables)
    lineparams.resize_transformers(model, state.cases, tables,
                                   ladder=cfg.transformer_mva_ladder)
    state.sizing_trace = szn.run_sizing(model, state.cases, cfg.sizing_config(), catalog)


def max_load_economic_case(cases: list[scn.InjectionCase]) -> scn.InjectionCase:
    economic = [c for c in cases if c.scenario.kind == "economic"]
    if not economic:
        raise ValidationError("no economic dispatch cases available")
    return max(economic, key=lambda c: (c.scenario.total_load_mw, -c.scenario.hour_index))


def stage_reactive(state: PipelineState) -> None:
    cfg = state.config
    model = state.model
    case = max_load_economic_case(state.cases)
    originals = reactive.double_limits(model)
    trace = reactive.place_and_prune(
        model, case,
        condenser_mvar=cfg.condenser_mvar, prune_frac=cfg.prune_frac,
        coverage_stop=cfg.coverage_stop, vmin=cfg.vmin, vmax=cfg.vmax,
        vset=cfg.vset, load_power_factor=cfg.load_power_factor,
        segments=cfg.pwl_segments,
    )
    final = ac_opf_surrogate(model, case.scenario, case.dispatch.committed,
                             **_ac_kwargs(cfg))
    reactive.restore_limits(model, originals, final.loading, cfg.restore_threshold)
    state.reactive_trace = trace


def stage_evaluate(state: PipelineState) -> None:
    cfg = state.config
    solar, wind = asg.load_renewable_totals(cfg.renewables_path)
    end = cfg.eval_end_hour if cfg.eval_end_hour is not None else state.model.horizon
    state.report = metrics.yearly_evaluation(
        state.model, solar, wind, hours=range(cfg.eval_start_hour, end),
        segments=cfg.pwl_segments, vmin=cfg.vmin, vmax=cfg.vmax, vset=cfg.vset,
        load_power_factor=cfg.load_power_factor,
    )


def stage_export(state: PipelineState, out_dir=None) -> dict:
    cfg = state.config
    target = Path(out_dir) if out_dir else Path("case_export")
    return caseio.export_case(
        state.model, target, vmin=cfg.vmin, vmax=cfg.vmax,
        load_power_factor=cfg.load_power_factor,
    )


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "topology": stage_topology,
    "assign": stage_assign,
    "scenarios": stage_scenarios,
    "size": stage_size,
    "reactive": stage_reactive,
    "evaluate": stage_evaluate,
}


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(state: PipelineState, ckpt_dir, stage: str) -> None:
    stage_dir = Path(ckpt_dir) / stage
    stage_dir.mkdir(parents=True, exist_ok=True)
    state.config.to_json(stage_dir / "config.json")
    meta = {"stage": stage, "completed": state.completed}
    if state.retention is not None:
        meta["retention"] = state.retention
    (stage_dir / "state.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if state.dataset is not None and stage == "ingest":
        geodata.export_dataset(state.dataset, stage_dir / "dataset")
    if state.model is not None:
        caseio.save_model(state.model, stage_dir / "model.json")
    if state.diagnostics:
        topo.write_diagnostics_csv(state.diagnostics, stage_dir / "diagnostics.csv")
    if state.cases is not None:
        scn.write_injections_jsonl(state.cases, stage_dir / "injections.jsonl")
    if state.sizing_trace is not None:
        szn.write_trace_jsonl(state.sizing_trace, stage_dir / "sizing_trace.jsonl")
    if state.reactive_trace is not None:
        reactive.write_trace_jsonl(state.reactive_trace, stage_dir / "reactive_trace.jsonl")
    if state.report is not None:
        metrics.report_to_csv(state.report, stage_dir / "report.csv")
        metrics.report_to_json(state.report, stage_dir / "report.json")
        for k, window in enumerate(state.config.dispatch_windows):
            lo = max(0, window[0])
            hi = min(window[1], state.model.horizon)
            if lo >= hi:
                continue
            rows = metrics.dispatch_stack(state.report, (lo, hi))
            metrics.stack_to_csv(rows, stage_dir / f"dispatch_stack_{k}.csv")


def load_checkpoint(config: RunConfig, ckpt_dir, stage: str) -> PipelineState:
    stage_dir = Path(ckpt_dir) / stage
    if not stage_dir.exists():
        raise ValidationError(f"no checkpoint for stage '{stage}' under {ckpt_dir}")
    state = PipelineState(config=config)
    meta = json.loads((stage_dir / "state.json").read_text())
    state.completed = meta.get("completed", [])
    state.retention = meta.get("retention")
    dataset_dir = Path(ckpt_dir) / "ingest" / "dataset"
    if dataset_dir.exists():
        state.dataset = geodata.load_dataset(
            dataset_dir / "lines.geojson", dataset_dir / "substations.csv",
            dataset_dir / "generators.csv", dataset_dir / "loads.csv",
        )
    model_path = stage_dir / "model.json"
    if model_path.exists():
        state.model = caseio.load_model(model_path)
    cases_path = stage_dir / "injections.jsonl"
    if cases_path.exists() and state.model is not None:
        state.cases = scn.read_injections_jsonl(cases_path, state.model)
    return state


def run_pipeline(config: RunConfig, checkpoint_dir=None, from_stage: str | None = None,
                 export_dir=None) -> PipelineState:
    """Run all stages (or resume from `from_stage`) and export the case."""
    order = list(STAGES)
    if from_stage is not None:
        if from_stage not in order:
            raise ValidationError(f"unknown stage '{from_stage}'; expected one of {order}")
        start = order.index(from_stage)
        if start > 0:
            if checkpoint_dir is None:
                raise ValidationError("resuming a stage requires a checkpoint directory")
            state = load_checkpoint(config, checkpoint_dir, order[start - 1])
        else:
            state = PipelineState(config=config)
    else:
        start = 0
        state = PipelineState(config=config)

    for stage in order[start:]:
        if stage == "export":
            target = export_dir
            if target is None and checkpoint_dir is not None:
                target = Path(checkpoint_dir) / "export" / "case"
            stage_export(state, target or "case_export")
        else:
            _STAGE_FUNCS[stage](state)
        state.completed = state.completed + [stage]
        if checkpoint_dir is not None:
            save_checkpoint(state, checkpoint_dir, stage)
    return state
