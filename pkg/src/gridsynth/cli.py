"""Command-line entry point: run the synthesis end-to-end or stage by stage.

Exit codes: 0 success, 2 validation error, 3 numerical failure,
4 infeasibility.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .caseio import export_case, import_case, load_model
from .config import RunConfig
from .errors import GridSynthError, ValidationError
from .pipeline import STAGES, load_checkpoint, run_pipeline, save_checkpoint, _STAGE_FUNCS
from .pipeline import PipelineState, stage_export


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridsynth",
        description="Synthesize an OPF-feasible power-grid test case from geographic data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config rng seed")
        p.add_argument("--checkpoint-dir", default=None, help="stage checkpoint directory")

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        common(p)
        if stage == "export":
            p.add_argument("--output", default=None, help="export directory")

    p = sub.add_parser("pipeline", help="run every stage in order")
    common(p)
    p.add_argument("--stage", default=None, choices=STAGES,
                   help="resume from this stage using existing checkpoints")
    p.add_argument("--output", default=None, help="final export directory")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_json(args.config)
    if args.seed is not None:
        config.rng_seed = args.seed
    return config


def _run_single_stage(stage: str, args) -> None:
    config = _load_config(args)
    if args.checkpoint_dir is None:
        raise ValidationError("stage commands need --checkpoint-dir")
    if stage == "ingest":
        state = PipelineState(config=config)
    else:
        previous = STAGES[STAGES.index(stage) - 1]
        state = load_checkpoint(config, args.checkpoint_dir, previous)
    if stage == "export":
        target = args.output or (Path(args.checkpoint_dir) / "export" / "case")
        stage_export(state, target)
    else:
        _STAGE_FUNCS[stage](state)
    state.completed = state.completed + [stage]
    save_checkpoint(state, args.checkpoint_dir, stage)
    print(f"stage {stage}: done")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "pipeline":
            config = _load_config(args)
            run_pipeline(config, checkpoint_dir=args.checkpoint_dir,
                         from_stage=args.stage, export_dir=args.output)
            print("pipeline: done")
        else:
            _run_single_stage(args.command, args)
    except GridSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
