"""Run configuration: every tunable of the synthesis in one serializable place."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .lineparams import DEFAULT_GMD_FT, DEFAULT_MVA_LADDER
from .sizing import SizingConfig


@dataclass
class RunConfig:
    # input paths
    lines_path: str = ""
    substations_path: str = ""
    generators_path: str = ""
    loads_path: str = ""
    renewables_path: str = ""
    cost_catalog_path: str = ""
    form1_path: str = ""
    conductor_catalog_path: str | None = None   # None: packaged defaults
    transformer_impedance_path: str | None = None
    transformer_xr_path: str | None = None
    edit_script_path: str | None = None

    # topology
    radius_m: float = 12.0
    micro_segment_m: float = 1.0
    diagnose_radius_m: float = 500.0
    diagnose_ratio_threshold: float = 10.0

    # assignment
    load_k_nearest: int = 50
    nuclear_usd_per_mwh: float = 20.0
    import_usd_per_mwh: float = 35.0

    # scenarios
    reserve_frac: float = 0.10

    # line parameters
    gmd_ft: dict[str, float] = field(default_factory=lambda: {
        f"{kv:g}": v for kv, v in DEFAULT_GMD_FT.items()
    })
    transformer_mva_ladder: list[float] = field(
        default_factory=lambda: list(DEFAULT_MVA_LADDER)
    )

    # sizing
    sizing_lambda: float = 0.5
    sizing_batch_frac: float = 0.05
    sizing_underutil_frac: float = 0.30
    sizing_tau_escalation_start: int = 50
    sizing_max_circuits: int = 8
    sizing_max_iterations: int = 1000

    # AC feasibility
    vmin: float = 0.95
    vmax: float = 1.05
    vset: float = 1.0
    load_power_factor: float = 0.95
    pwl_segments: int = 3

    # reactive support
    condenser_mvar: float = 200.0
    prune_frac: float = 0.20
    coverage_stop: float = 0.20
    restore_threshold: float = 0.50

    # evaluation
    eval_start_hour: int = 0
    eval_end_hour: int | None = None
    dispatch_windows: list[list[int]] = field(
        default_factory=lambda: [[144, 312], [5088, 5256]]
    )

    rng_seed: int = 0

    def __post_init__(self):
        for name in ("prune_frac", "coverage_stop", "restore_threshold",
                     "sizing_lambda", "sizing_batch_frac", "sizing_underutil_frac"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
        if self.radius_m <= 0:
            raise ValidationError("radius_m must be positive")
        if not 0 < self.load_power_factor <= 1.0:
            raise ValidationError("load_power_factor must be in (0, 1]")
        if not 0 < self.vmin < self.vmax:
            raise ValidationError("need 0 < vmin < vmax")
        if self.reserve_frac < 0:
            raise ValidationError("reserve_frac must be nonnegative")

    def sizing_config(self) -> SizingConfig:
        return SizingConfig(
            lambda_=self.sizing_lambda,
            batch_frac=self.sizing_batch_frac,
            underutil_frac=self.sizing_underutil_frac,
            tau_escalation_start=self.sizing_tau_escalation_start,
            max_circuits=self.sizing_max_circuits,
            max_iterations=self.sizing_max_iterations,
            rng_seed=self.rng_seed,
        )

    def gmd_table(self) -> dict[float, float]:
        return {float(kv): v for kv, v in self.gmd_ft.items()}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc, source=str(path))

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"{source}: unknown config keys {sorted(unknown)}")
        return cls(**doc)
