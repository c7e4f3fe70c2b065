"""gridsynth: synthesize geographically accurate, OPF-feasible power-grid test cases.

The pipeline turns raw infrastructure geodata (line paths, substations,
generators, tract-level load profiles) into a connected electrical model with
realistic parameters: topology construction, load and cost assignment,
scenario-driven iterative line sizing, reactive compensation placement, and a
yearly DC/AC evaluation.
"""

from .config import RunConfig
from .errors import GridSynthError, InfeasibleError, NumericalError, ValidationError
from .geodata import (
    Dataset,
    GeoPoint,
    GeneratorRecord,
    LinePath,
    LoadRecord,
    SubstationRecord,
    geo_distance,
    load_dataset,
    path_length,
)
from .model import Branch, Bus, Condenser, CostCurve, Generator, GridModel, Load
from .pipeline import PipelineState, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "Condenser", "CostCurve", "Dataset", "GeneratorRecord",
    "GeoPoint", "Generator", "GridModel", "GridSynthError", "InfeasibleError",
    "LinePath", "Load", "LoadRecord", "NumericalError", "PipelineState",
    "RunConfig", "SubstationRecord", "ValidationError", "geo_distance",
    "load_dataset", "path_length", "run_pipeline",
]
