"""The evolving grid model: buses, branches, generators, loads, condensers.

A GridModel starts as bare topology and is enriched stage by stage: electrical
parameters by the line-sizing stage, reactive support by the compensation
stage.  Electrical fields stay None until assigned, and `finalized()` tells
downstream consumers whether power-flow math is possible yet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .geodata import (
    RENEWABLE_FUELS,
    SCALABLE_FUELS,
    GeoPoint,
    LinePath,
    path_length,
)

BUS_KINDS = ("substation", "added", "voltage_split")


@dataclass
class Bus:
    id: str
    location: GeoPoint
    kind: str = "substation"
    voltage_kv: float | None = None
    origin: str | None = None  # substation record id, substation kind only
    parent: str | None = None  # pre-split bus id, voltage_split kind only
    parent_kind: str | None = None  # kind of the pre-split bus

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise ValidationError(f"bus {self.id}: unknown kind '{self.kind}'")
        if (self.kind == "substation") != (self.origin is not None):
            raise ValidationError(f"bus {self.id}: origin set iff kind is 'substation'")


@dataclass
class Branch:
    """A transmission line or transformer; electrical fields filled in later."""

    id: str
    from_bus: str
    to_bus: str
    kind: str  # "line" | "transformer"
    path: LinePath | None = None     # lines only
    voltage_kv: float | None = None  # lines only
    kv_primary: float | None = None  # transformers only
    kv_secondary: float | None = None
    r_pu: float | None = None
    x_pu: float | None = None
    b_pu: float | None = None
    mva_rating: float | None = None
    option_index: int | None = None  # lines: position in the conductor option table
    circuits: int = 1
    doubled: bool = False            # thermal limit kept at 2x original (ACSS class)
    original_rating: float | None = None  # saved while limits are doubled
    xr_ratio: float | None = None    # transformers only

    @property
    def length_miles(self) -> float:
        if self.path is None:
            return 0.0
        return path_length(self.path)

    @property
    def is_line(self) -> bool:
        return self.kind == "line"


@dataclass
class CostCurve:
    """Quadratic production cost c2*p^2 + c1*p + c0 in $/h for p in MW."""

    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0
    kind: str = "zero"  # "quadratic" | "linear" | "zero"

    def __post_init__(self):
        if self.kind not in ("quadratic", "linear", "zero"):
            raise ValidationError(f"unknown cost curve kind '{self.kind}'")
        if self.kind == "zero" and (self.c2 or self.c1 or self.c0):
            raise ValidationError("zero cost curve must have all-zero coefficients")
        if self.kind == "linear" and self.c2:
            raise ValidationError("linear cost curve must have c2 = 0")
        if self.c2 < 0:
            raise ValidationError("c2 must be nonnegative")

    def value(self, p_mw: float) -> float:
        return self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0

    def marginal(self, p_mw: float) -> float:
        return 2.0 * self.c2 * p_mw + self.c1


@dataclass
class Generator:
    id: str
    bus: str
    fuel_type: str
    pmax_mw: float
    pmin_mw: float = 0.0
    power_factor: float = 1.0
    qmax_mvar: float | None = None
    qmin_mvar: float | None = None
    cost: CostCurve | None = None
    plant_code: str | None = None
    unit_id: str | None = None

    @property
    def is_renewable(self) -> bool:
        return self.fuel_type in RENEWABLE_FUELS

    @property
    def scalable_cap(self) -> bool:
        return self.fuel_type in SCALABLE_FUELS


@dataclass
class Load:
    tract_id: str
    bus: str | None
    location: GeoPoint
    profile: np.ndarray  # hourly MW

    def at_hour(self, hour: int) -> float:
        return float(self.profile[hour])


@dataclass
class Condenser:
    """Synchronous condenser: zero-P device with symmetric reactive limits."""

    bus: str
    qmax_mvar: float = 200.0
    active: bool = True

    @property
    def qmin_mvar(self) -> float:
        return -self.qmax_mvar


@dataclass
class GridModel:
    base_mva: float = 100.0
    buses: dict[str, Bus] = field(default_factory=dict)
    branches: dict[str, Branch] = field(default_factory=dict)
    generators: dict[str, Generator] = field(default_factory=dict)
    loads: dict[str, Load] = field(default_factory=dict)
    condensers: dict[str, Condenser] = field(default_factory=dict)

    # -- accessors ---------------------------------------------------------

    def lines(self) -> list[Branch]:
        return [b for b in self.branches.values() if b.kind == "line"]

    def transformers(self) -> list[Branch]:
        return [b for b in self.branches.values() if b.kind == "transformer"]

    def bus_order(self) -> list[str]:
        return list(self.buses)

    def bus_index(self) -> dict[str, int]:
        return {bid: i for i, bid in enumerate(self.buses)}

    def line_degree(self) -> dict[str, int]:
        """Number of line branches touching each bus (transformers excluded)."""
        deg = {bid: 0 for bid in self.buses}
        for br in self.branches.values():
            if br.kind != "line":
                continue
            deg[br.from_bus] += 1
            deg[br.to_bus] += 1
        return deg

    def generators_at(self) -> dict[str, list[str]]:
        at: dict[str, list[str]] = {}
        for gen in self.generators.values():
            at.setdefault(gen.bus, []).append(gen.id)
        return at

    def bus_loads_at_hour(self, hour: int) -> dict[str, float]:
        """Aggregate assigned tract loads per bus for one hour, MW."""
        totals: dict[str, float] = {}
        for load in self.loads.values():
            if load.bus is None:
                raise ValidationError(f"load {load.tract_id} has no bus assignment")
            totals[load.bus] = totals.get(load.bus, 0.0) + load.at_hour(hour)
        return totals

    def total_load_series(self) -> np.ndarray:
        horizon = self.horizon
        total = np.zeros(horizon)
        for load in self.loads.values():
            total += load.profile
        return total

    @property
    def horizon(self) -> int:
        for load in self.loads.values():
            return len(load.profile)
        return 0

    def finalized(self) -> bool:
        """True when every branch carries impedance and a thermal rating."""
        if not self.branches:
            return False
        return all(
            br.x_pu is not None and br.r_pu is not None and br.mva_rating is not None
            for br in self.branches.values()
        )

    def validate_topology(self):
        """Check cross-reference integrity and voltage coherence."""
        for br in self.branches.values():
            for end in (br.from_bus, br.to_bus):
                if end not in self.buses:
                    raise ValidationError(f"branch {br.id}: unknown bus '{end}'")
            if br.from_bus == br.to_bus:
                raise ValidationError(f"branch {br.id}: both ends on bus {br.from_bus}")
            if br.kind == "line":
                for end in (br.from_bus, br.to_bus):
                    bus_kv = self.buses[end].voltage_kv
                    if bus_kv is not None and abs(bus_kv - br.voltage_kv) > 1e-9:
                        raise ValidationError(
                            f"branch {br.id}: {br.voltage_kv} kV line on {bus_kv} kV bus {end}"
                        )
            else:
                kv_f = self.buses[br.from_bus].voltage_kv
                kv_t = self.buses[br.to_bus].voltage_kv
                if kv_f is not None and kv_t is not None and abs(kv_f - kv_t) < 1e-9:
                    raise ValidationError(f"transformer {br.id}: connects equal voltages")
        for gen in self.generators.values():
            if gen.bus not in self.buses:
                raise ValidationError(f"generator {gen.id}: unknown bus '{gen.bus}'")
        for load in self.loads.values():
            if load.bus is not None and load.bus not in self.buses:
                raise ValidationError(f"load {load.tract_id}: unknown bus '{load.bus}'")
        for cond in self.condensers.values():
            if cond.bus not in self.buses:
                raise ValidationError(f"condenser at unknown bus '{cond.bus}'")

    def copy(self) -> "GridModel":
        """Deep-enough copy: containers and mutable records are duplicated."""
        return GridModel(
            base_mva=self.base_mva,
            buses={k: replace(v) for k, v in self.buses.items()},
            branches={k: replace(v) for k, v in self.branches.items()},
            generators={k: replace(v, cost=replace(v.cost) if v.cost else None)
                        for k, v in self.generators.items()},
            loads={k: Load(v.tract_id, v.bus, v.location, v.profile) for k, v in self.loads.items()},
            condensers={k: replace(v) for k, v in self.condensers.items()},
        )


def derive_q_limits(generators: dict[str, Generator]) -> None:
    """Set symmetric reactive limits from the nameplate power factor.

    qmax = pmax * tan(acos(pf)); qmin = -qmax.
    """
    for gen in generators.values():
        qmax = gen.pmax_mw * math.tan(math.acos(gen.power_factor))
        gen.qmax_mvar = qmax
        gen.qmin_mvar = -qmax
