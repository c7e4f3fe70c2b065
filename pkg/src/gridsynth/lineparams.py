"""Initial electrical parameters for lines and transformers.

Lines start from a conductor catalog: each line is matched to the utility
filing record of closest length at its voltage, which names a conductor size
and circuit count.  Impedance comes from conductor geometry (GMR against a
per-voltage mean phase spacing), and the thermal rating from ampacity times
rated voltage.  Every line also gets an ordered table of conductor-and-circuit
upgrade options that the sizing loop walks up and down.

Transformers start at 2000 MVA with per-unit impedances from an average-value
table keyed by voltage pair and size, then shrink to the largest flow seen in
a DC power flow across all injection scenarios.
"""

from __future__ import annotations

import bisect
import csv
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ValidationError
from .model import Branch, GridModel

OMEGA_60HZ = 2.0 * math.pi * 60.0
# 2*pi*f * 2e-7 H/m * 1609.344 m/mi: inductive reactance per mile per ln(GMD/GMR)
X_PER_MILE_COEFF = OMEGA_60HZ * 2.0e-7 * 1609.344
# 2*pi*f * 2*pi*eps0 * 1609.344: shunt susceptance per mile per 1/ln(GMD/r)
B_PER_MILE_COEFF = OMEGA_60HZ * 2.0 * math.pi * 8.854e-12 * 1609.344
# solid-conductor relation between geometric mean radius and physical radius
GMR_TO_RADIUS = math.exp(0.25)

DEFAULT_GMD_FT = {66.0: 5.0, 115.0: 10.0, 230.0: 25.0, 500.0: 45.0}
DEFAULT_MAX_CIRCUITS = 8
MVA_DEDUP_FRAC = 0.01
TRANSFORMER_INITIAL_MVA = 2000.0
DEFAULT_MVA_LADDER = tuple(float(v) for v in range(100, 2001, 100))


@dataclass(frozen=True)
class CatalogConductor:
    name: str
    size_kcmil: float
    ampacity_a: float
    r_per_mile: float  # ohm/mile, AC at nominal temperature
    gmr_ft: float


@dataclass(frozen=True)
class ConductorOption:
    conductor: CatalogConductor
    circuits: int

    def mva(self, voltage_kv: float) -> float:
        return mva_rating(self, voltage_kv)


def mva_rating(option: ConductorOption, voltage_kv: float) -> float:
    """Thermal rating: sqrt(3) * V_LL[kV] * ampacity[kA] * circuits, in MVA."""
    if option.conductor.ampacity_a <= 0:
        raise ValidationError(f"conductor {option.conductor.name}: ampacity must be positive")
    return math.sqrt(3.0) * voltage_kv * (option.conductor.ampacity_a / 1000.0) * option.circuits


def impedance_from_conductor(option: ConductorOption, voltage_kv: float,
                             length_miles: float, gmd_ft: float,
                             base_mva: float = 100.0):
    """Per-unit (r, x, b) for a line built from `option`.

    Series reactance uses X = 0.12134 * ln(GMD/GMR) ohm/mile at 60 Hz; shunt
    susceptance uses the single-conductor capacitance formula with the same
    spacing.  Parallel circuits divide series impedance and multiply charging.
    """
    cond = option.conductor
    if length_miles <= 0:
        raise ValidationError("line length must be positive")
    if gmd_ft <= 0 or cond.gmr_ft <= 0:
        raise ValidationError("GMD and GMR must be positive")
    if gmd_ft <= cond.gmr_ft:
        raise ValidationError(f"GMD {gmd_ft} ft must exceed GMR {cond.gmr_ft} ft")
    x_per_mile = X_PER_MILE_COEFF * math.log(gmd_ft / cond.gmr_ft)
    radius_ft = cond.gmr_ft * GMR_TO_RADIUS
    b_per_mile = B_PER_MILE_COEFF / math.log(gmd_ft / radius_ft)
    z_base = voltage_kv * voltage_kv / base_mva
    r_pu = cond.r_per_mile * length_miles / option.circuits / z_base
    x_pu = x_per_mile * length_miles / option.circuits / z_base
    b_pu = b_per_mile * length_miles * option.circuits * z_base
    return r_pu, x_pu, b_pu


class ConductorCatalog:
    """Per-voltage conductor menu plus the GMD table driving impedances."""

    def __init__(self, by_voltage: dict[float, list[CatalogConductor]],
                 gmd_ft: dict[float, float] | None = None,
                 max_circuits: int = DEFAULT_MAX_CIRCUITS,
                 base_mva: float = 100.0):
        if not by_voltage:
            raise ValidationError("conductor catalog is empty")
        self.by_voltage = {kv: list(conds) for kv, conds in sorted(by_voltage.items())}
        self.gmd_ft = dict(gmd_ft or DEFAULT_GMD_FT)
        self.max_circuits = max_circuits
        self.base_mva = base_mva
        self._options: dict[float, list[ConductorOption]] = {}

    @classmethod
    def from_csv(cls, path, **kwargs) -> "ConductorCatalog":
        """CSV with header kv,name,kcmil,ampacity_a,r_per_mile,gmr_ft."""
        path = Path(path)
        by_voltage: dict[float, list[CatalogConductor]] = {}
        with path.open(newline="") as handle:
            reader = csv.DictReader(handle)
            needed = {"kv", "name", "kcmil", "ampacity_a", "r_per_mile", "gmr_ft"}
            if not needed.issubset(reader.fieldnames or ()):
                raise ValidationError(f"{path}: header must contain {sorted(needed)}")
            for n, row in enumerate(reader):
                try:
                    by_voltage.setdefault(float(row["kv"]), []).append(CatalogConductor(
                        name=row["name"].strip(),
                        size_kcmil=float(row["kcmil"]),
                        ampacity_a=float(row["ampacity_a"]),
                        r_per_mile=float(row["r_per_mile"]),
                        gmr_ft=float(row["gmr_ft"]),
                    ))
                except ValueError as exc:
                    raise ValidationError(f"{path}: row {n}: {exc}") from exc
        return cls(by_voltage, **kwargs)

    @classmethod
    def default(cls, **kwargs) -> "ConductorCatalog":
        return cls.from_csv(str(resources.files("gridsynth.data") / "conductors.csv"), **kwargs)

    def gmd_for(self, voltage_kv: float) -> float:
        if voltage_kv in self.gmd_ft:
            return self.gmd_ft[voltage_kv]
        nearest = min(self.gmd_ft, key=lambda kv: (abs(kv - voltage_kv), kv))
        return self.gmd_ft[nearest]

    def catalog_voltage(self, voltage_kv: float) -> float:
        if voltage_kv in self.by_voltage:
            return voltage_kv
        nearest = min(self.by_voltage, key=lambda kv: (abs(kv - voltage_kv), kv))
        warnings.warn(f"no conductors catalogued at {voltage_kv} kV; using {nearest} kV menu")
        return nearest

    def options(self, voltage_kv: float) -> list[ConductorOption]:
        """Upgrade table: conductor x circuits combos, ascending MVA, deduplicated.

        Near-equal ratings (within 1%) collapse to the earlier entry so every
        step in the table strictly changes the rating.
        """
        kv = self.catalog_voltage(voltage_kv)
        if kv not in self._options:
            combos = [
                ConductorOption(cond, circuits)
                for circuits in range(1, self.max_circuits + 1)
                for cond in self.by_voltage[kv]
            ]
            combos.sort(key=lambda o: (o.mva(kv), o.circuits, o.conductor.size_kcmil, o.conductor.name))
            table: list[ConductorOption] = []
            for opt in combos:
                if table and opt.mva(kv) <= table[-1].mva(kv) * (1.0 + MVA_DEDUP_FRAC):
                    continue
                table.append(opt)
            self._options[kv] = table
        return self._options[kv]

    def apply_option(self, branch: Branch, option_index: int) -> None:
        """Install the option's electrical parameters on a line branch."""
        if branch.kind != "line":
            raise ValidationError(f"branch {branch.id} is not a line")
        table = self.options(branch.voltage_kv)
        if not 0 <= option_index < len(table):
            raise ValidationError(f"branch {branch.id}: option index {option_index} out of range")
        option = table[option_index]
        kv = self.catalog_voltage(branch.voltage_kv)
        r, x, b = impedance_from_conductor(
            option, branch.voltage_kv, branch.length_miles, self.gmd_for(kv), self.base_mva
        )
        branch.r_pu = r
        branch.x_pu = x
        branch.b_pu = b
        branch.mva_rating = option.mva(branch.voltage_kv)
        branch.option_index = option_index
        branch.circuits = option.circuits

    def nearest_option_index(self, voltage_kv: float, target_mva: float) -> int:
        table = self.options(voltage_kv)
        best = min(range(len(table)),
                   key=lambda i: (abs(table[i].mva(voltage_kv) - target_mva), i))
        return best


# ---------------------------------------------------------------------------
# utility filing records (line length / conductor data per utility & voltage)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Form1Record:
    utility: str
    voltage_kv: float
    length_miles: float
    conductors_per_phase: int
    size_kcmil: float
    material: str = "ACSR"


def load_form1(path) -> list[Form1Record]:
    """CSV with header utility,kv,length_miles,conductors_per_phase,kcmil,material."""
    path = Path(path)
    records = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        needed = {"utility", "kv", "length_miles", "conductors_per_phase", "kcmil"}
        if not needed.issubset(reader.fieldnames or ()):
            raise ValidationError(f"{path}: header must contain {sorted(needed)}")
        for n, row in enumerate(reader):
            try:
                records.append(Form1Record(
                    utility=row["utility"].strip(),
                    voltage_kv=float(row["kv"]),
                    length_miles=float(row["length_miles"]),
                    conductors_per_phase=int(row["conductors_per_phase"]),
                    size_kcmil=float(row["kcmil"]),
                    material=(row.get("material") or "ACSR").strip(),
                ))
            except ValueError as exc:
                raise ValidationError(f"{path}: row {n}: {exc}") from exc
    if not records:
        raise ValidationError(f"{path}: no records")
    return records


def match_form1(line, form1: list[Form1Record]) -> Form1Record:
    """The filing record of closest length at the line's voltage.

    When the line's owner matches a utility present at that voltage, only that
    utility's records are examined.  Falls back to the nearest voltage level
    (with a warning) if none exist at the line's own.  Length ties resolve to
    the earlier record.
    """
    if not form1:
        raise ValidationError("empty utility filing table")
    from .geodata import path_length
    at_kv = [r for r in form1 if abs(r.voltage_kv - line.voltage_kv) < 1e-9]
    if not at_kv:
        nearest = min({r.voltage_kv for r in form1},
                      key=lambda kv: (abs(kv - line.voltage_kv), kv))
        warnings.warn(
            f"line {line.id}: no filing records at {line.voltage_kv} kV; using {nearest} kV"
        )
        at_kv = [r for r in form1 if abs(r.voltage_kv - nearest) < 1e-9]
    if line.owner:
        same_utility = [r for r in at_kv if r.utility == line.owner]
        if same_utility:
            at_kv = same_utility
    length = path_length(line)
    return min(at_kv, key=lambda r: (abs(r.length_miles - length), form1.index(r)))


def init_line_params(model: GridModel, catalog: ConductorCatalog,
                     form1: list[Form1Record]) -> None:
    """Assign every line its initial conductor option from filing matches."""
    for br in model.branches.values():
        if br.kind != "line":
            continue
        rec = match_form1(br.path, form1)
        kv = catalog.catalog_voltage(br.voltage_kv)
        conductor = min(
            catalog.by_voltage[kv],
            key=lambda c: (abs(c.size_kcmil - rec.size_kcmil), c.size_kcmil, c.name),
        )
        circuits = min(max(rec.conductors_per_phase, 1), catalog.max_circuits)
        target = mva_rating(ConductorOption(conductor, circuits), br.voltage_kv)
        catalog.apply_option(br, catalog.nearest_option_index(br.voltage_kv, target))


# ---------------------------------------------------------------------------
# transformers
# ---------------------------------------------------------------------------

class TransformerTables:
    """Average impedance by (kv_hi, kv_lo, MVA) and X/R ratio by MVA."""

    def __init__(self, impedance_rows, xr_rows):
        # impedance_rows: (kv_hi, kv_lo, mva, x_pu on own MVA base)
        self.impedance = sorted(impedance_rows)
        self.xr = sorted(xr_rows)
        if not self.impedance or not self.xr:
            raise ValidationError("transformer tables must be non-empty")

    @classmethod
    def from_csv(cls, impedance_path, xr_path) -> "TransformerTables":
        imp = []
        with Path(impedance_path).open(newline="") as handle:
            reader = csv.DictReader(handle)
            needed = {"kv_hi", "kv_lo", "mva", "x_pu"}
            if not needed.issubset(reader.fieldnames or ()):
                raise ValidationError(f"{impedance_path}: header must contain {sorted(needed)}")
            for row in reader:
                imp.append((float(row["kv_hi"]), float(row["kv_lo"]),
                            float(row["mva"]), float(row["x_pu"])))
        xr = []
        with Path(xr_path).open(newline="") as handle:
            reader = csv.DictReader(handle)
            if not {"mva", "xr"}.issubset(reader.fieldnames or ()):
                raise ValidationError(f"{xr_path}: header must contain ['mva', 'xr']")
            for row in reader:
                xr.append((float(row["mva"]), float(row["xr"])))
        return cls(imp, xr)

    @classmethod
    def default(cls) -> "TransformerTables":
        data = resources.files("gridsynth.data")
        return cls.from_csv(str(data / "transformer_impedance.csv"), str(data / "transformer_xr.csv"))

    def x_own_base(self, kv_hi: float, kv_lo: float, mva: float) -> float:
        pairs = sorted({(r[0], r[1]) for r in self.impedance})
        if (kv_hi, kv_lo) not in pairs:
            nearest = min(pairs, key=lambda p: (abs(p[0] - kv_hi) + abs(p[1] - kv_lo), p))
            warnings.warn(
                f"no impedance entry for {kv_hi:g}/{kv_lo:g} kV; using {nearest[0]:g}/{nearest[1]:g} kV"
            )
            kv_hi, kv_lo = nearest
        rows = [r for r in self.impedance if (r[0], r[1]) == (kv_hi, kv_lo)]
        return min(rows, key=lambda r: (abs(r[2] - mva), r[2]))[3]

    def xr_ratio(self, mva: float) -> float:
        return min(self.xr, key=lambda r: (abs(r[0] - mva), r[0]))[1]


def apply_transformer_params(branch: Branch, mva: float,
                             tables: TransformerTables, base_mva: float = 100.0) -> None:
    x_own = tables.x_own_base(branch.kv_primary, branch.kv_secondary, mva)
    x_pu = x_own * base_mva / mva
    xr = tables.xr_ratio(mva)
    branch.mva_rating = mva
    branch.x_pu = x_pu
    branch.xr_ratio = xr
    branch.r_pu = x_pu / xr
    branch.b_pu = 0.0


def init_transformers(model: GridModel, tables: TransformerTables) -> None:
    """All transformers start at 2000 MVA with table impedances."""
    for br in model.branches.values():
        if br.kind == "transformer":
            apply_transformer_params(br, TRANSFORMER_INITIAL_MVA, tables, model.base_mva)


def resize_transformers(model: GridModel, cases, tables: TransformerTables,
                        ladder=DEFAULT_MVA_LADDER) -> dict[str, float]:
    """Shrink each transformer to the max DC power flow over all scenarios.

    The max flow rounds up to the next ladder size; flows beyond the ladder
    top stay at the top with a warning.  Impedances are recomputed from the
    table at the new size.  Returns the per-transformer max flows.
    """
    from .powerflow import dc_powerflow, default_slack_bus

    ladder = sorted(ladder)
    max_flow: dict[str, float] = {br.id: 0.0 for br in model.transformers()}
    if not max_flow:
        return {}
    for case in cases:
        injections = dict.fromkeys(model.buses, 0.0)
        for gid, p in case.dispatch.pg_mw.items():
            injections[model.generators[gid].bus] += p
        for bus, mw in case.scenario.bus_load_mw.items():
            injections[bus] -= mw
        slack = default_slack_bus(model, case.dispatch.committed)
        sol = dc_powerflow(model, injections, slack_bus=slack)
        for xid in max_flow:
            max_flow[xid] = max(max_flow[xid], abs(sol.flows_mw[xid]))
    for br in model.transformers():
        flow = max_flow[br.id]
        pos = bisect.bisect_left(ladder, flow - 1e-9)
        if pos >= len(ladder):
            warnings.warn(
                f"transformer {br.id}: max flow {flow:.0f} MW exceeds ladder top {ladder[-1]:.0f} MVA"
            )
            pos = len(ladder) - 1
        apply_transformer_params(br, float(ladder[pos]), tables, model.base_mva)
    return max_flow
