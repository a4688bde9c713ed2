"""Clinic problem instances: patient types, costs, block composition, balancing.

A clinic day is k repetitions of one block.  Each block holds ratio[i]
patients of type i; Q-group types (stage-2 mean 0) see only the assistant,
Q+ types see assistant then physician.  All times are tenths of a minute
(see units.py); construct from minutes via ``PatientType.from_minutes`` or
the JSON loader.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import json

from .units import Scalar, fmt_minutes, on_grid, tenths


class InstanceFormatError(ValueError):
    """Raised when an instance file is malformed; message names the field."""


class InvalidInstanceError(ValueError):
    """Raised when a solver is handed an instance with hard validation errors."""


@dataclass(frozen=True)
class PatientType:
    name: str
    lam: Scalar        # stage-1 mean service time
    lam_sd: Scalar
    mu: Scalar         # stage-2 mean; 0 marks a Q-group type
    mu_sd: Scalar
    ratio: int

    @classmethod
    def from_minutes(cls, name, lam, mu, ratio, lam_sd=0, mu_sd=0):
        return cls(name, tenths(lam), tenths(lam_sd), tenths(mu), tenths(mu_sd), int(ratio))

    @property
    def qplus(self) -> bool:
        return self.mu > 0

    @property
    def conformant(self) -> bool:
        """Q+ type satisfying the mu >= lambda assumption the no-idle
        guarantees and closed-form waits rely on."""
        return not self.qplus or self.mu >= self.lam


@dataclass(frozen=True)
class CostWeights:
    alpha: Fraction      # per wait-minute
    beta_a: Fraction     # per assistant idle-minute
    beta_p: Fraction     # per physician idle-minute
    o_a: Fraction = Fraction(0)   # per assistant overtime-minute
    o_p: Fraction = Fraction(0)   # per physician overtime-minute

    @classmethod
    def of(cls, alpha, beta_a=1, beta_p=None, o_a=0, o_p=None):
        beta_p = beta_a if beta_p is None else beta_p
        o_p = o_a if o_p is None else o_p
        return cls(*(Fraction(str(x)) if isinstance(x, float) else Fraction(x)
                     for x in (alpha, beta_a, beta_p, o_a, o_p)))


@dataclass(frozen=True)
class ClinicInstance:
    types: tuple[PatientType, ...]
    costs: CostWeights
    regular_time: Scalar   # R, tenths
    blocks: int            # k

    @property
    def r(self) -> int:
        return sum(t.ratio for t in self.types)

    @property
    def v(self) -> int:
        return sum(t.ratio for t in self.types if not t.qplus)

    @property
    def n(self) -> int:
        return self.blocks * self.r


@dataclass(frozen=True)
class Patient:
    """One expanded patient: type replicated per demand ratio, per block.

    uid is the canonical index over the whole horizon (block-major, types in
    declaration order, then replicate); stochastic draws key on it so that
    methods that reorder or regroup patients share sample paths.
    """
    uid: int
    block: int
    type_index: int
    replicate: int
    name: str
    lam: Scalar
    mu: Scalar

    @property
    def qplus(self) -> bool:
        return self.mu > 0


PatientList = tuple[Patient, ...]


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass(frozen=True)
class BalanceResult:
    reduced_ratios: dict[str, int]
    overflow_list: tuple[str, ...]   # type names in removal order (one block's worth)
    final_L_a: Scalar
    final_L_p: Scalar
    unbalanceable: bool = False


def workloads(inst: ClinicInstance) -> tuple[Scalar, Scalar]:
    """Per-block workloads (L_a, L_p): sum of ratio * mean over stage 1 and 2."""
    L_a = sum(t.ratio * t.lam for t in inst.types)
    L_p = sum(t.ratio * t.mu for t in inst.types)
    return L_a, L_p


def validate_instance(inst: ClinicInstance) -> ValidationReport:
    report = ValidationReport()
    for i, t in enumerate(inst.types):
        where = f"types[{i}] ({t.name})"
        if t.lam <= 0:
            report.errors.append(f"{where}: nonpositive stage-1 time")
        if t.ratio < 1:
            report.errors.append(f"{where}: ratio must be >= 1")
        if t.mu == 0 and t.mu_sd != 0:
            report.errors.append(f"{where}: mu_sd > 0 on a zero stage-2 mean")
        if t.lam_sd < 0 or t.mu_sd < 0:
            report.errors.append(f"{where}: negative standard deviation")
        if t.mu < 0:
            report.errors.append(f"{where}: negative stage-2 time")
        if t.qplus and t.mu < t.lam:
            report.warnings.append(
                f"{where}: stage-2 mean below stage-1 mean; no-idle guarantees void")
    for name in ("alpha", "beta_a", "beta_p", "o_a", "o_p"):
        if getattr(inst.costs, name) < 0:
            report.errors.append(f"costs.{name}: negative weight")
    if inst.regular_time < 0:
        report.errors.append("regular_time: negative")
    if inst.blocks < 1:
        report.errors.append("blocks: must be >= 1")
    if not inst.types:
        report.errors.append("types: empty")
    if not report.errors:
        L_a, L_p = workloads(inst)
        if L_a > L_p:
            report.warnings.append(
                f"L_a={fmt_minutes(L_a)} > L_p={fmt_minutes(L_p)}; run balance")
    return report


def require_valid(inst: ClinicInstance) -> None:
    report = validate_instance(inst)
    if not report.ok:
        raise InvalidInstanceError("; ".join(report.errors))


def expand_block(inst: ClinicInstance, block: int = 0) -> PatientList:
    """Expand one block to its patient list: declaration order, each type
    repeated ratio times.  uids are canonical horizon indices."""
    patients = []
    base = block * inst.r
    offset = 0
    for ti, t in enumerate(inst.types):
        for rep in range(t.ratio):
            patients.append(Patient(base + offset, block, ti, rep, t.name, t.lam, t.mu))
            offset += 1
    return tuple(patients)


def expand_horizon(inst: ClinicInstance) -> tuple[PatientList, ...]:
    return tuple(expand_block(inst, c) for c in range(inst.blocks))


def balance_workload(inst: ClinicInstance) -> BalanceResult:
    """Remove Q patients (largest remaining per-block count first, ties to the
    larger stage-1 mean, then declaration order) until L_a <= L_p.

    The removed patients, one per block per removal, form the extra final
    block.  If every Q patient is removed and L_a still exceeds L_p the result
    is flagged unbalanceable (the Q+ head workload alone exceeds L_p)."""
    L_a, L_p = workloads(inst)
    ratios = {t.name: t.ratio for t in inst.types}
    if L_a <= L_p:
        return BalanceResult(ratios, (), L_a, L_p)
    counts = {t.name: t.ratio for t in inst.types if not t.qplus}
    lam = {t.name: t.lam for t in inst.types}
    order = [t.name for t in inst.types if not t.qplus]
    removed: list[str] = []
    while L_a > L_p:
        candidates = [n for n in order if counts[n] > 0]
        if not candidates:
            return BalanceResult(ratios, tuple(removed), L_a, L_p, unbalanceable=True)
        best = max(candidates, key=lambda n: (counts[n], lam[n], -order.index(n)))
        counts[best] -= 1
        ratios[best] -= 1
        removed.append(best)
        L_a -= lam[best]
    ratios = {n: c for n, c in ratios.items() if c > 0}
    return BalanceResult(ratios, tuple(removed), L_a, L_p)


def reduced_instance(inst: ClinicInstance, result: BalanceResult) -> ClinicInstance:
    """Instance with the post-balance per-block ratios (types at 0 dropped)."""
    kept = tuple(
        PatientType(t.name, t.lam, t.lam_sd, t.mu, t.mu_sd, result.reduced_ratios[t.name])
        for t in inst.types if result.reduced_ratios.get(t.name, 0) > 0)
    return ClinicInstance(kept, inst.costs, inst.regular_time, inst.blocks)


def balanced_blocks(inst: ClinicInstance, result: BalanceResult
                    ) -> tuple[tuple[PatientList, ...], PatientList]:
    """Split the canonical horizon expansion into k reduced blocks plus the
    overflow block (k copies of the removal list, highest replicates removed
    first so uids stay aligned with the unbalanced expansion)."""
    removed_per_type: dict[str, int] = {}
    for name in result.overflow_list:
        removed_per_type[name] = removed_per_type.get(name, 0) + 1
    blocks = []
    overflow: list[Patient] = []
    for block in expand_horizon(inst):
        by_key = {(p.type_index, p.replicate): p for p in block}
        keep = [p for p in block
                if p.replicate < ({t.name: t.ratio for t in inst.types}[p.name]
                                  - removed_per_type.get(p.name, 0))]
        blocks.append(tuple(keep))
        taken: dict[str, int] = {}
        for name in result.overflow_list:
            ti = next(i for i, t in enumerate(inst.types) if t.name == name)
            taken[name] = taken.get(name, 0) + 1
            rep = inst.types[ti].ratio - taken[name]
            overflow.append(by_key[(ti, rep)])
    return tuple(blocks), tuple(overflow)


# ---------------------------------------------------------------------------
# JSON instance files: {types: [{name, lambda_mean, lambda_sd, mu_mean, mu_sd,
# ratio}], costs: {alpha, beta_a, beta_p, o_a, o_p}, regular_time, blocks}.
# Times in minutes with at most one decimal.

_TIME_FIELDS = ("lambda_mean", "lambda_sd", "mu_mean", "mu_sd")


def _need(mapping, key, where):
    if key not in mapping:
        raise InstanceFormatError(f"{where}.{key} missing")
    return mapping[key]


def load_instance(path) -> ClinicInstance:
    with open(path) as fh:
        try:
            data = json.load(fh, parse_float=Fraction)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


def instance_from_dict(data: dict) -> ClinicInstance:
    if not isinstance(data.get("types"), list) or not data["types"]:
        raise InstanceFormatError("types missing or empty")
    types = []
    for i, td in enumerate(data["types"]):
        where = f"types[{i}]"
        name = _need(td, "name", where)
        values = {}
        for fieldname in _TIME_FIELDS:
            if fieldname in ("lambda_sd", "mu_sd") and fieldname not in td:
                values[fieldname] = 0
                continue
            raw = _need(td, fieldname, where)
            if not on_grid(raw):
                raise InstanceFormatError(
                    f"{where}.{fieldname}: finer than 0.1-minute resolution")
            values[fieldname] = tenths(raw)
        ratio = _need(td, "ratio", where)
        if not isinstance(ratio, int):
            raise InstanceFormatError(f"{where}.ratio: must be an integer")
        types.append(PatientType(str(name), values["lambda_mean"], values["lambda_sd"],
                                 values["mu_mean"], values["mu_sd"], ratio))
    costs_d = _need(data, "costs", "instance")
    costs = CostWeights(*(Fraction(_need(costs_d, k, "costs"))
                          for k in ("alpha", "beta_a", "beta_p", "o_a", "o_p")))
    regular = _need(data, "regular_time", "instance")
    if not on_grid(regular):
        raise InstanceFormatError("regular_time: finer than 0.1-minute resolution")
    blocks = _need(data, "blocks", "instance")
    if not isinstance(blocks, int):
        raise InstanceFormatError("blocks: must be an integer")
    return ClinicInstance(tuple(types), costs, tenths(regular), blocks)


def instance_to_dict(inst: ClinicInstance) -> dict:
    def num(x):
        frac = Fraction(x)
        return int(frac) if frac.denominator == 1 else float(frac)

    return {
        "types": [
            {"name": t.name,
             "lambda_mean": num(Fraction(t.lam) / 10),
             "lambda_sd": num(Fraction(t.lam_sd) / 10),
             "mu_mean": num(Fraction(t.mu) / 10),
             "mu_sd": num(Fraction(t.mu_sd) / 10),
             "ratio": t.ratio}
            for t in inst.types
        ],
        "costs": {k: num(getattr(inst.costs, k))
                  for k in ("alpha", "beta_a", "beta_p", "o_a", "o_p")},
        "regular_time": num(Fraction(inst.regular_time) / 10),
        "blocks": inst.blocks,
    }
