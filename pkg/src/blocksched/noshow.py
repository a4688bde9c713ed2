"""Overbooking plans and exact expected-cost evaluation under no-shows.

Plans duplicate slots of a base template: the level-front-load strategy
(LF) puts one duplicate on each of the earliest Q+/Q slots of the first
block, the fully-front-load strategy (FF) stacks all duplicates on the
single earliest slot per group.  Duplicates share the host slot's
appointment time and type and are served in listed order.

Expected metrics are exact: show patterns are enumerated with rational
probabilities, aggregated per slot by how many of its copies show (copies
of one slot are exchangeable), and a no-show consumes zero time at both
stages with zero wait while later patients stay gated by their own
appointment times.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .instance import CostWeights, Patient
from .timeline import AppointmentTemplate
from .units import Scalar, round_half_away

ENUMERATION_CAP = 24


@dataclass(frozen=True)
class NoShowProbs:
    p_plus: Fraction   # Q+ group no-show probability
    p: Fraction        # Q group no-show probability

    @classmethod
    def of(cls, p_plus, p) -> "NoShowProbs":
        conv = lambda x: Fraction(str(x)) if isinstance(x, float) else Fraction(x)
        probs = cls(conv(p_plus), conv(p))
        if not (0 <= probs.p_plus <= 1 and 0 <= probs.p <= 1):
            raise ValueError("no-show probabilities must be in [0, 1]")
        return probs

    def for_patient(self, patient: Patient) -> Fraction:
        return self.p_plus if patient.qplus else self.p


@dataclass(frozen=True)
class OverbookPlan:
    base: AppointmentTemplate
    duplicates: tuple[tuple[int, int], ...]   # (base slot index, extra copies)
    strategy: str                             # "none" | "LF" | "FF"
    e_plus: int
    e: int

    @property
    def n_scheduled(self) -> int:
        return len(self.base.slots) + sum(c for _, c in self.duplicates)

    def copies(self, slot_index: int) -> int:
        return 1 + dict(self.duplicates).get(slot_index, 0)

    def template(self) -> AppointmentTemplate:
        """Base template with duplicates inserted after their hosts, sharing
        the host appointment time."""
        extra = dict(self.duplicates)
        slots: list[Patient] = []
        taus: list[Scalar] = []
        bounds = [0]
        next_uid = max((p.uid for p in self.base.slots), default=-1) + 1
        boundary = 1
        for t, host in enumerate(self.base.slots):
            slots.append(host)
            taus.append(self.base.taus[t])
            for _ in range(extra.get(t, 0)):
                dup = Patient(next_uid, host.block, host.type_index,
                              host.replicate, host.name, host.lam, host.mu)
                next_uid += 1
                slots.append(dup)
                taus.append(self.base.taus[t])
            if t + 1 == self.base.block_bounds[boundary]:
                bounds.append(len(slots))
                boundary += 1
        return AppointmentTemplate(tuple(slots), tuple(taus), tuple(bounds))

    def listing(self) -> str:
        """Compact first-block listing in the HC(2) duplicate notation."""
        extra = dict(self.duplicates)
        parts = []
        for t in range(self.base.block_bounds[0], self.base.block_bounds[1]):
            name = self.base.slots[t].name
            parts.append(f"{name}({extra[t]})" if extra.get(t) else name)
        return " ".join(parts)


def build_overbook_plan(template: AppointmentTemplate, strategy: str,
                        probs: NoShowProbs) -> OverbookPlan:
    """Overbook the first block with round-half-away(prob * group count)
    same-type duplicates at the earliest slots of each group."""
    strategy = strategy.upper() if strategy.lower() != "none" else "none"
    if strategy not in ("none", "LF", "FF"):
        raise ValueError(f"unknown overbooking strategy: {strategy}")
    first = range(template.block_bounds[0], template.block_bounds[1])
    qplus_slots = [t for t in first if template.slots[t].qplus]
    q_slots = [t for t in first if not template.slots[t].qplus]
    e_plus = round_half_away(probs.p_plus * len(qplus_slots))
    e = round_half_away(probs.p * len(q_slots))
    if strategy == "none" or (e_plus == 0 and e == 0):
        dups: tuple[tuple[int, int], ...] = ()
        if strategy == "none":
            e_plus = e = 0
        return OverbookPlan(template, dups, "none" if strategy == "none" else strategy,
                            e_plus, e)
    pairs: list[tuple[int, int]] = []
    for count, slots, label in ((e_plus, qplus_slots, "Q+"), (e, q_slots, "Q")):
        if count == 0:
            continue
        if not slots or (strategy == "LF" and count > len(slots)):
            raise ValueError(f"{strategy} capacity exceeded for {label} group")
        if strategy == "LF":
            pairs.extend((t, 1) for t in slots[:count])
        else:
            pairs.append((slots[0], count))
    pairs.sort()
    return OverbookPlan(template, tuple(pairs), strategy, e_plus, e)


@dataclass(frozen=True)
class ExpectedMetrics:
    wait: Fraction        # minutes, stage 1 + stage 2
    idle_a: Fraction
    idle_p: Fraction
    overtime_a: Fraction
    overtime_p: Fraction
    path_count: int
    mass: Fraction        # total probability accounted for; exactly 1

    def as_tuple(self):
        return (self.wait, self.idle_a, self.idle_p,
                self.overtime_a, self.overtime_p)


def enumerate_expected_metrics(plan: OverbookPlan, probs: NoShowProbs,
                               regular_time: Scalar,
                               cap: int = ENUMERATION_CAP) -> ExpectedMetrics:
    """Exact expectation over all show/no-show patterns.

    Patterns are grouped per slot by the number of its copies that show
    (binomial weights); the depth-first walk shares prefix timelines between
    patterns.  All probability arithmetic is integer-exact.
    """
    n_total = plan.n_scheduled
    if n_total > cap:
        raise ValueError(
            f"{n_total} scheduled patients exceeds the {cap}-patient "
            "enumeration cap; use the Monte-Carlo fallback "
            "(evaluate_template_mc with noshow_probs)")
    base = plan.base
    positions = []
    denominator = 1
    for t, host in enumerate(base.slots):
        copies = plan.copies(t)
        ns = probs.for_patient(host)
        den = ns.denominator
        ns_num = ns.numerator
        show_num = den - ns_num
        # per-position binomial weights over the number of shown copies
        weights = [comb(copies, j) * show_num**j * ns_num**(copies - j)
                   for j in range(copies + 1)]
        denominator *= den**copies
        positions.append((base.taus[t], host.lam, host.mu, host.qplus,
                          copies, weights, den**copies))

    acc = [0, 0, 0, 0, 0, 0]  # weighted wait, idle_a, idle_p, b_a, b_p, mass
    R = regular_time

    def walk(i, weight, pa, p, first_a, last_a, busy_a, first_p, last_p,
             busy_p, wait):
        if i == len(positions):
            idle_a = (last_a - first_a) - busy_a if last_a is not None else 0
            idle_p = (last_p - first_p) - busy_p if last_p is not None else 0
            b_a = max(0, last_a - R) if last_a is not None else 0
            b_p = max(0, last_p - R) if last_p is not None else 0
            acc[0] += weight * wait
            acc[1] += weight * idle_a
            acc[2] += weight * idle_p
            acc[3] += weight * b_a
            acc[4] += weight * b_p
            acc[5] += weight
            return
        tau, lam, mu, qplus, copies, jweights, _ = positions[i]
        for j in range(copies + 1):
            wj = weight * jweights[j]
            if j == 0:
                walk(i + 1, wj, pa, p, first_a, last_a, busy_a, first_p,
                     last_p, busy_p, wait)
                continue
            ea = tau if tau >= pa else pa
            # j same-type copies served back to back from ea; each waited
            # from the shared appointment time
            w2 = wait + j * (ea - tau) + lam * (j * (j - 1) // 2)
            fa = ea + j * lam
            na = first_a if first_a is not None else ea
            nb = busy_a + j * lam
            if qplus:
                pp = p
                fp_first = None
                for c in range(1, j + 1):
                    fac = ea + c * lam
                    ep = fac if fac >= pp else pp
                    w2 += ep - fac
                    if fp_first is None:
                        fp_first = ep
                    pp = ep + mu
                np_first = first_p if first_p is not None else fp_first
                walk(i + 1, wj, fa, pp, na, fa, nb, np_first, pp,
                     busy_p + j * mu, w2)
            else:
                walk(i + 1, wj, fa, p, na, fa, nb, first_p, last_p,
                     busy_p, w2)

    walk(0, 1, 0, 0, None, None, 0, None, None, 0, 0)
    mass = Fraction(acc[5], denominator)
    to_minutes = lambda v: Fraction(v, denominator) / 10
    return ExpectedMetrics(to_minutes(acc[0]), to_minutes(acc[1]),
                           to_minutes(acc[2]), to_minutes(acc[3]),
                           to_minutes(acc[4]), 2**n_total, mass)


def expected_cost_per_patient(metrics: ExpectedMetrics, weights: CostWeights,
                              n_scheduled: int) -> Fraction:
    if n_scheduled <= 0:
        raise ValueError("n_scheduled must be positive")
    total = (weights.alpha * metrics.wait
             + weights.beta_a * metrics.idle_a + weights.beta_p * metrics.idle_p
             + weights.o_a * metrics.overtime_a + weights.o_p * metrics.overtime_p)
    return total / n_scheduled
