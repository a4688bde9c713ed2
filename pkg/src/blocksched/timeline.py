"""Timeline evaluation kernel for two-stage block schedules.

Realizes the earliest-start semantics shared by the single-block and
planning-horizon recurrences: a patient starts stage 1 at the later of their
appointment time and the assistant becoming free, and starts stage 2 (Q+
patients only) at the later of their stage-1 finish and the physician
becoming free.  Idle time is span-based per resource (first start to last
finish minus busy time); overtime is the positive part of the last finish
past the regular day length.

Everything here is a pure function of its inputs; callers may evaluate many
realizations concurrently.  Times are tenths of a minute (ints, or Fractions
for off-grid appointment times).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .instance import CostWeights, Patient, PatientList
from .units import Scalar, fmt_minutes, fmt_number


@dataclass(frozen=True)
class AppointmentTemplate:
    """A horizon sequence with fixed appointment times.

    taus is the first-stage appointment decision: nondecreasing, first slot
    at 0.  taus=None means appointments track the realized stage-1 starts
    (the single-block model's convention, where stage-1 wait is zero by
    definition).  block_bounds[c] is the slot index where block c starts,
    with a final sentinel equal to the slot count.
    """
    slots: PatientList
    taus: tuple[Scalar, ...] | None
    block_bounds: tuple[int, ...]

    def __post_init__(self):
        if self.taus is not None:
            if len(self.taus) != len(self.slots):
                raise ValueError("taus length must match slots")
            if any(self.taus[i] > self.taus[i + 1] for i in range(len(self.taus) - 1)):
                raise ValueError("appointment times must be nondecreasing")
            if self.taus and self.taus[0] != 0:
                raise ValueError("first appointment must be at time 0")
        if self.block_bounds[0] != 0 or self.block_bounds[-1] != len(self.slots):
            raise ValueError("block_bounds must span the slot range")

    @property
    def k(self) -> int:
        return len(self.block_bounds) - 1


def single_block_template(sequence: PatientList, taus=None) -> AppointmentTemplate:
    """One-block template; default appointment times are the stage-1 mean
    prefix sums (assistant-continuous)."""
    if taus is None:
        taus = pa_prefix_taus(sequence)
    return AppointmentTemplate(tuple(sequence), tuple(taus), (0, len(sequence)))


def pa_prefix_taus(sequence: PatientList, start: Scalar = 0) -> tuple[Scalar, ...]:
    taus = []
    t = start
    for p in sequence:
        taus.append(t)
        t = t + p.lam
    return tuple(taus)


@dataclass(frozen=True)
class ServiceRealization:
    """Realized per-slot service times, aligned with a template's slots.

    mu must be 0 for Q-group slots; shows defaults to everyone showing up.
    """
    lams: tuple[Scalar, ...]
    mus: tuple[Scalar, ...]
    shows: tuple[bool, ...] | None = None

    @classmethod
    def from_means(cls, template: AppointmentTemplate) -> "ServiceRealization":
        return cls(tuple(p.lam for p in template.slots),
                   tuple(p.mu for p in template.slots))


@dataclass(frozen=True)
class ScheduleEvaluation:
    e_a: tuple[Scalar, ...]
    f_a: tuple[Scalar, ...]
    e_p: tuple[Scalar, ...]
    f_p: tuple[Scalar, ...]
    w_a: tuple[Scalar, ...]
    w_p: tuple[Scalar, ...]
    gap_a: tuple[Scalar, ...]   # assistant idle immediately before each slot
    gap_p: tuple[Scalar, ...]   # physician idle immediately before each slot
    qplus: tuple[bool, ...]
    shown: tuple[bool, ...]
    wait_a: Scalar
    wait_p: Scalar
    idle_a: Scalar
    idle_p: Scalar
    overtime_a: Scalar
    overtime_p: Scalar
    completion: Scalar
    first_start_a: Scalar | None
    last_finish_a: Scalar | None
    first_start_p: Scalar | None
    last_finish_p: Scalar | None
    block_bounds: tuple[int, ...]

    @property
    def wait(self) -> Scalar:
        return self.wait_a + self.wait_p


def evaluate(template: AppointmentTemplate,
             realization: ServiceRealization | None = None,
             regular_time: Scalar | None = None) -> ScheduleEvaluation:
    """Run the timeline recurrence over the whole horizon.

    A no-show consumes zero time at both stages and zero wait; resources
    stay gated by later appointment times rather than pulling patients
    earlier.  regular_time=None is single-block mode: overtime is zero.
    """
    slots = template.slots
    if realization is None:
        realization = ServiceRealization.from_means(template)
    lams, mus = realization.lams, realization.mus
    shows = realization.shows or (True,) * len(slots)
    if not (len(lams) == len(mus) == len(shows) == len(slots)):
        raise ValueError("realization length must match template slots")
    taus = template.taus

    n = len(slots)
    e_a = [0] * n
    f_a = [0] * n
    e_p = [0] * n
    f_p = [0] * n
    w_a = [0] * n
    w_p = [0] * n
    gap_a = [0] * n
    gap_p = [0] * n
    qplus = tuple(s.qplus for s in slots)

    pa = 0          # assistant availability (last real stage-1 finish)
    p = 0           # physician availability
    wait_a = wait_p = 0
    busy_a = busy_p = 0
    first_a = last_a = None
    first_p = last_p = None

    for t in range(n):
        tau = taus[t] if taus is not None else None
        if not shows[t]:
            # virtual mark for reporting only; availability is unchanged
            mark = pa if tau is None else max(tau, pa)
            e_a[t] = f_a[t] = e_p[t] = f_p[t] = mark
            continue
        ea = pa if tau is None else max(tau, pa)
        fa = ea + lams[t]
        e_a[t], f_a[t] = ea, fa
        if tau is not None:
            w_a[t] = ea - tau
            wait_a += w_a[t]
        if last_a is not None:
            gap_a[t] = ea - pa
        pa = fa
        if first_a is None:
            first_a = ea
        last_a = fa
        busy_a += lams[t]
        if qplus[t]:
            ep = fa if fa >= p else p
            fp = ep + mus[t]
            e_p[t], f_p[t] = ep, fp
            w_p[t] = ep - fa
            wait_p += w_p[t]
            if last_p is not None:
                gap_p[t] = ep - p
            p = fp
            if first_p is None:
                first_p = ep
            last_p = fp
            busy_p += mus[t]
        else:
            e_p[t] = f_p[t] = fa

    idle_a = (last_a - first_a) - busy_a if last_a is not None else 0
    idle_p = (last_p - first_p) - busy_p if last_p is not None else 0
    if regular_time is None:
        overtime_a = overtime_p = 0
    else:
        overtime_a = max(0, last_a - regular_time) if last_a is not None else 0
        overtime_p = max(0, last_p - regular_time) if last_p is not None else 0
    finishes = [x for x in (last_a, last_p) if x is not None]
    completion = max(finishes) if finishes else 0

    return ScheduleEvaluation(
        tuple(e_a), tuple(f_a), tuple(e_p), tuple(f_p), tuple(w_a), tuple(w_p),
        tuple(gap_a), tuple(gap_p), qplus, tuple(shows),
        wait_a, wait_p, idle_a, idle_p,
        overtime_a, overtime_p, completion, first_a, last_a, first_p, last_p,
        template.block_bounds)


def total_cost(ev: ScheduleEvaluation, weights: CostWeights) -> Fraction:
    """Weighted cost in minute units: alpha*(stage-1 + stage-2 wait) plus idle
    and overtime terms.  Overtime terms vanish in single-block mode because
    the evaluation computed them as zero."""
    tenths_cost = (weights.alpha * (ev.wait_a + ev.wait_p)
                   + weights.beta_a * ev.idle_a + weights.beta_p * ev.idle_p
                   + weights.o_a * ev.overtime_a + weights.o_p * ev.overtime_p)
    return Fraction(tenths_cost) / 10


def sections(ev: ScheduleEvaluation,
             block_bounds: tuple[int, ...] | None = None
             ) -> list[tuple[Scalar, Scalar, Scalar, Scalar]]:
    """Per-block (head, body, tail, completion) decomposition.

    Head: span from the block's first stage-1 start until its first stage-2
    start, where only the assistant works.  Tail: span after the block's last
    stage-1 finish where only the physician works.  Body: the remainder.  A
    block with no Q+ patients is all head.
    """
    bounds = block_bounds or ev.block_bounds
    out = []
    for c in range(len(bounds) - 1):
        served = [t for t in range(bounds[c], bounds[c + 1]) if ev.shown[t]]
        qplus_ts = [t for t in served if ev.qplus[t]]
        if not served:
            out.append((0, 0, 0, 0))
            continue
        start = min(ev.e_a[t] for t in served)
        last_a = max(ev.f_a[t] for t in served)
        if not qplus_ts:
            out.append((last_a - start, 0, 0, last_a - start))
            continue
        first_p = min(ev.e_p[t] for t in qplus_ts)
        last_p = max(ev.f_p[t] for t in qplus_ts)
        completion = max(last_a, last_p) - start
        head = first_p - start
        tail = max(0, last_p - last_a)
        body = completion - head - tail
        out.append((head, body, tail, completion))
    return out


def concatenate(block_template: AppointmentTemplate, k: int,
                junction: str = "p_continuous",
                overflow: PatientList = ()) -> AppointmentTemplate:
    """Repeat a single-block template k times into a horizon template.

    junction "p_continuous": each block's planned first stage-2 start equals
    the previous block's planned stage-2 finish, with the block's stage-1
    head start delayed to the previous block's stage-1 finish if that would
    start earlier.  junction "pa_continuous": blocks packed back-to-back on
    the assistant timeline.  An overflow block (removed Q patients) is
    appended after the k repetitions, packed on the assistant timeline.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if junction not in ("p_continuous", "pa_continuous"):
        raise ValueError(f"unknown junction rule: {junction}")
    base = evaluate(block_template)
    head = (base.first_start_p - base.first_start_a
            if base.first_start_p is not None else None)

    slots: list[Patient] = []
    taus: list[Scalar] = []
    bounds = [0]
    prev_pa_end: Scalar = 0
    prev_p_end: Scalar | None = None
    for c in range(k):
        if c == 0:
            offset: Scalar = 0
        elif junction == "pa_continuous" or head is None or prev_p_end is None:
            offset = prev_pa_end
        else:
            offset = max(prev_p_end - head, prev_pa_end)
        slots.extend(block_template.slots)
        taus.extend(offset + tau for tau in block_template.taus)
        bounds.append(len(slots))
        prev_pa_end = offset + base.last_finish_a
        if base.last_finish_p is not None:
            prev_p_end = offset + base.last_finish_p
    if overflow:
        slots.extend(overflow)
        taus.extend(pa_prefix_taus(overflow, start=prev_pa_end))
        bounds.append(len(slots))
    return AppointmentTemplate(tuple(slots), tuple(taus), tuple(bounds))


def evaluation_rows(template: AppointmentTemplate, ev: ScheduleEvaluation,
                    weights: CostWeights | None = None) -> list[dict]:
    """Flatten an evaluation to one dict per slot plus a TOTAL summary row
    (minutes as decimal strings), ready for CSV emission."""
    rows = []
    block = 0
    for t, slot in enumerate(template.slots):
        while t >= template.block_bounds[block + 1]:
            block += 1
        rows.append({
            "block": block + 1,
            "slot": t + 1,
            "type": slot.name,
            "tau": fmt_minutes(template.taus[t]) if template.taus else fmt_minutes(ev.e_a[t]),
            "e_a": fmt_minutes(ev.e_a[t]),
            "f_a": fmt_minutes(ev.f_a[t]),
            "e_p": fmt_minutes(ev.e_p[t]) if slot.qplus else "",
            "f_p": fmt_minutes(ev.f_p[t]) if slot.qplus else "",
            "w_a": fmt_minutes(ev.w_a[t]),
            "w_p": fmt_minutes(ev.w_p[t]),
        })
    summary = {
        "block": "TOTAL", "slot": "", "type": "",
        "tau": "", "e_a": "", "f_a": "", "e_p": "", "f_p": "",
        "w_a": fmt_minutes(ev.wait_a), "w_p": fmt_minutes(ev.wait_p),
        "idle_a": fmt_minutes(ev.idle_a), "idle_p": fmt_minutes(ev.idle_p),
        "b_a": fmt_minutes(ev.overtime_a), "b_p": fmt_minutes(ev.overtime_p),
    }
    if weights is not None:
        summary["cost"] = fmt_number(total_cost(ev, weights))
    rows.append(summary)
    return rows
