import itertools
from fractions import Fraction

import pytest

from blocksched import (CostWeights, ServiceRealization, algorithm2,
                        evaluate, expand_block, total_cost)
from blocksched.noshow import (NoShowProbs, build_overbook_plan,
                               enumerate_expected_metrics,
                               expected_cost_per_patient)
from blocksched.units import tenths

from conftest import mk_instance

PROBS = NoShowProbs.of("0.2", "0.3")


@pytest.fixture(scope="module")
def schedule_s(table7):
    return algorithm2(expand_block(table7))


class TestBuildPlan:
    def test_level_front_load_listing(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "lf", PROBS)
        assert plan.e_plus == 2 and plan.e == 2
        assert plan.listing() == ("HC(1) HC(1) L(1) MC MC MC MC LC L(1) LC L "
                                  "LC LC M M H")
        assert plan.duplicates == ((0, 1), (1, 1), (2, 1), (8, 1))

    def test_fully_front_load_listing(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "ff", PROBS)
        assert plan.listing() == ("HC(2) HC L(2) MC MC MC MC LC L LC L "
                                  "LC LC M M H")
        assert plan.duplicates == ((0, 2), (2, 2))

    def test_zero_probs_empty_plan(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "lf", NoShowProbs.of(0, 0))
        assert plan.duplicates == () and plan.n_scheduled == 16
        assert plan.template() == schedule_s

    def test_rounding_half_away(self):
        # 6 Q patients at p=0.25 -> 1.5 -> 2 duplicates
        inst = mk_instance([("Q", 5, 0, 6), ("A", 10, 12, 2)])
        tpl = algorithm2(expand_block(inst))
        plan = build_overbook_plan(tpl, "lf", NoShowProbs.of(0, "0.25"))
        assert plan.e == 2

    def test_duplicates_share_host_tau_and_type(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "ff", PROBS)
        tpl = plan.template()
        assert len(tpl.slots) == 20
        assert [p.name for p in tpl.slots[:4]] == ["HC", "HC", "HC", "HC"]
        assert tpl.taus[0] == tpl.taus[1] == tpl.taus[2] == 0
        assert len({p.uid for p in tpl.slots}) == 20


def brute_force_expected(plan, probs, regular_time):
    """Oracle: full 2^n enumeration through the public engine."""
    tpl = plan.template()
    n = len(tpl.slots)
    base = ServiceRealization.from_means(tpl)
    totals = {"wait": Fraction(0), "idle_a": Fraction(0), "idle_p": Fraction(0),
              "overtime_a": Fraction(0), "overtime_p": Fraction(0)}
    mass = Fraction(0)
    for pattern in itertools.product((True, False), repeat=n):
        prob = Fraction(1)
        for shown, patient in zip(pattern, tpl.slots):
            ns = probs.for_patient(patient)
            prob *= (1 - ns) if shown else ns
        ev = evaluate(tpl, ServiceRealization(base.lams, base.mus, pattern),
                      regular_time)
        totals["wait"] += prob * ev.wait
        totals["idle_a"] += prob * ev.idle_a
        totals["idle_p"] += prob * ev.idle_p
        totals["overtime_a"] += prob * ev.overtime_a
        totals["overtime_p"] += prob * ev.overtime_p
        mass += prob
    return {k: v / 10 for k, v in totals.items()}, mass


class TestEnumerate:
    def test_show_probability_one_equals_deterministic(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "none", NoShowProbs.of(0, 0))
        metrics = enumerate_expected_metrics(plan, NoShowProbs.of(0, 0),
                                             tenths(150))
        ev = evaluate(schedule_s, regular_time=tenths(150))
        assert metrics.wait == Fraction(ev.wait, 10)
        assert metrics.idle_a == Fraction(ev.idle_a, 10)
        assert metrics.idle_p == Fraction(ev.idle_p, 10)
        assert metrics.overtime_a == Fraction(ev.overtime_a, 10)
        assert metrics.overtime_p == Fraction(ev.overtime_p, 10)
        assert metrics.mass == 1

    def test_single_patient_expected_overtime(self):
        inst = mk_instance([("A", 10, 0, 1)])
        tpl = algorithm2(expand_block(inst))
        probs = NoShowProbs.of(0, "0.3")
        plan = build_overbook_plan(tpl, "none", probs)
        metrics = enumerate_expected_metrics(plan, probs, regular_time=0)
        assert metrics.overtime_a == Fraction(7)  # 0.7 * 10 minutes
        assert metrics.mass == 1 and metrics.path_count == 2

    def test_cap_exceeded_points_to_monte_carlo(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "lf", PROBS)
        with pytest.raises(ValueError, match="Monte-Carlo"):
            enumerate_expected_metrics(plan, PROBS, tenths(150), cap=10)

    def test_class_aggregation_matches_full_enumeration(self):
        # 4 base slots + 3 duplicates = 7 patients, 128 raw patterns
        inst = mk_instance([("Q", 6, 0, 2), ("A", 10, 14, 2)])
        tpl = algorithm2(expand_block(inst))
        probs = NoShowProbs.of("0.75", "0.6")  # e+ = 1.5 -> 2, e = 1.2 -> 1
        plan = build_overbook_plan(tpl, "ff", probs)
        assert plan.n_scheduled == 7
        metrics = enumerate_expected_metrics(plan, probs, tenths(30))
        oracle, mass = brute_force_expected(plan, probs, tenths(30))
        assert mass == 1 and metrics.mass == 1
        assert metrics.wait == oracle["wait"]
        assert metrics.idle_a == oracle["idle_a"]
        assert metrics.idle_p == oracle["idle_p"]
        assert metrics.overtime_a == oracle["overtime_a"]
        assert metrics.overtime_p == oracle["overtime_p"]

    def test_same_slot_swap_leaves_metrics_unchanged(self):
        inst = mk_instance([("Q", 6, 0, 1), ("A", 10, 14, 2)])
        tpl = algorithm2(expand_block(inst))
        plan = build_overbook_plan(tpl, "ff", NoShowProbs.of("0.5", "0.5"))
        expanded = plan.template()
        host = next(t for t, p in enumerate(expanded.slots) if p.qplus)
        base = ServiceRealization.from_means(expanded)
        shows = [True] * len(expanded.slots)
        shows[host] = False
        a = evaluate(expanded, ServiceRealization(base.lams, base.mus,
                                                  tuple(shows)), tenths(30))
        shows[host], shows[host + 1] = True, False
        b = evaluate(expanded, ServiceRealization(base.lams, base.mus,
                                                  tuple(shows)), tenths(30))
        assert (a.wait, a.idle_a, a.idle_p, a.overtime_a, a.overtime_p) == \
               (b.wait, b.idle_a, b.idle_p, b.overtime_a, b.overtime_p)


class TestPerPatientCost:
    def test_zero_metrics(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "none", NoShowProbs.of(0, 0))
        metrics = enumerate_expected_metrics(plan, NoShowProbs.of(0, 0),
                                             tenths(1000))
        zeroed = type(metrics)(0, 0, 0, 0, 0, metrics.path_count, Fraction(1))
        assert expected_cost_per_patient(zeroed, CostWeights.of(1, 1, 1, 1, 1),
                                         16) == 0

    def test_overtime_slope_identity(self, schedule_s):
        plan = build_overbook_plan(schedule_s, "none", PROBS)
        metrics = enumerate_expected_metrics(plan, PROBS, tenths(150))
        lo = CostWeights.of("0.4", 1, 1, "1.2", "1.2")
        hi = CostWeights.of("0.4", 1, 1, "1.5", "1.5")
        delta = (expected_cost_per_patient(metrics, hi, 16)
                 - expected_cost_per_patient(metrics, lo, 16))
        assert delta == Fraction(3, 10) * (metrics.overtime_a
                                           + metrics.overtime_p) / 16

    def test_weight_decomposition_matches_per_path_costing(self):
        inst = mk_instance([("Q", 6, 0, 1), ("A", 10, 14, 2)])
        tpl = algorithm2(expand_block(inst))
        probs = NoShowProbs.of("0.2", "0.3")
        plan = build_overbook_plan(tpl, "lf", probs)
        metrics = enumerate_expected_metrics(plan, probs, tenths(40))
        weights = CostWeights.of("0.7", 2, 3, "1.1", "1.3")
        # oracle: expectation of the per-path cost, weights applied inside
        expanded = plan.template()
        base = ServiceRealization.from_means(expanded)
        total = Fraction(0)
        for pattern in itertools.product((True, False),
                                         repeat=len(expanded.slots)):
            prob = Fraction(1)
            for shown, patient in zip(pattern, expanded.slots):
                ns = probs.for_patient(patient)
                prob *= (1 - ns) if shown else ns
            ev = evaluate(expanded, ServiceRealization(base.lams, base.mus,
                                                       pattern), tenths(40))
            total += prob * total_cost(ev, weights)
        assert expected_cost_per_patient(metrics, weights, plan.n_scheduled) \
            == total / plan.n_scheduled

    def test_lf_at_most_ff_spot_check(self, schedule_s):
        m_lf = enumerate_expected_metrics(
            build_overbook_plan(schedule_s, "lf", PROBS), PROBS, tenths(150))
        m_ff = enumerate_expected_metrics(
            build_overbook_plan(schedule_s, "ff", PROBS), PROBS, tenths(150))
        w = CostWeights.of("0.5", 1, 1, "1.2", "1.2")
        assert expected_cost_per_patient(m_lf, w, 20) <= \
            expected_cost_per_patient(m_ff, w, 20)


def test_class_aggregation_random_plans_match_brute_force():
    import numpy as np
    rng = np.random.default_rng(91)
    for trial in range(6):
        n_q = int(rng.integers(0, 3))
        n_qp = int(rng.integers(1, 3))
        types = [(f"Q{i}", int(rng.integers(3, 12)), 0, 1)
                 for i in range(n_q)]
        types += [(f"A{i}", int(rng.integers(3, 12)),
                   int(rng.integers(12, 25)), int(rng.integers(1, 3)))
                  for i in range(n_qp)]
        inst = mk_instance(types)
        tpl = algorithm2(expand_block(inst))
        probs = NoShowProbs.of(Fraction(int(rng.integers(0, 11)), 10),
                               Fraction(int(rng.integers(0, 11)), 10))
        strategy = ("none", "lf", "ff")[trial % 3]
        plan = build_overbook_plan(tpl, strategy, probs)
        if plan.n_scheduled > 9:
            continue
        R = int(rng.integers(0, 40)) * 10
        metrics = enumerate_expected_metrics(plan, probs, R)
        oracle, mass = brute_force_expected(plan, probs, R)
        assert mass == 1 and metrics.mass == 1
        assert metrics.as_tuple() == (oracle["wait"], oracle["idle_a"],
                                      oracle["idle_p"], oracle["overtime_a"],
                                      oracle["overtime_p"])
