import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest

from blocksched import (algorithm3, algorithm4, evaluate,
                        expand_horizon, fcfa, solve_saa_replication)
from blocksched.stochastic import (DistributionSpec, SAAConfig,
                                   confidence_halfwidth, draw_scenarios,
                                   evaluate_template_mc, incumbent_selection,
                                   metric_paths, saa_procedure,
                                   fixed_template_inner, t_critical)
from conftest import mk_instance


class TestDrawScenarios:
    def test_zero_sd_yields_means(self, ex1):
        scen = draw_scenarios(ex1, DistributionSpec("normal"), 4, seed=1)
        means_lam = [p.lam for b in expand_horizon(ex1) for p in b]
        means_mu = [p.mu for b in expand_horizon(ex1) for p in b]
        for s in range(4):
            lam, mu = scen.draws(s)
            assert list(lam) == means_lam and list(mu) == means_mu

    def test_uniform_support(self, ex1):
        w = Fraction(3, 10)
        scen = draw_scenarios(ex1, DistributionSpec.uniform(w), 50, seed=2)
        patients = [p for b in expand_horizon(ex1) for p in b]
        for s in range(50):
            lam, mu = scen.draws(s)
            for i, p in enumerate(patients):
                assert (1 - w / 2) * p.lam <= lam[i] <= (1 + w / 2) * p.lam
                if p.qplus:
                    assert (1 - w / 2) * p.mu <= mu[i] <= (1 + w / 2) * p.mu

    def test_clamped_normal_mean_oracle(self):
        # analytic mean of max(0, N(m, s)): m*Phi(m/s) + s*phi(m/s)
        inst = mk_instance([("HC", "17.8", 0, 100, "10.7", 0)])
        scen = draw_scenarios(inst, DistributionSpec("normal"), 1000, seed=3)
        draws = scen.lam.reshape(-1) / 10
        m, s = 17.8, 10.7
        z = m / s
        phi = math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
        Phi = 0.5 * (1 + math.erf(z / math.sqrt(2)))
        expected = m * Phi + s * phi
        n = draws.size
        assert abs(draws.mean() - expected) <= 3 * s / math.sqrt(n)

    def test_scenarios_are_keyed_independently_of_k(self, ex1):
        small = draw_scenarios(ex1, DistributionSpec.uniform("0.4"), 3, seed=9)
        large = draw_scenarios(ex1, DistributionSpec.uniform("0.4"), 7, seed=9)
        assert (small.lam == large.lam[:3]).all()
        assert (small.mu == large.mu[:3]).all()

    def test_key_components_change_draws(self, ex1):
        d = DistributionSpec.uniform("0.4")
        base = draw_scenarios(ex1, d, 2, seed=9, tag="a", replication=0)
        assert not (draw_scenarios(ex1, d, 2, seed=10, tag="a").lam
                    == base.lam).all()
        assert not (draw_scenarios(ex1, d, 2, seed=9, tag="b").lam
                    == base.lam).all()
        assert not (draw_scenarios(ex1, d, 2, seed=9, tag="a",
                                   replication=1).lam == base.lam).all()


class TestHalfwidth:
    def test_hand_example(self):
        psi_bar, S2, h = confidence_halfwidth([10, 10, 10, 10, 14])
        assert psi_bar == Fraction(54, 5)
        assert S2 == Fraction(64, 25)     # 2.56, the 1/nu divisor
        assert t_critical(4) == 2.776
        assert round(h, 4) == 2.2208
        # 2.2208 / 10.8 exceeds 0.04 / 1.04: the loop must continue
        assert h / float(psi_bar) > 0.04 / 1.04

    def test_order_invariance(self):
        a = confidence_halfwidth([3, 9, 4, 9, 5])
        b = confidence_halfwidth([9, 5, 3, 9, 4])
        assert a == b

    def test_zero_variance(self):
        psi_bar, S2, h = confidence_halfwidth([7, 7, 7])
        assert (psi_bar, S2, h) == (7, 0, 0.0)


@dataclass(frozen=True)
class FakeSolution:
    idx: int


class TestIncumbentSelection:
    MATRIX = ((10, 12, 8, 11, 9),
              (9, 13, 7, 12, 10),
              (11, 9, 9, 9, 9),
              (8, 8, 12, 10, 8),
              (12, 7, 7, 7, 12))

    def evaluator(self, sol, sset):
        return self.MATRIX[sol.idx][sset]

    def test_identical_solutions_keep_first(self):
        sols = [FakeSolution(0) for _ in range(3)]
        best, running = incumbent_selection(sols, [0, 1, 2], self.evaluator)
        assert best is sols[0]
        assert running == Fraction(10 + 12 + 8, 3)

    def test_two_replications_switch(self):
        sols = [FakeSolution(0), FakeSolution(3)]
        best, running = incumbent_selection(sols, [0, 1], self.evaluator)
        assert best is sols[1]          # (8+8)/2 = 8 < (10+12)/2 = 11
        assert running == 8

    def test_five_replication_hand_trace(self):
        sols = [FakeSolution(i) for i in range(5)]
        best, running = incumbent_selection(sols, [0, 1, 2, 3, 4],
                                            self.evaluator)
        # hand trace: keep A at u=2 (tie), switch to C at u=3, keep at u=4
        # (tie at 9.5), switch to E at u=5 (9 < 9.4)
        assert best is sols[4]
        assert running == 9


class TestSaaProcedure:
    def test_zero_variance_stops_at_nu0(self, ex1):
        cfg = SAAConfig(K=3, nu0=5, nu_max=10, xi=0.04)
        res = saa_procedure(ex1, ex1.costs, cfg, seed=7,
                            inner_solver=lambda i, w, s:
                            solve_saa_replication(i, w, s))
        assert res.replications_used == 5
        assert res.halfwidth == 0.0
        assert res.stopped and res.converged

    def test_stops_when_relative_halfwidth_small(self, ex1):
        cfg = SAAConfig(K=5, nu0=5, nu_max=10, xi=0.04)
        tpl = algorithm4(ex1)
        inner = fixed_template_inner(tpl, ex1.regular_time)
        res = saa_procedure(ex1, ex1.costs, cfg, seed=11, inner_solver=inner,
                            dist=DistributionSpec.uniform("0.1"))
        psi_bar, S2, h = confidence_halfwidth(res.psi_values)
        assert res.halfwidth == h
        if res.stopped:
            assert h == 0 or h / float(psi_bar) < 0.04 / 1.04

    def test_reproducible(self, ex1):
        cfg = SAAConfig(K=4, nu0=3, nu_max=6, xi=0.04)
        kwargs = dict(config=cfg, seed=13,
                      inner_solver=lambda i, w, s: solve_saa_replication(i, w, s),
                      dist=DistributionSpec.uniform("0.3"))
        a = saa_procedure(ex1, ex1.costs, **kwargs)
        b = saa_procedure(ex1, ex1.costs, **kwargs)
        assert a.psi_values == b.psi_values
        assert a.halfwidth == b.halfwidth
        assert a.incumbent.template == b.incumbent.template
        assert a.incumbent_average == b.incumbent_average

    def test_shrinking_variance_never_adds_replications(self, ex1):
        cfg = SAAConfig(K=3, nu0=2, nu_max=8, xi=0.002, max_k_rounds=1)
        tpl = algorithm4(ex1)
        inner = fixed_template_inner(tpl, ex1.regular_time)
        noisy = saa_procedure(ex1, ex1.costs, cfg, seed=5, inner_solver=inner,
                              dist=DistributionSpec.uniform("0.5"))
        quiet = saa_procedure(ex1, ex1.costs, cfg, seed=5, inner_solver=inner,
                              dist=DistributionSpec.uniform(0))
        assert quiet.replications_used <= noisy.replications_used


class TestMonteCarlo:
    def test_single_path_zero_sd_equals_deterministic(self, ex1):
        tpl = algorithm3(ex1)
        stats = evaluate_template_mc(tpl, ex1, DistributionSpec("normal"),
                                     N=1, seed=3)
        ev = evaluate(tpl, regular_time=ex1.regular_time)
        assert stats.mean["wait_p"] == Fraction(ev.wait_p, 10)
        assert stats.mean["idle_a"] == Fraction(ev.idle_a, 10)
        assert stats.mean["overtime_a"] == Fraction(ev.overtime_a, 10)

    def test_table7_directional_means(self, table7):
        scen = draw_scenarios(table7, DistributionSpec("normal"), 300, seed=7,
                              tag="dir")
        t3, t4 = algorithm3(table7), algorithm4(table7)
        tf = fcfa(table7, np.random.default_rng(7))
        R = table7.regular_time
        rows3 = metric_paths(t3, scen, R)
        rows4 = metric_paths(t4, scen, R)
        rowsf = metric_paths(tf, scen, R)
        wait = lambda rows: sum(r[0] + r[1] for r in rows)
        p_idle = lambda rows: sum(r[3] for r in rows)
        assert wait(rows4) <= wait(rows3)
        assert p_idle(rows4) <= p_idle(rowsf)


class TestNoshowFallback:
    def test_bernoulli_show_fallback_near_exact_enumeration(self):
        from blocksched import algorithm2, expand_block
        from blocksched.noshow import (NoShowProbs, build_overbook_plan,
                                       enumerate_expected_metrics)
        from blocksched.units import tenths
        inst = mk_instance([("Q", 6, 0, 2), ("A", 10, 14, 2)],
                           regular_time=30)
        probs = NoShowProbs.of("0.2", "0.3")
        plan = build_overbook_plan(algorithm2(expand_block(inst)), "ff", probs)
        exact = enumerate_expected_metrics(plan, probs, tenths(30))
        stats = evaluate_template_mc(
            plan.template(), inst, DistributionSpec("normal"), N=4000, seed=6,
            regular_time=tenths(30), noshow_probs=probs)
        total_wait = stats.mean["wait_a"] + stats.mean["wait_p"]
        assert abs(float(total_wait) - float(exact.wait)) <= \
            4 * (stats.se["wait_a"] + stats.se["wait_p"]) + 1e-9
        assert abs(float(stats.mean["overtime_a"]) - float(exact.overtime_a)) \
            <= 4 * stats.se["overtime_a"] + 1e-9


class TestKGrowth:
    def test_unconverged_run_grows_k_and_flags(self, ex1):
        cfg = SAAConfig(K=3, nu0=2, nu_max=3, xi=0.0005, k_step=5,
                        max_k_rounds=2)
        tpl = algorithm4(ex1)
        inner = fixed_template_inner(tpl, ex1.regular_time)
        res = saa_procedure(ex1, ex1.costs, cfg, seed=17, inner_solver=inner,
                            dist=DistributionSpec.uniform("0.5"))
        assert not res.stopped and not res.converged
        assert res.K == 3 + 5  # one growth round applied
        assert res.replications_used == 3
