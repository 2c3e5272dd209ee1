import json

import numpy as np
import pytest

from epbayes.errors import ConfigurationError, DomainError
from epbayes.pvalues import MethodId
from epbayes.simulate import (
    LambdaLaw,
    SimulationScenario,
    draw_parameters,
    fdr_power,
    generate,
    n_alternatives,
    run_study,
)

EB_AND_BASELINES = [MethodId.VREPB, MethodId.DVEPB, MethodId.EV, MethodId.WELCH, MethodId.BF]


class TestScenario:
    def test_defaults(self):
        sc = SimulationScenario()
        assert (sc.n, sc.pi0, sc.effect_var_multiplier, sc.alpha, sc.reps) == (5000, 0.9, 12.0, 0.1, 50)

    @pytest.mark.parametrize("kw", [dict(pi0=0.0), dict(k_a=1), dict(reps=0), dict(alpha=1.0), dict(n=0)])
    def test_validation(self, kw):
        with pytest.raises(ConfigurationError):
            SimulationScenario(**kw)

    def test_alternative_count(self):
        assert n_alternatives(5000, 0.9) == 500
        assert n_alternatives(10, 1.0) == 0
        assert n_alternatives(7, 0.5) == 4


class TestGenerate:
    def test_all_null(self):
        _, truth = generate(SimulationScenario(n=200, pi0=1.0), 0)
        assert not truth.any()

    def test_equal_one(self):
        par = draw_parameters(SimulationScenario(n=500, lambda_law=LambdaLaw.EQUAL_ONE), 3)
        np.testing.assert_array_equal(par["sig2a"], par["sig2b"])

    def test_unequal_f_mean(self):
        par = draw_parameters(SimulationScenario(n=10**6, lambda_law=LambdaLaw.UNEQUAL_F, seed=9), 0)
        assert abs(par["lam"].mean() / 2.4 - 1) <= 0.01

    def test_diffuse_range(self):
        par = draw_parameters(SimulationScenario(n=10**5, lambda_law=LambdaLaw.DIFFUSE_LOGUNIF), 0)
        ll = np.log(par["lam"])
        assert ll.min() >= -5 and ll.max() <= 5 and abs(ll.mean()) < 0.05

    def test_sigma_law(self):
        par = draw_parameters(SimulationScenario(n=10**5), 0)
        assert np.all(par["sig2b"] >= 0)
        assert abs(par["sig2b"].mean() - 6) < 0.05

    def test_effects(self):
        sc = SimulationScenario(n=20000, seed=4)
        par = draw_parameters(sc, 0)
        t = par["truth"]
        assert t.sum() == 2000
        assert np.all(par["mu_a"][~t] == 0) and np.all(par["mu_b"] == 0)
        z = par["mu_a"][t] / np.sqrt(12 * par["sig2a"][t])
        assert abs(z.std() - 1) < 0.05

    def test_deterministic(self):
        sc = SimulationScenario(n=300, seed=11)
        a, ta = generate(sc, 2)
        b, tb = generate(sc, 2)
        np.testing.assert_array_equal(a.var_a, b.var_a)
        np.testing.assert_array_equal(ta, tb)
        c, _ = generate(sc, 3)
        assert not np.array_equal(a.var_a, c.var_a)

    def test_kb_does_not_perturb_other_draws(self):
        s9 = SimulationScenario(n=400, k_a=3, k_b=9, seed=5)
        s4 = SimulationScenario(n=400, k_a=3, k_b=4, seed=5)
        p9, p4 = draw_parameters(s9, 1), draw_parameters(s4, 1)
        for key in p9:
            np.testing.assert_array_equal(p9[key], p4[key])
        t9, _ = generate(s9, 1)
        t4, _ = generate(s4, 1)
        np.testing.assert_array_equal(t9.var_a, t4.var_a)
        np.testing.assert_array_equal(t9.mean_a, t4.mean_a)


class TestRunStudy:
    def test_fdr_power_recount(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            truth = rng.random(50) < 0.2
            rej = rng.random(50) < 0.3
            fdr, pw = fdr_power(rej, truth)
            v = sum(1 for r, t in zip(rej, truth) if r and not t)
            r = sum(rej)
            assert fdr == (v / r if r else 0.0)
            assert pw == (sum(1 for r_, t in zip(rej, truth) if r_ and t) / sum(truth) if truth.any() else 0.0)

    def test_reproducible_and_thread_invariant(self):
        sc = [SimulationScenario(n=400, k_a=3, k_b=4, reps=2, seed=7)]
        r1 = run_study(sc, EB_AND_BASELINES)
        r2 = run_study(sc, EB_AND_BASELINES)
        r3 = run_study(sc, EB_AND_BASELINES, threads=2)
        assert r1.to_json() == r2.to_json() == r3.to_json()

    def test_single_rep_se_zero(self):
        r = run_study([SimulationScenario(n=300, reps=1, seed=1)], [MethodId.EV])
        assert r.entries[0].fdr_se == 0.0 and r.entries[0].reps == 1

    def test_ev_valid_with_equal_variances(self):
        sc = SimulationScenario(k_a=3, k_b=3, lambda_law=LambdaLaw.EQUAL_ONE, reps=10, seed=21)
        e = run_study([sc], [MethodId.EV]).entries[0]
        assert e.fdr - 3 * e.fdr_se <= sc.alpha

    def test_power_ordering_unequal(self):
        sc = SimulationScenario(k_a=3, k_b=9, reps=2, seed=31)
        rep = run_study([sc], [MethodId.VREPB, MethodId.DVEPB, MethodId.BF])
        pv, pd, pb = (rep.get(m, 9).power for m in (MethodId.VREPB, MethodId.DVEPB, MethodId.BF))
        assert pd >= pv - 0.02 and pv > pb

    def test_errors_are_annotated(self):
        sc = SimulationScenario(n=50, k_a=2, k_b=3, reps=1)
        with pytest.raises(DomainError, match="replicate 0"):
            run_study([sc], [MethodId.VREPB])

    def test_writers(self, tmp_path):
        rep = run_study(
            [SimulationScenario(n=200, k_b=k, reps=2, seed=3) for k in (3, 4)], [MethodId.EV, MethodId.WELCH]
        )
        rep.write_json(tmp_path / "r.json")
        rep.write_tsv(tmp_path / "r.tsv")
        js = json.loads((tmp_path / "r.json").read_text())
        assert js["series"]["unequal"]["ev"]["k_b"] == [3, 4]
        assert "variance 4" in js["assumptions"]["sigma2_b_law"]
        lines = (tmp_path / "r.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["scenario", "method", "k_a", "k_b", "fdr", "fdr_se", "power", "power_se"]
        assert len(lines) == 5
