"""Closed-form sample size and power planning for the four method variants."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartb import (
    AI_ORDER,
    ConditionalScenario,
    ContrastSpec,
    MarginalScenario,
    NullEffectError,
    TestSpec,
    adjusted_conditional_variances,
    cpb_n_onewave,
    cpb_n_twowave,
    cpb_sigma2_onewave,
    cpb_sigma2_twowave,
    inflate_for_attrition,
    log_odds_ratio,
    mpb_n_onewave,
    mpb_n_twowave,
    mpb_sigma2_onewave,
    mpb_sigma2_twowave,
    plan_n,
    power_given_n,
    predicted_power,
    required_n,
)

CONTRAST = ContrastSpec(2, 4)


def rounded_marginals_or2(rho=0.0, resp_rate=0.45):
    """Two-decimal planning inputs for the doubled-odds effect size."""
    hi, lo = (0.58, 0.41) if rho >= 0.5 else (0.59, 0.42)
    return MarginalScenario(mu={1: hi, 2: hi, 3: lo, 4: lo},
                            resp_rate=resp_rate, pretest_mean=0.40, rho_marginal=rho)


def conditional_example():
    """Conditional inputs whose implied marginals sit near 0.58 / 0.41."""
    rbar = 0.5 * (0.565 + 0.336)
    return ConditionalScenario(
        psi_nr={1: 0.417, 2: 0.417, 3: 0.314, 4: 0.314},
        psi_r={1: 0.712, -1: 0.612},
        resp_rate={1: 0.565, -1: 0.336},
        pretest_mean=(1 - rbar) * 0.30 + rbar * 0.52,
        pretest_given_r=(0.30, 0.52),
        rho_marginal=0.6,
    )


def random_marginal_scenarios(count, seed=0, common_r=True):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        mu = rng.uniform(0.06, 0.94, size=4)
        if abs(log_odds_ratio(mu[1], mu[3])) < 0.05:
            continue
        r = float(rng.uniform(0.05, 0.95))
        resp = r if common_r else {1: float(rng.uniform(0.05, 0.95)), -1: r}
        out.append(MarginalScenario(
            mu={i + 1: float(mu[i]) for i in range(4)},
            resp_rate=resp,
            pretest_mean=float(rng.uniform(0.1, 0.9)),
            rho_marginal=float(rng.uniform(0.0, 0.85))))
    return out


class TestRequiredN:
    def test_unit_example(self):
        n = required_n(1.0, 1.0)
        assert n == 8
        spec = TestSpec()
        raw = (spec.z_power + spec.z_alpha) ** 2
        assert raw == pytest.approx(7.848880, abs=1e-5)

    def test_quadruples_when_effect_halves(self):
        assert required_n(4.0, 1.0) == 32  # sigma2 scales linearly
        spec = TestSpec()
        raw1 = spec.factor * 9.0 / 0.5 ** 2
        raw2 = spec.factor * 9.0 / 1.0 ** 2
        assert raw1 == pytest.approx(4.0 * raw2)

    def test_coin_flip_power_reduces_to_critical_value(self):
        # at power 0.5 the slope term vanishes: n_raw = z_{1-alpha/2}^2 sigma2 / delta^2
        spec = TestSpec(power=0.5)
        assert spec.factor == pytest.approx(3.841459, abs=1e-6)
        assert required_n(2.0, 0.5, spec) == math.ceil(3.841459 * 2.0 / 0.25)

    def test_floor_of_two(self):
        assert required_n(1e-6, 5.0) == 2

    def test_null_effect_rejected(self):
        with pytest.raises(NullEffectError):
            required_n(1.0, 0.0)


class TestPowerGivenN:
    def test_null_effect_returns_half_alpha(self):
        assert power_given_n(1.0, 0.0, 300) == pytest.approx(0.025)

    def test_round_trip_meets_target(self):
        for sigma2, delta in [(16.3, 0.69), (25.0, 0.5), (9.0, 1.2)]:
            n = required_n(sigma2, delta)
            assert power_given_n(sigma2, delta, n) >= 0.80
            if n > 2:
                assert power_given_n(sigma2, delta, n - 1) < 0.80

    def test_monotone_in_n(self):
        powers = [power_given_n(16.0, 0.5, n) for n in (100, 200, 400, 800)]
        assert powers == sorted(powers)

    def test_doubled_odds_published_operating_point(self):
        sc = rounded_marginals_or2(rho=0.06)
        sigma2, delta, _ = mpb_sigma2_onewave(sc, CONTRAST)
        assert power_given_n(sigma2, delta, 300) == pytest.approx(0.665, abs=0.02)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            power_given_n(1.0, 1.0, 0)
        with pytest.raises(ValueError):
            power_given_n(-1.0, 1.0, 100)


class TestAdjustedVariances:
    def test_worked_example(self):
        av = adjusted_conditional_variances(0.3, 0.5, 0.45)
        assert av.v_nonresponder == pytest.approx(0.2181, abs=1e-4)
        assert av.v_responder == pytest.approx(0.2621, abs=1e-4)
        assert av.mu == pytest.approx(0.39)

    def test_equal_rates_collapse_to_bernoulli_variance(self):
        av = adjusted_conditional_variances(0.5, 0.5, 0.3)
        assert av.v_nonresponder == pytest.approx(0.25)
        assert av.v_responder == pytest.approx(0.25)

    def test_no_responders_keeps_raw_nonresponder_variance(self):
        av = adjusted_conditional_variances(0.3, 0.5, 0.0)
        assert av.v_nonresponder == pytest.approx(0.3 * 0.7)
        assert av.mu == pytest.approx(0.3)

    def test_extreme_split_exceeds_bernoulli_bound(self):
        # the squared-gap terms can push the adjusted variance past 1/4
        av = adjusted_conditional_variances(0.99, 0.01, 0.45)
        assert av.v_responder > 0.25
        assert math.isfinite(av.v_nonresponder)

    def test_rejects_invalid_inputs(self):
        with pytest.raises(ValueError):
            adjusted_conditional_variances(0.0, 0.5, 0.5)
        with pytest.raises(ValueError):
            adjusted_conditional_variances(0.3, 0.5, 1.5)


class TestOneWavePlanning:
    def test_marginal_published_operating_point(self):
        res = mpb_n_onewave(rounded_marginals_or2(rho=0.06, resp_rate={1: 0.565, -1: 0.336}))
        assert res.n == 425
        assert res.n_raw == pytest.approx(424.8248, abs=1e-3)
        assert res.delta == pytest.approx(log_odds_ratio(0.59, 0.42))

    def test_full_response_reduces_to_two_arm_comparison(self):
        sc = rounded_marginals_or2(resp_rate=1.0)
        sigma2, delta, _ = mpb_sigma2_onewave(sc, CONTRAST)
        v2 = 0.59 * 0.41
        v4 = 0.42 * 0.58
        assert sigma2 == pytest.approx(2.0 * (1.0 / v2 + 1.0 / v4))

    def test_no_response_is_most_expensive(self):
        ns = [mpb_n_onewave(rounded_marginals_or2(resp_rate=r)).n_raw for r in (0.0, 0.3, 0.7)]
        assert ns[0] > ns[1] > ns[2]

    def test_conditional_matches_marginal_when_response_is_uninformative(self):
        # psi_nr = psi_r within each arm leaves nothing for response status to explain
        sc = ConditionalScenario(
            psi_nr={1: 0.59, 2: 0.59, 3: 0.42, 4: 0.42},
            psi_r={1: 0.59, -1: 0.42},
            resp_rate={1: 0.565, -1: 0.336})
        s_c, d_c, _ = cpb_sigma2_onewave(sc, CONTRAST)
        s_m, d_m, _ = mpb_sigma2_onewave(sc.marginal(), CONTRAST)
        assert s_c == pytest.approx(s_m, abs=1e-12)
        assert d_c == pytest.approx(d_m, abs=1e-12)

    def test_conditional_variance_never_exceeds_worst_cell(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            psi0 = rng.uniform(0.05, 0.95, size=2)
            psi1 = rng.uniform(0.05, 0.95, size=2)
            r = rng.uniform(0.05, 0.95, size=2)
            sc = ConditionalScenario(
                psi_nr={1: psi0[0], 2: psi0[0], 3: psi0[1], 4: psi0[1]},
                psi_r={1: psi1[0], -1: psi1[1]},
                resp_rate={1: r[0], -1: r[1]})
            mu2, mu4 = sc.mu(AI_ORDER[1]), sc.mu(AI_ORDER[3])
            if abs(log_odds_ratio(mu2, mu4)) < 0.05:
                continue
            sigma2, _, _ = cpb_sigma2_onewave(sc, CONTRAST)
            bound = 0.0
            for arm, ai, mu in ((1, AI_ORDER[1], mu2), (-1, AI_ORDER[3], mu4)):
                rr = sc.resp_rate_for_arm(arm)
                av = adjusted_conditional_variances(
                    sc.psi_nr_for_ai(ai), sc.psi_r_for_arm(arm), rr)
                worst = max(av.v_nonresponder, av.v_responder, mu * (1 - mu))
                bound += (4 * (1 - rr) * worst + 2 * rr * worst) / (mu * (1 - mu)) ** 2
            assert sigma2 <= bound + 1e-9

    def test_null_effect(self):
        sc = MarginalScenario(mu={1: 0.5, 2: 0.5, 3: 0.6, 4: 0.5}, resp_rate=0.4)
        with pytest.raises(NullEffectError):
            mpb_n_onewave(sc)


class TestTwoWavePlanning:
    def test_marginal_published_operating_point(self):
        res = mpb_n_twowave(rounded_marginals_or2(rho=0.6))
        assert res.n == 273
        assert res.n_raw == pytest.approx(272.0462, abs=1e-3)

    def test_pretest_ignored_when_uncorrelated(self):
        for sc in random_marginal_scenarios(200, seed=42):
            flat = MarginalScenario(mu=sc.mu, resp_rate=sc.resp_rate,
                                    pretest_mean=sc.pretest_mean, rho_marginal=0.0)
            s2w, d2w, _ = mpb_sigma2_twowave(flat, CONTRAST)
            s1w, d1w, _ = mpb_sigma2_onewave(flat, CONTRAST)
            assert abs(s2w - s1w) <= 1e-12
            assert d2w == d1w

    def test_stronger_correlation_needs_fewer_participants(self):
        raws = [mpb_n_twowave(rounded_marginals_or2(rho=r) if r >= 0.5
                              else rounded_marginals_or2(rho=r)).n_raw
                for r in (0.0, 0.3, 0.45)]
        assert raws[0] > raws[1] > raws[2]

    def test_conditional_adjusted_and_cell_modes(self):
        sc = conditional_example()
        res_adj = cpb_n_twowave(sc, conditional_moments="adjusted")
        res_cell = cpb_n_twowave(sc, conditional_moments="cell")
        assert res_adj.n_raw != res_cell.n_raw
        assert abs(res_adj.n - res_cell.n) <= 6
        with pytest.raises(ValueError):
            cpb_n_twowave(sc, conditional_moments="midway")

    def test_conditional_requires_pretest_block(self):
        sc = ConditionalScenario(
            psi_nr={1: 0.417, 2: 0.417, 3: 0.314, 4: 0.314},
            psi_r={1: 0.712, -1: 0.612},
            resp_rate={1: 0.565, -1: 0.336},
            rho_marginal=0.6)
        with pytest.raises(ValueError, match="pretest"):
            cpb_n_twowave(sc)

    def test_conditional_collapses_to_marginal_formula(self):
        # equal response rates, response-uninformative cells, equal conditional
        # pretest means and a single correlation leave the cell structure inert
        rng = np.random.default_rng(8)
        for _ in range(40):
            hi, lo = sorted(rng.uniform(0.1, 0.9, size=2))[::-1]
            if abs(log_odds_ratio(hi, lo)) < 0.05:
                continue
            r = float(rng.uniform(0.1, 0.9))
            rho = float(rng.uniform(0.0, 0.8))
            pre = float(rng.uniform(0.2, 0.8))
            sc = ConditionalScenario(
                psi_nr={1: hi, 2: hi, 3: lo, 4: lo},
                psi_r={1: hi, -1: lo},
                resp_rate={1: r, -1: r},
                pretest_mean=pre, pretest_given_r=(pre, pre),
                rho_marginal=rho, rho_conditional={0: rho, 1: rho})
            s_c, d_c, _ = cpb_sigma2_twowave(sc, CONTRAST)
            s_m, d_m, _ = mpb_sigma2_twowave(sc.marginal(), CONTRAST)
            assert s_c == pytest.approx(s_m, abs=1e-9)
            assert d_c == pytest.approx(d_m, abs=1e-12)

    def test_two_wave_never_beats_one_wave_backwards(self):
        # adding an uninformative pretest cannot reduce precision
        sc = conditional_example()
        one = cpb_n_onewave(sc).n_raw
        two = cpb_n_twowave(sc).n_raw
        assert two < one


class TestAttrition:
    def test_examples(self):
        assert inflate_for_attrition(100, 0.0) == 100
        assert inflate_for_attrition(100, 0.2) == 125
        assert inflate_for_attrition(269, 0.1) == 299

    def test_rejects_certain_attrition(self):
        with pytest.raises(ValueError):
            inflate_for_attrition(100, 1.0)
        with pytest.raises(ValueError):
            inflate_for_attrition(100, -0.1)


class TestDispatch:
    def test_plan_n_routes_methods_and_waves(self):
        cond = conditional_example()
        assert plan_n(cond, method="cpb", waves=1).n == cpb_n_onewave(cond).n
        assert plan_n(cond, method="cpb", waves=2).n == cpb_n_twowave(cond).n
        assert plan_n(cond, method="mpb", waves=2).n == mpb_n_twowave(cond.marginal()).n
        marg = rounded_marginals_or2(rho=0.6)
        assert plan_n(marg, method="mpb", waves=2).n == 273

    def test_plan_n_rejects_marginal_inputs_for_conditional_method(self):
        with pytest.raises(ValueError, match="conditional"):
            plan_n(rounded_marginals_or2(), method="cpb", waves=1)
        with pytest.raises(ValueError):
            plan_n(conditional_example(), method="median", waves=1)
        with pytest.raises(ValueError):
            plan_n(conditional_example(), method="cpb", waves=3)

    def test_predicted_power_matches_plan_target_at_planned_n(self):
        cond = conditional_example()
        for method, waves in (("mpb", 1), ("cpb", 1), ("mpb", 2), ("cpb", 2)):
            res = plan_n(cond, method=method, waves=waves)
            pw = predicted_power(cond, n=res.n, method=method, waves=waves)
            assert pw.power >= 0.80
            assert pw.method == res.method

    def test_swapping_contrast_endpoints_preserves_n(self):
        cond = conditional_example()
        forward = plan_n(cond, contrast=ContrastSpec(2, 4), method="cpb", waves=2)
        backward = plan_n(cond, contrast=ContrastSpec(4, 2), method="cpb", waves=2)
        assert forward.n == backward.n
        assert forward.sigma2_delta == pytest.approx(backward.sigma2_delta, rel=1e-12)
        assert forward.delta == pytest.approx(-backward.delta, rel=1e-12)

    def test_result_serialization(self):
        res = plan_n(conditional_example(), method="cpb", waves=2)
        d = res.to_dict()
        assert d["n"] == res.n
        assert d["method"] == res.method
        assert isinstance(d["intermediates"], dict)
