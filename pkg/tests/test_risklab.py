import math

import numpy as np
import pytest
from scipy import integrate

from compound_oracle.errors import CapacityError, ContractError
from compound_oracle.families import Family, ParameterMultiset
from compound_oracle.risklab import (
    MuGenerator,
    RiskEstimate,
    check_B1,
    check_G1,
    check_G2,
    check_two_valued_condition,
    draw_instance,
    gap_curve,
    mc_gap,
)

LOC = Family.gaussian_location()
SCALE = Family.gaussian_scale()


def within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


class TestDrawInstance:
    def test_single(self):
        for s in range(20):
            labels, _ = draw_instance(LOC, [3.0], s)
            assert labels.tolist() == [3.0]

    def test_label_marginal(self):
        hits = sum(draw_instance(LOC, [0.0, 1.0], (11, r))[0][0] == 1.0 for r in range(100_000))
        assert abs(hits / 100_000 - 0.5) < 0.005

    def test_all_equal_iid(self):
        ys = np.concatenate([draw_instance(LOC, [2.0] * 10, (3, r))[1] for r in range(10_000)])
        assert abs(ys.mean() - 2.0) < 0.02

    def test_depends_on_multiset_only(self):
        rng = np.random.default_rng(0)
        mus = rng.uniform(-1, 1, 9)
        a = draw_instance(LOC, mus, (5, 2))
        b = draw_instance(LOC, rng.permutation(mus), (5, 2))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_deterministic(self):
        a = draw_instance(SCALE, [1.0, 2.0, 3.0], 99)
        b = draw_instance(SCALE, [1.0, 2.0, 3.0], 99)
        assert np.array_equal(a[1], b[1])


class TestMcGap:
    def test_all_equal_exact_zero(self):
        for engine in ("enum", "permanent", "two-valued"):
            r = mc_gap(LOC, [0.25] * 5, engine, 50, 1)
            assert r.gap_sq.mean == 0.0 and r.risk_diff.mean == 0.0
            assert r.risk_s.mean == 0.0 and r.risk_pi.mean == 0.0

    def test_contract(self):
        with pytest.raises(ContractError):
            mc_gap(LOC, [0.0, 1.0], "enum", 1, 0)
        with pytest.raises(CapacityError):
            mc_gap(LOC, np.zeros(9), "enum", 10, 0)
        with pytest.raises(ContractError):
            mc_gap(LOC, [0.0, 1.0, 2.0], "two-valued", 10, 0)

    def test_identities(self):
        r = mc_gap(LOC, [0.0, 0.0, 1.0, 1.0, 1.0], "two-valued", 500, 4)
        assert r.risk_diff.mean == r.risk_s.mean - r.risk_pi.mean
        assert r.pythagoras_residual == abs(r.risk_s.mean - r.risk_pi.mean - r.gap_sq.mean)
        assert r.gap_sq.reps == 500 and r.risk_s.master_seed == 4
        for est in (r.gap_sq, r.risk_s, r.risk_pi):
            assert est.mean >= 0 and est.stderr >= 0

    def test_ordering_n2(self):
        r = mc_gap(LOC, [0.0, 1.0], "enum", 100_000, 2)
        assert r.risk_s.mean >= r.risk_pi.mean - 3 * r.risk_diff.stderr

    def test_two_valued_vs_permanent(self):
        mus = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        a = mc_gap(LOC, mus, "two-valued", 300, 8)
        b = mc_gap(LOC, mus, "permanent", 300, 8)
        c = mc_gap(LOC, mus, "enum", 300, 8)
        for x, y in ((a, b), (a, c)):
            for f in ("gap_sq", "risk_s", "risk_pi", "risk_diff"):
                assert getattr(x, f).mean == pytest.approx(getattr(y, f).mean, abs=1e-9)

    def test_workers_bitwise(self):
        mus = MuGenerator("iid-uniform", {"A": 1.0, "seed": 2}).make(6)
        a = mc_gap(LOC, mus, "permanent", 200, 3, workers=1)
        b = mc_gap(LOC, mus, "permanent", 200, 3, workers=4)
        assert a.to_dict() == b.to_dict()

    def test_shuffled_multiset_same_report(self):
        rng = np.random.default_rng(1)
        mus = rng.uniform(-1, 1, 6)
        a = mc_gap(LOC, mus, "permanent", 100, 6)
        b = mc_gap(LOC, rng.permutation(mus), "permanent", 100, 6)
        assert a.to_dict() == b.to_dict()

    def test_stderr_definition(self):
        x = np.array([1.0, 2.0, 4.0])
        r = RiskEstimate.from_samples(x, 0)
        assert r.stderr == pytest.approx(np.std(x, ddof=1) / math.sqrt(3), rel=1e-15)


class TestGapCurve:
    def test_single_row_equals_mc_gap(self):
        gen = MuGenerator("two-valued", {"mu0": 0.0, "mu1": 1.0, "gamma": 0.5})
        (row,) = gap_curve(LOC, gen, [8], "two-valued", 200, 5)
        assert row.to_dict() == mc_gap(LOC, gen.make(8), "two-valued", 200, 5).to_dict()

    def test_all_equal_column(self):
        gen = MuGenerator("constant", {"value": -0.5})
        for row in gap_curve(LOC, gen, [2, 4, 6], "permanent", 20, 0):
            assert row.gap_sq.mean == 0.0

    def test_capacity_checked_up_front(self):
        gen = MuGenerator("constant", {"value": 0.0})
        with pytest.raises(CapacityError):
            gap_curve(LOC, gen, [4, 40], "permanent", 10, 0)

    def test_generators(self):
        g = MuGenerator("two-valued", {"mu0": 0.0, "mu1": 2.0, "gamma": 0.3})
        assert g.make(10) == ParameterMultiset([0.0] * 7 + [2.0] * 3)
        u = MuGenerator("iid-uniform", {"A": 2.0, "seed": 4})
        assert u.make(50) == u.make(50)
        assert np.all(np.abs(u.make(50).values) <= 2.0)
        with pytest.raises(ContractError):
            MuGenerator("explicit", {"values": [1.0, 2.0]}).make(3)
        with pytest.raises(ContractError):
            MuGenerator("zipf")


class TestG1:
    def test_all_equal(self):
        r = check_G1(LOC, [0.3] * 4, gamma=0.1, reps=1000, seed=0)
        assert r.values["ratio_second_moment_max"] == 1.0
        assert r.values["prob_ratio_above_gamma_min"] == 1.0
        assert r.values["max_abs_mu"] == 0.3

    def test_two_point_second_moment(self):
        # E_0 (f_1/f_0)^2 = E exp(2Y - 1) = e under N(0, 1)
        r = check_G1(LOC, [0.0, 1.0], reps=100_000, seed=1)
        assert within(r.values["ratio_second_moment_max"], r.stderr["ratio_second_moment_max"], math.e)

    def test_uniform_bound(self):
        mus = MuGenerator("iid-uniform", {"A": 1.0, "seed": 3}).make(30)
        r = check_G1(LOC, mus, reps=20_000, seed=2)
        a, b = r.values["ratio_second_moment_argmax"]
        # independent integral of the second moment for the reported pair
        exact, _ = integrate.quad(lambda y: math.exp(2 * (LOC.logpdf(b, y) - LOC.logpdf(a, y)) + LOC.logpdf(a, y)), -15, 15)
        assert exact == pytest.approx(math.exp((b - a) ** 2), rel=1e-8)
        assert r.values["ratio_second_moment_max"] <= math.exp(4) + 3 * r.stderr["ratio_second_moment_max"]
        assert 0 < r.values["prob_ratio_above_gamma_min"] <= 1

    def test_subsampling(self):
        mus = np.linspace(-1, 1, 120)
        r = check_G1(LOC, mus, reps=200, seed=0)
        assert r.values["distinct_values_used"] == 50

    def test_bad_gamma(self):
        with pytest.raises(ContractError):
            check_G1(LOC, [0.0, 1.0], gamma=0.0)


def _g2_quadrature(mus):
    """Exact (G2) expectations for n = 2 under the random-matching model."""
    m0, m1 = mus
    f = lambda m, y: math.exp(LOC.logpdf(m, y))

    def pieces(y):
        a, b = f(m0, y), f(m1, y)
        p0, p1 = a / (a + b), b / (a + b)
        s2 = p0 * p0 + p1 * p1
        inv = 1.0 / (2 * min(p0, p1))
        mix = 0.5 * (a + b)  # marginal of one observation
        return s2 * mix, inv * mix, s2 * inv * mix

    out = []
    for k in range(3):
        v, _ = integrate.quad(lambda y: pieces(y)[k], -12, 13, limit=400, points=[0.5])
        out.append(2 * v)  # two exchangeable observations
    return out


class TestG2:
    def test_all_equal(self):
        r = check_G2(LOC, [0.7] * 5, reps=200, seed=0)
        assert r.values["sum_p2"] == pytest.approx(1.0, abs=1e-14)
        assert r.values["inv_min"] == pytest.approx(5.0, abs=1e-12)

    def test_n2_quadrature(self):
        r = check_G2(LOC, [0.0, 1.0], reps=200_000, seed=3)
        q1, q2, q3 = _g2_quadrature([0.0, 1.0])
        assert within(r.values["sum_p2"], r.stderr["sum_p2"], q1)
        assert within(r.values["inv_min"], r.stderr["inv_min"], q2)
        assert within(r.values["weighted_inv_min"], r.stderr["weighted_inv_min"], q3)

    def test_gaussian_bound(self):
        mus = MuGenerator("iid-uniform", {"A": 1.0, "seed": 5}).make(50)
        r = check_G2(LOC, mus, reps=20_000, seed=1)
        assert r.values["single_obs_sum_p2"] <= r.values["gaussian_single_obs_bound"]
        assert r.values["gaussian_single_obs_bound"] == math.exp(12 * r.values["gaussian_bound_A"] ** 2) / 50

    def test_block_invariance(self):
        # reps straddling a block boundary are still deterministic
        a = check_G2(LOC, [0.0, 0.5, 1.0], reps=1000, seed=9)
        b = check_G2(LOC, [1.0, 0.0, 0.5], reps=1000, seed=9)
        assert a.to_dict() == b.to_dict()


class TestB1:
    def test_repeated(self):
        r = check_B1(LOC, [0.4] * 6, reps=1000, seed=0)
        assert r.values["ratio_variance_max"] == 0.0 and r.values["V_n"] == 0.0

    def test_lognormal(self):
        d = 0.5
        r = check_B1(LOC, [0.0, d], reps=100_000, seed=4)
        assert within(r.values["ratio_variance_max"], r.stderr["ratio_variance_max"], math.expm1(d * d))
        assert r.values["spread_A_n"] == d

    def test_equispaced(self):
        r = check_B1(LOC, np.linspace(0, 1, 100), reps=100_000, seed=5)
        per_pair = math.expm1(1 / 99**2)
        assert per_pair == pytest.approx(1.02e-4, rel=1e-2)
        # V_n is a max over 99 noisy estimates, so it sits a couple of stderr above n^2 * per_pair
        assert r.values["V_n"] == pytest.approx(100**2 * per_pair, rel=0.04)
        assert r.values["V_n"] >= 100**2 * per_pair - 3 * r.stderr["V_n"]

    def test_needs_two(self):
        with pytest.raises(ContractError):
            check_B1(LOC, [0.0], reps=10)


class TestTwoValuedCondition:
    def test_equal(self):
        r = check_two_valued_condition(LOC, 0.5, 0.5, reps=1000, seed=0)
        assert r.values["var_ratio_under_mu0"] == 0.0 and r.values["var_ratio_under_mu1"] == 0.0
        assert not r.flags["heavy_tail"]

    def test_location_closed_form(self):
        r = check_two_valued_condition(LOC, 0.0, 1.0, reps=100_000, seed=1)
        assert within(r.values["var_ratio_under_mu0"], r.stderr["var_ratio_under_mu0"], math.e - 1)
        assert within(r.values["var_ratio_under_mu1"], r.stderr["var_ratio_under_mu1"], math.e - 1)
        assert not r.flags["heavy_tail"]

    def test_scale_divergent_flag(self):
        r = check_two_valued_condition(SCALE, 1.0, 3.0, reps=100_000, seed=2)
        assert r.flags["heavy_tail_mu0"] and r.flags["heavy_tail"]
        assert len(r.values["doubling_under_mu0"]) == 5

    def test_scale_finite_no_flag(self):
        # under N(0, s0): E (f1/f0)^2 = (s0/s1) (2 s0/s1 - 1)^(-1/2), finite for s1 > s0/2
        r = check_two_valued_condition(SCALE, 1.0, 1.2, reps=100_000, seed=3)
        c = 1.0 / 1.2
        expected = c / math.sqrt(2 * c - 1.0) - 1.0
        assert within(r.values["var_ratio_under_mu0"], r.stderr["var_ratio_under_mu0"], expected)
        assert not r.flags["heavy_tail"]
