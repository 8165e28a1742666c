import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from compound_oracle.errors import ContractError, DomainError
from compound_oracle.families import (
    Family,
    LogLikelihoodMatrix,
    ParameterMultiset,
    log_density,
    loglik_matrix,
    sample,
    stream,
)

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
finite = st.floats(-50, 50, allow_nan=False)


class TestLogDensity:
    def test_standard_normal_mode(self, loc):
        assert log_density(loc, 0.0, 0.0) == pytest.approx(-0.918939, abs=1e-6)
        assert log_density(loc, 0.0, 0.0) == -HALF_LOG_2PI

    def test_shift(self, loc):
        assert log_density(loc, 1.0, 1.0) == -HALF_LOG_2PI

    def test_scale_value(self):
        # -1/2 log(2 pi s2) - y^2 / (2 s2) with s2 = 2, y = 1
        expected = -0.5 * math.log(2 * math.pi * 2.0) - 1.0 / 4.0
        assert log_density(Family.gaussian_scale(), 2.0, 1.0) == pytest.approx(expected, rel=1e-15)
        assert expected == pytest.approx(-0.5 * math.log(4 * math.pi) - 0.25)

    @pytest.mark.parametrize("mu", [0.0, -1.0, -3.5])
    def test_scale_rejects_nonpositive(self, mu):
        with pytest.raises(DomainError):
            log_density(Family.gaussian_scale(), mu, 1.0)

    def test_location_rejects_nonfinite(self, loc):
        with pytest.raises(DomainError):
            log_density(loc, math.inf, 0.0)

    def test_two_point_labels(self):
        fam = Family.two_point("gaussian-location", -2.0, 3.0)
        assert log_density(fam, 0, 0.5) == log_density(Family.gaussian_location(), -2.0, 0.5)
        assert log_density(fam, 1, 0.5) == log_density(Family.gaussian_location(), 3.0, 0.5)
        with pytest.raises(DomainError):
            log_density(fam, 0.5, 0.0)

    def test_two_point_validates_members(self):
        with pytest.raises(DomainError):
            Family.two_point("gaussian-scale", 1.0, -1.0)
        with pytest.raises(ContractError):
            Family("two-point", base="gaussian-location")
        with pytest.raises(ContractError):
            Family("cauchy")

    @given(mu=finite, y=finite)
    def test_finite_everywhere(self, mu, y):
        assert math.isfinite(log_density(Family.gaussian_location(), mu, y))
        assert math.isfinite(log_density(Family.gaussian_scale(), abs(mu) + 1e-3, y))

    @pytest.mark.parametrize(
        "family, mu, sd",
        [
            (Family.gaussian_location(), 0.0, 1.0),
            (Family.gaussian_location(), 2.5, 1.0),
            (Family.gaussian_scale(), 0.25, 0.5),
            (Family.gaussian_scale(), 9.0, 3.0),
            (Family.two_point("gaussian-scale", 1.0, 4.0), 1, 2.0),
        ],
    )
    def test_density_integrates_to_one(self, family, mu, sd):
        centre = mu if family.kind == "gaussian-location" else 0.0
        total, _ = integrate.quad(
            lambda y: math.exp(log_density(family, mu, y)), centre - 10 * sd, centre + 10 * sd, epsabs=1e-13, limit=200
        )
        assert total == pytest.approx(1.0, abs=1e-8)


class TestSample:
    def test_deterministic(self, loc):
        assert sample(loc, 0.0, 99) == sample(loc, 0.0, 99)
        assert sample(loc, 0.0, (99, 3)) == sample(loc, 0.0, (99, 3))
        assert sample(loc, 0.0, (99, 3)) != sample(loc, 0.0, (99, 4))

    def test_streams_independent_of_open_order(self):
        a = stream(5, 7, 1).standard_normal(3)
        stream(5, 0, 1).standard_normal(100)
        assert np.array_equal(a, stream(5, 7, 1).standard_normal(3))
        assert not np.array_equal(a, stream(5, 7, 2).standard_normal(3))

    def test_location_mean(self, loc):
        draws = loc.draw(2.0, stream(1), size=100_000)
        # CLT: 3 / sqrt(1e5) is about 0.0095; doubled for slack
        assert abs(draws.mean() - 2.0) < 0.02

    def test_scale_variance(self):
        draws = Family.gaussian_scale().draw(4.0, stream(2), size=100_000)
        assert abs(draws.var() - 4.0) < 0.1

    def test_sample_rejects_bad_mu(self):
        with pytest.raises(DomainError):
            sample(Family.gaussian_scale(), -1.0, 0)


class TestParameterMultiset:
    def test_sorted_and_readonly(self):
        m = ParameterMultiset([3.0, -1.0, 2.0])
        assert m.values.tolist() == [-1.0, 2.0, 3.0]
        assert m.n == 3 and m.spread == 4.0
        with pytest.raises(ValueError):
            m.values[0] = 7.0

    @given(st.lists(finite, min_size=1, max_size=12), st.randoms())
    def test_order_free_equality(self, vals, rnd):
        shuffled = list(vals)
        rnd.shuffle(shuffled)
        assert ParameterMultiset(vals) == ParameterMultiset(shuffled)
        assert hash(ParameterMultiset(vals)) == hash(ParameterMultiset(shuffled))

    def test_inequality(self):
        assert ParameterMultiset([0, 1]) != ParameterMultiset([0, 0])
        assert ParameterMultiset([0, 1]) != ParameterMultiset([0, 1, 1])

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            ParameterMultiset([])


class TestLoglikMatrix:
    def test_single(self, loc):
        assert loglik_matrix(loc, [0.0], [0.0]).entries.tolist() == [[-HALF_LOG_2PI]]

    def test_two_by_two(self, loc):
        e = loglik_matrix(loc, [0.0, 1.0], [0.0, 1.0]).entries
        a, b = -HALF_LOG_2PI, -HALF_LOG_2PI - 0.5
        np.testing.assert_allclose(e, [[a, b], [b, a]], rtol=1e-15)
        np.testing.assert_allclose(e, [[-0.9189, -1.4189], [-1.4189, -0.9189]], atol=1e-4)

    def test_indexing_contract(self, loc):
        mus, ys = [-1.0, 0.5, 2.0], [0.3, -0.7, 1.9]
        e = loglik_matrix(loc, mus, ys).entries
        for i, y in enumerate(ys):
            for j, m in enumerate(sorted(mus)):
                assert e[i, j] == log_density(loc, m, y)

    def test_all_equal_columns(self, loc):
        e = loglik_matrix(loc, [0.7] * 4, [0.1, 2.0, -3.0, 0.0]).entries
        assert np.all(e == e[:, :1])

    def test_length_mismatch(self, loc):
        with pytest.raises(ContractError):
            loglik_matrix(loc, [0.0, 1.0], [0.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(ContractError):
            LogLikelihoodMatrix([[0.0, -np.inf], [0.0, 0.0]])
        with pytest.raises(ContractError):
            LogLikelihoodMatrix(np.zeros((2, 3)))

    @settings(max_examples=50)
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8), st.randoms())
    def test_row_permutation(self, pairs, rnd):
        fam = Family.gaussian_location()
        mus, ys = zip(*pairs)
        perm = list(range(len(ys)))
        rnd.shuffle(perm)
        e = loglik_matrix(fam, mus, ys).entries
        ep = loglik_matrix(fam, mus, [ys[k] for k in perm]).entries
        assert np.array_equal(ep, e[perm])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8), st.integers(-20, 20))
    def test_location_shift_invariance(self, pairs, shift):
        # integer shifts of dyadic inputs are exact, so the differences are too
        fam = Family.gaussian_location()
        mus, ys = (np.round(np.array(v) * 64) / 64 for v in zip(*pairs))
        e = loglik_matrix(fam, mus, ys).entries
        es = loglik_matrix(fam, mus + shift, ys + shift).entries
        assert np.array_equal(e, es)
