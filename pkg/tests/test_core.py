import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp

from conftest import random_quadratic_game, symmetric_game
from kantnash.core import (
    DegenerateGroupError,
    EquilibriumProfile,
    FiniteGame,
    FiniteTypeSpace,
    GameModel,
    GroupMeasure,
    InputError,
    InvariantError,
    QuadraticFishingModel,
    UnsupportedError,
    aggregate_statistic,
    as_beta,
    check_weights,
    grad_group_cost,
    group_cost,
    group_gradients,
    group_mean_field,
    population_costs,
    risk_aggregate,
)
from kantnash.scenarios import four_type_model, four_type_space

def masses_and_values(min_size=1, max_size=6, bound=50.0):
    values = st.floats(-bound, bound, allow_nan=False)
    return st.integers(min_size, max_size).flatmap(lambda n: st.tuples(
        st.lists(values, min_size=n, max_size=n),
        st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda m: sum(m) > 1e-3)))


class TestTypeSpace:
    def test_sigma_groups_equal_descriptors(self):
        space = FiniteTypeSpace([(1, 2), (3, 4), (1, 2), [3, 4]], [0.25] * 4)
        assert space.sigma.tolist() == [0, 1, 0, 1]
        assert space.distinct_count == 2
        assert space.selector.sum(axis=1).tolist() == [1, 1, 1, 1]

    @pytest.mark.parametrize("p", [[0.5, 0.4], [1.2, -0.2], [0.5, 0.5, 0.0]])
    def test_rejects_bad_distribution(self, p):
        with pytest.raises((InvariantError, InputError)):
            FiniteTypeSpace([(i,) for i in range(len(p))], p)

    def test_arrays_are_read_only(self):
        space = four_type_space()
        with pytest.raises(ValueError):
            space.p[0] = 1.0


class TestGroupMeasure:
    def test_bound_by_population(self):
        space = FiniteTypeSpace([(0,), (1,)], [0.3, 0.7])
        with pytest.raises(InvariantError):
            FiniteGame(space, QuadraticFishingModel(a=[1, 1], b=[1, 1]), GroupMeasure([[0.4, 0], [0, 0]]))

    def test_mass_at_most_one(self):
        with pytest.raises(InvariantError):
            GroupMeasure([[0.6, 0.6], [0, 0]])

    def test_weights_positive_on_support(self):
        m = GroupMeasure([[0.1, 0.0], [0.0, 0.0]])
        check_weights([[1.0, 0.0], [0.0, 0.0]], m)
        with pytest.raises(InvariantError):
            check_weights([[0.0, 1.0], [1.0, 1.0]], m)


class TestAggregateStatistic:
    def test_examples(self):
        assert aggregate_statistic([1 / 3], FiniteTypeSpace([(1, 1)], [1.0]),
                                   QuadraticFishingModel(a=[1], b=[1])) == pytest.approx(1 / 3)
        space, model = four_type_space(), four_type_model()
        assert aggregate_statistic(np.zeros(4), space, model) == 0.0
        assert aggregate_statistic(np.ones(4), space, model) == pytest.approx(1.7, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            aggregate_statistic([0.1, 0.2], four_type_space(), four_type_model())


class TestRiskAggregate:
    def test_examples(self):
        assert risk_aggregate([1, 3], [0.5, 0.5], 0.0) == 2.0
        assert risk_aggregate([1, 3], [0.5, 0.5], math.inf) == 3.0
        assert risk_aggregate([1, 3], [0.5, 0.5], -math.inf) == 1.0
        mp.dps = 40
        ref = float(mp.log(mp.mpf("0.5") * mp.e + mp.mpf("0.5") * mp.e ** 3))
        assert risk_aggregate([1, 3], [0.5, 0.5], 1.0) == pytest.approx(ref, abs=1e-14)
        assert ref == pytest.approx(2.43378, abs=1e-5)

    def test_overflow_safe(self):
        assert risk_aggregate([1000.0, 1001.0], [1, 1], 5.0) == pytest.approx(
            1001.0 + math.log(0.5 * (math.exp(-5) + 1)) / 5, abs=1e-12)

    def test_support_only(self):
        assert risk_aggregate([1, 100], [1, 0], math.inf) == 1.0

    def test_errors(self):
        with pytest.raises(DegenerateGroupError):
            risk_aggregate([1, 2], [0, 0], 0.0)
        with pytest.raises(InputError):
            risk_aggregate([1, np.inf], [1, 1], 1.0)
        with pytest.raises(InputError):
            as_beta(float("nan"))
        assert as_beta("-inf") == -math.inf

    @given(masses_and_values())
    def test_nondecreasing_in_beta(self, data):
        v, m = data
        vals = [risk_aggregate(v, m, b) for b in np.linspace(-10, 10, 41)]
        assert np.all(np.diff(vals) >= -1e-9 * (1 + np.max(np.abs(v))))

    @given(masses_and_values(), st.floats(-20, 20))
    def test_between_min_and_max(self, data, beta):
        v, m = data
        lo, hi = risk_aggregate(v, m, -math.inf), risk_aggregate(v, m, math.inf)
        val = risk_aggregate(v, m, beta)
        tol = 1e-9 * (1 + max(abs(lo), abs(hi)))
        assert lo - tol <= val <= hi + tol

    @given(masses_and_values(bound=10.0))
    def test_continuous_at_zero(self, data):
        # the gap is beta * variance / 2 to first order, so cost-sized values are used
        v, m = data
        assert abs(risk_aggregate(v, m, 1e-9) - risk_aggregate(v, m, 0.0)) < 1e-7

    @given(masses_and_values(), st.floats(1e-3, 1e3), st.floats(-5, 5))
    def test_mass_scale_invariant(self, data, scale, beta):
        v, m = data
        a = risk_aggregate(v, m, beta)
        b = risk_aggregate(v, np.asarray(m) * scale, beta)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestGroupMeanField:
    def test_empty_group_is_population_aggregate(self, rng):
        space, model = four_type_space(), four_type_model()
        g = FiniteGame(space, model, GroupMeasure(np.zeros((4, 4))))
        star = rng.uniform(0, 1, 4)
        for k in range(4):
            assert group_mean_field(g, k, rng.uniform(0, 1, 4), star) == pytest.approx(
                aggregate_statistic(star, space, model), abs=1e-15)

    def test_full_group_ignores_star(self, rng):
        space, model = four_type_space(), four_type_model()
        g = FiniteGame(space, model, GroupMeasure(np.tile(space.p, (4, 1))))
        ut = rng.uniform(0, 1, 4)
        a = group_mean_field(g, 2, ut, rng.uniform(0, 1, 4))
        b = group_mean_field(g, 2, ut, rng.uniform(0, 1, 4))
        assert a == pytest.approx(b, abs=1e-15)
        assert a == pytest.approx(aggregate_statistic(ut, space, model), abs=1e-15)

    def test_symmetric_hand_value(self):
        assert group_mean_field(symmetric_game(0.5), 0, [0.1], [0.3]) == pytest.approx(0.2, abs=1e-15)


class TestGroupCost:
    def test_full_group_social_cost(self):
        assert group_cost(symmetric_game(1.0), 0, [0.25], [0.7]) == pytest.approx(-1 / 8, abs=1e-15)

    def test_singleton_when_empty(self, rng):
        # an empty group cannot move the aggregate: the player takes it as given
        space, model = four_type_space(), four_type_model()
        star = rng.uniform(0, 1, 4)
        ubar = aggregate_statistic(star, space, model)
        for beta in (0.0, 2.0, math.inf, -math.inf):
            g = FiniteGame(space, model, GroupMeasure(np.zeros((4, 4))), beta=beta)
            for k in range(4):
                ut = rng.uniform(0, 1, 4)
                ut[k] = 0.37
                assert group_cost(g, k, ut, star) == pytest.approx(
                    float(model.cost(0.37, ubar, k)), abs=1e-14)

    def test_worst_member_with_infinite_beta(self):
        space = FiniteTypeSpace([(0,), (1,)], [0.5, 0.5])

        def cost(u, ub, k):
            return np.asarray([1.0, 3.0])[k] + 0 * u

        zero = lambda *a: 0 * a[0]
        model = GameModel(cost, zero, zero, lambda u, k: u, lambda u, k: 1 + 0 * u)
        g = FiniteGame(space, model, GroupMeasure([[0.5, 0.5], [0.5, 0.5]]), beta=math.inf)
        assert group_cost(g, 0, [0.2, 0.4], [0.5, 0.5]) == 3.0

    def test_full_group_mean_cost(self, rng):
        space, model = four_type_space(), four_type_model()
        g = FiniteGame(space, model, GroupMeasure(np.tile(space.p, (4, 1))))
        ut = rng.uniform(0, 1, 4)
        ubar = aggregate_statistic(ut, space, model)
        assert group_cost(g, 1, ut, rng.uniform(0, 1, 4)) == pytest.approx(
            float(space.p @ model.cost(ut, ubar, np.arange(4))), abs=1e-14)

    def test_batched_matches_loop(self, rng):
        g = random_quadratic_game(rng, weights=True, beta=0.7)
        n = g.space.distinct_count
        batch = rng.uniform(0, 1, (5, n))
        star = rng.uniform(0, 1, g.space.count)
        vals = group_cost(g, 0, batch, star)
        assert np.allclose(vals, [group_cost(g, 0, b, star) for b in batch], atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_convex_along_segments_for_neutral_risk(self, seed):
        rng = np.random.default_rng(seed)
        g = random_quadratic_game(rng)
        star = rng.uniform(0, 1, g.space.count)
        x, y = rng.uniform(0, 1, (2, g.space.distinct_count))
        for k in range(g.space.count):
            mid = group_cost(g, k, 0.5 * (x + y), star)
            assert mid <= 0.5 * (group_cost(g, k, x, star) + group_cost(g, k, y, star)) + 1e-12


class TestGradient:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_zero_at_symmetric_equilibrium(self, alpha):
        u = 1 / (3 + alpha)
        assert abs(grad_group_cost(symmetric_game(alpha), 0, [u], [u])[0]) < 1e-15

    def test_empty_group_is_own_derivative(self, rng):
        space, model = four_type_space(), four_type_model()
        g = FiniteGame(space, model, GroupMeasure(np.zeros((4, 4))))
        star = rng.uniform(0, 1, 4)
        ut = star.copy()
        ubar = aggregate_statistic(star, space, model)
        grad = grad_group_cost(g, 2, ut, star)
        assert grad[2] == pytest.approx(float(model.cost_du(star[2], ubar, 2)), abs=1e-14)
        assert np.all(grad[[0, 1, 3]] == 0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.8, -1.5]))
    def test_matches_central_differences(self, seed, beta):
        rng = np.random.default_rng(seed)
        g = random_quadratic_game(rng, weights=True, beta=beta)
        star = rng.uniform(0.05, 0.95, g.space.count)
        x = rng.uniform(0.05, 0.95, g.space.distinct_count)
        h = 1e-5
        for k in range(g.space.count):
            grad = grad_group_cost(g, k, x, star)
            fd = np.array([(group_cost(g, k, x + h * e, star) - group_cost(g, k, x - h * e, star)) / (2 * h)
                           for e in np.eye(x.size)])
            assert np.allclose(grad, fd, rtol=1e-6, atol=1e-9)

    def test_vectorized_rows(self, rng):
        g = random_quadratic_game(rng, weights=True, beta=0.3)
        n = g.space.count
        ut = rng.uniform(0, 1, (n, g.space.distinct_count))
        star = rng.uniform(0, 1, n)
        rows = group_gradients(g, np.arange(n), ut, star)
        for k in range(n):
            assert np.allclose(rows[k], grad_group_cost(g, k, ut[k], star), atol=1e-15)

    def test_infinite_beta_unsupported(self):
        with pytest.raises(UnsupportedError):
            grad_group_cost(symmetric_game(0.5, math.inf), 0, [0.3], [0.3])


class TestModel:
    @given(st.floats(0.01, 0.99), st.floats(-1, 2), st.integers(0, 3))
    def test_fishing_derivatives(self, u, ub, k):
        m = four_type_model()
        h = 1e-6
        assert float(m.cost_du(u, ub, k)) == pytest.approx(
            (m.cost(u + h, ub, k) - m.cost(u - h, ub, k)) / (2 * h), rel=1e-6, abs=1e-8)
        assert float(m.cost_dubar(u, ub, k)) == pytest.approx(
            (m.cost(u, ub + h, k) - m.cost(u, ub - h, k)) / (2 * h), rel=1e-6, abs=1e-8)
        assert float(m.aggregator_du(u, k)) == pytest.approx(
            (m.aggregator(u + h, k) - m.aggregator(u - h, k)) / (2 * h), rel=1e-6)

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(InvariantError):
            QuadraticFishingModel(a=[1, 0], b=[1, 1])

    def test_box(self):
        with pytest.raises(InputError):
            QuadraticFishingModel(a=[1], b=[1], lower=1, upper=0)

    def test_population_costs(self):
        g = symmetric_game(0.0)
        assert population_costs(g, [0.25])[0] == pytest.approx(-1 / 8)

    def test_profile_consistency(self):
        prof = EquilibriumProfile([0.2, 0.3], [[0.2, 0.0], [0.0, 0.35]])
        space = FiniteTypeSpace([(0,), (1,)], [0.5, 0.5])
        assert prof.consistency(space) == pytest.approx(0.05)
