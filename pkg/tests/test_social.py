import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcwelfare import (AversionFunction, MMUSpec, NonIntegrableCurveError, PopulationSample,
                       level_distribution, swf, swf_difference, welfare_cdf)
from dcwelfare.welfare import ConditioningMode

from conftest import INCOME, PRICES


def mmu_at_own_prices(budget):
    return MMUSpec(budget.prices, budget.income).family()


def mmu_at_ones(budget):
    return MMUSpec(np.ones(budget.n), budget.income).family()


def test_population_validation(tmp_path):
    with pytest.raises(ValueError):
        PopulationSample(())
    with pytest.raises(ValueError):
        PopulationSample.from_arrays([[1.0, 2.0]] * 2, [1.0, 2.0], weights=[0.7, 0.7])
    with pytest.raises(ValueError):
        PopulationSample.from_arrays([[1.0, 2.0]] * 2, [1.0, 2.0], weights=[1.5, -0.5])
    pop = PopulationSample.from_arrays([[1.0, 2.0], [1.5, 2.5]], [3.0, 4.0])
    np.testing.assert_array_equal(pop.weights, [0.5, 0.5])
    back = PopulationSample.from_csv(pop.to_csv(tmp_path / "pop.csv"))
    assert back.budgets == pop.budgets


def test_aversion_checks():
    with pytest.raises(ValueError):
        AversionFunction(lambda w: -w)
    with pytest.raises(ValueError):
        AversionFunction(lambda w: np.exp(w), concave=True)
    convex_ok = AversionFunction(lambda w: np.exp(w), concave=False)
    assert convex_ok(0.0) == pytest.approx(1.0)
    assert AversionFunction.cara(2.0)(0.0) == pytest.approx(-1.0)


def test_welfare_cdf_basic_cases(logit_choice, mmu_ones):
    assert welfare_cdf(logit_choice, mmu_ones, PRICES, INCOME, 5.0) == 0.0
    assert welfare_cdf(logit_choice, mmu_ones, PRICES, INCOME, 10.5) == 1.0
    own = MMUSpec(PRICES, INCOME).family()
    # strict inequality: Pr[W < w] jumps just after the income level
    grid = np.array([9.0, 9.999, 10.001, 11.0])
    np.testing.assert_array_equal(welfare_cdf(logit_choice, own, PRICES, INCOME, grid), [0, 0, 1, 1])


def test_welfare_cdf_complements_level_curve(logit_choice, mmu_ones):
    curve = level_distribution(mmu_ones, PRICES, INCOME, ConditioningMode.at_optimum(),
                               choice=logit_choice)
    cdf = welfare_cdf(logit_choice, mmu_ones, PRICES, INCOME, curve.grid)
    np.testing.assert_allclose(cdf + curve.values, 1.0, atol=1e-9)
    assert np.all(np.diff(cdf) >= 0)


@settings(max_examples=20, deadline=None)
@given(incomes=st.lists(st.floats(1.0, 20.0), min_size=1, max_size=6), seed=st.integers(0, 99))
def test_utilitarian_swf_at_common_prices_is_mean_income(logit_choice, incomes, seed):
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(len(incomes)))
    pop = PopulationSample.from_arrays(np.tile(PRICES, (len(incomes), 1)), incomes, weights)
    value = swf(logit_choice, mmu_at_own_prices, AversionFunction.identity(), pop)
    assert value == pytest.approx(float(np.dot(weights, incomes)), abs=1e-6)


def test_swf_of_degenerate_member_is_h_of_level(logit_choice):
    pop = PopulationSample.from_arrays([PRICES], [INCOME])
    h = AversionFunction.cara(0.3)
    assert swf(logit_choice, mmu_at_own_prices, h, pop) == pytest.approx(float(h(INCOME)), abs=1e-9)


def test_swf_contributions_add_up(logit_choice):
    pop = PopulationSample.from_arrays([PRICES, PRICES + 0.2], [4.0, 6.0], [0.25, 0.75])
    total, parts = swf(logit_choice, mmu_at_ones, AversionFunction.cara(1.0), pop, full_output=True)
    assert total == pytest.approx(parts.sum(), abs=1e-15)
    assert parts.shape == (2,)


def test_swf_difference(logit_choice):
    pop = PopulationSample.from_arrays([PRICES, PRICES + 0.3], [4.0, 6.0])
    h = AversionFunction.identity()
    assert swf_difference(logit_choice, mmu_at_ones, h, pop, np.zeros(3)) == 0.0
    gain = swf_difference(logit_choice, mmu_at_ones, h, pop, -0.1 * np.ones(3))
    assert gain > 0
    grid = np.linspace(2.0, 8.0, 801)
    direct = (swf(logit_choice, mmu_at_ones, h, pop.shifted(-0.1 * np.ones(3)), grid)
              - swf(logit_choice, mmu_at_ones, h, pop, grid))
    assert swf_difference(logit_choice, mmu_at_ones, h, pop, -0.1 * np.ones(3), grid) \
        == pytest.approx(direct, abs=1e-12)


def test_swf_rejects_grid_that_misses_a_member(logit_choice):
    pop = PopulationSample.from_arrays([PRICES, PRICES], [4.0, 9.0])
    with pytest.raises(NonIntegrableCurveError, match="member 1"):
        swf(logit_choice, mmu_at_own_prices, AversionFunction.identity(), pop,
            np.linspace(0.0, 6.0, 100))
