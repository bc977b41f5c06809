import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcwelfare import (BudgetSet, MMUSpec, PreferenceDraw, SimulatedDataset, UtilitySpec, choose,
                       choose_batch, draw_preferences, empirical_ccdf, empirical_cdf,
                       exact_variation, exact_variation_batch, exact_welfare,
                       exact_welfare_batch, kolmogorov_distance, simulate_cross_section,
                       simulate_panel)
from dcwelfare.oracle import gumbel_shocks, open_uniform

from conftest import ALPHA, INCOME, PRICES, PRICES_POST

EULER_GAMMA = 0.5772156649015329


def test_gumbel_shocks_have_euler_mean():
    rng = np.random.default_rng(0)
    eps = gumbel_shocks(rng, (400_000,))
    assert eps.mean() == pytest.approx(EULER_GAMMA, abs=5e-3)
    u = open_uniform(rng, 10_000)
    assert np.all((u > 0) & (u < 1))


def test_draws_are_prefix_stable(logit_spec):
    a = draw_preferences(logit_spec, 3, 70_000)
    b = draw_preferences(logit_spec, 3, 100)
    np.testing.assert_array_equal(a.intercept[:100], b.intercept)
    c = draw_preferences(logit_spec, 4, 100)
    assert not np.array_equal(b.intercept, c.intercept)


def test_spec_validation():
    with pytest.raises(ValueError):
        UtilitySpec(n=2, alpha=[0.0, 1.0], beta=-1.0)
    with pytest.raises(ValueError):
        UtilitySpec(n=2, alpha=[0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        UtilitySpec(n=2, beta=[1.0, 1.0, 1.0])


def test_choose_breaks_ties_to_lowest_index():
    draw = PreferenceDraw(np.zeros(3), 1.0, np.zeros(3))
    assert choose(draw, BudgetSet([1.0, 1.0, 1.0], 5.0)) == 0
    assert choose(draw, BudgetSet([2.0, 1.0, 1.0], 5.0)) == 1


def test_batch_choice_matches_scalar(logit_spec):
    draws = draw_preferences(logit_spec, 1, 200)
    batch = choose_batch(draws, PRICES, INCOME)
    single = [choose(draws[r], BudgetSet(PRICES, INCOME)) for r in range(len(draws))]
    np.testing.assert_array_equal(batch, single)


def test_welfare_at_own_prices_is_income(logit_spec):
    # MMU at the actual prices of the chosen bundle returns income exactly
    draws = draw_preferences(logit_spec, 2, 2_000)
    fam = MMUSpec(PRICES, INCOME).family()
    k = choose_batch(draws, PRICES, INCOME)
    w = exact_welfare_batch(draws, fam, k, PRICES[k], INCOME)
    assert np.all(w == INCOME)


def test_welfare_batch_matches_scalar(logit_spec):
    draws = draw_preferences(logit_spec, 3, 50)
    fam = MMUSpec(np.ones(3), INCOME).family()
    batch = exact_welfare_batch(draws, fam, 1, PRICES[1], INCOME)
    single = [exact_welfare(draws[r], fam, 1, PRICES[1], INCOME) for r in range(50)]
    np.testing.assert_allclose(batch, single, atol=2e-10)


def test_cv_equals_income_minus_mmu_at_new_prices(logit_spec):
    draws = draw_preferences(logit_spec, 4, 5_000)
    cv = exact_variation_batch(draws, PRICES, PRICES_POST, INCOME, "CV")
    k = choose_batch(draws, PRICES, INCOME)
    w = exact_welfare_batch(draws, MMUSpec(PRICES_POST, INCOME).family(), k, PRICES[k], INCOME)
    np.testing.assert_allclose(cv, INCOME - w, atol=1e-9)


def test_variation_without_change_is_zero(logit_spec):
    draws = draw_preferences(logit_spec, 5, 1_000)
    assert np.all(exact_variation_batch(draws, PRICES, PRICES, INCOME, "CV") == 0.0)
    assert np.all(exact_variation_batch(draws, PRICES, PRICES, INCOME, "EV") == 0.0)


@settings(max_examples=25, deadline=None)
@given(drop=st.floats(0.01, 1.0), seed=st.integers(0, 1000))
def test_price_drop_signs(drop, seed):
    spec = UtilitySpec.logit(ALPHA)
    draw = draw_preferences(spec, seed, 1)[0]
    post = PRICES - np.array([drop, 0.0, 0.0])
    cv = exact_variation(draw, PRICES, post, INCOME, "CV")
    ev = exact_variation(draw, PRICES, post, INCOME, "EV")
    assert 0.0 <= cv <= drop + 1e-9
    assert -drop - 1e-9 <= ev <= 0.0


def test_variation_batch_matches_scalar(logit_spec):
    draws = draw_preferences(logit_spec, 6, 40)
    for kind in ("CV", "EV"):
        batch = exact_variation_batch(draws, PRICES, PRICES_POST, INCOME, kind)
        single = [exact_variation(draws[r], PRICES, PRICES_POST, INCOME, kind) for r in range(40)]
        np.testing.assert_allclose(batch, single, atol=2e-10)


def test_dataset_roundtrip(tmp_path, logit_spec):
    def budgets(rng, m):
        return PRICES + rng.uniform(-1, 1, (m, 3)), np.full(m, INCOME)

    cross = simulate_cross_section(logit_spec, budgets, 50, seed=1)
    back = SimulatedDataset.from_csv(cross.to_csv(tmp_path / "x.csv"))
    np.testing.assert_array_equal(back.prices, cross.prices)
    np.testing.assert_array_equal(back.choice, cross.choice)
    assert not back.is_panel

    panel = simulate_panel(logit_spec, PRICES, PRICES_POST, lambda rng, m: np.full(m, INCOME), 50, 2)
    back = SimulatedDataset.from_csv(panel.to_csv(tmp_path / "p.csv"))
    assert back.is_panel
    np.testing.assert_array_equal(back.choice_post, panel.choice_post)
    again = simulate_panel(logit_spec, PRICES, PRICES_POST, lambda rng, m: np.full(m, INCOME), 50, 2)
    np.testing.assert_array_equal(again.choice, panel.choice)


def test_empirical_curves_and_distance():
    samples = np.array([0.0, 0.0, 1.0, 2.0])
    grid = np.array([-1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
    ccdf = empirical_ccdf(samples, grid)
    np.testing.assert_array_equal(ccdf.values, [1.0, 1.0, 0.5, 0.5, 0.25, 0.0])
    cdf = empirical_cdf(samples, grid)
    np.testing.assert_array_equal(cdf.values, [0.0, 0.5, 0.5, 0.75, 1.0, 1.0])
    # clusters count as mass points once their share exceeds 2 / sqrt(N)
    assert cdf.mass_points == ()
    big = empirical_cdf(np.concatenate([np.zeros(50), np.linspace(1, 2, 50)]), grid)
    assert big.mass_points == ((0.0, 0.5),)
    assert kolmogorov_distance(cdf, cdf) == 0.0
    shifted = empirical_cdf(samples + 0.25, grid)
    assert kolmogorov_distance(cdf, shifted) == pytest.approx(0.5)
    assert kolmogorov_distance(cdf, shifted, exclude=[0.0]) == pytest.approx(0.25)
