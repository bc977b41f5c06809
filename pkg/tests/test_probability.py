import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcwelfare import (ExtrapolationWarning, MonteCarloRUM, UtilitySpec, choice_from_transitions,
                       logit_choice_model, normalize_income, nw_choice_estimator,
                       nw_transition_estimator, outside_option_anchor, outside_option_shift,
                       simulate_cross_section, simulate_panel)
from dcwelfare.probability import rule_of_thumb_bandwidths

from conftest import ALPHA, INCOME, PRICES, PRICES_POST

price_vectors = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def test_logit_known_values():
    model = logit_choice_model([0.0, 0.0], 1.0)
    np.testing.assert_allclose(model([0.0, np.log(3.0)], 5.0), [0.75, 0.25])
    assert model.metadata["kind"] == "logit"


@settings(max_examples=30, deadline=None)
@given(p=price_vectors, y=st.floats(-5, 20))
def test_logit_sums_to_one_and_ignores_income(p, y):
    model = logit_choice_model(ALPHA, 1.0)
    probs = model(p, y)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(probs, model(p, y + 3.0))


def test_monte_carlo_matches_logit(mc_choice, logit_choice):
    np.testing.assert_allclose(mc_choice(PRICES, INCOME), logit_choice(PRICES, INCOME), atol=0.01)


def test_transition_matrix_properties(mc_trans, mc_choice):
    mat = mc_trans(PRICES, PRICES_POST, INCOME)
    assert mat.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(mat.sum(axis=1), mc_choice(PRICES, INCOME), atol=1e-12)
    np.testing.assert_allclose(mat.sum(axis=0), mc_choice(PRICES_POST, INCOME), atol=1e-12)
    # prices only fall, so nobody leaves for an alternative whose price did not fall more
    assert np.all(np.tril(mat, -1) == 0.0)
    same = mc_trans(PRICES, PRICES, INCOME)
    np.testing.assert_allclose(same, np.diag(np.diag(same)), atol=0)


def test_transition_symmetry(mc_trans):
    forward = mc_trans(PRICES, PRICES_POST, INCOME)
    backward = mc_trans(PRICES_POST, PRICES, INCOME)
    np.testing.assert_array_equal(forward, backward.T)


def test_transition_batches_broadcast(mc_trans):
    batch = mc_trans(PRICES, np.vstack([PRICES_POST, PRICES]), INCOME)
    assert batch.shape == (2, 3, 3)
    np.testing.assert_array_equal(batch[0], mc_trans(PRICES, PRICES_POST, INCOME))


def test_choice_from_transitions(mc_trans, mc_choice):
    marginal = choice_from_transitions(mc_trans, PRICES_POST)
    np.testing.assert_allclose(marginal(PRICES, INCOME), mc_choice(PRICES, INCOME), atol=1e-12)


def test_monte_carlo_seed_determinism(logit_spec):
    a = MonteCarloRUM(logit_spec, 1000, 9).choice_model()
    b = MonteCarloRUM(logit_spec, 1000, 9).choice_model()
    np.testing.assert_array_equal(a(PRICES, INCOME), b(PRICES, INCOME))


def test_income_normalisation_preserves_transitions(mc_trans):
    p, p2, y = normalize_income(PRICES, PRICES_POST, INCOME, INCOME + 2.0)
    np.testing.assert_allclose(p2, PRICES_POST - 2.0)
    # raising income by 2 is the same as cutting every price by 2
    spec = UtilitySpec.logit(ALPHA)
    engine = MonteCarloRUM(spec, 20_000, 1)
    draws = engine.draws
    post = np.argmax(draws.utilities((INCOME + 2.0) - PRICES_POST), axis=1)
    pre = np.argmax(draws.utilities(INCOME - PRICES), axis=1)
    direct = np.bincount(pre * 3 + post, minlength=9).reshape(3, 3) / len(draws)
    np.testing.assert_allclose(engine.transition_model()(p, p2, y), direct, atol=1e-12)


def test_outside_option_shift_is_invariant_for_additive_models(mc_choice):
    shifted = outside_option_shift(mc_choice, 0, 0.7)
    np.testing.assert_array_equal(shifted(PRICES, INCOME), mc_choice(PRICES - 0.7, INCOME - 0.7))
    np.testing.assert_allclose(shifted(PRICES, INCOME), mc_choice(PRICES, INCOME), atol=1e-12)
    anchored = outside_option_anchor(mc_choice, 0, 0.0)
    np.testing.assert_allclose(anchored(PRICES, INCOME), mc_choice(PRICES, INCOME), atol=1e-12)
    with pytest.raises(ValueError):
        outside_option_shift(mc_choice, 5, 0.1)


def _cross_section(count, seed=0):
    spec = UtilitySpec.logit(ALPHA)

    def budgets(rng, m):
        return PRICES + rng.uniform(-1, 1, (m, 3)), np.full(m, INCOME)

    return simulate_cross_section(spec, budgets, count, seed)


def test_bandwidths_rule_of_thumb_and_floor():
    x = np.column_stack([np.linspace(0, 1, 100), np.full(100, 3.0)])
    h = rule_of_thumb_bandwidths(x)
    assert h[0] == pytest.approx(1.06 * x[:, 0].std(ddof=1) * 100 ** (-1 / 6), rel=0.05)
    assert h[1] == pytest.approx(1e-3)


def test_kernel_estimates_sum_to_one_and_warn_far_away():
    model = nw_choice_estimator(_cross_section(3_000))
    q = PRICES + np.array([[0.1, -0.2, 0.3], [0.0, 0.0, 0.0]])
    probs = model(q, INCOME)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert model.metadata["sample_size"] == 3_000
    with pytest.warns(ExtrapolationWarning):
        far = model(PRICES + 100.0, INCOME)
    np.testing.assert_allclose(far.sum(), 1.0, atol=1e-12)


def test_kernel_fixed_bandwidth():
    model = nw_choice_estimator(_cross_section(500), bandwidth_rule=0.5)
    assert model.metadata["bandwidths"] == [0.5] * 4


def test_kernel_transition_estimator():
    spec = UtilitySpec.logit(ALPHA)
    panel = simulate_panel(spec, PRICES, PRICES_POST, lambda rng, m: np.full(m, INCOME), 4_000, 3,
                           price_jitter=0.5)
    model = nw_transition_estimator(panel)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ExtrapolationWarning)
        mat = model(PRICES, PRICES_POST, INCOME)
    assert mat.shape == (3, 3)
    assert mat.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        nw_transition_estimator(_cross_section(10))
