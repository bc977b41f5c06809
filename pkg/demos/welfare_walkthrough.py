"""Walk through welfare levels, price-change variations and bounds for a logit market.

Run with ``python demos/welfare_walkthrough.py``.
"""

import numpy as np

from dcwelfare import (MMUSpec, MonteCarloRUM, UtilitySpec, cv_distribution,
                       envelope_transition_models, level_distribution, logit_choice_model,
                       mean_from_curve, mean_interval, transition_bounds)
from dcwelfare.welfare import ConditioningMode as Mode

def tidy(x):
    """Drop the sign of values that print as zero."""
    return round(x, 4) + 0.0


alpha = np.array([0.0, 0.5, 1.0])
p = np.array([1.0, 1.5, 2.0])
p_post = np.array([1.0, 1.2, 1.6])
y = 10.0

choice = logit_choice_model(alpha, 1.0)
engine = MonteCarloRUM(UtilitySpec.logit(alpha), 200_000, seed=1)
trans = engine.transition_model()
# conditional curves need the marginal that matches the transitions
mc_choice = engine.choice_model()

# welfare levels measured with money metric utility at reference prices (1, 1, 1)
family = MMUSpec(np.ones(3), y).family()
level = level_distribution(family, p, y, Mode.at_optimum(), choice=choice)
print("welfare level CCDF jumps (location, size):")
for loc, size in level.mass_points:
    print(f"  {loc:7.3f}  {size:.4f}")
print(f"mean welfare level: {mean_from_curve(level):.4f}")

# compensating variation of the price cut
cv = cv_distribution(p, p_post, y, Mode.marginal(), choice=choice)
print(f"\nmean CV: {mean_from_curve(cv):.4f}  (support {cv.grid[0]:.2f} to {cv.grid[-1]:.2f})")
for j in range(3):
    cond = cv_distribution(p, p_post, y, Mode.conditional_on_post(j), choice=mc_choice,
                           trans=trans)
    print(f"  mean CV among those choosing {j} after the change: {tidy(mean_from_curve(cond)):.4f}")

# without panel data only bounds on transitions are available
print("\ntransition bounds from choice probabilities alone:")
for i in range(3):
    cells = [transition_bounds(choice, i, j, p, p_post, y) for j in range(3)]
    print("  " + "  ".join(f"[{c.lower:.3f}, {c.upper:.3f}]" for c in cells))

lower, upper = envelope_transition_models(choice)
for j in range(3):
    lo = cv_distribution(p, p_post, y, Mode.conditional_on_post(j), choice=choice, trans=lower)
    hi = cv_distribution(p, p_post, y, Mode.conditional_on_post(j), choice=choice, trans=upper)
    a, b = mean_interval(lo, hi)
    print(f"  mean CV given post choice {j} lies in [{tidy(a):.4f}, {tidy(b):.4f}]")
