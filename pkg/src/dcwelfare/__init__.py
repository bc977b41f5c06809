"""Exact nonparametric welfare distributions for discrete-choice random utility models."""

from .bounds import ProbabilityInterval, envelope_transition_models, transition_bounds
from .core import (BudgetSet, DistributionCurve, MMUSpec, NOSFamily, elementwise_min,
                   mmu_virtual_prices, validate_nos_family)
from .exceptions import (ConfigError, DegenerateConditioningError, ExtrapolationWarning,
                         InconsistentModelWarning, IntegrationDomainError,
                         NonIntegrableCurveError, NoSolutionError, TruncationWarning, WelfareError)
from .oracle import (PreferenceDraw, PreferenceDraws, SimulatedDataset, UtilitySpec, choose,
                     choose_batch, draw_preferences, empirical_ccdf, empirical_cdf, exact_variation,
                     exact_variation_batch, exact_welfare, exact_welfare_batch,
                     kolmogorov_distance, simulate_cross_section, simulate_panel)
from .probability import (ChoiceProbabilityModel, MonteCarloRUM, TransitionProbabilityModel,
                          choice_from_transitions, logit_choice_model, mc_choice_model,
                          mc_transition_model, normalize_income, nw_choice_estimator,
                          nw_transition_estimator, outside_option_anchor, outside_option_shift)
from .social import AversionFunction, PopulationSample, swf, swf_difference, welfare_cdf
from .welfare import (ConditioningMode, JointGridResult, cv_distribution, ev_distribution,
                      joint_before_after, level_difference_joint, level_difference_matrix,
                      level_distribution, mean_from_curve, mean_interval, mmu_cv_joint,
                      mmu_ev_joint)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
