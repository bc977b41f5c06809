"""Bounds on transition probabilities from choice probabilities alone.

Without panel data the joint law of choices before and after a price
change is not identified.  Each cell is bounded by the Boole-Frechet
inequalities, tightened by two revealed-preference restrictions:

* nobody leaves ``i`` for ``j`` when ``i`` became weakly more expensive
  relative to ``j``'s weak price increase, i.e. the cell is zero when
  ``p_i >= p'_i`` and ``p_j <= p'_j``;
* anyone choosing ``i`` at the least favourable combination
  ``(max(p_i, p'_i), min(p_-i, p'_-i))`` chooses ``i`` in both regimes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import as_price_vector
from .exceptions import InconsistentModelWarning
from .probability import ChoiceProbabilityModel, TransitionProbabilityModel

_SLACK = 1e-12


@dataclass(frozen=True)
class ProbabilityInterval:
    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"invalid probability interval [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def stay_prices(p, p_post, i: int) -> np.ndarray:
    """Price vector at which choosing ``i`` implies choosing it at ``p`` and ``p'``."""
    q = np.minimum(p, p_post)
    q[..., i] = np.maximum(p[..., i], p_post[..., i])
    return q


def zero_cell(p, p_post, i: int, j: int) -> bool:
    """Whether revealed preference rules out moving from ``i`` to ``j``."""
    return i != j and p[i] >= p_post[i] and p[j] <= p_post[j]


def _bound_matrices(model: ChoiceProbabilityModel, p, p_post, y):
    """Cellwise lower and upper bounds for batches of ``(p, p', y)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    p_post = np.atleast_2d(np.asarray(p_post, dtype=float))
    m, n = p.shape
    y = np.broadcast_to(np.asarray(y, dtype=float), (m,))
    pre = model(p, y)
    post = model(p_post, y)
    stay = np.empty((m, n))
    for i in range(n):
        stay[:, i] = model(stay_prices(p, p_post, i), y)[:, i]

    upper = np.minimum(pre[:, :, None], post[:, None, :])
    lower = np.maximum(pre[:, :, None] + post[:, None, :] - 1.0, 0.0)
    diag = np.arange(n)
    lower[:, diag, diag] = np.maximum(lower[:, diag, diag], stay)

    # zero cells: p_i >= p'_i for the origin, p_j <= p'_j for the destination
    gets_cheaper = p >= p_post
    gets_dearer = p <= p_post
    zero = gets_cheaper[:, :, None] & gets_dearer[:, None, :]
    zero[:, diag, diag] = False
    lower[zero] = 0.0
    upper[zero] = 0.0

    bad = lower > upper + _SLACK
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} bound cell(s) have lower > upper; the choice model "
                      "violates a utility-maximisation restriction and the lower bound is "
                      "capped at the upper bound", InconsistentModelWarning, stacklevel=3)
    lower = np.minimum(lower, upper)
    return np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)


def transition_bounds(model: ChoiceProbabilityModel, i: int, j: int, p, p_post, y: float) -> ProbabilityInterval:
    """Sharp interval for ``P_{i,j}(p, p', y)`` given only choice probabilities."""
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    n = model.n
    if p.size != n or p_post.size != n:
        raise ValueError(f"price vectors must have length {n}")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("alternative index out of range")
    lower, upper = _bound_matrices(model, p, p_post, y)
    return ProbabilityInterval(lower[0, i, j], upper[0, i, j])


def envelope_transition_models(model: ChoiceProbabilityModel):
    """Lower and upper cellwise envelopes as transition models.

    The envelope matrices are cellwise bounds, not joint distributions,
    and need not sum to one.  Every welfare formula uses transition
    probabilities with a positive sign only, so substituting the lower
    (upper) envelope yields a pointwise lower (upper) bound curve.
    """
    note = ("cellwise bounds on transition probabilities; matrices are not joint "
            "distributions and need not sum to one")

    def lower_eval(p, p_post, y):
        return _bound_matrices(model, p, p_post, y)[0]

    def upper_eval(p, p_post, y):
        return _bound_matrices(model, p, p_post, y)[1]

    base = {"kind": "envelope", "note": note, "source": dict(model.metadata)}
    return (TransitionProbabilityModel(model.n, lower_eval, {**base, "bound": "lower"}),
            TransitionProbabilityModel(model.n, upper_eval, {**base, "bound": "upper"}))
