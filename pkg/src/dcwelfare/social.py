"""Social welfare from choice probabilities over a population of budget sets.

Individual welfare ``W`` is measured with a NOS family at each member's
budget.  Its CDF follows from choice probabilities alone, so an additively
separable social welfare function ``int int h(w) dF_W(w | p, y) dG(p, y)``
needs no transition probabilities.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import BudgetSet, NOSFamily, as_price_vector, default_grid
from .exceptions import NonIntegrableCurveError
from .probability import ChoiceProbabilityModel
from .welfare import ConditioningMode, level_boundaries, level_distribution

_TAIL = 1e-6


@dataclass(frozen=True)
class PopulationSample:
    """Finite weighted sample of budget sets standing in for ``G(p, y)``."""

    budgets: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        budgets = tuple(b if isinstance(b, BudgetSet) else BudgetSet(*b) for b in self.budgets)
        if not budgets:
            raise ValueError("population must be non-empty")
        n = budgets[0].n
        if any(b.n != n for b in budgets):
            raise ValueError("all budget sets must have the same number of alternatives")
        if self.weights is None:
            w = np.full(len(budgets), 1.0 / len(budgets))
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.size != len(budgets):
                raise ValueError("one weight per budget set is required")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and non-negative")
            if not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError(f"weights must sum to 1 (got {w.sum():.12g})")
        w.setflags(write=False)
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.budgets)

    @property
    def n(self) -> int:
        return self.budgets[0].n

    @classmethod
    def from_arrays(cls, prices, incomes, weights=None) -> "PopulationSample":
        prices = np.atleast_2d(np.asarray(prices, dtype=float))
        incomes = np.broadcast_to(np.asarray(incomes, dtype=float), (prices.shape[0],))
        return cls(tuple(BudgetSet(p, y) for p, y in zip(prices, incomes)), weights)

    def shifted(self, delta_p) -> "PopulationSample":
        """Same members with prices moved by ``delta_p`` (one row or one per member)."""
        d = np.broadcast_to(np.asarray(delta_p, dtype=float), (len(self), self.n))
        return PopulationSample(tuple(BudgetSet(b.prices + d[r], b.income)
                                      for r, b in enumerate(self.budgets)), self.weights)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"p_{c}" for c in range(self.n)] + ["y", "weight"])
            for b, w in zip(self.budgets, self.weights):
                writer.writerow([repr(float(v)) for v in b.prices] + [repr(b.income), repr(float(w))])
        return path

    @classmethod
    def from_csv(cls, path) -> "PopulationSample":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no members")
        cols = sorted((k for k in rows[0] if k.startswith("p_")), key=lambda k: int(k[2:]))
        prices = [[float(r[c]) for c in cols] for r in rows]
        incomes = [float(r["y"]) for r in rows]
        weights = [float(r["weight"]) for r in rows] if "weight" in rows[0] else None
        return cls.from_arrays(prices, incomes, weights)


@dataclass(frozen=True)
class AversionFunction:
    """Strictly increasing transform ``h`` of individual welfare.

    ``concave=True`` declares inequality aversion; both properties are
    checked on ``probe_grid`` at construction.
    """

    evaluator: Callable
    concave: bool = True
    probe_grid: tuple = tuple(np.linspace(-10.0, 10.0, 201))
    name: str = "custom"

    def __post_init__(self):
        grid = np.asarray(self.probe_grid, dtype=float)
        vals = self(grid)
        if not np.all(np.diff(vals) > 0):
            raise ValueError("aversion function must be strictly increasing on the probe grid")
        if self.concave:
            second = np.diff(vals, 2)
            scale = max(1.0, float(np.max(np.abs(vals))))
            if np.any(second > 1e-9 * scale):
                raise ValueError("aversion function declared concave but is convex on the probe grid")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        out = np.asarray(self.evaluator(w), dtype=float)
        if out.shape != w.shape:
            out = np.vectorize(lambda v: float(self.evaluator(v)))(w)
        return out

    @classmethod
    def identity(cls) -> "AversionFunction":
        return cls(lambda w: w, concave=True, name="identity")

    @classmethod
    def cara(cls, a: float = 1.0) -> "AversionFunction":
        """``h(w) = -exp(-a w)``."""
        a = float(a)
        if a <= 0:
            raise ValueError("a must be positive")
        return cls(lambda w: -np.exp(-a * w), concave=True, name=f"cara({a!r})")


def _family_for(family, budget: BudgetSet) -> NOSFamily:
    return family if isinstance(family, NOSFamily) else family(budget)


def welfare_cdf(choice: ChoiceProbabilityModel, family: NOSFamily, p, y: float, w):
    """``Pr[W < w]`` at the optimum: ``1 - sum_k P_k(min(p, p~(w))) I[p_k <= p~_k(w)]``."""
    p = as_price_vector(p, "p")
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    virtual = family.many(w_arr)
    q = np.minimum(p[None, :], virtual)
    keep = np.sum(np.where(p[None, :] <= virtual, choice(q, float(y)), 0.0), axis=1)
    out = np.clip(1.0 - keep, 0.0, 1.0)
    return float(out[0]) if np.ndim(w) == 0 else out


def _member_grid(choice, population, family, size):
    lo, hi, jumps = math.inf, -math.inf, []
    for b in population.budgets:
        stars = level_boundaries(_family_for(family, b), b.prices)
        finite = stars[np.isfinite(stars)]
        if finite.size:
            lo, hi = min(lo, finite.min()), max(hi, finite.max())
            jumps.extend(finite.tolist())
    if not math.isfinite(lo):
        raise NonIntegrableCurveError("no member has a finite welfare bound")
    return default_grid(lo, hi, size, jumps=jumps)


def _integrate(curve, aversion) -> float:
    """``int h dF`` for ``F = 1 - curve``: trapezoid on the continuous increments plus jumps."""
    g = curve.grid
    cdf = 1.0 - curve.values
    inc = np.diff(cdf)
    hv = aversion(g)
    total = 0.0
    for m, jump in curve.mass_points:
        # the CCDF holds its value at m and drops just after it
        a = int(np.searchsorted(g, m, side="right")) - 1
        if 0 <= a < inc.size:
            inc[a] -= jump
        total += float(aversion(np.array([m]))[0]) * jump
    total += float(np.sum(0.5 * (hv[:-1] + hv[1:]) * inc))
    # mass already below the grid start (always 0 once tails are checked)
    return total + float(hv[0]) * float(cdf[0])


def swf(choice: ChoiceProbabilityModel, family, aversion: AversionFunction,
        population: PopulationSample, w_grid=None, *, grid_size: int = 512,
        full_output: bool = False):
    """Additively separable social welfare over a weighted population.

    Parameters
    ----------
    family : NOSFamily or callable
        Welfare measure, or a function of a member's :class:`BudgetSet`
        returning one (e.g. MMU at that member's income).
    w_grid : array_like, optional
        Shared evaluation grid; by default it spans every member's support.

    Returns
    -------
    float, or ``(float, contributions)`` with ``full_output``, where each
    contribution is a member's weighted ``int h dF_W``.
    """
    if choice.n != population.n:
        raise ValueError("choice model and population dimensions differ")
    grid = _member_grid(choice, population, family, grid_size) if w_grid is None \
        else np.asarray(w_grid, dtype=float)
    contributions = np.empty(len(population))
    for r, (b, weight) in enumerate(zip(population.budgets, population.weights)):
        curve = level_distribution(_family_for(family, b), b.prices, b.income,
                                   ConditioningMode.at_optimum(), choice=choice, grid=grid)
        left, right = 1.0 - curve.values[0], curve.values[-1]
        if left > _TAIL or right > _TAIL:
            raise NonIntegrableCurveError(
                f"member {r} (prices {b.prices.tolist()}, income {b.income!r}): welfare "
                f"distribution not resolved on the grid (tails {left:.3g}, {right:.3g})")
        contributions[r] = weight * _integrate(curve, aversion)
    total = float(np.sum(contributions))
    return (total, contributions) if full_output else total


def swf_difference(choice: ChoiceProbabilityModel, family, aversion: AversionFunction,
                   population: PopulationSample, delta_p, w_grid=None, *,
                   grid_size: int = 512) -> float:
    """Change in social welfare when every member's prices move by ``delta_p``.

    Both functionals are integrated on one shared grid.
    """
    shifted = population.shifted(delta_p)
    if w_grid is None:
        g0 = _member_grid(choice, population, family, grid_size)
        g1 = _member_grid(choice, shifted, family, grid_size)
        w_grid = default_grid(min(g0[0], g1[0]), max(g0[-1], g1[-1]), grid_size,
                              jumps=np.concatenate([g0, g1]))
    before = swf(choice, family, aversion, population, w_grid)
    after = swf(choice, family, aversion, shifted, w_grid)
    return after - before
