"""Brute-force random-utility simulator used as ground truth.

Utilities are affine in residual income,

    U_c = alpha_c + beta_c * (y - p_c) + eps_c,

with ``beta_c > 0``.  Every quantity is computed per preference draw:
the chosen alternative, the welfare index of a bundle under a family of
nested opportunity sets, and compensating/equivalent variations.  The
per-draw values are found by bracketing and bisection rather than closed
forms so that the oracle does not share algebra with the distribution
formulas it is meant to check.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from ._numerics import last_true, last_true_batch
from .core import BudgetSet, DistributionCurve, NOSFamily, as_price_vector, format_float

CHUNK = 1 << 16
_TWO53 = float(1 << 53)
_PREFERENCE_STREAM = 0
_BUDGET_STREAM = 1


def open_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1), safe for log transforms."""
    return (rng.integers(0, 1 << 53, size=shape).astype(float) + 0.5) / _TWO53


def gumbel_shocks(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel variates by inverse transform."""
    return -np.log(-np.log(open_uniform(rng, shape)))


@dataclass(frozen=True)
class UtilitySpec:
    """Preference distribution of a discrete-choice random utility model.

    Use :meth:`logit` for fixed coefficients with Gumbel shocks and
    :meth:`random_coefficients` for mixed specifications.  Custom samplers
    receive ``(rng, count)`` and return arrays with ``count`` rows.

    ``beta`` may be a scalar or one positive slope per alternative.
    """

    n: int
    alpha: NDArray = None
    beta: NDArray | float = 1.0
    form: str = "additive-logit"
    alpha_sampler: Callable | None = None
    beta_sampler: Callable | None = None
    shock_sampler: Callable | None = None
    label: str = ""

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("n must be at least 1")
        object.__setattr__(self, "n", n)
        alpha = np.zeros(n) if self.alpha is None else as_price_vector(self.alpha, "alpha")
        if alpha.size != n:
            raise ValueError("alpha must have length n")
        object.__setattr__(self, "alpha", alpha)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim > 1 or (beta.ndim == 1 and beta.size != n):
            raise ValueError("beta must be a scalar or have length n")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise ValueError("beta must be positive")
        object.__setattr__(self, "beta", beta)
        if self.form not in ("additive-logit", "random-coefficient"):
            raise ValueError(f"unknown utility form {self.form!r}")

    @classmethod
    def logit(cls, alpha, beta: float = 1.0) -> "UtilitySpec":
        alpha = as_price_vector(alpha, "alpha")
        return cls(n=alpha.size, alpha=alpha, beta=beta, label="logit")

    @classmethod
    def random_coefficients(cls, n: int, alpha_sampler=None, beta_sampler=None,
                            shock_sampler=None, alpha=None, beta=1.0,
                            label: str = "random-coefficient") -> "UtilitySpec":
        return cls(n=n, alpha=alpha, beta=beta, form="random-coefficient",
                   alpha_sampler=alpha_sampler, beta_sampler=beta_sampler,
                   shock_sampler=shock_sampler, label=label)

    def to_dict(self) -> dict:
        return {"n": self.n, "form": self.form, "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(), "label": self.label}


@dataclass(frozen=True)
class PreferenceDraw:
    """One realised preference type: intercepts, slopes and shocks."""

    alpha: NDArray
    beta: NDArray | float
    eps: NDArray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        eps = np.asarray(self.eps, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if alpha.shape != eps.shape or alpha.ndim != 1:
            raise ValueError("alpha and eps must be vectors of equal length")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(eps)) and np.all(np.isfinite(beta))):
            raise ValueError("draw entries must be finite")
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.alpha.size

    def utility(self, residual) -> np.ndarray:
        """Utilities of all alternatives at residual incomes ``y - p``."""
        return (self.alpha + self.eps) + self.beta * np.asarray(residual, dtype=float)


class PreferenceDraws(Sequence):
    """A batch of preference draws stored as intercept and slope arrays.

    ``intercept`` is ``alpha + eps`` with shape ``(m, n)``; ``slope`` has
    shape ``(m, n)`` or ``(1, n)`` when shared by every draw.
    """

    def __init__(self, alpha, beta, eps):
        alpha = np.asarray(alpha, dtype=float)
        eps = np.asarray(eps, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if alpha.ndim == 1:
            alpha = np.broadcast_to(alpha, eps.shape)
        self.alpha = alpha
        self.eps = eps
        if beta.ndim == 0:
            beta = np.full((1, eps.shape[1]), float(beta))
        elif beta.ndim == 1:
            beta = beta.reshape(1, -1)
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        self.beta = np.broadcast_to(beta, (beta.shape[0], eps.shape[1]))
        self.intercept = alpha + eps
        self.slope = self.beta
        for arr in (self.intercept, self.slope):
            arr.setflags(write=False)

    def __len__(self):
        return self.intercept.shape[0]

    @property
    def n(self) -> int:
        return self.intercept.shape[1]

    def __getitem__(self, idx):
        if isinstance(idx, slice) or isinstance(idx, np.ndarray):
            beta = self.beta if self.beta.shape[0] == 1 else self.beta[idx]
            return PreferenceDraws(self.alpha[idx], beta, self.eps[idx])
        idx = range(len(self))[idx]
        beta = self.beta[0] if self.beta.shape[0] == 1 else self.beta[idx]
        if np.all(beta == beta[0]):
            beta = beta[0]
        return PreferenceDraw(self.alpha[idx], beta, self.eps[idx])

    def slope_rows(self, idx=None):
        if self.slope.shape[0] == 1 or idx is None:
            return self.slope
        return self.slope[idx]

    def utilities(self, residual, idx=None) -> np.ndarray:
        """Utilities at residual incomes broadcastable to ``(m, n)``."""
        a = self.intercept if idx is None else self.intercept[idx]
        return a + self.slope_rows(idx) * residual


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, chunk)))


def draw_preferences(spec: UtilitySpec, seed: int, count: int) -> PreferenceDraws:
    """Draw ``count`` i.i.d. preference types.

    Draws are generated in fixed-size chunks with independent seed
    streams, so the first ``m`` of ``count`` draws do not depend on
    ``count``.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    n = spec.n
    alphas, betas, shocks = [], [], []
    for c in range(math.ceil(count / CHUNK)):
        size = min(CHUNK, count - c * CHUNK)
        rng = _chunk_rng(seed, _PREFERENCE_STREAM, c)
        if spec.shock_sampler is None:
            eps = gumbel_shocks(rng, (size, n))
        else:
            eps = np.asarray(spec.shock_sampler(rng, size), dtype=float).reshape(size, n)
        shocks.append(eps)
        if spec.alpha_sampler is not None:
            alphas.append(np.asarray(spec.alpha_sampler(rng, size), dtype=float).reshape(size, n))
        if spec.beta_sampler is not None:
            b = np.asarray(spec.beta_sampler(rng, size), dtype=float)
            betas.append(b.reshape(size, -1) * np.ones((1, n)))
    eps = np.concatenate(shocks)
    alpha = np.concatenate(alphas) if alphas else spec.alpha
    if betas:
        beta = np.concatenate(betas)
    else:
        beta = np.broadcast_to(spec.beta, (n,)).reshape(1, n)
    return PreferenceDraws(alpha, beta, eps)


def choose(draw: PreferenceDraw, budget: BudgetSet) -> int:
    """Utility maximising alternative; ties go to the lowest index."""
    if budget.n != draw.n:
        raise ValueError("budget dimension does not match the draw")
    return int(np.argmax(draw.utility(budget.income - budget.prices)))


def choose_batch(draws: PreferenceDraws, prices, income) -> np.ndarray:
    """Chosen alternative of every draw at one or per-draw budgets."""
    prices = np.asarray(prices, dtype=float)
    income = np.asarray(income, dtype=float)
    residual = (income[..., None] if income.ndim else income) - prices
    return np.argmax(draws.utilities(residual), axis=1)


def _welfare_predicate(draw: PreferenceDraw, family: NOSFamily, k: int, p_k: float, y: float):
    target = draw.utility(np.full(draw.n, y - p_k))[k]

    def pred(lam):
        return bool(target >= np.max(draw.utility(y - family(lam))))

    return pred


def exact_welfare(draw: PreferenceDraw, family: NOSFamily, k: int, p_k: float, y: float,
                  *, tol: float = 1e-10) -> float:
    """Welfare index of bundle ``(y - p_k, k)`` for one draw.

    Largest ``lam`` such that the bundle is weakly preferred to the best
    element of the opportunity set at virtual prices ``p_tilde(lam)``.
    """
    if family.n != draw.n:
        raise ValueError("family dimension does not match the draw")
    lo, hi = family.lambda_domain
    return last_true(_welfare_predicate(draw, family, k, p_k, y), float(y),
                     lower=lo, upper=hi, tol=tol)


def exact_welfare_batch(draws: PreferenceDraws, family: NOSFamily, k, p_k, y,
                        *, tol: float = 1e-10) -> np.ndarray:
    """Vectorised :func:`exact_welfare`; ``k``, ``p_k``, ``y`` may be per draw."""
    m = len(draws)
    k = np.broadcast_to(np.asarray(k, dtype=int), (m,))
    p_k = np.broadcast_to(np.asarray(p_k, dtype=float), (m,))
    y = np.broadcast_to(np.asarray(y, dtype=float), (m,))
    rows = np.arange(m)
    slope = np.broadcast_to(draws.slope, (m, draws.n)) if draws.slope.shape[0] == 1 else draws.slope
    target = draws.intercept[rows, k] + slope[rows, k] * (y - p_k)

    def pred(lam, idx):
        virtual = family.many(lam)
        best = np.max(draws.utilities(y[idx, None] - virtual, idx), axis=1)
        return target[idx] >= best

    lo, hi = family.lambda_domain
    return last_true_batch(pred, y, lower=lo, upper=hi, tol=tol)


def _variation_setup(n: int, p, p_post, kind):
    p = np.asarray(p, dtype=float)
    p_post = np.asarray(p_post, dtype=float)
    if p.shape != p_post.shape or p.shape[-1] != n:
        raise ValueError("price vectors must match the draws' dimension")
    if kind not in ("CV", "EV"):
        raise ValueError("kind must be 'CV' or 'EV'")
    # level to reach and the regime whose income is adjusted
    fixed, moving = (p, p_post) if kind == "CV" else (p_post, p)
    return fixed, moving


def exact_variation(draw: PreferenceDraw, p, p_post, y: float, kind: str = "CV",
                    *, tol: float = 1e-10) -> float:
    """Compensating (``CV``) or equivalent (``EV``) variation for one draw.

    CV is the largest ``t`` with ``max_c U_c(y - p'_c - t) >= max_c U_c(y - p_c)``;
    EV is the largest ``t`` with ``max_c U_c(y - p_c - t) >= max_c U_c(y - p'_c)``.
    """
    fixed, moving = _variation_setup(draw.n, p, p_post, kind)
    level = np.max(draw.utility(y - fixed))
    base = y - moving

    def pred(t):
        return bool(np.max(draw.utility(base - t)) >= level)

    return last_true(pred, 0.0, tol=tol)


def exact_variation_batch(draws: PreferenceDraws, p, p_post, y, kind: str = "CV",
                          *, tol: float = 1e-10) -> np.ndarray:
    """Vectorised :func:`exact_variation` over a batch of draws."""
    fixed, moving = _variation_setup(draws.n, p, p_post, kind)
    m = len(draws)
    y_arr = np.broadcast_to(np.asarray(y, dtype=float), (m,))
    fixed = np.broadcast_to(fixed, (m, draws.n))
    moving = np.broadcast_to(moving, (m, draws.n))
    level = np.max(draws.utilities(y_arr[:, None] - fixed), axis=1)
    base = y_arr[:, None] - moving

    def pred(t, idx):
        best = np.max(draws.utilities(base[idx] - t[:, None], idx), axis=1)
        return best >= level[idx]

    return last_true_batch(pred, np.zeros(m), tol=tol)


@dataclass
class SimulatedDataset:
    """Simulated choices on cross-section or panel budgets.

    Cross-sections carry ``prices``, ``income`` and ``choice``; panels add
    ``prices_post`` and ``choice_post`` generated by the same draw.
    """

    prices: NDArray
    income: NDArray
    choice: NDArray
    prices_post: NDArray | None = None
    choice_post: NDArray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.prices = np.atleast_2d(np.asarray(self.prices, dtype=float))
        self.income = np.asarray(self.income, dtype=float).reshape(-1)
        self.choice = np.asarray(self.choice, dtype=int).reshape(-1)
        rows, n = self.prices.shape
        if self.income.size != rows or self.choice.size != rows:
            raise ValueError("dataset columns must have equal length")
        if np.any((self.choice < 0) | (self.choice >= n)):
            raise ValueError("choices must lie in [0, n)")
        if (self.prices_post is None) != (self.choice_post is None):
            raise ValueError("panel data needs both prices_post and choice_post")
        if self.prices_post is not None:
            self.prices_post = np.asarray(self.prices_post, dtype=float).reshape(rows, n)
            self.choice_post = np.asarray(self.choice_post, dtype=int).reshape(-1)
            if self.choice_post.size != rows:
                raise ValueError("dataset columns must have equal length")
            if np.any((self.choice_post < 0) | (self.choice_post >= n)):
                raise ValueError("choices must lie in [0, n)")

    @property
    def is_panel(self) -> bool:
        return self.prices_post is not None

    @property
    def n(self) -> int:
        return self.prices.shape[1]

    def __len__(self):
        return self.prices.shape[0]

    def header(self) -> list[str]:
        cols = [f"p_{c}" for c in range(self.n)]
        if self.is_panel:
            return cols + [f"pp_{c}" for c in range(self.n)] + ["y", "choice_pre", "choice_post"]
        return cols + ["y", "choice"]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for r in range(len(self)):
                row = [format_float(v) for v in self.prices[r]]
                if self.is_panel:
                    row += [format_float(v) for v in self.prices_post[r]]
                row.append(format_float(self.income[r]))
                row.append(str(int(self.choice[r])))
                if self.is_panel:
                    row.append(str(int(self.choice_post[r])))
                writer.writerow(row)
        return path

    @classmethod
    def from_csv(cls, path) -> "SimulatedDataset":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if not rows:
            raise ValueError(f"{path} contains no data rows")
        data = np.array(rows, dtype=float)
        n = sum(1 for h in header if h.startswith("p_"))
        if "choice_pre" in header:
            return cls(prices=data[:, :n], prices_post=data[:, n:2 * n], income=data[:, 2 * n],
                       choice=data[:, 2 * n + 1].astype(int),
                       choice_post=data[:, 2 * n + 2].astype(int))
        return cls(prices=data[:, :n], income=data[:, n], choice=data[:, n + 1].astype(int))


def _budget_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_BUDGET_STREAM,)))


def simulate_cross_section(spec: UtilitySpec, budget_sampler, count: int, seed: int) -> SimulatedDataset:
    """Simulate one choice per row with independent draws and budgets.

    ``budget_sampler(rng, count)`` returns ``(prices, incomes)`` with shapes
    ``(count, n)`` and ``(count,)``.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    prices, incomes = budget_sampler(_budget_rng(seed), count)
    prices = np.broadcast_to(np.asarray(prices, dtype=float), (count, spec.n))
    incomes = np.broadcast_to(np.asarray(incomes, dtype=float), (count,))
    draws = draw_preferences(spec, seed, count)
    choice = choose_batch(draws, prices, incomes)
    return SimulatedDataset(prices=prices.copy(), income=incomes.copy(), choice=choice,
                            metadata={"seed": int(seed), "spec": spec.to_dict()})


def simulate_panel(spec: UtilitySpec, p, p_post, y_sampler, count: int, seed: int,
                   *, price_jitter: float = 0.0) -> SimulatedDataset:
    """Simulate choices before and after a price change with common draws.

    ``y_sampler(rng, count)`` returns incomes (a constant is accepted).
    With ``price_jitter > 0`` each row's ``p`` and ``p'`` receive
    independent uniform perturbations on ``[-price_jitter, price_jitter]``.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    if p.size != spec.n or p_post.size != spec.n:
        raise ValueError("price vectors must have length n")
    rng = _budget_rng(seed)
    incomes = y_sampler(rng, count) if callable(y_sampler) else y_sampler
    incomes = np.broadcast_to(np.asarray(incomes, dtype=float), (count,)).copy()
    prices = np.tile(p, (count, 1))
    prices_post = np.tile(p_post, (count, 1))
    if price_jitter > 0:
        prices += rng.uniform(-price_jitter, price_jitter, size=prices.shape)
        prices_post += rng.uniform(-price_jitter, price_jitter, size=prices.shape)
    draws = draw_preferences(spec, seed, count)
    return SimulatedDataset(prices=prices, income=incomes,
                            choice=choose_batch(draws, prices, incomes),
                            prices_post=prices_post,
                            choice_post=choose_batch(draws, prices_post, incomes),
                            metadata={"seed": int(seed), "spec": spec.to_dict()})


def _cluster_masses(sorted_samples: np.ndarray, threshold: float):
    """Groups of (nearly) equal samples whose share exceeds ``threshold``."""
    x = sorted_samples
    m = x.size
    if m == 0:
        return []
    gap_tol = 1e-8 * np.maximum(1.0, np.abs(x[:-1]))
    breaks = np.flatnonzero(np.diff(x) > gap_tol) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [m]])
    out = []
    for s, e in zip(starts, ends):
        share = (e - s) / m
        if share > threshold:
            out.append((float(x[e - 1]), float(share)))
    return out


def empirical_ccdf(samples, grid) -> DistributionCurve:
    """Share of samples ``>= w`` at every grid point.

    Groups of equal samples with share above ``2 / sqrt(N)`` are reported
    as mass points (located at the largest member of the group).
    """
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    grid = np.asarray(grid, dtype=float)
    values = 1.0 - np.searchsorted(x, grid, side="left") / x.size
    masses = [(loc, jump) for loc, jump in _cluster_masses(x, 2.0 / math.sqrt(x.size))
              if grid[0] <= loc <= grid[-1]]
    return DistributionCurve(grid, values, "ccdf", tuple(masses), {"samples": int(x.size)})


def empirical_cdf(samples, grid) -> DistributionCurve:
    """Share of samples ``<= z`` at every grid point."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    grid = np.asarray(grid, dtype=float)
    values = np.searchsorted(x, grid, side="right") / x.size
    masses = [(loc, jump) for loc, jump in _cluster_masses(x, 2.0 / math.sqrt(x.size))
              if grid[0] <= loc <= grid[-1]]
    return DistributionCurve(grid, values, "cdf", tuple(masses), {"samples": int(x.size)})


def kolmogorov_distance(curve: DistributionCurve, other: DistributionCurve,
                        *, exclude=(), radius: float = 1e-9) -> float:
    """Largest absolute gap between two curves on ``curve``'s grid.

    ``other`` must share the grid.  Grid points within
    ``radius * max(1, |m|)`` of any location in ``exclude`` (and of the
    mass points of ``curve``) are skipped: at an exact jump location the
    oracle's root-finder tolerance decides the side of the jump.
    """
    if curve.kind != other.kind:
        other = other.as_cdf() if curve.kind == "cdf" else other.as_ccdf()
    if not np.array_equal(curve.grid, other.grid):
        raise ValueError("curves must share a grid")
    keep = np.ones(curve.grid.size, dtype=bool)
    locations = list(exclude) + [m for m, _ in curve.mass_points]
    for m in locations:
        keep &= np.abs(curve.grid - m) > radius * max(1.0, abs(m))
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(curve.values[keep] - other.values[keep])))
