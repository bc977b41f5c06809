"""Choice and transition probability models.

A choice model maps a budget ``(p, y)`` to the probabilities of choosing
each alternative.  A transition model maps ``(p, p', y)`` to the ``n x n``
matrix of probabilities of choosing ``i`` at ``p`` and ``j`` at ``p'`` with
unchanged preferences.  Models here are analytic (logit), Monte Carlo
(common random numbers) or kernel estimates from simulated data.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import as_price_vector, jsonable
from .exceptions import ExtrapolationWarning
from .oracle import PreferenceDraws, SimulatedDataset, UtilitySpec, draw_preferences

DEFAULT_MC_DRAWS = 1_000_000
EXTRAPOLATION_RADIUS = 5.0
BANDWIDTH_FLOOR = 1e-3


def _as_batch(prices, incomes, n):
    prices = np.asarray(prices, dtype=float)
    single = prices.ndim == 1
    prices = np.atleast_2d(prices)
    if prices.shape[1] != n:
        raise ValueError(f"price vectors must have length {n}")
    incomes = np.broadcast_to(np.asarray(incomes, dtype=float), (prices.shape[0],))
    return prices, incomes, single


@dataclass(frozen=True)
class ChoiceProbabilityModel:
    """Evaluator of ``P_i(p, y)``.

    ``evaluator(prices, incomes)`` receives arrays of shape ``(m, n)`` and
    ``(m,)`` and returns an ``(m, n)`` array of probabilities.
    """

    n: int
    evaluator: Callable
    metadata: dict = field(default_factory=dict)

    def __call__(self, p, y):
        prices, incomes, single = _as_batch(p, y, self.n)
        out = np.asarray(self.evaluator(prices, incomes), dtype=float)
        return out[0] if single else out

    def batch(self, prices, incomes):
        return self(np.atleast_2d(prices), incomes)

    def to_json(self) -> str:
        return json.dumps(jsonable({"n": self.n, **self.metadata}), indent=2, sort_keys=True)


@dataclass(frozen=True)
class TransitionProbabilityModel:
    """Evaluator of ``P_{i,j}(p, p', y)``; returns ``(m, n, n)`` arrays."""

    n: int
    evaluator: Callable
    metadata: dict = field(default_factory=dict)

    def __call__(self, p, p_post, y):
        prices, incomes, single = _as_batch(p, y, self.n)
        post, _, single_post = _as_batch(p_post, y, self.n)
        if post.shape[0] != prices.shape[0]:
            if prices.shape[0] == 1:
                prices = np.broadcast_to(prices, post.shape)
            elif post.shape[0] == 1:
                post = np.broadcast_to(post, prices.shape)
            else:
                raise ValueError("price batches must have equal length")
            incomes = np.broadcast_to(np.asarray(y, dtype=float), (prices.shape[0],))
        out = np.asarray(self.evaluator(prices, post, incomes), dtype=float)
        return out[0] if (single and single_post) else out

    def to_json(self) -> str:
        return json.dumps(jsonable({"n": self.n, **self.metadata}), indent=2, sort_keys=True)


def logit_choice_model(alpha, beta: float) -> ChoiceProbabilityModel:
    """Multinomial logit probabilities ``softmax(alpha - beta * p)``.

    Income cancels from the softmax, so it is ignored, which makes the
    model exactly invariant to income.
    """
    alpha = as_price_vector(alpha, "alpha")
    beta = float(beta)
    if not beta > 0 or not math.isfinite(beta):
        raise ValueError("beta must be positive")

    def evaluate(prices, incomes):
        v = alpha[None, :] - beta * prices
        v = v - v.max(axis=1, keepdims=True)
        e = np.exp(v)
        return e / e.sum(axis=1, keepdims=True)

    return ChoiceProbabilityModel(alpha.size, evaluate,
                                  {"kind": "logit", "alpha": alpha.tolist(), "beta": beta})


def _row_key(prices_row, income) -> bytes:
    return np.ascontiguousarray(prices_row, dtype=float).tobytes() + np.float64(income).tobytes()


class MonteCarloRUM:
    """Common-random-number engine behind the Monte Carlo models.

    Draws are generated once, on first use, and reused for every budget.
    Choice vectors of recently used budgets are kept in a small LRU cache
    so that transition matrices over repeated budgets are cheap.
    """

    def __init__(self, spec: UtilitySpec, draws: int = DEFAULT_MC_DRAWS, seed: int = 0,
                 cache_size: int = 64):
        draws = int(draws)
        if draws < 1:
            raise ValueError("draws must be at least 1")
        self.spec = spec
        self.count = draws
        self.seed = int(seed)
        self.cache_size = int(cache_size)
        self._draws: PreferenceDraws | None = None
        self._columns: np.ndarray | None = None
        self._cache: OrderedDict = OrderedDict()

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def draws(self) -> PreferenceDraws:
        if self._draws is None:
            self._draws = draw_preferences(self.spec, self.seed, self.count)
        return self._draws

    def choices(self, prices, income) -> np.ndarray:
        """Chosen alternative of every draw at one budget (cached)."""
        key = _row_key(prices, income)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        residual = float(income) - np.asarray(prices, dtype=float)
        vec = self._argmax(residual)
        vec.setflags(write=False)
        self._cache[key] = vec
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return vec

    def _argmax(self, residual) -> np.ndarray:
        d = self.draws
        if d.slope.shape[0] != 1:
            return np.argmax(d.utilities(residual[None, :]), axis=1).astype(np.int16)
        if self._columns is None:
            self._columns = np.ascontiguousarray(d.intercept.T)
        # column sweep over alternatives; strict comparison keeps ties at the lowest index
        slope = d.slope[0]
        best = self._columns[0] + slope[0] * residual[0]
        idx = np.zeros(best.size, dtype=np.int16)
        for c in range(1, d.n):
            u = self._columns[c] + slope[c] * residual[c]
            better = u > best
            idx[better] = c
            np.maximum(best, u, out=best)
        return idx

    def choice_probabilities(self, prices, incomes) -> np.ndarray:
        n, m = self.n, self.count
        out = np.empty((prices.shape[0], n))
        for r in range(prices.shape[0]):
            out[r] = np.bincount(self.choices(prices[r], incomes[r]), minlength=n) / m
        return out

    def transition_probabilities(self, prices, prices_post, incomes) -> np.ndarray:
        n, m = self.n, self.count
        out = np.empty((prices.shape[0], n, n))
        for r in range(prices.shape[0]):
            a = self.choices(prices[r], incomes[r]).astype(np.int64)
            b = self.choices(prices_post[r], incomes[r])
            out[r] = (np.bincount(a * n + b, minlength=n * n) / m).reshape(n, n)
        return out

    def metadata(self) -> dict:
        return {"kind": "monte-carlo", "draws": self.count, "seed": self.seed,
                "spec": self.spec.to_dict()}

    def choice_model(self) -> ChoiceProbabilityModel:
        return ChoiceProbabilityModel(self.n, self.choice_probabilities, self.metadata())

    def transition_model(self) -> TransitionProbabilityModel:
        return TransitionProbabilityModel(self.n, self.transition_probabilities, self.metadata())


def mc_choice_model(spec: UtilitySpec, draws: int = DEFAULT_MC_DRAWS, seed: int = 0) -> ChoiceProbabilityModel:
    """Monte Carlo choice frequencies over a fixed set of draws."""
    return MonteCarloRUM(spec, draws, seed).choice_model()


def mc_transition_model(spec: UtilitySpec, draws: int = DEFAULT_MC_DRAWS, seed: int = 0,
                        *, engine: MonteCarloRUM | None = None) -> TransitionProbabilityModel:
    """Monte Carlo transition frequencies with common draws in both regimes."""
    if engine is None:
        engine = MonteCarloRUM(spec, draws, seed)
    return engine.transition_model()


def rule_of_thumb_bandwidths(regressors: np.ndarray, floor: float = BANDWIDTH_FLOOR) -> np.ndarray:
    """Per-coordinate ``1.06 * sd * N^(-1/(4+d))`` with a floor for constants."""
    N, d = regressors.shape
    sd = regressors.std(axis=0, ddof=1) if N > 1 else np.zeros(d)
    h = 1.06 * sd * N ** (-1.0 / (4 + d))
    return np.where(h > 0, h, floor)


class _KernelSmoother:
    """Nadaraya-Watson smoother of one-hot outcomes with shared weights."""

    def __init__(self, regressors, labels, n_labels, bandwidth, floor):
        self.x = np.asarray(regressors, dtype=float)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.n_labels = int(n_labels)
        N, d = self.x.shape
        if N == 0:
            raise ValueError("data must be non-empty")
        if isinstance(bandwidth, str):
            if bandwidth != "rule-of-thumb":
                raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
            h = rule_of_thumb_bandwidths(self.x, floor)
            self.rule = "rule-of-thumb"
        else:
            h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
            if np.any(h <= 0):
                raise ValueError("bandwidths must be positive")
            self.rule = "fixed"
        self.h = h
        self.scaled = self.x / h
        self.block = max(1, 2_000_000 // N)

    def __call__(self, queries):
        q = np.atleast_2d(np.asarray(queries, dtype=float)) / self.h
        out = np.empty((q.shape[0], self.n_labels))
        far = 0
        for s in range(0, q.shape[0], self.block):
            qb = q[s:s + self.block]
            d2 = (np.sum(qb ** 2, axis=1)[:, None] - 2.0 * qb @ self.scaled.T
                  + np.sum(self.scaled ** 2, axis=1)[None, :])
            d2 = np.maximum(d2, 0.0)
            logw = -0.5 * d2
            top = logw.max(axis=1, keepdims=True)
            far += int(np.sum(top[:, 0] < -0.5 * EXTRAPOLATION_RADIUS ** 2))
            w = np.exp(logw - top)
            num = np.zeros((qb.shape[0], self.n_labels))
            for c in range(self.n_labels):
                mask = self.labels == c
                if mask.any():
                    num[:, c] = w[:, mask].sum(axis=1)
            out[s:s + self.block] = num / num.sum(axis=1, keepdims=True)
        if far:
            warnings.warn(f"{far} kernel queries lie more than {EXTRAPOLATION_RADIUS:g} "
                          "bandwidths from every sample point", ExtrapolationWarning, stacklevel=3)
        return np.clip(out, 0.0, 1.0)


def nw_choice_estimator(data: SimulatedDataset, bandwidth_rule="rule-of-thumb",
                        *, floor: float = BANDWIDTH_FLOOR) -> ChoiceProbabilityModel:
    """Nadaraya-Watson choice probabilities over the regressor ``(p, y)``.

    One product Gaussian kernel with one bandwidth vector is shared by all
    alternatives, so the estimates add up to one at every query.  Pass a
    positive number or vector for fixed bandwidths.
    """
    if data is None or len(data) == 0:
        raise ValueError("data must be non-empty")
    n = data.n
    smoother = _KernelSmoother(np.column_stack([data.prices, data.income]), data.choice, n,
                               bandwidth_rule, floor)

    def evaluate(prices, incomes):
        return smoother(np.column_stack([prices, incomes]))

    meta = {"kind": "nadaraya-watson", "kernel": "gaussian-product", "bandwidth_rule": smoother.rule,
            "bandwidths": smoother.h.tolist(), "sample_size": len(data),
            "extrapolation_radius": EXTRAPOLATION_RADIUS}
    return ChoiceProbabilityModel(n, evaluate, meta)


def nw_transition_estimator(data: SimulatedDataset, bandwidth_rule="rule-of-thumb",
                            *, floor: float = BANDWIDTH_FLOOR) -> TransitionProbabilityModel:
    """Nadaraya-Watson transition matrix over the regressor ``(p, p', y)``."""
    if data is None or len(data) == 0:
        raise ValueError("data must be non-empty")
    if not data.is_panel:
        raise ValueError("transition estimation needs panel data")
    n = data.n
    labels = data.choice.astype(np.int64) * n + data.choice_post
    smoother = _KernelSmoother(np.column_stack([data.prices, data.prices_post, data.income]),
                               labels, n * n, bandwidth_rule, floor)

    def evaluate(prices, prices_post, incomes):
        out = smoother(np.column_stack([prices, prices_post, incomes]))
        return out.reshape(-1, n, n)

    meta = {"kind": "nadaraya-watson", "kernel": "gaussian-product", "bandwidth_rule": smoother.rule,
            "bandwidths": smoother.h.tolist(), "sample_size": len(data),
            "extrapolation_radius": EXTRAPOLATION_RADIUS}
    return TransitionProbabilityModel(n, evaluate, meta)


def choice_from_transitions(trans: TransitionProbabilityModel, p_other) -> ChoiceProbabilityModel:
    """Pre-change choice probabilities as row sums of a transition model.

    ``p_other`` is the fixed second-regime price vector used for the
    marginalisation.
    """
    p_other = as_price_vector(p_other, "p_other")

    def evaluate(prices, incomes):
        other = np.broadcast_to(p_other, prices.shape)
        return trans(prices, other, incomes).sum(axis=2)

    return ChoiceProbabilityModel(trans.n, evaluate,
                                  {"kind": "transition-marginal", "source": dict(trans.metadata)})


def normalize_income(p, p_post, y: float, y_post: float):
    """Map a change in income to an equivalent change in prices.

    Returns ``(p, p'', y)`` with ``p'' = p' - y' + y`` so that
    ``P_{i,j}(p, p', y, y') = P_{i,j}(p, p'', y)``.
    """
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    if p.shape != p_post.shape:
        raise ValueError("price vectors must have equal length")
    return p, (p_post - float(y_post)) + float(y), float(y)


def outside_option_shift(model: ChoiceProbabilityModel, o: int, delta: float) -> ChoiceProbabilityModel:
    """Evaluate ``model`` at ``(p - delta, y - delta)``.

    Residual incomes are unchanged, so a model estimated without price
    variation in the outside option ``o`` can still be queried at a
    different outside-option price.
    """
    if not 0 <= int(o) < model.n:
        raise ValueError("outside option index out of range")
    delta = float(delta)

    def evaluate(prices, incomes):
        return model(prices - delta, incomes - delta)

    return ChoiceProbabilityModel(model.n, evaluate,
                                  {"kind": "outside-option-shift", "o": int(o), "delta": delta,
                                   "source": dict(model.metadata)})


def outside_option_anchor(model: ChoiceProbabilityModel, o: int, anchor: float) -> ChoiceProbabilityModel:
    """Query-dependent shift that pins the outside-option price at ``anchor``.

    Each query ``(p, y)`` is evaluated at ``(p - d, y - d)`` with
    ``d = p_o - anchor``, which is the shift needed when the data never
    moves ``p_o`` away from ``anchor``.
    """
    o = int(o)
    if not 0 <= o < model.n:
        raise ValueError("outside option index out of range")
    anchor = float(anchor)

    def evaluate(prices, incomes):
        d = prices[:, o] - anchor
        shifted = prices - d[:, None]
        shifted[:, o] = anchor
        return model(shifted, incomes - d)

    return ChoiceProbabilityModel(model.n, evaluate,
                                  {"kind": "outside-option-anchor", "o": o, "anchor": anchor,
                                   "source": dict(model.metadata)})
