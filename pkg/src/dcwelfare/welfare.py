"""Distributions of welfare levels and welfare changes from probability models.

Every distribution here is a finite combination of choice probabilities
``P_i(q, y)`` and transition probabilities ``P_{i,j}(q, q', y)`` evaluated
at actual, counterfactual or virtual price vectors, times indicator
functions.  The indicators are evaluated exactly (no tolerance), and the
locations where they switch are recorded as mass points of the curve.

Conventions: welfare *levels* are reported as CCDFs ``Pr[w <= W]``;
compensating and equivalent variations as CDFs ``Pr[CV <= z]``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (DistributionCurve, NOSFamily, as_price_vector, default_grid,
                   format_float, jsonable)
from .exceptions import (DegenerateConditioningError, IntegrationDomainError,
                         NonIntegrableCurveError, TruncationWarning)
from .probability import ChoiceProbabilityModel, TransitionProbabilityModel

DEGENERATE_THRESHOLD = 1e-12
DEFAULT_GRID_SIZE = 512
DEFAULT_DIFFERENCE_STEPS = 400
TAIL_TOLERANCE = 1e-6

LEVEL_KINDS = ("joint", "conditional-on-post", "conditional-on-own-choice",
               "marginal-at-bundle", "marginal-at-optimum")
CHANGE_KINDS = ("joint", "conditional-on-both", "conditional-on-pre",
                "conditional-on-post", "marginal")


@dataclass(frozen=True)
class ConditioningMode:
    """Which joint, conditional or marginal distribution to compute.

    Levels use ``joint(j)``, ``conditional_on_post(j)``, ``own_choice()``,
    ``at_bundle()`` and ``at_optimum()``.  Changes use ``joint(i, j)``,
    ``conditional_on_both(i, j)``, ``conditional_on_pre(i)``,
    ``conditional_on_post(j)`` and ``marginal()``.
    """

    kind: str
    i: int | None = None
    j: int | None = None

    def __post_init__(self):
        if self.kind not in LEVEL_KINDS + CHANGE_KINDS:
            raise ValueError(f"unknown conditioning mode {self.kind!r}")
        for name in ("i", "j"):
            v = getattr(self, name)
            if v is not None:
                if int(v) < 0:
                    raise ValueError(f"index {name} must be non-negative")
                object.__setattr__(self, name, int(v))

    @classmethod
    def joint(cls, *idx):
        if len(idx) == 1:
            return cls("joint", j=idx[0])
        return cls("joint", i=idx[0], j=idx[1])

    @classmethod
    def conditional_on_post(cls, j):
        return cls("conditional-on-post", j=j)

    @classmethod
    def conditional_on_both(cls, i, j):
        return cls("conditional-on-both", i=i, j=j)

    @classmethod
    def conditional_on_pre(cls, i):
        return cls("conditional-on-pre", i=i)

    @classmethod
    def own_choice(cls):
        return cls("conditional-on-own-choice")

    @classmethod
    def at_bundle(cls):
        return cls("marginal-at-bundle")

    @classmethod
    def at_optimum(cls):
        return cls("marginal-at-optimum")

    @classmethod
    def marginal(cls):
        return cls("marginal")

    @classmethod
    def parse(cls, text: str, i=None, j=None):
        return cls(text, i=i, j=j)

    def check(self, n: int, kinds, needs_i=(), needs_j=()):
        if self.kind not in kinds:
            raise ValueError(f"mode {self.kind!r} is not valid here; expected one of {kinds}")
        if self.kind in needs_i and self.i is None:
            raise ValueError(f"mode {self.kind!r} needs index i")
        if self.kind in needs_j and self.j is None:
            raise ValueError(f"mode {self.kind!r} needs index j")
        for v in (self.i, self.j):
            if v is not None and v >= n:
                raise ValueError(f"index {v} out of range for {n} alternatives")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "i": self.i, "j": self.j}


@dataclass(frozen=True)
class JointGridResult:
    """Probabilities on a ``(w, z)`` grid; rows follow ``w``, columns ``z``.

    ``w`` is a level (CCDF direction, non-increasing down columns) and
    ``z`` a difference (CDF direction, non-decreasing along rows).
    """

    w_grid: np.ndarray
    z_grid: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w_grid, dtype=float).reshape(-1)
        z = np.asarray(self.z_grid, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (w.size, z.size):
            raise ValueError("values must have shape (len(w_grid), len(z_grid))")
        if np.any(np.diff(w) <= 0) or np.any(np.diff(z) <= 0):
            raise ValueError("grids must be strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("joint probabilities must lie in [0, 1]")
        if np.any(np.diff(v, axis=0) > 0) or np.any(np.diff(v, axis=1) < 0):
            raise ValueError("joint grid must be non-increasing in w and non-decreasing in z")
        for a in (w, z, v):
            a.setflags(write=False)
        object.__setattr__(self, "w_grid", w)
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "values", v)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["w", "z", "value"])
            for a, wv in enumerate(self.w_grid):
                for b, zv in enumerate(self.z_grid):
                    writer.writerow([format_float(wv), format_float(zv), format_float(self.values[a, b])])
        path.with_suffix(".json").write_text(
            json.dumps(jsonable(self.metadata), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# helpers


def _is_bound(model) -> str | None:
    return None if model is None else model.metadata.get("bound")


def _require(model, what, mode):
    if model is None:
        raise ValueError(f"mode {mode.kind!r} needs a {what} model")
    return model


def _finalize(grid, values, kind, bound, metadata):
    """Clip to [0, 1] and make the curve monotone.

    Point models are rearranged (sorted), which is the closest monotone
    curve in every L^p norm.  Bound curves use one-sided running extrema,
    which keeps them valid bounds for a monotone target.
    """
    values = np.asarray(values, dtype=float).copy()
    clipped = float(max(0.0, -values.min(), values.max() - 1.0))
    values = np.clip(values, 0.0, 1.0)
    decreasing = kind == "ccdf"
    steps = np.diff(values)
    violation = float(np.max(steps) if decreasing else -np.min(steps)) if steps.size else 0.0
    if violation > 0:
        if bound is None:
            values = np.sort(values)[::-1] if decreasing else np.sort(values)
            metadata["monotone_fix"] = "rearrangement"
        elif (bound == "upper") == decreasing:
            # upper CCDF or lower CDF: sweep from the left
            values = (np.minimum if decreasing else np.maximum).accumulate(values)
            metadata["monotone_fix"] = "running-extremum-left"
        else:
            values = (np.maximum if decreasing else np.minimum).accumulate(values[::-1])[::-1]
            metadata["monotone_fix"] = "running-extremum-right"
        metadata["monotone_violation"] = violation
    if clipped > 0:
        metadata["clipped"] = clipped
    return values


def _left_tail(values_at, start, limit_tol=1e-9, max_doublings=60):
    """Point left of ``start`` where a CCDF has flattened to its limit."""
    d = 1.0
    prev = values_at(np.array([start - d]))[0]
    for _ in range(max_doublings):
        d *= 2.0
        cur = values_at(np.array([start - d]))[0]
        if abs(cur - prev) < limit_tol:
            return start - d / 2.0
        prev = cur
    return start - d


# ---------------------------------------------------------------------------
# welfare levels


def level_boundaries(family: NOSFamily, prices) -> np.ndarray:
    """Welfare upper bounds ``w*_c`` of each bundle ``(y - p_c, c)``."""
    return np.array([family.boundary(c, float(prices[c]), anchor=0.0) for c in range(family.n)])


def level_distribution(family: NOSFamily, p, y: float, mode: ConditioningMode, *,
                       k: int | None = None, p_k: float | None = None, p_post=None,
                       choice: ChoiceProbabilityModel | None = None,
                       trans: TransitionProbabilityModel | None = None,
                       grid=None, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionCurve:
    """CCDF ``Pr[w <= W]`` of the welfare level of a bundle.

    Parameters
    ----------
    family : NOSFamily
        Welfare measure.
    p : array_like
        Prices at which choices are made.  For bundle modes ``p[k]`` is the
        default bundle price.
    y : float
        Exogenous income.
    mode : ConditioningMode
        ``joint(j)`` and ``conditional_on_post(j)`` condition on choosing
        ``j`` at ``p_post`` and need ``trans``; ``at_bundle()`` is the
        unconditional level of bundle ``k``; ``own_choice()`` conditions on
        ``k`` being chosen at ``p``; ``at_optimum()`` evaluates welfare in
        the chosen bundle.
    k, p_k : int, float
        Bundle whose welfare is measured (not used by ``at_optimum``).
    grid : array_like, optional
        Evaluation points.  By default 512 points spanning the support,
        padded by 10% on both sides, plus points bracketing every jump.
    """
    p = as_price_vector(p, "p")
    n = family.n
    if p.size != n:
        raise ValueError("p must have one price per alternative")
    y = float(y)
    mode.check(n, LEVEL_KINDS, needs_j=("joint", "conditional-on-post"))
    if mode.kind != "marginal-at-optimum":
        if k is None or not 0 <= int(k) < n:
            raise ValueError("a bundle index k in range is required")
        k = int(k)
        p_k = float(p[k]) if p_k is None else float(p_k)
    bound = None
    meta = {"quantity": "welfare-level", "mode": mode.to_dict(), "family": family.to_dict(),
            "income": y, "prices": p.tolist(), "k": k, "p_k": p_k}

    if mode.kind in ("joint", "conditional-on-post"):
        trans = _require(trans, "transition", mode)
        p_post = as_price_vector(p_post if p_post is not None else p, "p_post")
        bound = _is_bound(trans)
        j = mode.j
        denom = 1.0
        if mode.kind == "conditional-on-post":
            if choice is not None:
                denom = float(choice(p_post, y)[j])
            elif bound is None:
                denom = float(trans(p_post, p_post, y)[j].sum())
            else:
                raise ValueError("conditioning with an envelope model needs a choice model")
            if denom < DEGENERATE_THRESHOLD:
                raise DegenerateConditioningError(f"P_{j}(p') = {denom:g} is numerically zero")

        def values_at(ws):
            virtual = family.many(ws)
            q = virtual.copy()
            q[:, k] = p_k
            post = np.broadcast_to(p_post, q.shape)
            vals = trans(post, q, y)[:, j, k]
            return np.where(p_k <= virtual[:, k], vals, 0.0) / denom

    elif mode.kind == "marginal-at-bundle":
        choice = _require(choice, "choice", mode)

        def values_at(ws):
            virtual = family.many(ws)
            q = virtual.copy()
            q[:, k] = p_k
            return np.where(p_k <= virtual[:, k], choice(q, y)[:, k], 0.0)

    elif mode.kind == "conditional-on-own-choice":
        choice = _require(choice, "choice", mode)
        denom = float(choice(p, y)[k])
        if denom < DEGENERATE_THRESHOLD:
            raise DegenerateConditioningError(f"P_{k}(p) = {denom:g} is numerically zero")

        def values_at(ws):
            virtual = family.many(ws)
            q = np.minimum(p, virtual)
            return np.where(p_k <= virtual[:, k], choice(q, y)[:, k] / denom, 0.0)

    else:
        choice = _require(choice, "choice", mode)

        def values_at(ws):
            virtual = family.many(ws)
            q = np.minimum(p, virtual)
            return np.sum(np.where(p[None, :] <= virtual, choice(q, y), 0.0), axis=1)

    # jump locations: where the indicator of each relevant bundle switches off
    if mode.kind == "marginal-at-optimum":
        jump_at = {c: family.boundary(c, float(p[c])) for c in range(n)}
    else:
        jump_at = {k: family.boundary(k, p_k)}
    stars = level_boundaries(family, p)
    finite = [v for v in list(jump_at.values()) + list(stars) if math.isfinite(v)]
    if not finite:
        raise IntegrationDomainError("no finite welfare bound; the support cannot be located")
    upper = max(v for v in jump_at.values() if math.isfinite(v)) if any(
        math.isfinite(v) for v in jump_at.values()) else max(finite)
    if mode.kind in ("conditional-on-own-choice", "marginal-at-optimum"):
        lower = min(finite)
    else:
        lower = _left_tail(values_at, min(finite))

    masses = []
    for c, m in jump_at.items():
        if not math.isfinite(m):
            continue
        if mode.kind == "marginal-at-optimum":
            virtual = family(m)
            jump = float(choice(np.minimum(p, virtual), y)[c])
        else:
            jump = float(values_at(np.array([m]))[0]) - float(
                values_at(np.array([np.nextafter(m, math.inf)]))[0])
        if jump > DEGENERATE_THRESHOLD:
            masses.append((m, min(jump, 1.0)))

    if grid is None:
        grid = default_grid(lower, upper, grid_size, jumps=[m for m, _ in masses] + finite)
    grid = np.asarray(grid, dtype=float)
    values = _finalize(grid, values_at(grid), "ccdf", bound, meta)
    masses = [(m, j) for m, j in masses if grid[0] <= m <= grid[-1]]
    meta["support"] = [lower, upper]
    if bound:
        meta["bound"] = bound
    return DistributionCurve(grid, values, "ccdf", tuple(masses), meta)


def joint_before_after(trans: TransitionProbabilityModel, family0: NOSFamily, family1: NOSFamily,
                       p, p_post, y: float, i: int, j: int, w: float, z: float) -> float:
    """``Pr[w <= W0, z <= W1, i chosen at p, j chosen at p']``.

    ``W0`` is welfare in the bundle chosen before the change (measured with
    ``family0``) and ``W1`` welfare in the bundle chosen after it
    (``family1``).
    """
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    v0 = family0(w)
    v1 = family1(z)
    if not (p[i] <= v0[i] and p_post[j] <= v1[j]):
        return 0.0
    val = float(trans(np.minimum(p, v0), np.minimum(p_post, v1), y)[i, j])
    return min(max(val, 0.0), 1.0)


def _difference_support(family0, family1, p, p_post, z, cells):
    w0 = level_boundaries(family0, p)
    w1 = level_boundaries(family1, p_post)
    lo = np.min(w1) - z
    hi = max(min(w0[i], w1[j] - z) for i, j in cells)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise IntegrationDomainError("the effective support of the difference integral is unbounded")
    return lo, hi, w0, w1


def _difference_matrix(trans, family0, family1, p, p_post, y, w, z, lo, hi, w0, n_steps):
    """All cells of the level-difference integral over ``[lo, hi]``."""
    n = trans.n
    span = hi - lo
    delta = span / n_steps if span > 0 else 1e-6 * max(1.0, abs(lo))
    count = int(math.ceil(max(span, 0.0) / delta)) + 5
    nodes = lo - 2.0 * delta + delta * np.arange(count)
    first = np.maximum(w, nodes)
    v0 = family0.many(first)
    q0 = np.minimum(p[None, :], v0)
    s_hi = nodes + z + 0.5 * delta
    s_lo = nodes + z - 0.5 * delta
    v_hi = family1.many(s_hi)
    v_lo = family1.many(s_lo)
    h_hi = trans(q0, np.minimum(p_post[None, :], v_hi), y)
    h_lo = trans(q0, np.minimum(p_post[None, :], v_lo), y)
    h_hi = h_hi * (p_post[None, None, :] <= v_hi[:, None, :])
    h_lo = h_lo * (p_post[None, None, :] <= v_lo[:, None, :])
    keep = p[None, :] <= v0  # indicator on the pre-change bundle, per node and i
    # -d/ds h times dx, summed over nodes; a Stieltjes sum that is exact for jumps in s
    contrib = -(h_hi - h_lo) * keep[:, :, None]
    total = contrib.sum(axis=0)
    info = {"delta": delta, "nodes": count, "support": [lo, hi], "scheme":
            "central difference of width delta at nodes spaced delta, trapezoid in x"}
    return total, info


def level_difference_joint(trans: TransitionProbabilityModel, family0: NOSFamily, family1: NOSFamily,
                           p, p_post, y: float, i: int, j: int, w: float, z: float, *,
                           n_steps: int = DEFAULT_DIFFERENCE_STEPS, full_output: bool = False):
    """``Pr[w <= W0, W1 - W0 <= z, i chosen at p, j chosen at p']``.

    Computed as ``-int d/ds h(w, x, x + z) I[p_i <= p_tilde0_i(max(w, x))] dx``
    with ``h(w, x, s) = P_ij(min(p, p_tilde0(max(w, x))), min(p', p_tilde1(s)))
    I[p'_j <= p_tilde1_j(s)]``.  The derivative is a central difference of
    width ``delta = support / n_steps`` at nodes spaced ``delta``, so the
    sum over nodes telescopes exactly across jumps of ``h`` in ``s``.
    The integration range is the bracketed support ``[min_c w1*_c - z,
    min(w0*_i, w1*_j - z)]`` padded by ``2 delta``.
    """
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    n = trans.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("alternative index out of range")
    w, z = float(w), float(z)
    lo, hi, w0, w1 = _difference_support(family0, family1, p, p_post, z, [(i, j)])
    if hi < lo:
        value, info = 0.0, {"support": [lo, hi], "empty": True}
    else:
        total, info = _difference_matrix(trans, family0, family1, p, p_post, y, w, z,
                                         lo, hi, w0, n_steps)
        raw = float(total[i, j])
        info["raw"] = raw
        value = min(max(raw, 0.0), 1.0)
    return (value, info) if full_output else value


def level_difference_matrix(trans, family0, family1, p, p_post, y, w, z, *,
                            n_steps: int = DEFAULT_DIFFERENCE_STEPS):
    """All ``(i, j)`` cells of :func:`level_difference_joint` in one pass."""
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    n = trans.n
    cells = [(a, b) for a in range(n) for b in range(n)]
    lo, hi, w0, w1 = _difference_support(family0, family1, p, p_post, float(z), cells)
    if hi < lo:
        return np.zeros((n, n))
    total, _ = _difference_matrix(trans, family0, family1, p, p_post, y, float(w), float(z),
                                  lo, hi, w0, n_steps)
    return np.clip(total, 0.0, 1.0)


# ---------------------------------------------------------------------------
# compensating and equivalent variation


def _change_setup(p, p_post, mode, n, choice, trans):
    p = as_price_vector(p, "p")
    p_post = as_price_vector(p_post, "p_post")
    if p.size != n or p_post.size != n:
        raise ValueError(f"price vectors must have length {n}")
    mode.check(n, CHANGE_KINDS, needs_i=("joint", "conditional-on-both", "conditional-on-pre"),
               needs_j=("joint", "conditional-on-both", "conditional-on-post"))
    return p, p_post


def _n_of(choice, trans):
    model = choice if choice is not None else trans
    if model is None:
        raise ValueError("a choice or transition model is required")
    return model.n


def _variation_values(which, p, p_post, y, mode, choice, trans):
    """Vectorised CDF evaluator for CV (``which='CV'``) or EV at an array of z."""
    n = p.size
    bound = _is_bound(trans)
    kind = mode.kind
    i, j = mode.i, mode.j

    def trans_needed():
        return _require(trans, "transition", mode)

    def choice_needed():
        return _require(choice, "choice", mode)

    if kind == "conditional-on-both" and bound is not None:
        raise ValueError("a ratio of cellwise envelope bounds is not a bound; "
                         "conditional-on-both needs a point-identified transition model")

    denom = 1.0
    if kind == "conditional-on-both":
        denom = float(trans_needed()(p, p_post, y)[i, j])
        label = f"P_{i}{j}(p, p')"
    elif kind == "conditional-on-pre":
        if choice is not None:
            denom = float(choice(p, y)[i])
        elif bound is None:
            denom = float(trans_needed()(p, p_post, y)[i].sum())
        else:
            raise ValueError("conditioning with an envelope model needs a choice model")
        label = f"P_{i}(p)"
    elif kind == "conditional-on-post":
        if choice is not None:
            denom = float(choice(p_post, y)[j])
        elif bound is None:
            denom = float(trans_needed()(p, p_post, y)[:, j].sum())
        else:
            raise ValueError("conditioning with an envelope model needs a choice model")
        label = f"P_{j}(p')"
    if kind.startswith("conditional") and denom < DEGENERATE_THRESHOLD:
        raise DegenerateConditioningError(f"{label} = {denom:g} is numerically zero")

    if which == "CV":
        # P_ij(min(p, p' + z), p') I[p_i - p'_i <= z]
        def values_at(zs):
            zs = np.asarray(zs, dtype=float)
            q = np.minimum(p[None, :], p_post[None, :] + zs[:, None])
            on = (p - p_post)[None, :] <= zs[:, None]
            if kind in ("joint", "conditional-on-both"):
                t = trans_needed()(q, np.broadcast_to(p_post, q.shape), y)[:, i, j]
                return np.where(on[:, i], t, 0.0) / denom
            if kind == "conditional-on-pre":
                return np.where(on[:, i], choice_needed()(q, y)[:, i] if choice is not None
                                else trans_needed()(q, np.broadcast_to(p_post, q.shape), y)[:, i, :].sum(axis=1),
                                0.0) / denom
            if kind == "conditional-on-post":
                t = trans_needed()(q, np.broadcast_to(p_post, q.shape), y)[:, :, j]
                return np.sum(np.where(on, t, 0.0), axis=1) / denom
            probs = choice_needed()(q, y)
            return np.sum(np.where(on, probs, 0.0), axis=1)
    else:
        # P_ij(p, min(p + z, p')) I[p'_j - p_j <= z]
        def values_at(zs):
            zs = np.asarray(zs, dtype=float)
            q = np.minimum(p[None, :] + zs[:, None], p_post[None, :])
            on = (p_post - p)[None, :] <= zs[:, None]
            if kind in ("joint", "conditional-on-both"):
                t = trans_needed()(np.broadcast_to(p, q.shape), q, y)[:, i, j]
                return np.where(on[:, j], t, 0.0) / denom
            if kind == "conditional-on-pre":
                t = trans_needed()(np.broadcast_to(p, q.shape), q, y)[:, i, :]
                return np.sum(np.where(on, t, 0.0), axis=1) / denom
            if kind == "conditional-on-post":
                return np.where(on[:, j], choice_needed()(q, y)[:, j] if choice is not None
                                else trans_needed()(np.broadcast_to(p, q.shape), q, y)[:, :, j].sum(axis=1),
                                0.0) / denom
            probs = choice_needed()(q, y)
            return np.sum(np.where(on, probs, 0.0), axis=1)

    return values_at, bound


def _variation_curve(which, p, p_post, y, mode, choice, trans, grid, grid_size):
    n = _n_of(choice, trans)
    p, p_post = _change_setup(p, p_post, mode, n, choice, trans)
    y = float(y)
    values_at, bound = _variation_values(which, p, p_post, y, mode, choice, trans)
    if which == "CV":
        # the indicator is evaluated as p_c - p'_c <= z so it switches exactly there
        switch = list(p - p_post)
        relevant = [mode.i] if mode.kind in ("joint", "conditional-on-both", "conditional-on-pre") \
            else range(n)
    else:
        switch = list(p_post - p)
        relevant = [mode.j] if mode.kind in ("joint", "conditional-on-both", "conditional-on-post") \
            else range(n)
    lower, upper = min(switch), max(switch)
    masses = {}
    for c in relevant:
        m = switch[c]
        jump = float(values_at([m])[0] - values_at([np.nextafter(m, -math.inf)])[0])
        if jump > DEGENERATE_THRESHOLD:
            masses[m] = masses.get(m, 0.0) + jump
    if grid is None:
        grid = default_grid(lower, upper, grid_size, jumps=switch)
    grid = np.asarray(grid, dtype=float)
    meta = {"quantity": which, "mode": mode.to_dict(), "prices": p.tolist(),
            "prices_post": p_post.tolist(), "income": y, "support": [lower, upper]}
    if bound:
        meta["bound"] = bound
    values = _finalize(grid, values_at(grid), "cdf", bound, meta)
    mass_points = tuple((m, min(j, 1.0)) for m, j in sorted(masses.items())
                        if grid[0] <= m <= grid[-1])
    return DistributionCurve(grid, values, "cdf", mass_points, meta)


def cv_distribution(p, p_post, y: float, mode: ConditioningMode, *,
                    choice: ChoiceProbabilityModel | None = None,
                    trans: TransitionProbabilityModel | None = None,
                    grid=None, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionCurve:
    """CDF of the compensating variation of a change from ``p`` to ``p'``.

    ``marginal`` and ``conditional_on_pre(i)`` need only a choice model;
    the other modes need transition probabilities.  The CV is supported on
    ``[min_c (p_c - p'_c), max_c (p_c - p'_c)]``.
    """
    return _variation_curve("CV", p, p_post, y, mode, choice, trans, grid, grid_size)


def ev_distribution(p, p_post, y: float, mode: ConditioningMode, *,
                    choice: ChoiceProbabilityModel | None = None,
                    trans: TransitionProbabilityModel | None = None,
                    grid=None, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionCurve:
    """CDF of the equivalent variation of a change from ``p`` to ``p'``.

    The EV is the (possibly negative) payment before the change that
    leaves the agent as well off as after it.  ``marginal`` and
    ``conditional_on_post(j)`` need only a choice model.
    """
    return _variation_curve("EV", p, p_post, y, mode, choice, trans, grid, grid_size)


def _joint_grid(which, trans, p, p_post, y, mode, w_grid, z_grid, choice):
    n = trans.n if trans is not None else choice.n
    p, p_post = _change_setup(p, p_post, mode, n, choice, trans)
    y = float(y)
    values_at, bound = _variation_values(which, p, p_post, y, mode, choice, trans)
    w = np.asarray(w_grid, dtype=float)
    z = np.asarray(z_grid, dtype=float)
    if which == "CV":
        # level w enters only through min(z, y - w)
        t = np.minimum(z[None, :], (y - w)[:, None])
        vals = values_at(t.reshape(-1)).reshape(w.size, z.size)
    else:
        vals = np.where((w <= y)[:, None], values_at(z)[None, :], 0.0)
    meta = {"quantity": f"mmu-{which.lower()}-joint", "mode": mode.to_dict(),
            "prices": p.tolist(), "prices_post": p_post.tolist(), "income": y}
    if bound:
        meta["bound"] = bound
    vals = np.clip(vals, 0.0, 1.0)
    if bound is None:
        # guard against sampling noise in estimated models
        vals = np.minimum.accumulate(vals, axis=0)
        vals = np.maximum.accumulate(vals, axis=1)
    return JointGridResult(w, z, vals, meta)


def mmu_cv_joint(trans: TransitionProbabilityModel | None, p, p_post, y: float,
                 mode: ConditioningMode, w_grid, z_grid, *,
                 choice: ChoiceProbabilityModel | None = None) -> JointGridResult:
    """``Pr[w <= MMU_{p'}(pre-change bundle), CV <= z, ...]`` on a grid.

    Every mode equals the corresponding CV expression evaluated at
    ``min(z, y - w)``.
    """
    return _joint_grid("CV", trans, p, p_post, y, mode, w_grid, z_grid, choice)


def mmu_ev_joint(trans: TransitionProbabilityModel | None, p, p_post, y: float, w_grid, z_grid,
                 mode: ConditioningMode | None = None, *,
                 choice: ChoiceProbabilityModel | None = None) -> JointGridResult:
    """``Pr[w <= MMU_p(pre-change bundle), EV <= z, ...]`` on a grid.

    With the initial prices as reference, the level is ``y`` for everyone,
    so the result is the EV expression times ``I[w <= y]``.
    """
    mode = ConditioningMode.marginal() if mode is None else mode
    return _joint_grid("EV", trans, p, p_post, y, mode, w_grid, z_grid, choice)


# ---------------------------------------------------------------------------
# means


def _tail_gaps(curve: DistributionCurve):
    v = curve.values
    if curve.kind == "ccdf":
        return 1.0 - v[0], v[-1]
    return v[0], 1.0 - v[-1]


def _check_tails(curve: DistributionCurve):
    left_gap, right_gap = _tail_gaps(curve)
    problems = []
    g = curve.grid
    tail = max(2, g.size // 10)
    for side, gap, seg in (("left", left_gap, curve.values[:tail]),
                           ("right", right_gap, curve.values[-tail:])):
        if gap <= TAIL_TOLERANCE:
            continue
        change = abs(seg[-1] - seg[0])
        if gap > 1e-3 and change < 1e-3 * gap:
            raise NonIntegrableCurveError(
                f"{side} tail is unresolved (gap {gap:.3g}) and flat; the mean does not converge on this grid")
        problems.append(f"{side} tail unresolved by {gap:.3g}")
    return problems


def mean_from_curve(curve: DistributionCurve, *, close_tails: bool = False) -> float:
    """Mean of the distribution described by ``curve``.

    Uses ``g0 + int_{g0}^{gN} S(u) du`` with ``S`` the CCDF, which equals
    ``int_0^inf S - int_-inf^0 (1 - S)`` when the curve is resolved on its
    grid.  Trapezoid segments containing a mass point are corrected so the
    step is integrated exactly.  Unresolved tails trigger a
    :class:`TruncationWarning` unless ``close_tails`` is set, in which case
    missing mass is placed at the grid ends.
    """
    import warnings

    if not close_tails:
        problems = _check_tails(curve)
        if problems:
            warnings.warn("; ".join(problems), TruncationWarning, stacklevel=2)
    g = curve.grid
    s = curve.values if curve.kind == "ccdf" else 1.0 - curve.values
    if g.size == 1:
        return float(g[0])
    total = float(g[0] + np.trapezoid(s, g))
    for m, jump in curve.mass_points:
        if curve.kind == "ccdf":
            a = int(np.searchsorted(g, m, side="right")) - 1
        else:
            a = int(np.searchsorted(g, m, side="left")) - 1
        if 0 <= a < g.size - 1:
            width = g[a + 1] - g[a]
            total += jump * ((m - g[a]) - 0.5 * width)
    return total


def mean_interval(lower: DistributionCurve, upper: DistributionCurve) -> tuple[float, float]:
    """Bounds on the mean from pointwise lower and upper bound curves.

    For CDF bounds ``F_L <= F <= F_U`` the mean lies in
    ``[E_{F_U}, E_{F_L}]``; for CCDF bounds the order flips.  Bound curves
    need not reach 0 or 1 on their grid; missing mass is placed at the grid
    ends, which is valid when the grid spans the support.
    """
    if lower.kind != upper.kind:
        raise ValueError("bound curves must have the same kind")
    a = mean_from_curve(lower, close_tails=True)
    b = mean_from_curve(upper, close_tails=True)
    return (b, a) if lower.kind == "cdf" else (a, b)
