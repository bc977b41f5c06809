"""Budget sets, welfare-measure families and distribution curves.

A welfare measure in this package is described by a family of nested
opportunity sets, represented through its *virtual prices*
``p_tilde(lam)``: the price vector at which the opportunity set indexed by
``lam`` is exactly affordable.  Virtual prices are non-increasing in
``lam``.  Money metric utility (MMU) is the canonical member, with
``p_tilde(lam) = y - lam + p_ref``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from ._numerics import last_true
from .exceptions import NoSolutionError

FloatArray = NDArray[np.float64]


def as_price_vector(values, name: str = "prices") -> FloatArray:
    """Validate and convert ``values`` to a finite 1-d float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class BudgetSet:
    """Prices of the ``n`` alternatives and exogenous income.

    Prices may be negative; only residual incomes ``y - p_c`` matter.
    """

    prices: FloatArray
    income: float

    def __post_init__(self):
        object.__setattr__(self, "prices", as_price_vector(self.prices))
        y = float(self.income)
        if not math.isfinite(y):
            raise ValueError("income must be finite")
        object.__setattr__(self, "income", y)

    @property
    def n(self) -> int:
        return int(self.prices.size)

    def residual_income(self) -> FloatArray:
        return self.income - self.prices

    def to_dict(self) -> dict:
        return {"prices": self.prices.tolist(), "income": self.income}

    @classmethod
    def from_dict(cls, data: dict) -> "BudgetSet":
        return cls(prices=data["prices"], income=data["income"])

    def __eq__(self, other):
        if not isinstance(other, BudgetSet):
            return NotImplemented
        return self.income == other.income and np.array_equal(self.prices, other.prices)

    def __hash__(self):
        return hash((self.prices.tobytes(), self.income))


@dataclass(frozen=True)
class NOSFamily:
    """Virtual-price map of a nested-opportunity-set welfare measure.

    Parameters
    ----------
    n : int
        Number of alternatives.
    evaluator : callable
        ``evaluator(lam) -> array of shape (n,)``.  If ``vectorized`` is
        true it must also accept a 1-d array of ``m`` indices and return an
        ``(m, n)`` array.
    lambda_domain : tuple of float
        Declared domain of the welfare index; may be unbounded.  Closure of
        an open numeric domain is not attempted.
    vectorized : bool
        Whether ``evaluator`` accepts arrays of indices.
    name : str
        Label stored in result metadata.
    """

    n: int
    evaluator: Callable
    lambda_domain: tuple = (-math.inf, math.inf)
    vectorized: bool = False
    name: str = "custom"
    boundary_hint: Callable | None = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        lo, hi = (float(v) for v in self.lambda_domain)
        if not lo < hi:
            raise ValueError("lambda_domain must satisfy lower < upper")
        object.__setattr__(self, "lambda_domain", (lo, hi))

    def __call__(self, lam: float) -> FloatArray:
        out = np.asarray(self.evaluator(float(lam)), dtype=float)
        if out.shape != (self.n,):
            raise ValueError(f"virtual prices must have shape ({self.n},), got {out.shape}")
        return out

    def many(self, lams) -> FloatArray:
        """Virtual prices at several indices, shape ``(m, n)``."""
        lams = np.asarray(lams, dtype=float).reshape(-1)
        if self.vectorized:
            out = np.asarray(self.evaluator(lams), dtype=float)
            return out.reshape(lams.size, self.n)
        if lams.size == 0:
            return np.empty((0, self.n))
        return np.vstack([self(v) for v in lams])

    def boundary(self, c: int, price: float, anchor: float = 0.0) -> float:
        """Largest index ``lam`` with ``price <= p_tilde_c(lam)``.

        This is where alternative ``c`` at ``price`` stops being affordable
        within the opportunity set, i.e. the upper bound on welfare in that
        bundle.  Returns ``inf`` when the virtual price never falls below
        ``price`` on the domain.
        """
        lo, hi = self.lambda_domain

        def pred(lam):
            return price <= self(lam)[c]

        if self.boundary_hint is not None:
            guess = float(self.boundary_hint(c, price))
            if math.isfinite(guess):
                return _polish_boundary(pred, guess, lo, hi)
        try:
            return last_true(pred, anchor, lower=lo, upper=hi,
                             step=max(1.0, abs(anchor) * 1e-3))
        except NoSolutionError:
            if pred(min(max(anchor, lo), hi)):
                return math.inf
            raise

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "lambda_domain": list(self.lambda_domain)}


def _polish_boundary(pred, guess, lo, hi):
    """Move a closed-form boundary guess to the exact last feasible float.

    Brackets the switch between a feasible and an infeasible float with
    growing steps around ``guess``, then bisects until the two are adjacent.
    """
    x = min(max(guess, lo), hi)
    step = max(abs(x), 1.0) * 2.0 ** -52
    if pred(x):
        good, bad = x, None
        while bad is None:
            cand = min(good + step, hi)
            if pred(cand):
                if cand >= hi:
                    return float(hi)
                good = cand
                step *= 2.0
            else:
                bad = cand
    else:
        good, bad = None, x
        while good is None:
            cand = max(bad - step, lo)
            if not pred(cand):
                if cand <= lo:
                    return last_true(pred, guess, lower=lo, upper=hi)
                bad = cand
                step *= 2.0
            else:
                good = cand
    while np.nextafter(good, math.inf) < bad:
        mid = good + (bad - good) / 2.0
        if mid <= good or mid >= bad:
            mid = float(np.nextafter(good, math.inf))
        if pred(mid):
            good = mid
        else:
            bad = mid
    return float(good)


@dataclass(frozen=True)
class MMUSpec:
    """Money metric utility at fixed reference prices."""

    reference_prices: FloatArray
    income: float

    def __post_init__(self):
        object.__setattr__(self, "reference_prices",
                           as_price_vector(self.reference_prices, "reference_prices"))
        y = float(self.income)
        if not math.isfinite(y):
            raise ValueError("income must be finite")
        object.__setattr__(self, "income", y)

    @property
    def n(self) -> int:
        return int(self.reference_prices.size)

    def family(self) -> NOSFamily:
        ref = self.reference_prices.copy()
        y = self.income

        def evaluate(lam):
            lam = np.asarray(lam, dtype=float)
            if lam.ndim == 0:
                return (y - float(lam)) + ref
            return (y - lam)[:, None] + ref[None, :]

        def hint(c, price):
            return (y - price) + ref[c]

        return NOSFamily(n=self.n, evaluator=evaluate, vectorized=True,
                         name=f"mmu(ref={ref.tolist()}, y={y!r})", boundary_hint=hint)

    def to_dict(self) -> dict:
        return {"reference_prices": self.reference_prices.tolist(), "income": self.income}

    @classmethod
    def from_dict(cls, data: dict) -> "MMUSpec":
        return cls(reference_prices=data["reference_prices"], income=data["income"])


def mmu_virtual_prices(spec: MMUSpec, lam: float) -> FloatArray:
    """Virtual prices ``y - lam + p_ref`` of a money metric utility."""
    return (spec.income - float(lam)) + spec.reference_prices


def elementwise_min(p, q) -> FloatArray:
    """Componentwise minimum of two equally long price vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return np.minimum(p, q)


def validate_nos_family(family: NOSFamily, probe_grid, *, limit_span: float = 1e6) -> list[str]:
    """Spot-check the nesting conditions of a family on a probe grid.

    Returns a list of human readable violations; an empty list means no
    violation was detected.  Continuity and the limit conditions can only
    be checked approximately: limits are probed at ``limit_span`` beyond the
    grid (clipped to the declared domain).
    """
    grid = np.asarray(probe_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("probe grid is empty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("probe grid must be strictly increasing")
    lo, hi = family.lambda_domain
    if grid[0] < lo or grid[-1] > hi:
        raise ValueError("probe grid leaves the declared lambda domain")

    report = []
    values = family.many(grid)
    if not np.all(np.isfinite(values)):
        report.append("virtual prices are not finite on the probe grid")
        return report
    if grid.size > 1:
        steps = np.diff(values, axis=0)
        rising = np.flatnonzero(np.any(steps > 0, axis=0))
        for c in rising:
            report.append(f"monotonicity: virtual price of alternative {c} increases in lambda")
        flat = np.flatnonzero(np.all(steps >= 0, axis=1))
        if flat.size:
            report.append(
                f"monotonicity: no virtual price strictly decreases on {flat.size} probe interval(s)")

    left = max(grid[0] - limit_span, lo)
    right = min(grid[-1] + limit_span, hi)
    at_left = family(left)
    at_right = family(right)
    grow = at_left - values[0]
    if left < grid[0]:
        stalled = np.flatnonzero(grow <= 0)
        for c in stalled:
            report.append(f"limit: virtual price of alternative {c} does not grow without bound")
    else:
        report.append("limit: lambda domain is bounded below, virtual prices cannot diverge upward")
    if right > grid[-1]:
        if not np.any(at_right - values[-1] < 0):
            report.append("limit: no virtual price falls without bound")
    else:
        report.append("limit: lambda domain is bounded above, virtual prices cannot diverge downward")
    return report


@dataclass(frozen=True)
class DistributionCurve:
    """A CCDF or CDF sampled on a grid, with explicit mass points.

    ``mass_points`` is a tuple of ``(location, jump)`` pairs.  Values at
    grid points are the exact function values, so at a jump location the
    value reflects the closed side of the defining inequality.
    """

    grid: FloatArray
    values: FloatArray
    kind: str
    mass_points: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.kind not in ("ccdf", "cdf"):
            raise ValueError("kind must be 'ccdf' or 'cdf'")
        if grid.size == 0 or grid.shape != values.shape:
            raise ValueError("grid and values must be non-empty and of equal length")
        if not np.all(np.isfinite(grid)):
            raise ValueError("grid must be finite")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise ValueError("values must lie in [0, 1]")
        steps = np.diff(values)
        if self.kind == "ccdf" and np.any(steps > 0):
            raise ValueError("CCDF values must be non-increasing")
        if self.kind == "cdf" and np.any(steps < 0):
            raise ValueError("CDF values must be non-decreasing")
        masses = []
        for loc, jump in self.mass_points:
            loc, jump = float(loc), float(jump)
            if not 0 < jump <= 1:
                raise ValueError(f"mass point jump {jump} outside (0, 1]")
            if not grid[0] <= loc <= grid[-1]:
                raise ValueError(f"mass point location {loc} outside the grid range")
            masses.append((loc, jump))
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mass_points", tuple(sorted(masses)))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return self.grid.size

    def as_cdf(self) -> "DistributionCurve":
        """The same distribution with CDF orientation.

        For a level CCDF ``Pr[w <= W]`` this returns ``Pr[W < w]``.
        """
        if self.kind == "cdf":
            return self
        return DistributionCurve(self.grid, 1.0 - self.values, "cdf",
                                 self.mass_points, dict(self.metadata))

    def as_ccdf(self) -> "DistributionCurve":
        if self.kind == "ccdf":
            return self
        return DistributionCurve(self.grid, 1.0 - self.values, "ccdf",
                                 self.mass_points, dict(self.metadata))

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "mass_points": [[loc, jump] for loc, jump in self.mass_points],
            "metadata": _jsonable(self.metadata),
        }

    def to_csv(self, path, header: str = "grid") -> Path:
        """Write ``<header>,value`` rows and a ``.json`` sidecar next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([header, "value"])
            for g, v in zip(self.grid, self.values):
                writer.writerow([format_float(g), format_float(v)])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "DistributionCurve":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls(data[:, 0], data[:, 1], meta["kind"],
                   tuple(tuple(m) for m in meta["mass_points"]), meta.get("metadata", {}))


def format_float(x: float) -> str:
    """Round-trip exact, platform independent float formatting."""
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def jsonable(obj):
    """Convert numpy containers and non-finite floats into JSON-safe values."""
    return _jsonable(obj)


def default_grid(lo: float, hi: float, size: int = 512, jumps=()) -> FloatArray:
    """Evaluation grid over ``[lo, hi]`` padded by 10% of the span.

    Each known jump location ``m`` contributes the points ``m`` and
    ``m +/- eta`` with ``eta = 1e-7 * max(1, |m|)`` so the curve is
    resolved on both sides of the discontinuity.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("grid limits must be finite")
    if hi < lo:
        lo, hi = hi, lo
    span = hi - lo
    if span <= 0:
        span = max(1.0, abs(lo))
    pad = 0.1 * span
    base = np.linspace(lo - pad, hi + pad, int(size))
    extra = []
    for m in jumps:
        if math.isfinite(m):
            eta = 1e-7 * max(1.0, abs(m))
            extra.extend([m - eta, m, m + eta])
    return np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))
