"""Bracketing and bisection on monotone predicates, scalar and vectorised.

All solvers here look for the boundary of a set of the form
``{x : pred(x)}`` where ``pred`` is true to the left of the boundary and
false to the right.  The returned value is always a point where the
predicate holds, so indicator statements evaluated at the result stay on
the correct side of the boundary.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import NoSolutionError

MAX_DOUBLINGS = 200


def last_true(pred, anchor, *, lower=-math.inf, upper=math.inf, step=1.0,
              tol=1e-10, max_doublings=MAX_DOUBLINGS):
    """Largest ``x`` in ``[lower, upper]`` with ``pred(x)`` true.

    ``pred`` must be monotone (true, then false).  The bracket is grown
    geometrically from ``anchor``.  Returns ``upper`` when the predicate
    holds on the whole domain and raises :class:`NoSolutionError` when it
    holds nowhere or no bracket is found within ``max_doublings``.
    """
    anchor = min(max(anchor, lower), upper)
    if pred(anchor):
        lo, hi = anchor, None
        width = step
        for _ in range(max_doublings):
            cand = min(anchor + width, upper)
            if not pred(cand):
                hi = cand
                break
            lo = cand
            if cand == upper:
                return upper
            width *= 2.0
        if hi is None:
            raise NoSolutionError("predicate never turns false while expanding upward")
    else:
        lo, hi = None, anchor
        width = step
        for _ in range(max_doublings):
            cand = max(anchor - width, lower)
            if pred(cand):
                lo = cand
                break
            hi = cand
            if cand == lower:
                raise NoSolutionError("predicate is false on the whole domain")
            width *= 2.0
        if lo is None:
            raise NoSolutionError("predicate never turns true while expanding downward")
    while hi - lo > tol:
        mid = lo + 0.5 * (hi - lo)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def last_true_batch(pred, anchor, *, lower=-math.inf, upper=math.inf, step=1.0,
                    tol=1e-10, max_doublings=MAX_DOUBLINGS):
    """Vectorised :func:`last_true`.

    ``pred(x, idx)`` receives candidate points for the elements selected by
    the integer index array ``idx`` and returns a boolean array of the same
    length.  ``anchor`` is an array (one start per element).
    """
    anchor = np.clip(np.asarray(anchor, dtype=float), lower, upper)
    m = anchor.shape[0]
    everything = np.arange(m)
    ok = pred(anchor, everything)
    lo = np.where(ok, anchor, np.nan)
    hi = np.where(ok, np.nan, anchor)
    at_upper = np.zeros(m, dtype=bool)

    # grow upward for elements feasible at the anchor
    todo = np.flatnonzero(ok)
    width = step
    for _ in range(max_doublings):
        if todo.size == 0:
            break
        cand = np.minimum(anchor[todo] + width, upper)
        res = pred(cand, todo)
        hi[todo[~res]] = cand[~res]
        lo[todo[res]] = cand[res]
        capped = res & (cand == upper)
        at_upper[todo[capped]] = True
        todo = todo[res & ~capped]
        width *= 2.0
    if todo.size:
        raise NoSolutionError(f"{todo.size} elements never turn infeasible")

    # grow downward for elements infeasible at the anchor
    todo = np.flatnonzero(~ok)
    width = step
    for _ in range(max_doublings):
        if todo.size == 0:
            break
        cand = np.maximum(anchor[todo] - width, lower)
        res = pred(cand, todo)
        lo[todo[res]] = cand[res]
        hi[todo[~res]] = cand[~res]
        if np.any(~res & (cand == lower)):
            raise NoSolutionError("predicate is false on the whole domain for some element")
        todo = todo[~res]
        width *= 2.0
    if todo.size:
        raise NoSolutionError(f"{todo.size} elements never turn feasible")

    active = np.flatnonzero(~at_upper)
    lo[at_upper] = upper
    while active.size:
        gap = hi[active] - lo[active]
        active = active[gap > tol]
        if active.size == 0:
            break
        mid = lo[active] + 0.5 * (hi[active] - lo[active])
        stuck = (mid <= lo[active]) | (mid >= hi[active])
        active, mid = active[~stuck], mid[~stuck]
        if active.size == 0:
            break
        res = pred(mid, active)
        lo[active[res]] = mid[res]
        hi[active[~res]] = mid[~res]
    return lo
