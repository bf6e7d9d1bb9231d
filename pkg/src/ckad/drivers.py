"""Divide-and-conquer checkpointing drivers for the reverse AD operator.

All drivers work against a *pipeline* object exposing the host-level
interruption interface:

* ``primops(f, x)``        — measure the step length of a run
* ``interrupt(f, x, l)``   — advance ``l`` steps, returning a capsule
* ``make_I(f, l)``         — wrap ``f`` to interrupt itself after ``l`` steps
* ``make_R()``             — the capsule-resuming closure
* ``reverse_base(f, x, ybar)`` — plain taping reverse mode

A driver reverses an ``L``-step computation by repeatedly splitting the
execution interval at a point chosen by :func:`mid`: it advances a capsule
to the split point, reverses the right part first (recursively), and then
reverses the left part against the cotangent coming out of the right part.
Leaves (intervals no longer than ``alpha`` steps, or intervals whose
snapshot/pass budgets are exhausted) are reversed by ordinary taping.

Split budgets ``delta`` (remaining snapshot levels) and ``tau`` (remaining
re-advancement passes) follow the classic binomial checkpointing
accounting: the right part of a split costs a snapshot level, the left
part costs a pass.  ``eta(d, t) = C(d+t, t)`` is the maximal number of
leaf segments reversible with those budgets, and :func:`pick` derives the
missing budget from a termination criterion (fixed space, fixed time, or
logarithmic growth of both).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from .metrics import METER

INF_BUDGET = math.inf

#: Smallest permitted leaf size.  Interruption budgets in the drivers are
#: never smaller than ``alpha // 2``; keeping ``alpha >= 8`` guarantees
#: every budget covers the few bookkeeping steps an interrupting or
#: resuming wrapper needs before its count resets.
MIN_ALPHA = 8
DEFAULT_ALPHA = 64


# ---------------------------------------------------------------------------
# termination criteria
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedSpace:
    d: int


@dataclass(frozen=True)
class FixedTime:
    t: int


@dataclass(frozen=True)
class Logarithmic:
    pass


def parse_criterion(text: str):
    if text == "log":
        return Logarithmic()
    if text.startswith("fixed-space="):
        return FixedSpace(int(text.split("=", 1)[1]))
    if text.startswith("fixed-time="):
        return FixedTime(int(text.split("=", 1)[1]))
    raise ValueError(f"unknown criterion: {text!r}")


def criterion_name(criterion) -> str:
    if isinstance(criterion, Logarithmic):
        return "log"
    if isinstance(criterion, FixedSpace):
        return f"fixed-space={criterion.d}"
    if isinstance(criterion, FixedTime):
        return f"fixed-time={criterion.t}"
    return str(criterion)


def eta(d: int, t: int) -> int:
    """Maximal number of leaf segments reversible with ``d`` snapshot
    levels and ``t`` re-advancement passes."""
    if d < 0 or t < 0:
        return 0
    return math.comb(d + t, t)


def pick(criterion, n: int, alpha: int = DEFAULT_ALPHA):
    """Derive the split budgets (d, t) for an ``n``-step run so that
    ``eta(d, t) * alpha >= n``."""
    alpha = max(alpha, MIN_ALPHA)
    if isinstance(criterion, FixedSpace):
        d = criterion.d
        if d < 1:
            raise ValueError("fixed-space criterion needs d >= 1")
        t = 1
        while eta(d, t) * alpha < n:
            t += 1
        return d, t
    if isinstance(criterion, FixedTime):
        t = criterion.t
        if t < 1:
            raise ValueError("fixed-time criterion needs t >= 1")
        d = 1
        while eta(d, t) * alpha < n:
            d += 1
        return d, t
    if isinstance(criterion, Logarithmic):
        d = 1
        while eta(d, d) * alpha < n:
            d += 1
        return d, d
    raise ValueError(f"unknown criterion: {criterion!r}")


# ---------------------------------------------------------------------------
# split-point selection
# ---------------------------------------------------------------------------

_DP_LIMIT = 160  # segment counts up to this use the exact schedule DP
_BUDGET_CAP = 60  # stand-in for an unlimited split budget


def _capped(b) -> int:
    return _BUDGET_CAP if b == INF_BUDGET or b > _BUDGET_CAP else int(b)


@lru_cache(maxsize=None)
def _r2(L: int, d: int, t: int):
    """Minimal recompute (in segments) to reverse ``L`` segments with both
    budgets enforced, mirroring the drivers' recursion: the right part of
    a split costs a snapshot level, the left part a pass."""
    if L <= 1:
        return 0
    if d == 0 or t == 0:
        return math.inf
    best = math.inf
    for m in range(1, L):
        right = _r2(L - m, d - 1, t)
        if right is math.inf:
            continue
        left = _r2(m, d, t - 1)
        if left is math.inf:
            continue
        c = m + right + left
        if c < best:
            best = c
    return best


def _binomial_lambda(L: int, delta, tau) -> int:
    """Number of leading segments to advance past when splitting ``L``
    segments binomially with budgets (delta, tau)."""
    d = _capped(delta)
    t = _capped(tau)
    if L <= _DP_LIMIT:
        best_m, best_c = None, math.inf
        for m in range(1, L):
            right = _r2(L - m, d - 1, t)
            if right is math.inf:
                continue
            left = _r2(m, d, t - 1)
            if left is math.inf:
                continue
            c = m + right + left
            if c < best_c:
                best_c, best_m = c, m
        if best_m is not None:
            return best_m
        # infeasible budgets: fall through to the clamped closed form
    m = L - eta(d - 1, t)
    lo, hi = 1, min(eta(d, t - 1), L - 1)
    if m < lo:
        m = lo
    elif m > hi:
        m = hi
    return m


def mid(delta, tau, sigma: int, phi: int, split: str = "bisection",
        alpha: int = 1) -> int:
    """Split point for the execution interval [sigma, phi).

    Bisection puts the split at ``sigma + floor((phi - sigma) / 2)`` (the
    left part takes the floor, the right part the ceiling).  The binomial
    split works in segments of ``alpha`` steps (the last segment may be
    short) and advances past the number of segments that minimizes total
    recompute under the budgets.
    """
    length = phi - sigma
    if length < 2:
        raise ValueError("cannot split an interval of fewer than 2 steps")
    if split == "bisection":
        return sigma + length // 2
    if split == "binomial":
        segments = -(-length // alpha)
        if segments < 2:
            return sigma + length // 2
        lam = _binomial_lambda(segments, delta, tau)
        return sigma + lam * alpha
    raise ValueError(f"unknown split strategy: {split!r}")


def schedule_oracle(L: int, d: int) -> float:
    """Minimal total recompute (in segments) to reverse ``L`` segments with
    at most ``d`` simultaneously live snapshot levels and unlimited
    re-advancement passes.  Dynamic program:
    r(1, d) = 0;  r(L, 0) = inf for L > 1;
    r(L, d) = min over 1 <= m < L of  m + r(L - m, d - 1) + r(m, d).
    """
    return _oracle(L, d)


@lru_cache(maxsize=None)
def _oracle(L: int, d: int):
    if L <= 1:
        return 0
    if d == 0:
        return math.inf
    best = math.inf
    for m in range(1, L):
        right = _oracle(L - m, d - 1)
        if right is math.inf:
            continue
        c = m + right + _oracle(m, d)
        if c < best:
            best = c
    return best


def _dec(b):
    return b if b == INF_BUDGET else b - 1


# ---------------------------------------------------------------------------
# the drivers
# ---------------------------------------------------------------------------

def checkpoint_reverse_bisect(P, f, x, y_cotangent, alpha: int = DEFAULT_ALPHA,
                              length: int | None = None):
    """Reverse via pure binary bisection with unlimited budgets: intervals
    are halved until they are at most ``alpha`` steps long."""
    alpha = max(alpha, MIN_ALPHA)
    if length is None:
        length = P.primops(f, x)
    result = _bisect(P, f, x, y_cotangent, alpha, 0, length)
    METER.done()
    return result


def _bisect(P, f, x, ybar, alpha, base, phi):
    m = METER
    length = phi - base
    if length <= alpha:
        m.leaf(base, phi)
        return P.reverse_base(f, x, ybar)
    half = length // 2
    sid = m.snapshot(base)
    z = P.interrupt(f, x, half)
    m.advance(base, base + half)
    y, zbar = _bisect(P, P.make_R(), z, ybar, alpha, base + half, phi)
    m.release(sid, base)
    _z, xbar = _bisect(P, P.make_I(f, half), x, zbar, alpha, base,
                       base + half)
    return y, xbar


def checkpoint_reverse_binary(P, f, x, y_cotangent,
                              alpha: int = DEFAULT_ALPHA,
                              delta=INF_BUDGET, tau=INF_BUDGET,
                              split: str = "bisection",
                              length: int | None = None):
    """Generalized binary checkpointing with snapshot budget ``delta`` and
    pass budget ``tau``."""
    alpha = max(alpha, MIN_ALPHA)
    if length is None:
        length = P.primops(f, x)
    result = _binary(P, f, x, y_cotangent, alpha, delta, tau, split,
                     0, length)
    METER.done()
    return result


def _binary(P, f, x, ybar, alpha, delta, tau, split, base, phi):
    m = METER
    length = phi - base
    if length <= alpha or delta == 0 or tau == 0:
        m.leaf(base, phi)
        return P.reverse_base(f, x, ybar)
    kappa = mid(delta, tau, base, phi, split, alpha)
    sid = m.snapshot(base)
    z = P.interrupt(f, x, kappa - base)
    m.advance(base, kappa)
    y, zbar = _binary(P, P.make_R(), z, ybar, alpha, _dec(delta), tau,
                      split, kappa, phi)
    m.release(sid, base)
    _z, xbar = _binary(P, P.make_I(f, kappa - base), x, zbar, alpha,
                       delta, _dec(tau), split, base, kappa)
    return y, xbar


def checkpoint_reverse_treeverse(P, f, x, y_cotangent,
                                 alpha: int = DEFAULT_ALPHA,
                                 delta=INF_BUDGET, tau=INF_BUDGET,
                                 split: str = "bisection",
                                 length: int | None = None):
    """Checkpointing in the style of the classic treeverse recursion: one
    snapshot is held per level while a loop of right-subtree reversals
    walks the interval from right to left."""
    alpha = max(alpha, MIN_ALPHA)
    if length is None:
        length = P.primops(f, x)
    result = _treeverse(P, f, x, y_cotangent, alpha, delta, tau, split,
                        0, 0, length, length)
    METER.done()
    return result


def _treeverse(P, f, x, ybar, alpha, delta, tau, split, beta, sigma, phi,
               end):
    if sigma > beta:
        z = P.interrupt(f, x, sigma - beta)
        METER.advance(beta, sigma)
        return _tv_first(P, P.make_R(), z, ybar, alpha, _dec(delta), tau,
                         split, beta, sigma, phi, end)
    return _tv_first(P, f, x, ybar, alpha, delta, tau, split, beta, sigma,
                     phi, end)


def _tv_leaf(P, f, x, ybar, sigma, phi, end):
    METER.leaf(sigma, phi)
    if phi == end:
        # the rightmost leaf runs to natural completion
        return P.reverse_base(f, x, ybar)
    return P.reverse_base(P.make_I(f, phi - sigma), x, ybar)


def _tv_first(P, f, x, ybar, alpha, delta, tau, split, beta, sigma, phi,
              end):
    m = METER
    if phi - sigma > alpha and delta != 0 and tau != 0:
        sid = m.snapshot(sigma)
        kappa = mid(delta, tau, sigma, phi, split, alpha)
        y, zbar = _treeverse(P, f, x, ybar, alpha, delta, tau, split,
                             sigma, kappa, phi, end)
        return _tv_rest(P, f, x, zbar, alpha, y, delta, _dec(tau), split,
                        sid, sigma, kappa, end)
    return _tv_leaf(P, f, x, ybar, sigma, phi, end)


def _tv_rest(P, f, x, ybar, alpha, y, delta, tau, split, sid, sigma, phi,
             end):
    m = METER
    if phi - sigma > alpha and delta != 0 and tau != 0:
        kappa = mid(delta, tau, sigma, phi, split, alpha)
        _y, zbar = _treeverse(P, f, x, ybar, alpha, delta, tau, split,
                              sigma, kappa, phi, end)
        return _tv_rest(P, f, x, zbar, alpha, y, delta, _dec(tau), split,
                        sid, sigma, kappa, end)
    m.release(sid, sigma)
    _y, xbar = _tv_leaf(P, f, x, ybar, sigma, phi, end)
    return y, xbar


# ---------------------------------------------------------------------------
# configuration and dispatch
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    mode: str = "checkpoint"           # "checkpoint" | "reverse"
    algorithm: str = "binary"          # "binary" | "treeverse" | "bisect"
    split: str = "bisection"           # "bisection" | "binomial"
    criterion: object = field(default_factory=Logarithmic)
    alpha: int = DEFAULT_ALPHA
    known_length: int | None = None    # reuse a previously measured length
    last_length: int | None = None     # filled in by run_checkpoint


def run_checkpoint(P, f, x, y_cotangent, config: RunConfig | None = None):
    """Carry out the checkpointing reverse operator per ``config``."""
    if config is None:
        config = RunConfig()
    if config.mode == "reverse":
        length = config.known_length
        if length is None:
            length = P.primops(f, x)
        config.last_length = length
        return P.reverse_base(f, x, y_cotangent)
    alpha = max(config.alpha, MIN_ALPHA)
    length = config.known_length
    if length is None:
        length = P.primops(f, x)
    config.last_length = length
    if config.algorithm == "bisect":
        return checkpoint_reverse_bisect(P, f, x, y_cotangent, alpha,
                                         length=length)
    if length <= alpha:
        d = t = 1
    else:
        d, t = pick(config.criterion, length, alpha)
    if config.algorithm == "binary":
        return checkpoint_reverse_binary(P, f, x, y_cotangent, alpha,
                                         d, t, config.split, length=length)
    if config.algorithm == "treeverse":
        return checkpoint_reverse_treeverse(P, f, x, y_cotangent, alpha,
                                            d, t, config.split,
                                            length=length)
    raise ValueError(f"unknown algorithm: {config.algorithm!r}")
