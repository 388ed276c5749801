"""Count-interval partitions: UEP binary interval partition and two baselines.

A partition with ``m`` intervals is stored as ``m + 1`` ascending borders
``[0, t0, t1, ..., t_{m-2}, t_max]``. Interval ``i`` is ``[b_i, b_{i+1})``
except the last, which is closed so every count in ``[0, t_max]`` has a
class. Interval 0 is the background class ``[0, t0)``.

The UEP criterion equalises ``n_i * l_i`` (member count times interval
length) over the non-background intervals. :func:`partition_uep` finds the
common target ``l_bar`` by bisection; each probe runs :func:`greedy_sweep`,
which closes an interval as soon as ``(d_k - p) * n`` exceeds ``l_bar``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .density import CountCollection
from .errors import DataError, InfeasiblePartitionError, ParameterError

__all__ = [
    "Partition",
    "BipSearchState",
    "IntervalStats",
    "assign_intervals",
    "greedy_sweep",
    "partition_uep",
    "partition_uniform_len",
    "partition_uniform_num",
    "interval_stats",
    "default_epsilon",
    "MAX_ITERATIONS",
]

STRATEGIES = ("uep", "uniform-len", "uniform-num", "explicit")
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class Partition:
    borders: np.ndarray
    strategy: str = "explicit"
    epsilon: float | None = None
    final_l_bar: float | None = None

    def __post_init__(self):
        b = np.asarray(self.borders, dtype=np.float64).ravel()
        object.__setattr__(self, "borders", b)
        if b.size < 3:
            raise ParameterError(f"a partition needs at least 2 intervals (3 borders), got {b.size} borders")
        if b[0] != 0.0:
            raise ParameterError(f"first border must be 0, got {b[0]}")
        if not np.all(np.diff(b) > 0):
            i = int(np.flatnonzero(np.diff(b) <= 0)[0])
            raise InfeasiblePartitionError(f"borders not strictly ascending at {i}: {b[i]!r} >= {b[i + 1]!r}")
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")

    @property
    def m(self) -> int:
        return self.borders.size - 1

    @property
    def t0(self) -> float:
        return float(self.borders[1])

    @property
    def t_max(self) -> float:
        return float(self.borders[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.borders)

    def classify(self, values) -> np.ndarray:
        return assign_intervals(values, self.borders)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (self.strategy == other.strategy and np.array_equal(self.borders, other.borders)
                and self.epsilon == other.epsilon and self.final_l_bar == other.final_l_bar)


def assign_intervals(values, borders) -> np.ndarray:
    """Half-open interval index of each value; ``t_max`` itself joins the last interval.

    Values above ``t_max`` also map to the last interval, callers decide
    whether that is a clamp or an error.
    """
    borders = np.asarray(borders, dtype=np.float64)
    idx = np.searchsorted(borders, values, side="right") - 1
    return np.clip(idx, 0, borders.size - 2)


@dataclass
class BipSearchState:
    L: float
    H: float
    l_bar: float
    epsilon: float
    iterations: int = 0


def _sweep(d, t0: float, l_bar: float, limit: int | None = None):
    """Galloping form of the greedy sweep.

    Within one interval ``(d[k] - p) * (k - a + 1)`` never decreases in ``k``
    (both factors are non-negative and non-decreasing, and IEEE rounding is
    monotone), so the first trigger is found by exponential + binary search
    instead of a scan. Evaluates the exact same products as the plain loop.

    Returns ``(endpoints, p, n)`` where ``p`` and ``n`` are the loop state
    after the last sample. With ``limit`` the sweep stops once that many
    endpoints exist; ``p`` and ``n`` are then meaningless.
    """
    K = len(d)
    P = [t0]
    p = t0
    a = 0
    while a < K:
        if limit is not None and len(P) >= limit:
            return P, p, 0

        def fires(k):
            return (d[k] - p) * (k - a + 1) > l_bar

        if not fires(K - 1):
            return P, p, K - a
        step, lo = 1, a - 1
        hi = a
        while not fires(hi):
            lo = hi
            hi = min(a + 2 * step - 1, K - 1)
            step *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if fires(mid):
                hi = mid
            else:
                lo = mid
        p = d[hi]
        P.append(p)
        a = hi + 1
    return P, p, 0


def _filtered(t: CountCollection, t0: float) -> np.ndarray:
    if not t0 > 0:
        raise ParameterError(f"t0 must be positive, got {t0}")
    return t.at_least(t0)


def greedy_sweep(t: CountCollection, t0: float, l_bar: float) -> list[float]:
    """One pass of the BIP inner loop at target ``l_bar``.

    ``p`` starts at ``t0``; each sample increments ``n``; when
    ``(d_k - p) * n > l_bar`` the sample ``d_k`` becomes an endpoint and the
    state resets to ``p = d_k, n = 0``. Counts below ``t0`` are ignored.
    """
    if not l_bar > 0:
        raise ParameterError(f"l_bar must be positive, got {l_bar}")
    d = _filtered(t, t0)
    if d.size == 0:
        raise DataError(f"no counts >= t0={t0}")
    P, _, _ = _sweep(d.tolist(), t0, l_bar)
    return P


def default_epsilon(t: CountCollection) -> float:
    """Desk-scale stand-in for the full-dataset tolerance: ``1e-6 * K * t_max``."""
    return 1e-6 * t.K * t.t_max


def _assemble(P, t_max):
    P = list(P)
    if len(P) > 1 and P[-1] == t_max:
        P.pop()
    return P


def partition_uep(t: CountCollection, m: int = 25, t0: float = 1.6e-4, epsilon: float | None = None,
                  search: Sequence[float] | None = None) -> tuple[Partition, BipSearchState]:
    """Uniform Error Partition via binary interval partition.

    Bisection on ``l_bar``: too many endpoints raises the lower bound, too
    few lowers the upper bound, and exactly ``m - 1`` compares the tail
    interval's ``(t_max - p) * n`` with ``l_bar``. The returned partition is
    the sweep at the final upper bound when that yields ``m`` intervals,
    otherwise the sweep at the final lower bound.

    The default search range ``[0, (t_max - t0) * K_filtered]`` always
    contains the solution: at the upper end no interval can ever close.
    """
    if m < 2:
        raise ParameterError(f"m must be >= 2, got {m}")
    d = _filtered(t, t0)
    need = m - 1
    distinct = int(np.unique(d).size)
    if distinct < need:
        raise InfeasiblePartitionError(
            f"UEP with m={m} needs {need} distinct counts >= t0={t0}, found {distinct} (short by {need - distinct})"
        )
    eps = default_epsilon(t) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    t_max = float(d[-1])
    if search is None:
        L, H = 0.0, (t_max - t0) * d.size
    else:
        L, H = map(float, search)
        if not L < H:
            raise ParameterError(f"search range needs L < H, got [{L}, {H}]")
    dl = d.tolist()
    state = BipSearchState(L, H, (L + H) / 2, eps)
    while abs(H - L) > eps:
        if state.iterations >= MAX_ITERATIONS:
            raise InfeasiblePartitionError(
                f"binary search did not reach |H-L| <= {eps} within {MAX_ITERATIONS} iterations "
                f"(last range [{L}, {H}])"
            )
        l_bar = (L + H) / 2
        P, p, n = _sweep(dl, t0, l_bar, limit=m)
        if len(P) >= m:
            L = l_bar
        elif len(P) == m - 1:
            if (t_max - p) * n > l_bar:
                L = l_bar
            else:
                H = l_bar
        else:
            H = l_bar
        state.iterations += 1
        state.L, state.H, state.l_bar = L, H, l_bar

    tried = []
    for cand in (H, L):
        if not cand > 0:
            continue
        P = _assemble(_sweep(dl, t0, cand, limit=m + 1)[0], t_max)
        tried.append((cand, len(P)))
        if len(P) == m - 1:
            state.l_bar = cand
            part = Partition(np.array([0.0, *P, t_max]), "uep", eps, cand)
            return part, state
    raise InfeasiblePartitionError(
        f"no l_bar near the converged range gives {m} intervals; "
        + ", ".join(f"l_bar={c!r} -> {k + 1} intervals" for c, k in tried)
    )


def partition_uniform_len(t: CountCollection, m: int = 25, t0: float = 1.6e-4) -> Partition:
    """Background ``[0, t0)`` plus ``m - 1`` equal-length intervals up to ``t_max``."""
    if m < 2:
        raise ParameterError(f"m must be >= 2, got {m}")
    if not t0 > 0:
        raise ParameterError(f"t0 must be positive, got {t0}")
    if not t.t_max > t0:
        raise InfeasiblePartitionError(f"t_max={t.t_max} must exceed t0={t0}")
    return Partition(np.concatenate([[0.0], np.linspace(t0, t.t_max, m)]), "uniform-len")


def partition_uniform_num(t: CountCollection, m: int = 25, t0: float = 1.6e-4) -> Partition:
    """Background plus ``m - 1`` groups holding (nearly) equal sample counts.

    Groups are consecutive runs of the sorted counts ``>= t0``; leftover
    samples go to the earliest groups. Each inner border is the first value
    of the following group.
    """
    if m < 2:
        raise ParameterError(f"m must be >= 2, got {m}")
    d = _filtered(t, t0)
    if d.size < m - 1:
        raise InfeasiblePartitionError(f"uniform-num with m={m} needs {m - 1} counts >= t0, found {d.size}")
    sizes = np.full(m - 1, d.size // (m - 1))
    sizes[: d.size % (m - 1)] += 1
    starts = np.cumsum(sizes)[:-1]
    borders = np.concatenate([[0.0, t0], d[starts], [d[-1]]])
    try:
        return Partition(borders, "uniform-num")
    except InfeasiblePartitionError as exc:
        raise InfeasiblePartitionError(f"uniform-num with m={m}: duplicate group borders ({exc})") from None


@dataclass(frozen=True)
class IntervalStats:
    n: np.ndarray
    length: np.ndarray
    sample_mean: np.ndarray
    sample_min: np.ndarray
    sample_max: np.ndarray

    @property
    def nl(self) -> np.ndarray:
        return self.n * self.length

    @property
    def empty(self) -> np.ndarray:
        return self.n == 0

    def nl_cv(self, skip_background: bool = True) -> float:
        """Coefficient of variation of ``n_i * l_i`` (population std / mean)."""
        v = self.nl[1:] if skip_background else self.nl
        return float(np.std(v) / np.mean(v))


def interval_stats(t: CountCollection, p: Partition) -> IntervalStats:
    c = t.counts
    if c.size and c[0] < 0:
        raise DataError(f"negative count {c[0]!r} in collection")
    if c.size and c[-1] > p.t_max:
        raise DataError(f"count {c[-1]!r} exceeds the partition's t_max {p.t_max!r}")
    # the collection is sorted, so each interval is a contiguous slice
    edges = np.searchsorted(c, p.borders, side="left")
    edges[-1] = c.size
    m = p.m
    mean = np.full(m, np.nan)
    lo = np.full(m, np.nan)
    hi = np.full(m, np.nan)
    for i in range(m):
        x = c[edges[i]:edges[i + 1]]
        if x.size:
            mean[i] = x.sum() / x.size
            lo[i], hi[i] = x[0], x[-1]
    return IntervalStats(np.diff(edges), p.lengths, mean, lo, hi)
