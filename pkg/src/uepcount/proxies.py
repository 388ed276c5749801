"""Count proxies per interval and the interleaved second-head partition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import CountCollection
from .errors import DataError
from .partition import Partition

__all__ = [
    "ProxyTable",
    "IphPair",
    "PROXY_METHODS",
    "compute_mcp",
    "compute_midpoint_proxies",
    "compute_sample_median_proxies",
    "compute_proxies",
    "derive_iph",
]

PROXY_METHODS = ("mcp", "midpoint", "sample-median")


@dataclass(frozen=True)
class ProxyTable:
    proxies: np.ndarray
    method: str
    empty: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "proxies", np.asarray(self.proxies, dtype=np.float64).ravel())
        object.__setattr__(self, "empty", np.asarray(self.empty, dtype=bool).ravel())
        if self.empty.shape != self.proxies.shape:
            raise DataError("proxy and empty-flag arrays differ in length")

    @property
    def m(self) -> int:
        return self.proxies.size

    def __eq__(self, other):
        if not isinstance(other, ProxyTable):
            return NotImplemented
        return (self.method == other.method and np.array_equal(self.proxies, other.proxies)
                and np.array_equal(self.empty, other.empty))


@dataclass(frozen=True)
class IphPair:
    head0: tuple[Partition, ProxyTable]
    head1: tuple[Partition, ProxyTable]


def _members(t: CountCollection, p: Partition):
    c = t.counts
    edges = np.searchsorted(c, p.borders, side="left")
    edges[-1] = c.size
    return [c[edges[i]:edges[i + 1]] for i in range(p.m)]


def _midpoints(p: Partition) -> np.ndarray:
    b = p.borders
    return (b[:-1] + b[1:]) / 2


def _per_interval(t: CountCollection, p: Partition, method: str, reduce) -> ProxyTable:
    mid = _midpoints(p)
    out = mid.copy()
    empty = np.zeros(p.m, dtype=bool)
    for i, x in enumerate(_members(t, p)):
        if x.size:
            out[i] = reduce(x)
        else:
            empty[i] = True
    # a mean of values inside [b_i, b_i+1] can round one ulp past a border
    out = np.clip(out, p.borders[:-1], p.borders[1:])
    return ProxyTable(out, method, empty)


def compute_mcp(t: CountCollection, p: Partition, background_zero: bool = False) -> ProxyTable:
    """Mean count proxies: each interval's proxy is the mean of its members.

    On the fitting collection this makes the signed discretization error
    vanish interval by interval. Empty intervals fall back to the midpoint
    and are flagged. ``background_zero`` pins the background proxy to 0.
    """
    table = _per_interval(t, p, "mcp", lambda x: x.sum() / x.size)
    if background_zero:
        proxies = table.proxies.copy()
        proxies[0] = 0.0
        table = ProxyTable(proxies, "mcp", table.empty)
    return table


def compute_midpoint_proxies(p: Partition) -> ProxyTable:
    return ProxyTable(_midpoints(p), "midpoint", np.zeros(p.m, dtype=bool))


def compute_sample_median_proxies(t: CountCollection, p: Partition) -> ProxyTable:
    # even-sized intervals take the mean of the two middle samples
    return _per_interval(t, p, "sample-median", np.median)


def compute_proxies(t: CountCollection, p: Partition, method: str = "mcp",
                    background_zero: bool = False) -> ProxyTable:
    if method == "mcp":
        return compute_mcp(t, p, background_zero)
    if method == "midpoint":
        table = compute_midpoint_proxies(p)
    elif method == "sample-median":
        table = compute_sample_median_proxies(t, p)
    else:
        raise ValueError(f"unknown proxy method {method!r}")
    if background_zero:
        proxies = table.proxies.copy()
        proxies[0] = 0.0
        table = ProxyTable(proxies, table.method, table.empty)
    return table


def derive_iph(t: CountCollection, head0: tuple[Partition, ProxyTable]) -> IphPair:
    """Build the interleaved head: its borders are head0's non-background proxies.

    Head1 keeps the background interval ``[0, t0)`` and uses
    ``[0, t0, delta_1, ..., delta_{m-1}, t_max]`` as borders, so it has
    ``m + 1`` intervals. Its proxies are MCP means over ``t``.
    """
    p0, prox0 = head0
    if prox0.m != p0.m:
        raise DataError(f"proxy table has {prox0.m} entries for a {p0.m}-interval partition")
    cand = np.concatenate([[0.0, p0.t0], prox0.proxies[1:], [p0.t_max]])
    bad = np.flatnonzero(np.diff(cand) <= 0)
    if bad.size:
        i = int(bad[0])
        raise DataError(f"interleaved borders collide: {cand[i]!r} (index {i}) >= {cand[i + 1]!r} (index {i + 1})")
    p1 = Partition(cand, "explicit")
    return IphPair(head0=(p0, prox0), head1=(p1, compute_mcp(t, p1)))
