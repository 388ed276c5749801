"""Encoding local counts to class maps, decoding them back, and error accounting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .density import LocalCountMap
from .errors import DataError
from .partition import Partition
from .proxies import IphPair, ProxyTable

__all__ = [
    "ClassMap",
    "ErrorReport",
    "encode_class_map",
    "decode_count_map",
    "decode_iph",
    "discretization_error",
    "error_decomposition",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassMap:
    image_id: str
    values: np.ndarray
    m: int
    clamped: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size and (v.min() < 0 or v.max() >= self.m):
            raise DataError(f"{self.image_id}: class index outside [0, {self.m})")
        object.__setattr__(self, "values", v.astype(np.int64, copy=False))

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, ClassMap):
            return NotImplemented
        return (self.image_id == other.image_id and self.m == other.m
                and np.array_equal(self.values, other.values))


def encode_class_map(lc: LocalCountMap, p: Partition) -> ClassMap:
    """Class of each patch by half-open interval membership.

    Counts above the partition's ``t_max`` go to the last class and are
    tallied in ``ClassMap.clamped``.
    """
    v = lc.values
    if v.size and v.min() < 0:
        raise DataError(f"{lc.image_id}: negative local count {v.min()!r}")
    clamped = int(np.count_nonzero(v > p.t_max))
    if clamped:
        logger.warning("%s: %d patch counts above t_max=%g clamped to the last class", lc.image_id, clamped, p.t_max)
    return ClassMap(lc.image_id, p.classify(v), p.m, clamped)


def _check_monotone(proxies: ProxyTable):
    if np.any(np.diff(proxies.proxies) < 0):
        raise DataError(f"{proxies.method} proxies are not non-decreasing: {proxies.proxies.tolist()}")


def decode_count_map(c: ClassMap, proxies: ProxyTable, patch_size: int = 8) -> LocalCountMap:
    if c.m > proxies.m or (c.values.size and c.values.max() >= proxies.m):
        raise DataError(f"{c.image_id}: class map uses {c.m} classes, proxy table has {proxies.m}")
    _check_monotone(proxies)
    return LocalCountMap(c.image_id, patch_size, proxies.proxies[c.values])


def decode_iph(c0: ClassMap, c1: ClassMap, pair: IphPair, patch_size: int = 8) -> LocalCountMap:
    """Average the two heads' decoded counts cell by cell."""
    if c0.shape != c1.shape:
        raise DataError(f"head class maps differ in shape: {c0.shape} vs {c1.shape}")
    d0 = decode_count_map(c0, pair.head0[1], patch_size).values
    d1 = decode_count_map(c1, pair.head1[1], patch_size).values
    return LocalCountMap(c0.image_id, patch_size, (d0 + d1) / 2)


@dataclass
class ErrorReport:
    """Per-image and per-interval error accounting.

    Signed errors follow ``truth - prediction``. ``misclass`` holds, per
    true interval, the summed ``prediction - proxy_of_true_interval``, i.e.
    the part of the error caused by wrong classes; a single patch moved
    from interval ``i`` to ``j`` contributes ``delta_j - delta_i``.
    """

    image_ids: list[str]
    signed: np.ndarray
    n: np.ndarray
    length: np.ndarray
    signed_sum: np.ndarray
    abs_sum: np.ndarray
    misclass: np.ndarray
    clamped: int = 0
    kind: str = "decomposition"
    meta: dict = field(default_factory=dict)

    @property
    def absolute(self) -> np.ndarray:
        return np.abs(self.signed)

    @property
    def mae(self) -> float:
        return float(np.mean(self.absolute))

    @property
    def mse(self) -> float:
        """Root of the mean squared image error (the usual "MSE" of crowd-counting benchmarks)."""
        return float(np.sqrt(np.mean(self.signed ** 2)))

    mean_abs = mae

    @property
    def pooled_abs(self) -> float:
        return float(abs(np.sum(self.signed)))

    @property
    def total_signed(self) -> float:
        return float(np.sum(self.signed))

    @property
    def nl(self) -> np.ndarray:
        return self.n * self.length

    @property
    def class_mae(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.abs_sum / np.maximum(self.n, 1), np.nan)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "images": len(self.image_ids),
            "mae": self.mae,
            "mse": self.mse,
            "mean_abs_error": self.mean_abs,
            "pooled_abs_error": self.pooled_abs,
            "total_signed": self.total_signed,
            "clamped": self.clamped,
        }


def _accumulate(truth: Sequence[LocalCountMap], preds: Sequence[np.ndarray], p: Partition,
                proxies: ProxyTable, kind: str) -> ErrorReport:
    if not truth:
        raise DataError("error accounting needs at least one image")
    m = p.m
    n = np.zeros(m, dtype=np.int64)
    signed_sum = np.zeros(m)
    abs_sum = np.zeros(m)
    misclass = np.zeros(m)
    signed = np.zeros(len(truth))
    clamped = 0
    for k, (lc, pred) in enumerate(zip(truth, preds)):
        d = lc.values
        if d.shape != pred.shape:
            raise DataError(f"{lc.image_id}: prediction shape {pred.shape} != truth shape {d.shape}")
        if d.size and d.min() < 0:
            raise DataError(f"{lc.image_id}: negative local count")
        clamped += int(np.count_nonzero(d > p.t_max))
        cls = p.classify(d).ravel()
        diff = (d - pred).ravel()
        signed[k] = diff.sum()
        n += np.bincount(cls, minlength=m)
        signed_sum += np.bincount(cls, weights=diff, minlength=m)
        abs_sum += np.bincount(cls, weights=np.abs(diff), minlength=m)
        misclass += np.bincount(cls, weights=pred.ravel() - proxies.proxies[cls], minlength=m)
    return ErrorReport([lc.image_id for lc in truth], signed, n, p.lengths, signed_sum, abs_sum,
                       misclass, clamped, kind)


def discretization_error(truth: Sequence[LocalCountMap], p: Partition, proxies: ProxyTable) -> ErrorReport:
    """Error left when every patch is classified correctly.

    Per image this is ``|sum_k (d_k - delta_class(d_k))|``; ``mae`` averages
    it over images with equal weight, ``pooled_abs`` treats all images as
    one.
    """
    _check_monotone(proxies)
    preds = [proxies.proxies[p.classify(lc.values)] for lc in truth]
    return _accumulate(list(truth), preds, p, proxies, "discretization")


def error_decomposition(pred: Sequence[ClassMap | LocalCountMap], truth: Sequence[LocalCountMap],
                        p: Partition, proxies: ProxyTable) -> ErrorReport:
    """Group prediction errors by the true interval of each patch.

    ``pred`` items may be class maps (decoded with ``proxies``) or already
    decoded count maps, e.g. IPH averages.
    """
    truth = list(truth)
    pred = list(pred)
    if len(pred) != len(truth):
        raise DataError(f"{len(pred)} predictions for {len(truth)} truth maps")
    values = []
    for pr, lc in zip(pred, truth):
        if pr.image_id != lc.image_id:
            raise DataError(f"image order mismatch: {pr.image_id} vs {lc.image_id}")
        if isinstance(pr, ClassMap):
            values.append(decode_count_map(pr, proxies, lc.patch_size).values)
        else:
            values.append(np.asarray(pr.values, dtype=np.float64))
    return _accumulate(truth, values, p, proxies, "decomposition")
