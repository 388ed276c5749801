"""Imperfect-classifier simulation and partition/proxy comparisons.

A trained patch classifier mostly confuses neighbouring intervals. The
noise models here perturb ground-truth class maps accordingly, using the
counter-based generator in :mod:`uepcount.rng` so that, for a given seed,
every strategy sees exactly the same per-cell random decisions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .density import CountCollection, LocalCountMap
from .errors import DataError, InfeasiblePartitionError, ParameterError
from .partition import (Partition, interval_stats, partition_uep, partition_uniform_len,
                        partition_uniform_num)
from .proxies import IphPair, ProxyTable, compute_mcp, compute_proxies, derive_iph
from .quantize import (ClassMap, ErrorReport, decode_count_map, decode_iph, encode_class_map,
                       error_decomposition)
from .rng import uniforms

__all__ = [
    "NoiseModel",
    "Cell",
    "ComparisonMatrix",
    "IphReport",
    "simulate_classifier",
    "evaluate_counts",
    "fit_partition",
    "compare_strategies",
    "iph_ablation",
]

STRATEGY_NAMES = ("uep", "uniform-len", "uniform-num")


@dataclass(frozen=True)
class NoiseModel:
    """``adjacent``: move one class up or down with total probability ``p``.
    ``geometric``: with probability ``p`` hop ``h >= 1`` classes, where
    ``P(h) = (1 - decay) * decay**(h - 1)``; the landing class is clamped.
    Classes at either end always move inward.
    """

    kind: str = "adjacent"
    p: float = 0.1
    decay: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adjacent", "geometric"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"noise probability must be in [0, 1], got {self.p}")
        if self.kind == "geometric" and not 0.0 < self.decay < 1.0:
            raise ParameterError(f"decay must be in (0, 1), got {self.decay}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "NoiseModel":
        """``"adjacent:0.1"`` or ``"geometric:0.1:0.5"``."""
        parts = text.split(":")
        try:
            if parts[0] == "adjacent" and len(parts) == 2:
                return cls("adjacent", float(parts[1]), seed=seed)
            if parts[0] == "geometric" and len(parts) in (2, 3):
                decay = float(parts[2]) if len(parts) == 3 else 0.5
                return cls("geometric", float(parts[1]), decay, seed)
        except ValueError:
            pass
        raise ParameterError(f"cannot parse noise spec {text!r}; expected adjacent:P or geometric:P[:DECAY]")


def simulate_classifier(truth: ClassMap, noise: NoiseModel, stream: int = 0) -> ClassMap:
    m = truth.m
    c = truth.values.ravel()
    n = c.size
    flip = uniforms(noise.seed, truth.image_id, n, 0, stream) < noise.p
    up = uniforms(noise.seed, truth.image_id, n, 1, stream) < 0.5
    direction = np.where(up, 1, -1)
    direction[c == 0] = 1
    direction[c == m - 1] = -1
    if noise.kind == "adjacent":
        hop = 1
    else:
        u = uniforms(noise.seed, truth.image_id, n, 2, stream)
        hop = 1 + np.floor(np.log1p(-u) / math.log(noise.decay)).astype(np.int64)
    out = np.where(flip, np.clip(c + direction * hop, 0, m - 1), c)
    return ClassMap(truth.image_id, out.reshape(truth.shape), m)


def evaluate_counts(pred: Sequence[LocalCountMap], truth: Sequence[LocalCountMap]) -> tuple[float, float]:
    """Image-level ``(MAE, MSE)``; MSE is the root of the mean squared error."""
    if not truth:
        raise DataError("evaluate_counts needs at least one image")
    by_id = {p.image_id: p for p in pred}
    if set(by_id) != {t.image_id for t in truth} or len(by_id) != len(truth):
        raise DataError("prediction and truth cover different images")
    err = np.array([t.values.sum() - by_id[t.image_id].values.sum() for t in truth])
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2)))


def fit_partition(t: CountCollection, strategy: str, m: int, t0: float = 1.6e-4,
                  epsilon: float | None = None) -> Partition:
    if strategy == "uep":
        return partition_uep(t, m, t0, epsilon)[0]
    if strategy == "uniform-len":
        return partition_uniform_len(t, m, t0)
    if strategy == "uniform-num":
        return partition_uniform_num(t, m, t0)
    raise ParameterError(f"unknown strategy {strategy!r}")


@dataclass
class Cell:
    """One (strategy, proxy method) combination.

    ``signed[s, i]`` is ``truth - prediction`` for image ``i`` under seed
    ``s``; ``disc_signed[i]`` is the same with perfect classification.
    Interval arrays are summed over seeds.
    """

    strategy: str
    method: str
    signed: np.ndarray | None = None
    disc_signed: np.ndarray | None = None
    nl_cv: float = float("nan")
    n: np.ndarray | None = None
    length: np.ndarray | None = None
    abs_sum: np.ndarray | None = None
    infeasible: str | None = None

    @property
    def mae_per_seed(self) -> np.ndarray:
        return np.mean(np.abs(self.signed), axis=1)

    @property
    def mse_per_seed(self) -> np.ndarray:
        return np.sqrt(np.mean(self.signed ** 2, axis=1))

    @property
    def mae(self) -> float:
        return float(np.mean(self.mae_per_seed)) if self.signed is not None else float("nan")

    @property
    def mse(self) -> float:
        return float(np.mean(self.mse_per_seed)) if self.signed is not None else float("nan")

    @property
    def disc_error(self) -> float:
        return float(np.mean(np.abs(self.disc_signed))) if self.disc_signed is not None else float("nan")

    @property
    def class_mae(self) -> np.ndarray:
        seeds = self.signed.shape[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.abs_sum / (np.maximum(self.n, 1) * seeds), np.nan)


@dataclass
class ComparisonMatrix:
    strategies: list[str]
    methods: list[str]
    seeds: list[int]
    image_ids: list[str]
    cells: dict[tuple[str, str], Cell] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key) -> Cell:
        return self.cells[key]

    def rows(self):
        for s in self.strategies:
            for meth in self.methods:
                yield self.cells[(s, meth)]


def _check_eval(scenes: Sequence[LocalCountMap]):
    if not scenes:
        raise DataError("need at least one evaluation scene")
    ids = [s.image_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise DataError("evaluation image ids must be unique")


def _seed_map(fn, seeds, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(fn, seeds))
    return [fn(s) for s in seeds]


def compare_strategies(t_train: CountCollection, scenes_eval: Sequence[LocalCountMap], m: int,
                       noise: NoiseModel, strategies: Sequence[str] = STRATEGY_NAMES,
                       proxy_methods: Sequence[str] = ("mcp", "midpoint"), seeds: Sequence[int] | None = None,
                       t0: float = 1.6e-4, epsilon: float | None = None, background_zero: bool = False,
                       jobs: int = 1) -> ComparisonMatrix:
    """Fit every strategy/proxy pair on ``t_train`` and score it on noisy eval maps.

    For each seed the truth class maps are perturbed with ``noise`` (its
    ``seed`` replaced by the run seed), decoded, and compared at image level.
    Strategies that cannot be fitted are kept as infeasible cells.
    """
    _check_eval(scenes_eval)
    seeds = list(seeds) if seeds is not None else [noise.seed]
    for s in strategies:
        if s not in STRATEGY_NAMES:
            raise ParameterError(f"unknown strategy {s!r}")
    out = ComparisonMatrix(list(strategies), list(proxy_methods), seeds, [lc.image_id for lc in scenes_eval],
                           meta={"m": m, "t0": t0, "noise": noise.kind, "p": noise.p, "decay": noise.decay})
    for strat in strategies:
        try:
            part = fit_partition(t_train, strat, m, t0, epsilon)
        except InfeasiblePartitionError as exc:
            for meth in proxy_methods:
                out.cells[(strat, meth)] = Cell(strat, meth, infeasible=str(exc))
            continue
        cv = interval_stats(t_train, part).nl_cv()
        tables = {meth: compute_proxies(t_train, part, meth, background_zero) for meth in proxy_methods}
        truth_cls = [encode_class_map(lc, part) for lc in scenes_eval]

        def run(seed):
            nm = replace(noise, seed=seed)
            noisy = [simulate_classifier(c, nm) for c in truth_cls]
            return {meth: error_decomposition(noisy, scenes_eval, part, tab) for meth, tab in tables.items()}

        per_seed = _seed_map(run, seeds, jobs)
        for meth, tab in tables.items():
            reports = [r[meth] for r in per_seed]
            disc = error_decomposition(truth_cls, scenes_eval, part, tab)
            out.cells[(strat, meth)] = Cell(
                strat, meth,
                signed=np.stack([r.signed for r in reports]),
                disc_signed=disc.signed,
                nl_cv=cv,
                n=reports[0].n,
                length=part.lengths,
                abs_sum=np.sum([r.abs_sum for r in reports], axis=0),
            )
    return out


@dataclass
class IphReport:
    """Single-head vs two-head errors per seed and image (``truth - prediction``)."""

    seeds: list[int]
    image_ids: list[str]
    single: np.ndarray
    double: np.ndarray
    head0_correct: np.ndarray
    head1_correct: np.ndarray
    both_correct: np.ndarray
    mode: str = "iph"
    shared_noise: bool = False

    @property
    def single_mae_per_seed(self) -> np.ndarray:
        return np.mean(np.abs(self.single), axis=1)

    @property
    def double_mae_per_seed(self) -> np.ndarray:
        return np.mean(np.abs(self.double), axis=1)

    @property
    def single_mae(self) -> float:
        return float(np.mean(self.single_mae_per_seed))

    @property
    def double_mae(self) -> float:
        return float(np.mean(self.double_mae_per_seed))

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "shared_noise": self.shared_noise,
            "seeds": len(self.seeds),
            "single_mae": self.single_mae,
            "double_mae": self.double_mae,
            "double_wins": int(np.sum(self.double_mae_per_seed <= self.single_mae_per_seed)),
            "head0_accuracy": float(np.mean(self.head0_correct)),
            "head1_accuracy": float(np.mean(self.head1_correct)),
            "both_correct": float(np.mean(self.both_correct)),
        }


def iph_ablation(t_train: CountCollection, scenes_eval: Sequence[LocalCountMap], m: int, noise: NoiseModel,
                 seeds: Sequence[int] | None = None, t0: float = 1.6e-4, epsilon: float | None = None,
                 mode: str = "iph", shared_noise: bool = False, jobs: int = 1) -> IphReport:
    """Compare one UEP+MCP head with a two-head average.

    ``mode="iph"`` gives head1 the interleaved borders; ``mode="pph"`` gives
    it head0's partition unchanged. Each head draws its own noise stream
    unless ``shared_noise`` is set.
    """
    _check_eval(scenes_eval)
    if mode not in ("iph", "pph"):
        raise ParameterError(f"mode must be 'iph' or 'pph', got {mode!r}")
    seeds = list(seeds) if seeds is not None else [noise.seed]
    part0, _ = partition_uep(t_train, m, t0, epsilon)
    head0 = (part0, compute_mcp(t_train, part0))
    pair = derive_iph(t_train, head0) if mode == "iph" else IphPair(head0, head0)
    truth0 = [encode_class_map(lc, part0) for lc in scenes_eval]
    truth1 = [encode_class_map(lc, pair.head1[0]) for lc in scenes_eval]
    stream1 = 0 if shared_noise else 1

    def run(seed):
        nm = replace(noise, seed=seed)
        single, double, c0, c1, both = [], [], 0, 0, 0
        for lc, t0c, t1c in zip(scenes_eval, truth0, truth1):
            n0 = simulate_classifier(t0c, nm, stream=0)
            n1 = simulate_classifier(t1c, nm, stream=stream1)
            d0 = decode_count_map(n0, head0[1], lc.patch_size).values
            avg = decode_iph(n0, n1, pair, lc.patch_size).values
            truth_total = lc.values.sum()
            single.append(truth_total - d0.sum())
            double.append(truth_total - avg.sum())
            ok0 = n0.values == t0c.values
            ok1 = n1.values == t1c.values
            c0 += int(ok0.sum())
            c1 += int(ok1.sum())
            both += int((ok0 & ok1).sum())
        cells = sum(lc.values.size for lc in scenes_eval)
        return single, double, c0 / cells, c1 / cells, both / cells

    res = _seed_map(run, seeds, jobs)
    return IphReport(
        seeds, [lc.image_id for lc in scenes_eval],
        single=np.array([r[0] for r in res]),
        double=np.array([r[1] for r in res]),
        head0_correct=np.array([r[2] for r in res]),
        head1_correct=np.array([r[3] for r in res]),
        both_correct=np.array([r[4] for r in res]),
        mode=mode, shared_noise=shared_noise,
    )
