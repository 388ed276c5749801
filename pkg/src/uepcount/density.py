"""Point annotations to density maps, local-count maps and count collections.

A density map is built by stamping one truncated, unit-mass Gaussian per head
point. Summing the density inside non-overlapping ``s x s`` windows gives the
local-count map, and pooling every local count of a training set gives the
sorted count collection consumed by the partition algorithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, ParameterError

__all__ = [
    "PointAnnotation",
    "KernelSpec",
    "DensityMap",
    "LocalCountMap",
    "CountCollection",
    "Clusters",
    "generate_density_map",
    "adaptive_sigmas",
    "extract_local_counts",
    "collect_counts",
    "synth_scene",
    "synth_annotations",
    "synth_local_counts",
]

FALLBACK_SIGMA = 15.0


@dataclass(frozen=True)
class PointAnnotation:
    image_id: str
    width: int
    height: int
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"{self.image_id}: image size must be positive, got {self.width}x{self.height}")
        bad = ~((pts[:, 0] >= 0) & (pts[:, 0] < self.width) & (pts[:, 1] >= 0) & (pts[:, 1] < self.height))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(
                f"{self.image_id}: point {i} at ({pts[i, 0]}, {pts[i, 1]}) lies outside "
                f"the {self.width}x{self.height} image"
            )

    @property
    def n(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointAnnotation):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel configuration.

    ``mode`` is ``"fixed"`` (one ``sigma`` for every head) or ``"adaptive"``
    (``sigma = beta * mean distance to the k nearest heads``).
    """

    mode: str = "fixed"
    sigma: float = 15.0
    k: int = 3
    beta: float = 0.3
    truncate: float = 4.0
    renormalize: bool = True
    fallback_sigma: float = FALLBACK_SIGMA

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ParameterError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "fixed" and not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.mode == "adaptive" and (self.k < 1 or not self.beta > 0):
            raise ParameterError(f"adaptive kernel needs k >= 1 and beta > 0, got k={self.k}, beta={self.beta}")
        if not self.truncate > 0:
            raise ParameterError(f"truncation radius must be positive, got {self.truncate}")

    @classmethod
    def fixed(cls, sigma: float, **kw) -> "KernelSpec":
        return cls(mode="fixed", sigma=sigma, **kw)

    @classmethod
    def adaptive(cls, k: int = 3, beta: float = 0.3, **kw) -> "KernelSpec":
        return cls(mode="adaptive", k=k, beta=beta, **kw)


@dataclass(frozen=True)
class DensityMap:
    image_id: str
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class LocalCountMap:
    image_id: str
    patch_size: int
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class CountCollection:
    """Ascending multiset of local counts."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.float64).ravel()
        if c.size and np.any(c[1:] < c[:-1]):
            raise DataError("count collection must be sorted ascending")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_values(cls, values) -> "CountCollection":
        return cls(np.sort(np.asarray(values, dtype=np.float64).ravel(), kind="stable"))

    @property
    def K(self) -> int:
        return int(self.counts.size)

    @property
    def t_max(self) -> float:
        return float(self.counts[-1])

    def at_least(self, t0: float) -> np.ndarray:
        """Counts ``>= t0`` (still sorted)."""
        return self.counts[np.searchsorted(self.counts, t0, side="left"):]

    def __len__(self):
        return self.K


def _kernel_1d(sigma: float, truncate: float) -> tuple[int, np.ndarray]:
    if sigma <= 0:
        return 0, np.ones(1)
    r = int(math.ceil(truncate * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return r, g / g.sum()


def _stamp(out: np.ndarray, cx: int, cy: int, sigma: float, truncate: float, renormalize: bool) -> None:
    h, w = out.shape
    r, g = _kernel_1d(sigma, truncate)
    y0, y1 = max(cy - r, 0), min(cy + r + 1, h)
    x0, x1 = max(cx - r, 0), min(cx + r + 1, w)
    gy = g[y0 - (cy - r): y1 - (cy - r)]
    gx = g[x0 - (cx - r): x1 - (cx - r)]
    if renormalize:
        gy = gy / gy.sum()
        gx = gx / gx.sum()
    out[y0:y1, x0:x1] += np.outer(gy, gx)


def _pixel_centers(ann: PointAnnotation) -> tuple[np.ndarray, np.ndarray]:
    # round half up; a point at x = W - 0.3 would round to W, so clip back in
    cx = np.clip(np.floor(ann.points[:, 0] + 0.5).astype(np.int64), 0, ann.width - 1)
    cy = np.clip(np.floor(ann.points[:, 1] + 0.5).astype(np.int64), 0, ann.height - 1)
    return cx, cy


def adaptive_sigmas(ann: PointAnnotation, k: int = 3, beta: float = 0.3,
                    fallback: float = FALLBACK_SIGMA) -> np.ndarray:
    """Per-point geometry-adaptive bandwidths.

    ``sigma_i = beta * mean distance from point i to its k nearest other
    points``; with ``n <= k`` every other point is used, and an isolated
    point gets ``fallback``.
    """
    if k < 1 or not beta > 0:
        raise ParameterError(f"need k >= 1 and beta > 0, got k={k}, beta={beta}")
    n = ann.n
    if n == 0:
        raise DataError(f"{ann.image_id}: adaptive sigmas need at least one point")
    if n == 1:
        return np.array([float(fallback)])
    kk = min(k, n - 1)
    dist, _ = cKDTree(ann.points).query(ann.points, k=kk + 1)
    # column 0 is the point itself (distance 0, or a duplicate at distance 0)
    return beta * dist[:, 1:].mean(axis=1)


def generate_density_map(ann: PointAnnotation, spec: KernelSpec | None = None) -> DensityMap:
    """Stamp one truncated Gaussian per head at its rounded pixel center."""
    spec = spec or KernelSpec()
    out = np.zeros((ann.height, ann.width), dtype=np.float64)
    if ann.n == 0:
        return DensityMap(ann.image_id, out)
    if spec.mode == "fixed":
        sigmas = np.full(ann.n, float(spec.sigma))
    else:
        sigmas = adaptive_sigmas(ann, spec.k, spec.beta, spec.fallback_sigma)
    cx, cy = _pixel_centers(ann)
    for x, y, s in zip(cx.tolist(), cy.tolist(), sigmas.tolist()):
        _stamp(out, x, y, s, spec.truncate, spec.renormalize)
    return DensityMap(ann.image_id, out)


def extract_local_counts(d: DensityMap, s: int) -> LocalCountMap:
    """Sum non-overlapping ``s x s`` windows; ragged edge blocks sum what is left."""
    if s < 1:
        raise ParameterError(f"patch size must be >= 1, got {s}")
    h, w = d.values.shape
    hs, ws = -(-h // s), -(-w // s)
    padded = np.zeros((hs * s, ws * s), dtype=np.float64)
    padded[:h, :w] = d.values
    out = padded.reshape(hs, s, ws, s).sum(axis=(1, 3))
    return LocalCountMap(d.image_id, s, out)


def collect_counts(maps: Iterable[LocalCountMap]) -> CountCollection:
    maps = list(maps)
    if not maps:
        raise DataError("collect_counts needs at least one local-count map")
    return CountCollection.from_values(np.concatenate([m.values.ravel() for m in maps]))


@dataclass(frozen=True)
class Clusters:
    """Gaussian-cluster layout: ``count`` centers, isotropic ``spread`` in pixels."""

    count: int = 4
    spread: float = 20.0


def synth_scene(n_points: int, layout: str | Clusters = "uniform", width: int = 256,
                height: int = 256, seed: int = 0, image_id: str | None = None) -> PointAnnotation:
    """Deterministic synthetic head layout.

    Clustered layouts draw cluster weights from a flat Dirichlet, which
    yields the long-tailed local-count histograms seen in real crowds.
    """
    if n_points < 0:
        raise ParameterError(f"n_points must be >= 0, got {n_points}")
    rng = np.random.default_rng(seed)
    image_id = image_id if image_id is not None else f"synth-{seed}"
    if n_points == 0:
        return PointAnnotation(image_id, width, height)
    if layout == "uniform":
        pts = rng.uniform((0, 0), (width, height), size=(n_points, 2))
        return PointAnnotation(image_id, width, height, pts)
    if not isinstance(layout, Clusters):
        raise ParameterError(f"unknown layout {layout!r}")
    centers = rng.uniform((0, 0), (width, height), size=(layout.count, 2))
    weights = rng.dirichlet(np.ones(layout.count))
    chunks, have = [], 0
    while have < n_points:
        idx = rng.choice(layout.count, size=n_points, p=weights)
        cand = centers[idx] + rng.normal(0.0, layout.spread, size=(n_points, 2))
        ok = (cand[:, 0] >= 0) & (cand[:, 0] < width) & (cand[:, 1] >= 0) & (cand[:, 1] < height)
        chunks.append(cand[ok])
        have += int(ok.sum())
    pts = np.concatenate(chunks)[:n_points]
    return PointAnnotation(image_id, width, height, pts)


def synth_annotations(n_images: int, seed: int = 0, width: int = 256, height: int = 256,
                      points: tuple[int, int] = (20, 600), clusters: tuple[int, int] = (1, 6),
                      spread: tuple[float, float] = (8.0, 40.0), prefix: str = "img") -> list[PointAnnotation]:
    """A reproducible set of clustered scenes with varying crowd sizes.

    Head counts are log-uniform in ``points``; cluster count and spread are
    uniform in their ranges.
    """
    rng = np.random.default_rng(seed)
    lo, hi = points
    out = []
    for i in range(n_images):
        n = int(round(math.exp(rng.uniform(math.log(max(lo, 1)), math.log(max(hi, 1))))))
        layout = Clusters(int(rng.integers(clusters[0], clusters[1] + 1)), float(rng.uniform(*spread)))
        sub = int(rng.integers(0, 2**63 - 1))
        out.append(synth_scene(n, layout, width, height, seed=sub, image_id=f"{prefix}{i:04d}"))
    return out


def synth_local_counts(annotations: Sequence[PointAnnotation], spec: KernelSpec | None = None,
                       s: int = 8) -> list[LocalCountMap]:
    return [extract_local_counts(generate_density_map(a, spec), s) for a in annotations]
