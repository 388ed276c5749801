"""Counter-based random numbers for reproducible, order-free noise simulation.

Every draw is a pure function of ``(seed, stream, image_id, cell, lane)``:

    key  = mix(mix(seed) ^ mix(stream) ^ blake2b64(image_id))
    word = mix(key ^ mix(cell * 8 + lane))
    u    = (word >> 11) * 2**-53

where ``mix`` is the SplitMix64 finalizer on unsigned 64-bit integers with
wrap-around arithmetic and ``blake2b64`` is the little-endian 8-byte BLAKE2b
digest of the UTF-8 image id. Results are identical on every platform and do
not depend on the order in which images or cells are visited.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
LANES = 8


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mix64` on a uint64 array."""
    z = np.asarray(x, dtype=np.uint64) + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def image_key(seed: int, image_id: str, stream: int = 0) -> int:
    h = int.from_bytes(hashlib.blake2b(image_id.encode("utf-8"), digest_size=8).digest(), "little")
    return mix64(mix64(seed & _MASK) ^ mix64(stream & _MASK) ^ h)


def uniforms(seed: int, image_id: str, n_cells: int, lane: int, stream: int = 0) -> np.ndarray:
    """One float in ``[0, 1)`` per cell index ``0..n_cells-1`` for the given lane."""
    if not 0 <= lane < LANES:
        raise ValueError(f"lane must be in [0, {LANES})")
    key = np.uint64(image_key(seed, image_id, stream))
    ctr = np.arange(n_cells, dtype=np.uint64) * np.uint64(LANES) + np.uint64(lane)
    word = mix64_array(key ^ mix64_array(ctr))
    return (word >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
