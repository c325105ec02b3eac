"""Counter-based random streams for per-ray jitter.

Renders must be bitwise reproducible for a given seed no matter how rays are
batched or scheduled, so jitter cannot come from a shared sequential
generator. Instead every draw is a pure function of
(seed, pixel index, stream id, draw index), mixed through splitmix64.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream ids, one per distinct consumer of randomness along a ray
STREAM_SCENE_COARSE = 1
STREAM_SCENE_FINE = 2
STREAM_ROI_BASE = 16  # roi k uses STREAM_ROI_BASE + 2*k (coarse) / +2*k+1 (fine)


def _mix(x: np.ndarray) -> np.ndarray:
    x = (x + _GAMMA) & _MASK
    x ^= x >> np.uint64(30)
    x = (x * _M1) & _MASK
    x ^= x >> np.uint64(27)
    x = (x * _M2) & _MASK
    x ^= x >> np.uint64(31)
    return x


def hash_u64(*keys) -> np.ndarray:
    """Fold integer keys (scalars or broadcastable arrays) into one u64 hash."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(np.uint64(0x243F6A8885A308D3)))
        for k in keys:
            k = np.asarray(k, dtype=np.uint64)
            h = _mix(np.bitwise_xor(h, k))
        return h


def hash_uniform(*keys) -> np.ndarray:
    """Uniform draws in [0, 1) keyed by the given integers. Shape broadcasts."""
    h = hash_u64(*keys)
    # top 53 bits -> double in [0, 1)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def uniform_grid(seed: int, pixel_index: np.ndarray, stream: int, n: int) -> np.ndarray:
    """(len(pixel_index), n) uniforms, row i keyed by pixel_index[i].

    Row contents depend only on (seed, pixel, stream, column), never on which
    other pixels share the batch.
    """
    pix = np.asarray(pixel_index, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(n, dtype=np.uint64).reshape(1, -1)
    return hash_uniform(np.uint64(seed), pix, np.uint64(stream), cols)


def stable_u32(text: str) -> int:
    """Process-independent 32-bit hash of a string (names -> subseed keys)."""
    import zlib

    return zlib.crc32(text.encode("utf-8")) & 0xFFFFFFFF
