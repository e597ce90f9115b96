"""Counter-based random streams for reproducible walks.

Every trajectory must be a pure function of ``(seed, instance, point id,
trajectory id)`` so that estimates never depend on batch layout, worker
count, or evaluation order. Sequential generators cannot give that guarantee
cheaply; a keyed counter-based generator can, because any draw is addressed
directly by its coordinates instead of by how many draws happened before it.

The generator here is Philox 4x64 with 10 rounds. ``philox4x64`` maps a
128-bit key and a 256-bit counter to four uint64 words; callers carve the
counter space into ``(draw index, point id, trajectory id, tag)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "philox4x64",
    "uniforms",
    "uint64s",
    "TAG_MAIN",
    "TAG_RESAMPLE",
]

# Counter word 3 distinguishes draw purposes sharing a (draw, point, traj)
# coordinate. TAG_RESAMPLE + r addresses the r-th redraw of a rejected value.
TAG_MAIN = 0
TAG_RESAMPLE = 1

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_MASK64 = (1 << 64) - 1
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)

# Key schedule offsets for the 10 rounds, precomputed in exact integer
# arithmetic; numpy scalar adds would warn on intended wraparound.
_ROUND_KEYS = [((r * _W0) & _MASK64, (r * _W1) & _MASK64) for r in range(10)]


def _mulhilo(a: np.ndarray, m: np.uint64) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product via 32-bit limbs (hi, lo)."""
    lo = a * m
    ah = a >> _SH32
    al = a & _MASK32
    mh = m >> _SH32
    ml = m & _MASK32
    t = ah * ml + ((al * ml) >> _SH32)
    w = al * mh + (t & _MASK32)
    hi = ah * mh + (t >> _SH32) + (w >> _SH32)
    return hi, lo


def philox4x64(
    c0, c1, c2, c3, key0: int, key1: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Philox 4x64-10 block function, vectorized over counters.

    The counter words broadcast against each other; the two key words are
    per-call scalars. Returns four uint64 arrays of the broadcast shape.
    """
    x0, x1, x2, x3 = np.broadcast_arrays(
        np.asarray(c0, dtype=np.uint64),
        np.asarray(c1, dtype=np.uint64),
        np.asarray(c2, dtype=np.uint64),
        np.asarray(c3, dtype=np.uint64),
    )
    shape = x0.shape
    # 0-d arrays take numpy's scalar path, which warns on intended wraparound
    x0, x1, x2, x3 = (np.atleast_1d(x).copy() for x in (x0, x1, x2, x3))
    k0 = int(key0) & _MASK64
    k1 = int(key1) & _MASK64
    for dk0, dk1 in _ROUND_KEYS:
        rk0 = np.uint64((k0 + dk0) & _MASK64)
        rk1 = np.uint64((k1 + dk1) & _MASK64)
        hi0, lo0 = _mulhilo(x0, _M0)
        hi1, lo1 = _mulhilo(x2, _M1)
        x0, x1, x2, x3 = hi1 ^ x1 ^ rk0, lo1, hi0 ^ x3 ^ rk1, lo0
    return tuple(x.reshape(shape) for x in (x0, x1, x2, x3))


def uint64s(draw, point, traj, tag, key0: int, key1: int):
    """Four raw uint64 words for one (draw, point, traj, tag) coordinate."""
    return philox4x64(draw, point, traj, tag, key0, key1)


def uniforms(draw, point, traj, tag, key0: int, key1: int):
    """Four uniform [0, 1) float64 arrays for one counter coordinate.

    Uses the top 53 bits of each word, matching the compiled kernels bit
    for bit.
    """
    w0, w1, w2, w3 = philox4x64(draw, point, traj, tag, key0, key1)
    return (to_uniform(w0), to_uniform(w1), to_uniform(w2), to_uniform(w3))


def to_uniform(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to float64 in [0, 1) via the top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * 1.1102230246251565e-16
