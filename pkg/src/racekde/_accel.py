"""Optional numba-fused inner loops for bulk sketch construction.

These must produce bit-identical results to the numpy reference path in
``lsh``: the same floor((w.x + b)/sigma) codes and the same splitmix64
fold. Everything here is a pure speed optimization; when numba is missing
the callers fall back to numpy.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f

        return wrap


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _fmix64_scalar(z):
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


@njit(cache=True)
def accumulate_pstable(proj, b, sigma, keys, power, hash_range, counts):
    """Fold projections into slot counts in one pass.

    proj: (n, m*power) projections for a block of m rows; b: offsets
    (m*power,); keys: per-row rehash states (m,); counts: (m, hash_range)
    uint64, incremented in place.
    """
    n, mp = proj.shape
    m = mp // power
    R = np.uint64(hash_range)
    for i in range(n):
        for l in range(m):
            state = keys[l]
            for j in range(power):
                k = l * power + j
                code = np.int64(np.floor((proj[i, k] + b[k]) / sigma))
                state = _fmix64_scalar(state ^ np.uint64(code))
            counts[l, state % R] += np.uint64(1)
