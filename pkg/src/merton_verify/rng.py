"""Counter-based Gaussian streams.

Draw ``k`` of path ``i`` is a pure function of ``(seed, i, k)``: each path
owns a Philox stream keyed by ``(seed, stream_id)`` and step ``k`` reads the
``k``-th 64-bit output. Normals come from the inverse normal CDF, so results
do not depend on how paths are batched or scheduled.

With antithetic sampling, paths ``2j`` and ``2j + 1`` share stream ``j`` and
the odd path uses the negated draws.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_TWO_M52 = 2.0**-52


def _stream(seed: int, stream_id: int) -> np.random.Philox:
    return np.random.Philox(key=np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64))


def raw_to_normal(raw: np.ndarray) -> np.ndarray:
    # midpoints of a 2^-52 grid: k + 0.5 is exact in a double, so u in (0, 1) strictly
    u = ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO_M52
    return ndtri(u)


def stream_id(path_id: int, antithetic: bool) -> tuple[int, float]:
    if antithetic:
        return path_id // 2, (-1.0 if path_id % 2 else 1.0)
    return path_id, 1.0


def normals(seed: int, path_ids, n_steps: int, antithetic: bool = False) -> np.ndarray:
    """Standard normals of shape (len(path_ids), n_steps)."""
    path_ids = list(path_ids)
    out = np.empty((len(path_ids), n_steps))
    cache: dict[int, np.ndarray] = {}
    for row, pid in enumerate(path_ids):
        sid, sign = stream_id(pid, antithetic)
        z = cache.pop(sid, None)
        if z is None:
            z = raw_to_normal(_stream(seed, sid).random_raw(n_steps))
            if antithetic:
                cache[sid] = z
        out[row] = z if sign > 0 else -z
    return out


class PathStreams:
    """Stateful per-path streams for simulations that advance paths
    unevenly (early stopping); draw k of path i is still fixed by (seed, i, k)."""

    def __init__(self, seed: int, path_ids, antithetic: bool = False):
        self.path_ids = np.asarray(list(path_ids), dtype=np.int64)
        self._gens = []
        self._signs = np.empty(len(self.path_ids))
        for j, pid in enumerate(self.path_ids):
            sid, sign = stream_id(int(pid), antithetic)
            self._gens.append(_stream(seed, sid))
            self._signs[j] = sign

    def draw(self, rows: np.ndarray, n: int) -> np.ndarray:
        """Next ``n`` normals for each of the given row indices."""
        out = np.empty((len(rows), n))
        for k, j in enumerate(rows):
            out[k] = raw_to_normal(self._gens[j].random_raw(n)) * self._signs[j]
        return out
