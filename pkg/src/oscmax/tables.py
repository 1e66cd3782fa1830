"""Range-aggregate tables: prefix sums for box averages, sparse tables for box minima.

Index boxes are sequences of half-open ``(start, stop)`` cell ranges, one per
axis. Internally everything is padded to three axes (leading singleton axes) so
one set of kernels serves n = 1, 2, 3.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .grid import GridFunction, padded3

MIN_TABLE_BUDGET = 512 * 2**20


class BoxError(ValueError):
    pass


def as_boxes(boxes, res: Sequence[int]) -> np.ndarray:
    """Normalise index boxes to an ``(m, 3, 2)`` int64 array, validating bounds."""
    arr = np.asarray(boxes, dtype=np.int64)
    if arr.ndim == 2:
        arr = arr[None]
    n = len(res)
    if arr.ndim != 3 or arr.shape[1] != n or arr.shape[2] != 2:
        raise BoxError(f"expected index boxes of shape (m, {n}, 2), got {arr.shape}")
    starts, stops = arr[..., 0], arr[..., 1]
    if (starts < 0).any() or (stops > np.asarray(res)).any():
        raise BoxError("index box out of grid range")
    if (stops <= starts).any():
        raise BoxError("empty index box")
    out = np.zeros((arr.shape[0], 3, 2), dtype=np.int64)
    out[:, :, 1] = 1
    out[:, 3 - n :] = arr
    return out


def _corner_sum(P: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inclusion-exclusion over the 8 corners of each padded box."""
    a0, a1 = b[:, 0, 0], b[:, 0, 1]
    c0, c1 = b[:, 1, 0], b[:, 1, 1]
    e0, e1 = b[:, 2, 0], b[:, 2, 1]
    return (
        P[a1, c1, e1] - P[a0, c1, e1] - P[a1, c0, e1] - P[a1, c1, e0]
        + P[a0, c0, e1] + P[a0, c1, e0] + P[a1, c0, e0] - P[a0, c0, e0]
    )


def _window(P: np.ndarray, ext) -> np.ndarray:
    e0, e1, e2 = (int(e) for e in ext)
    n0, n1, n2 = (s - e for s, e in zip(P.shape, (e0, e1, e2)))
    out = np.zeros((n0, n1, n2))
    for d0, s0 in ((e0, 1), (0, -1)):
        for d1, s1 in ((e1, 1), (0, -1)):
            for d2, s2 in ((e2, 1), (0, -1)):
                sign = s0 * s1 * s2
                view = P[d0 : d0 + n0, d1 : d1 + n1, d2 : d2 + n2]
                if sign > 0:
                    out += view
                else:
                    out -= view
    return out


def _cumulate(V: np.ndarray) -> np.ndarray:
    P = np.zeros(tuple(s + 1 for s in V.shape))
    acc = V
    for axis in range(3):
        acc = np.cumsum(acc, axis=axis)
    P[1:, 1:, 1:] = acc
    return P


class PrefixTable:
    """Summed-volume table of a grid's values (and squared values).

    Values are centred on their global mean before accumulation; sums are
    shifted back on query. This keeps box statistics invariant under adding a
    constant to ``f`` to near machine precision.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        self.res = tuple(values.shape)
        V = padded3(values)
        self.offset = float(V.mean())
        C = V - self.offset
        self._P = _cumulate(C)
        self._Q = _cumulate(C * C)

    @property
    def square_total(self) -> float:
        """Sum of all centred squares; the scale of rounding in square sums."""
        return float(self._Q[-1, -1, -1])

    @classmethod
    def of(cls, gf: GridFunction) -> "PrefixTable":
        return cls(gf.values)

    @property
    def sums(self) -> np.ndarray:
        """Uncentred cumulative sums with shape ``res + 1``."""
        counts = _cumulate(np.ones(tuple(s - 1 for s in self._P.shape)))
        P = self._P + self.offset * counts
        return P.reshape(tuple(r + 1 for r in self.res))

    def centered_sums(self, boxes: np.ndarray):
        """Return ``(count, sum, sumsq)`` of the centred values over padded boxes."""
        cnt = np.prod(boxes[:, :, 1] - boxes[:, :, 0], axis=1).astype(np.float64)
        return cnt, _corner_sum(self._P, boxes), _corner_sum(self._Q, boxes)

    def window_sums(self, ext, squares: bool = False):
        """Centred sums (and square sums) of every box with extents ``ext``,
        indexed by start position."""
        if squares:
            return _window(self._P, ext), _window(self._Q, ext)
        return _window(self._P, ext)

    def means(self, boxes: np.ndarray) -> np.ndarray:
        cnt, s, _ = self.centered_sums(boxes)
        return s / cnt + self.offset

    def variances(self, boxes: np.ndarray) -> np.ndarray:
        cnt, s, q = self.centered_sums(boxes)
        m = s / cnt
        return np.maximum(q / cnt - m * m, 0.0)


class MinTable:
    """Box minima in O(2^n) per query via a multi-axis sparse table.

    Falls back to direct scans when the table would exceed
    ``MIN_TABLE_BUDGET`` bytes; both paths return identical results.
    """

    def __init__(self, values: np.ndarray, budget: int = MIN_TABLE_BUDGET):
        values = np.asarray(values, dtype=np.float64)
        self.res = tuple(values.shape)
        self._V = padded3(values)
        N = self._V.shape
        self.levels = tuple(int(s).bit_length() for s in N)
        nbytes = 8 * int(np.prod(self.levels)) * int(np.prod(N))
        self.sparse = nbytes <= budget
        self._T = self._build() if self.sparse else None

    def _build(self) -> np.ndarray:
        V = self._V
        L0, L1, L2 = self.levels
        T = np.full((L0, L1, L2) + V.shape, np.inf)
        T[0, 0, 0] = V
        for a in range(L0):
            if a:
                w = 1 << (a - 1)
                prev = T[a - 1, 0, 0]
                T[a, 0, 0, : V.shape[0] - 2 * w + 1] = np.minimum(
                    prev[: V.shape[0] - 2 * w + 1], prev[w : V.shape[0] - w + 1]
                )
            for b in range(1, L1):
                w = 1 << (b - 1)
                prev = T[a, b - 1, 0]
                n1 = V.shape[1] - 2 * w + 1
                T[a, b, 0, :, :n1] = np.minimum(prev[:, :n1], prev[:, w : w + n1])
        for a in range(L0):
            for b in range(L1):
                for c in range(1, L2):
                    w = 1 << (c - 1)
                    prev = T[a, b, c - 1]
                    n2 = V.shape[2] - 2 * w + 1
                    T[a, b, c, :, :, :n2] = np.minimum(prev[:, :, :n2], prev[:, :, w : w + n2])
        return T

    def window_mins(self, ext) -> np.ndarray:
        """Minimum of every box with extents ``ext``, indexed by start position."""
        ext = [int(e) for e in ext]
        n = [s - e + 1 for s, e in zip(self._V.shape, ext)]
        if not self.sparse:
            from . import kernels

            st = np.stack(np.meshgrid(*[np.arange(q) for q in n], indexing="ij"), -1).reshape(-1, 3)
            boxes = np.stack([st, st + np.array(ext)[None]], axis=-1)
            return kernels.box_min_scan(self._V, boxes).reshape(n)
        k = [e.bit_length() - 1 for e in ext]
        level = self._T[k[0], k[1], k[2]]
        out = None
        for a in {0, ext[0] - (1 << k[0])}:
            for b in {0, ext[1] - (1 << k[1])}:
                for c in {0, ext[2] - (1 << k[2])}:
                    view = level[a : a + n[0], b : b + n[1], c : c + n[2]]
                    out = view.copy() if out is None else np.minimum(out, view, out=out)
        return out

    def mins(self, boxes: np.ndarray) -> np.ndarray:
        if not self.sparse:
            from . import kernels

            return kernels.box_min_scan(self._V, boxes)
        lens = boxes[:, :, 1] - boxes[:, :, 0]
        k = np.floor(np.log2(lens)).astype(np.int64)
        # guard against log2 rounding on exact powers of two
        k = np.where((1 << (k + 1)) <= lens, k + 1, k)
        k = np.where((1 << k) > lens, k - 1, k)
        lo = boxes[:, :, 0]
        hi = boxes[:, :, 1] - (1 << k)
        out = np.full(len(boxes), np.inf)
        for c0 in (lo[:, 0], hi[:, 0]):
            for c1 in (lo[:, 1], hi[:, 1]):
                for c2 in (lo[:, 2], hi[:, 2]):
                    out = np.minimum(out, self._T[k[:, 0], k[:, 1], k[:, 2], c0, c1, c2])
        return out


# -- public single-box API -----------------------------------------------------


def box_sum(t: PrefixTable, box) -> float:
    b = as_boxes(box, t.res)
    cnt, s, _ = t.centered_sums(b)
    return float(s[0] + t.offset * cnt[0])


def box_average(t: PrefixTable, box) -> float:
    return float(t.means(as_boxes(box, t.res))[0])


def box_min(t: MinTable, box) -> float:
    return float(t.mins(as_boxes(box, t.res))[0])


def full_box(res: Sequence[int]) -> list[tuple[int, int]]:
    return [(0, int(r)) for r in res]


def _mask_array(gf: GridFunction, mask) -> np.ndarray:
    if callable(mask):
        m = np.broadcast_to(np.asarray(mask(*gf.centers()), dtype=bool), gf.res)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != gf.res:
            raise BoxError(f"mask shape {m.shape} does not match grid {gf.res}")
    if not m.any():
        raise BoxError("mask selects no cells")
    return m


def masked_sum(gf: GridFunction, mask: Callable | np.ndarray) -> float:
    """Sum of values over cells whose centres satisfy ``mask``."""
    return float(gf.values[_mask_array(gf, mask)].sum())


def masked_average(gf: GridFunction, mask: Callable | np.ndarray) -> float:
    return float(gf.values[_mask_array(gf, mask)].mean())


def masked_count(gf: GridFunction, mask: Callable | np.ndarray) -> int:
    return int(_mask_array(gf, mask).sum())


def masked_min(gf: GridFunction, mask: Callable | np.ndarray) -> float:
    return float(gf.values[_mask_array(gf, mask)].min())
