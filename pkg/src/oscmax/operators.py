"""Maximal function and oscillation norms over a discretised basis.

Every norm is a supremum of a per-shape statistic. Box bases get their means
from prefix tables and their minima from sparse tables; p-ball bases and the
p != 2 oscillation make one pass over each shape's cells. Ties in the argmax
go to the first shape in enumeration order.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .bases import (
    Basis,
    BasisError,
    BasisSpec,
    CoverError,
    FactorSplit,
    Shape,
    _as_spec,
    compose,
    factor_specs,
    product_spec,
)
from .grid import GridFunction, padded3
from .tables import MinTable, PrefixTable

KINDS = ("bmo", "blo", "lower_bmo", "lower_blo", "rec_bmo", "rec_blo", "rec_blo_naive")

# cap on the total number of cell visits a per-shape pass may make
WORK_LIMIT = 8 * 10**9


class ComplexityError(BasisError):
    pass


@dataclass
class OscReport:
    kind: str
    value: float
    argmax: Shape | None
    argmax_index: int
    basis: BasisSpec
    res: tuple[int, ...]
    p: float | None = None
    split: tuple[int, ...] | None = None
    factor: int | None = None
    runtime_ms: float = 0.0
    shapes: int = 0
    trail: list = field(default_factory=list)

    def to_dict(self, gf: GridFunction | None = None, meta: bool = True) -> dict:
        out = {"kind": self.kind}
        if self.p is not None:
            out["p"] = self.p
        out["value"] = self.value
        arg = self.argmax.describe(gf) if self.argmax is not None else None
        if arg is not None:
            arg["index"] = self.argmax_index
            if self.argmax.parts is not None:
                arg["factors"] = [s.describe() for s in self.argmax.parts]
        out["argmax"] = arg
        out["basis"] = self.basis.to_dict()
        if self.split is not None:
            out["split"] = list(self.split)
        if self.factor is not None:
            out["factor"] = self.factor
        out["res"] = list(self.res)
        out["shapes"] = self.shapes
        out["trail"] = [{"index": i, "value": v} for i, v in self.trail]
        if meta:
            out["runtime_ms"] = round(self.runtime_ms, 3)
        return out


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("OSC_THREADS", "0") or 0) or os.cpu_count() or 1
    return max(1, int(threads))


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _check_work(basis: Basis, limit: float | None):
    limit = WORK_LIMIT if limit is None else limit
    work = basis.total_cells()
    if work > limit:
        raise ComplexityError(
            f"a per-shape pass over this basis visits {work:.3g} cells (limit {limit:.3g}); "
            "use dyadic or stride granularity, a lower resolution, or p = 2"
        )


# -- per-shape statistics ------------------------------------------------------------


class _Stats:
    """Shared tables for one grid function; masked shapes use direct passes."""

    def __init__(self, f: GridFunction):
        self.f = f
        self.V = padded3(f.values)
        self._prefix = None
        self._min = None
        self.offset = float(self.V.mean())

    @property
    def prefix(self) -> PrefixTable:
        if self._prefix is None:
            self._prefix = PrefixTable(self.f.values)
        return self._prefix

    @property
    def mintable(self) -> MinTable:
        if self._min is None:
            self._min = MinTable(self.f.values)
        return self._min

    def mask_stats(self, basis, ch):
        return kernels.mask_stats(self.V - self.offset, ch.centers, ch.radii, basis.pn, basis.ball_ax, ch.boxes)

    def bmo(self, basis, ch, p, direct):
        cnt, s1, s2, _ = self.mask_stats(basis, ch)
        m = s1 / cnt
        if p == 2 and not direct:
            return _std(m, s2 / cnt, s2 / cnt)
        dev = kernels.mask_absdev(self.V, ch.centers, ch.radii, basis.pn, basis.ball_ax, ch.boxes, m + self.offset, p)
        return (dev / cnt) ** (1.0 / p)

    def blo(self, basis, ch):
        cnt, s1, _, mn = self.mask_stats(basis, ch)
        return np.maximum(s1 / cnt - mn, 0.0)

    def warm(self, basis, kind):
        # build shared tables before worker threads start
        if not basis.is_mask:
            self.prefix
            if kind == "blo":
                self.mintable


def _std(m: np.ndarray, q: np.ndarray, scale) -> np.ndarray:
    """Standard deviation from first and second moments.

    ``scale`` bounds the magnitude the second moment was differenced from.
    Variances within rounding of it are flushed to zero, so a flat shape
    reports 0 rather than the square root of a rounding error.
    """
    var = q - m * m
    var[var <= 64 * np.finfo(float).eps * scale] = 0.0
    return np.sqrt(var)


def _class_stat(st: _Stats, kind: str, p: float, direct: bool):
    """Statistic for every box of one extent class, from window tables."""

    def run(item):
        ext, starts, _ = item
        at = (starts[:, 0], starts[:, 1], starts[:, 2])
        cnt = float(np.prod(ext))
        if kind == "blo":
            s = st.prefix.window_sums(ext)[at]
            return np.maximum(s / cnt + st.prefix.offset - st.mintable.window_mins(ext)[at], 0.0)
        if p == 2 and not direct:
            S, Q = st.prefix.window_sums(ext, squares=True)
            return _std(S[at] / cnt, Q[at] / cnt, st.prefix.square_total / cnt)
        means = st.prefix.window_sums(ext)[at] / cnt + st.prefix.offset
        boxes = np.stack([starts, starts + ext[None]], axis=-1)
        return (kernels.box_absdev(st.V, boxes, means, float(p)) / cnt) ** (1.0 / p)

    return run


def _batches(it, size=64):
    batch = []
    for item in it:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def shape_values(f: GridFunction, basis, kind: str = "bmo", p: float = 1.0, direct: bool = False,
                 threads: int | None = None, work_limit: float | None = None) -> np.ndarray:
    """The per-shape statistic for every shape of ``basis``, in enumeration order."""
    basis = Basis.of(basis, f)
    st = _Stats(f)
    if kind not in ("bmo", "blo"):
        raise ValueError(f"shape_values handles 'bmo' and 'blo', not {kind!r}")
    if kind == "bmo" and not p >= 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if basis.is_mask or (kind == "bmo" and (p != 2 or direct)):
        _check_work(basis, work_limit)
    st.warm(basis, kind)
    nthreads = _threads(threads)
    if basis.is_mask:
        if kind == "bmo":
            fn = lambda ch: st.bmo(basis, ch, float(p), direct)
        else:
            fn = lambda ch: st.blo(basis, ch)
        parts = _map(fn, basis.chunks(), nthreads)
        return np.concatenate(parts) if parts else np.zeros(0)
    out = np.empty(basis.count)
    run = _class_stat(st, kind, float(p), direct)
    for batch in _batches(basis.box_classes()):
        for (_, _, idx), vals in zip(batch, _map(run, batch, nthreads)):
            out[idx] = vals
    return out


def _top(values: np.ndarray, k: int = 5) -> list:
    if not len(values):
        return []
    k = min(k, len(values))
    idx = np.argsort(-values, kind="stable")[:k]
    return [(int(i), float(values[i])) for i in idx]


def _report(kind, values, basis, f, t0, **kw) -> OscReport:
    i = int(np.argmax(values))
    return OscReport(
        kind=kind,
        value=float(values[i]),
        argmax=basis.shape(i),
        argmax_index=i,
        basis=basis.spec,
        res=f.res,
        runtime_ms=(time.perf_counter() - t0) * 1e3,
        shapes=int(basis.count),
        trail=_top(values),
        **kw,
    )


def bmo_norm(f: GridFunction, basis, p: float = 1.0, direct: bool = False, threads=None, work_limit=None) -> OscReport:
    """sup over shapes of (mean over S of |f - f_S|^p)^(1/p).

    ``p = 2`` uses the variance identity on prefix tables unless ``direct``.
    """
    t0 = time.perf_counter()
    b = Basis.of(basis, f)
    vals = shape_values(f, b, "bmo", p, direct, threads, work_limit)
    return _report("bmo", vals, b, f, t0, p=float(p))


def blo_norm(f: GridFunction, basis, threads=None, work_limit=None) -> OscReport:
    """sup over shapes of mean_S f - min_S f."""
    t0 = time.perf_counter()
    b = Basis.of(basis, f)
    vals = shape_values(f, b, "blo", threads=threads, work_limit=work_limit)
    return _report("blo", vals, b, f, t0)


def _lifted(f: GridFunction, split, i: int, basis_i) -> tuple[Basis, FactorSplit]:
    split = FactorSplit.of(split).check(f.ndim)
    if not 0 <= i < split.k:
        raise BasisError(f"factor index {i} out of range for split {split.parts}")
    factors = [_as_spec(basis_i) if j == i else BasisSpec("cells") for j in range(split.k)]
    return Basis.of(product_spec(factors, split), f), split


def lower_bmo(f: GridFunction, split, i: int, basis_i, p: float = 1.0, threads=None, work_limit=None) -> OscReport:
    """sup over slices (all other coordinates fixed) of the factor-i BMO norm."""
    t0 = time.perf_counter()
    b, split = _lifted(f, split, i, basis_i)
    vals = shape_values(f, b, "bmo", p, threads=threads, work_limit=work_limit)
    return _report("lower_bmo", vals, b, f, t0, p=float(p), split=split.parts, factor=i)


def lower_blo(f: GridFunction, split, i: int, basis_i, threads=None, work_limit=None) -> OscReport:
    t0 = time.perf_counter()
    b, split = _lifted(f, split, i, basis_i)
    vals = shape_values(f, b, "blo", threads=threads, work_limit=work_limit)
    return _report("lower_blo", vals, b, f, t0, split=split.parts, factor=i)


def lower_norms(f: GridFunction, basis, split, kind: str = "bmo", p: float = 1.0, **kw) -> list[OscReport]:
    """All k lower-dimensional norms, using the factor bases of ``basis``."""
    split = FactorSplit.of(split).check(f.ndim)
    specs = factor_specs(_as_spec(basis), split)
    if kind == "bmo":
        return [lower_bmo(f, split, i, specs[i], p, **kw) for i in range(split.k)]
    return [lower_blo(f, split, i, specs[i], **kw) for i in range(split.k)]


# -- rectangular norms -----------------------------------------------------------------


def _factor_setup(f: GridFunction, split, factor_bases):
    split = FactorSplit.of(split).check(f.ndim)
    if isinstance(factor_bases, (BasisSpec, dict, str)):
        specs = factor_specs(_as_spec(factor_bases), split)
    else:
        specs = [_as_spec(s) for s in factor_bases]
    if len(specs) != split.k:
        raise BasisError(f"{len(specs)} factor bases for a {split.k}-factor split")
    from .bases import _subdomain

    bases = []
    for i, s in enumerate(specs):
        axes = split.axes(i)
        bases.append(Basis(s, [f.res[a] for a in axes], [f.spacing[a] for a in axes], _subdomain(f.domain, axes)))
    return split, specs, bases


def _rec(f, split, factor_bases, mode, work_limit):
    split, specs, bases = _factor_setup(f, split, factor_bases)
    work = 1
    for b in bases:
        work *= b.total_cells()
    limit = WORK_LIMIT if work_limit is None else work_limit
    if work > limit:
        raise ComplexityError(
            f"rectangular statistics over this basis visit {work:.3g} cells (limit {limit:.3g}); "
            "use dyadic or stride factor bases or a lower resolution"
        )
    C = [int(np.prod([f.res[a] for a in split.axes(i)])) for i in range(split.k)]
    G = (f.values - f.values.mean()).reshape(C)
    csr = [b.cell_lists() for b in bases]
    if split.k == 2:
        vals = kernels.rec_k2(G, csr[0][0], csr[0][1], csr[1][0], csr[1][1], mode)
    elif split.k == 3 and mode == 1:
        vals = kernels.rec_blo_k3(G, csr[0][0], csr[0][1], csr[1][0], csr[1][1], csr[2][0], csr[2][1])
    else:
        raise BasisError(f"rectangular statistic mode {mode} is not available for {split.k} factors")
    return split, specs, bases, vals


def _rec_report(kind, f, split, specs, bases, vals, t0) -> OscReport:
    flat = vals.ravel()
    i = int(np.argmax(flat))
    multi = np.unravel_index(i, vals.shape)
    parts = tuple(b.shape(int(j)) for b, j in zip(bases, multi))
    shape = _embed(parts, split)
    return OscReport(
        kind=kind,
        value=float(flat[i]),
        argmax=shape,
        argmax_index=i,
        basis=product_spec(specs, split),
        res=f.res,
        split=split.parts,
        runtime_ms=(time.perf_counter() - t0) * 1e3,
        shapes=int(flat.size),
        trail=_top(flat),
    )


def _embed(parts: Sequence[Shape], split: FactorSplit) -> Shape:
    """Product shape from factor shapes; keeps the parts for later recomputation."""
    if not any(p.is_mask for p in parts):
        s = compose(parts, split)
        return Shape(s.ranges, parts=tuple(parts))
    ranges, center, axes = [], [], []
    radius = pn = None
    for p in parts:
        ranges.extend(p.ranges)
        if p.is_mask:
            center.extend(p.center)
            axes.extend(p.ball_axes)
            radius, pn = p.radius, p.p
        else:
            center.extend([0.0] * p.ndim)
            axes.extend([False] * p.ndim)
    return Shape(tuple(ranges), tuple(center), radius, pn, tuple(axes), parts=tuple(parts))


def rec_bmo(f: GridFunction, split, factor_bases, work_limit=None) -> OscReport:
    """sup over S1 x S2 of mean |f - (f_x)_{S2} - (f_y)_{S1} + f_S| (two factors only)."""
    t0 = time.perf_counter()
    if FactorSplit.of(split).k != 2:
        raise BasisError("rectangular BMO is defined for exactly two factors")
    split, specs, bases, vals = _rec(f, split, factor_bases, 0, work_limit)
    return _rec_report("rec_bmo", f, split, specs, bases, vals, t0)


def rec_blo(f: GridFunction, split, factor_bases, work_limit=None) -> OscReport:
    """sup over products S of mean_S [f - max_i min over S_i of the slice f_{z_i-hat}]."""
    t0 = time.perf_counter()
    split, specs, bases, vals = _rec(f, split, factor_bases, 1, work_limit)
    return _rec_report("rec_blo", f, split, specs, bases, vals, t0)


def rec_blo_naive(f: GridFunction, split, factor_bases, work_limit=None) -> OscReport:
    """The absolute-value variant with min_S f added back (two factors only)."""
    t0 = time.perf_counter()
    if FactorSplit.of(split).k != 2:
        raise BasisError("the naive rectangular BLO statistic is defined for two factors")
    split, specs, bases, vals = _rec(f, split, factor_bases, 2, work_limit)
    return _rec_report("rec_blo_naive", f, split, specs, bases, vals, t0)


# -- single-shape statistics ------------------------------------------------------------


def _factor_block(f: GridFunction, shape: Shape, split) -> np.ndarray:
    """Values on ``shape`` arranged as an array with one axis per factor."""
    split = FactorSplit.of(split).check(f.ndim)
    sl = tuple(slice(a, b) for a, b in shape.ranges)
    sub = np.asarray(f.values[sl], dtype=np.float64)
    local = shape.local_mask()
    ext = shape.extents
    C = [int(np.prod([ext[a] for a in split.axes(i)])) for i in range(split.k)]
    block = sub.reshape(C)
    lm = local.reshape(C)
    for i in range(split.k):
        keep = lm.any(axis=tuple(j for j in range(split.k) if j != i))
        block = np.compress(keep, block, axis=i)
    return block


def shape_statistic(f: GridFunction, shape: Shape, kind: str, p: float = 1.0, split=None) -> float:
    """Recompute one shape's statistic from scratch with plain numpy."""
    if kind in ("bmo", "blo", "lower_bmo", "lower_blo"):
        sl = tuple(slice(a, b) for a, b in shape.ranges)
        v = np.asarray(f.values[sl], dtype=np.float64)[shape.local_mask()]
        if kind.endswith("blo"):
            return float(max(v.mean() - v.min(), 0.0))
        return float(np.mean(np.abs(v - v.mean()) ** p) ** (1.0 / p))
    if split is None:
        raise BasisError(f"{kind} needs a factor split")
    B = _factor_block(f, shape, split)
    if kind == "rec_bmo":
        if B.ndim != 2:
            raise BasisError("rectangular BMO is defined for exactly two factors")
        return float(np.abs(B - B.mean(axis=1, keepdims=True) - B.mean(axis=0, keepdims=True) + B.mean()).mean())
    if kind == "rec_blo":
        t = B.min(axis=0, keepdims=True)
        for i in range(1, B.ndim):
            t = np.maximum(t, B.min(axis=i, keepdims=True))
        return float((B - t).mean())
    if kind == "rec_blo_naive":
        if B.ndim != 2:
            raise BasisError("the naive rectangular BLO statistic is defined for two factors")
        return float(np.abs(B - B.min(axis=1, keepdims=True) - B.min(axis=0, keepdims=True) + B.min()).mean())
    raise ValueError(f"unknown statistic {kind!r}")


def rec_integrand_min(f: GridFunction, shape: Shape, split) -> float:
    """Smallest value of f - max_i min_{S_i} f over the shape (never negative)."""
    B = _factor_block(f, shape, split)
    t = B.min(axis=0, keepdims=True)
    for i in range(1, B.ndim):
        t = np.maximum(t, B.min(axis=i, keepdims=True))
    return float((B - t).min())


def norm(f: GridFunction, kind: str, basis, p: float = 1.0, split=None, factor: int | None = None, **kw) -> OscReport:
    """Dispatch by kind name; the CLI's single entry point."""
    if kind == "bmo":
        return bmo_norm(f, basis, p, **kw)
    if kind == "blo":
        return blo_norm(f, basis, **kw)
    if split is None:
        raise BasisError(f"{kind} needs a factor split")
    if kind in ("lower_bmo", "lower_blo"):
        if factor is None:
            raise BasisError(f"{kind} needs a factor index")
        spec_i = factor_specs(_as_spec(basis), split)[factor]
        if kind == "lower_bmo":
            return lower_bmo(f, split, factor, spec_i, p, **kw)
        return lower_blo(f, split, factor, spec_i, **kw)
    kw.pop("threads", None)
    if kind == "rec_bmo":
        return rec_bmo(f, split, basis, **kw)
    if kind == "rec_blo":
        return rec_blo(f, split, basis, **kw)
    if kind == "rec_blo_naive":
        return rec_blo_naive(f, split, basis, **kw)
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {', '.join(KINDS)}")


# -- maximal function ------------------------------------------------------------------


def maximal(f: GridFunction, basis, mode: str = "abs", threads=None) -> GridFunction:
    """M f(x) = max over shapes S containing x of the mean of |f| (or f) on S."""
    if mode not in ("abs", "signed"):
        raise ValueError(f"mode must be 'abs' or 'signed', got {mode!r}")
    b = Basis.of(basis, f)
    vals = np.abs(f.values) if mode == "abs" else f.values
    V = padded3(vals)
    out = np.full(V.shape, -np.inf)
    if b.is_mask:
        off = float(V.mean())
        for ch in b.chunks():
            cnt, s1, _, _ = kernels.mask_stats(V - off, ch.centers, ch.radii, b.pn, b.ball_ax, ch.boxes)
            kernels.stamp_masks(out, ch.centers, ch.radii, b.pn, b.ball_ax, ch.boxes, s1 / cnt + off)
    else:
        table = PrefixTable(vals)
        N = np.array(V.shape)
        for ext, st, _ in b.box_classes():
            avg = table.window_sums(ext)[st[:, 0], st[:, 1], st[:, 2]] / float(np.prod(ext)) + table.offset
            A = np.full(tuple(N - ext + 1), -np.inf)
            A[st[:, 0], st[:, 1], st[:, 2]] = avg
            kernels.dilate_boxes(out, A, int(ext[0]), int(ext[1]), int(ext[2]))
    bad = ~np.isfinite(out)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad.reshape(f.res))[0])
        where = [f.domain.lo[a] + (idx[a] + 0.5) * f.spacing[a] for a in range(f.ndim)]
        raise CoverError(f"basis does not cover cell {idx} (centre {where}); lower min_cells or use full granularity")
    return GridFunction(f.domain, out.reshape(f.res))
