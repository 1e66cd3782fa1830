"""Shape bases on a grid: declarative specs, enumeration, factor structure, engulfing.

A compiled basis is a product of *atoms*. An atom is a family of shapes on a
contiguous run of axes (intervals on one axis, cubes or p-balls on several).
Rectangles are the product of one interval atom per axis; cylinders are a
p-ball atom times an interval atom. Shapes are numbered lexicographically over
the atoms, the first atom varying slowest; inside an atom, shapes are ordered
by size and then by position.

Index conventions: a box is a sequence of half-open cell ranges ``(start,
stop)``. A p-ball is centred at a grid vertex (integer index coordinates) and
holds the cells whose centres ``i + 0.5`` lie at p-distance strictly less than
its radius, both measured in cell widths.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .grid import GridFunction

KINDS = ("intervals", "cubes", "centered_cubes", "rectangles", "p_balls", "cylinders", "product", "cells")
GRANULARITIES = ("full", "dyadic", "stride")
ENGULFING_KINDS = ("intervals", "cubes", "centered_cubes", "p_balls")
CHUNK = 1 << 18


class BasisError(ValueError):
    pass


class CoverError(BasisError):
    """Some cell lies in no enumerated shape."""


# -- specs -----------------------------------------------------------------------


@dataclass(frozen=True)
class FactorSplit:
    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts or any(p < 1 for p in parts):
            raise BasisError(f"factor split needs positive parts, got {parts}")
        object.__setattr__(self, "parts", parts)

    @property
    def k(self) -> int:
        return len(self.parts)

    @property
    def n(self) -> int:
        return sum(self.parts)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.cumsum((0,) + self.parts[:-1]))

    def axes(self, i: int) -> tuple[int, ...]:
        o = self.offsets[i]
        return tuple(range(o, o + self.parts[i]))

    def check(self, n: int) -> "FactorSplit":
        if self.n != n:
            raise BasisError(f"factor split {self.parts} does not sum to dimension {n}")
        return self

    @classmethod
    def of(cls, value) -> "FactorSplit":
        if isinstance(value, FactorSplit):
            return value
        if isinstance(value, str):
            value = [int(v) for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
        return cls(tuple(value))


def _parse_p(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


@dataclass(frozen=True)
class BasisSpec:
    kind: str
    granularity: str = "full"
    stride: int = 1
    min_cells: int = 1
    p: float = 2.0
    split: tuple[int, ...] | None = None
    factors: tuple["BasisSpec", ...] | None = None
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BasisError(f"unknown basis kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        gran = self.granularity
        if isinstance(gran, str) and gran.startswith("stride") and gran != "stride":
            # accept "stride:4" and "stride(4)"
            digits = "".join(ch for ch in gran[6:] if ch.isdigit())
            object.__setattr__(self, "stride", int(digits))
            gran = "stride"
        if gran not in GRANULARITIES:
            raise BasisError(f"unknown granularity {self.granularity!r}; expected full, dyadic or stride")
        object.__setattr__(self, "granularity", gran)
        if int(self.stride) < 1 or int(self.min_cells) < 1:
            raise BasisError("stride and min_cells must be at least 1")
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "min_cells", int(self.min_cells))
        p = _parse_p(self.p)
        if not p >= 1:
            raise BasisError(f"p must lie in [1, inf], got {p}")
        object.__setattr__(self, "p", p)
        if self.split is not None:
            object.__setattr__(self, "split", FactorSplit.of(self.split).parts)
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(_as_spec(f) for f in self.factors))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "product":
            if not self.factors or self.split is None or len(self.factors) != len(self.split):
                raise BasisError("product basis needs 'factors' and a 'split' of the same length")

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise BasisError("basis spec must be a JSON object with a 'kind'")
        known = {"kind", "granularity", "stride", "min_cells", "p", "split", "factors", "center"}
        extra = set(d) - known
        if extra:
            raise BasisError(f"unknown basis field(s): {', '.join(sorted(extra))}")
        kw = dict(d)
        if "factors" in kw and kw["factors"] is not None:
            kw["factors"] = tuple(cls.from_dict(f) for f in kw["factors"])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "granularity": self.granularity}
        if self.granularity == "stride":
            out["stride"] = self.stride
        if self.min_cells != 1:
            out["min_cells"] = self.min_cells
        if self.kind in ("p_balls", "cylinders"):
            out["p"] = "inf" if math.isinf(self.p) else self.p
        if self.split is not None:
            out["split"] = list(self.split)
        if self.factors is not None:
            out["factors"] = [f.to_dict() for f in self.factors]
        if self.center is not None:
            out["center"] = list(self.center)
        return out

    @classmethod
    def parse(cls, text: str) -> "BasisSpec":
        """Inline JSON, ``@path`` to a JSON file, or a bare kind name."""
        text = text.strip()
        if text.startswith("@"):
            text = Path(text[1:]).read_text()
        if not text.startswith("{"):
            return cls(kind=text)
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BasisError(f"basis is not valid JSON: {exc}") from exc

    def with_(self, **kw) -> "BasisSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return BasisSpec(**d)


def _as_spec(s) -> BasisSpec:
    if isinstance(s, BasisSpec):
        return s
    if isinstance(s, dict):
        return BasisSpec.from_dict(s)
    if isinstance(s, str):
        return BasisSpec.parse(s)
    raise BasisError(f"cannot interpret {s!r} as a basis spec")


def factor_specs(spec: BasisSpec, split) -> list[BasisSpec]:
    """The factor bases S_i a basis decomposes into under ``split``."""
    split = FactorSplit.of(split)
    if spec.kind == "product":
        if tuple(spec.split) != split.parts:
            raise BasisError(f"product basis has split {spec.split}, not {split.parts}")
        return list(spec.factors)
    base = dict(granularity=spec.granularity, stride=spec.stride, min_cells=spec.min_cells)
    if spec.kind in ("rectangles", "intervals", "cells"):
        kind = "cells" if spec.kind == "cells" else None
        return [BasisSpec(kind or ("intervals" if d == 1 else "rectangles"), **base) for d in split.parts]
    if spec.kind == "cubes":
        return [BasisSpec("intervals" if d == 1 else "cubes", **base) for d in split.parts]
    if spec.kind == "cylinders":
        parts = spec.split or split.parts
        if tuple(parts) != split.parts or split.k != 2:
            raise BasisError(f"cylinders factor as (ball, interval) with split {parts}")
        return [BasisSpec("p_balls", p=spec.p, **base), BasisSpec("intervals" if split.parts[1] == 1 else "rectangles", **base)]
    raise BasisError(f"basis kind {spec.kind!r} has no factor decomposition")


def product_spec(factors: Sequence, split) -> BasisSpec:
    split = FactorSplit.of(split)
    return BasisSpec("product", split=split.parts, factors=tuple(_as_spec(f) for f in factors))


# -- shapes ----------------------------------------------------------------------


@dataclass(frozen=True)
class Shape:
    """One basis member: an index box, or a p-ball mask inside its bounding box.

    For a p-ball, ``center`` is in index coordinates (cell i spans [i, i+1))
    and ``ball_axes`` flags the axes the ball lives on; the remaining axes are
    plain ranges given by ``ranges``.
    """

    ranges: tuple[tuple[int, int], ...]
    center: tuple[float, ...] | None = None
    radius: float | None = None
    p: float | None = None
    ball_axes: tuple[bool, ...] | None = None
    parts: tuple["Shape", ...] | None = field(default=None, compare=False)

    @property
    def ndim(self) -> int:
        return len(self.ranges)

    @property
    def is_mask(self) -> bool:
        return self.center is not None

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.ranges)

    def cells(self, res: Sequence[int]) -> np.ndarray:
        """Boolean membership array over the whole grid."""
        out = np.zeros(tuple(res), dtype=bool)
        sl = tuple(slice(a, b) for a, b in self.ranges)
        out[sl] = self.local_mask()
        return out

    def local_mask(self) -> np.ndarray:
        """Membership restricted to the bounding box."""
        if not self.is_mask:
            return np.ones(self.extents, dtype=bool)
        grids = np.meshgrid(
            *[np.arange(a, b) + 0.5 - c for (a, b), c in zip(self.ranges, self.center)], indexing="ij"
        )
        d = [np.abs(g) if on else np.zeros_like(g) for g, on in zip(grids, self.ball_axes)]
        if math.isinf(self.p):
            dist = np.max(np.stack(d), axis=0)
            return dist < self.radius
        return sum(v**self.p for v in d) < self.radius**self.p

    @property
    def count(self) -> int:
        return int(self.local_mask().sum())

    def measure(self, gf: GridFunction) -> float:
        return self.count * gf.cell_measure

    def describe(self, gf: GridFunction | None = None) -> dict:
        out = {"index_lo": [a for a, _ in self.ranges], "index_hi": [b for _, b in self.ranges]}
        if gf is not None:
            h = gf.spacing
            out["lo"] = [gf.domain.lo[i] + a * h[i] for i, (a, _) in enumerate(self.ranges)]
            out["hi"] = [gf.domain.lo[i] + b * h[i] for i, (_, b) in enumerate(self.ranges)]
        if self.is_mask:
            out["mask"] = {
                "center_index": list(self.center),
                "radius_cells": self.radius,
                "p": "inf" if math.isinf(self.p) else self.p,
                "ball_axes": list(self.ball_axes),
            }
        return out

    @classmethod
    def box(cls, ranges) -> "Shape":
        rs = tuple((int(a), int(b)) for a, b in ranges)
        if any(b <= a for a, b in rs):
            raise BasisError(f"empty box {rs}")
        return cls(rs)


def factor(s: Shape, split) -> list[Shape]:
    """Split a box into its per-factor boxes."""
    if s.is_mask:
        raise BasisError("a ball-masked shape cannot be factored into boxes")
    split = FactorSplit.of(split).check(s.ndim)
    return [Shape(tuple(s.ranges[a] for a in split.axes(i))) for i in range(split.k)]


def compose(parts: Sequence[Shape], split=None) -> Shape:
    if split is not None:
        split = FactorSplit.of(split)
        if tuple(p.ndim for p in parts) != split.parts:
            raise BasisError(f"factor dimensions {[p.ndim for p in parts]} do not match split {split.parts}")
    if any(p.is_mask for p in parts):
        raise BasisError("compose only handles box factors")
    return Shape(tuple(r for p in parts for r in p.ranges))


# -- atoms -------------------------------------------------------------------------


def lengths(N: int, spec: BasisSpec, cap: int | None = None) -> np.ndarray:
    """Admissible side lengths along an axis of N cells."""
    top = N if cap is None else min(N, cap)
    if spec.granularity == "full":
        ls = range(1, top + 1)
    elif spec.granularity == "dyadic":
        ls = [1 << k for k in range(top.bit_length()) if (1 << k) <= top]
    else:
        ls = range(spec.stride, top + 1, spec.stride)
    return np.array([t for t in ls if t >= spec.min_cells], dtype=np.int64)


def starts(N: int, t: int, spec: BasisSpec) -> np.ndarray:
    step = 1
    if spec.granularity == "dyadic":
        step = t
    elif spec.granularity == "stride":
        step = spec.stride
    return np.arange(0, N - t + 1, step, dtype=np.int64)


class _Atom:
    """Shapes on axes ``axes`` (contiguous, global numbering)."""

    axes: tuple[int, ...]
    boxes: np.ndarray  # (m, d, 2) bounding boxes
    classes: list  # (extents (d,), first index, count)
    mask: bool = False

    @property
    def count(self) -> int:
        return len(self.boxes)


class _BoxAtom(_Atom):
    def __init__(self, axes, per_class):
        self.axes = tuple(axes)
        blocks, self.classes, pos = [], [], 0
        for ext, st in per_class:
            st = np.asarray(st, dtype=np.int64).reshape(-1, len(self.axes))
            if not len(st):
                continue
            b = np.empty((len(st), len(self.axes), 2), dtype=np.int64)
            b[:, :, 0] = st
            b[:, :, 1] = st + np.asarray(ext)
            blocks.append(b)
            self.classes.append((tuple(int(e) for e in ext), pos, len(st)))
            pos += len(st)
        if not blocks:
            raise BasisError(f"basis has no shapes on axes {self.axes} at this resolution")
        self.boxes = np.concatenate(blocks)


class _BallAtom(_Atom):
    """Vertex-centred p-balls of integer radius on ``len(axes) >= 2`` axes."""

    def __init__(self, axes, res, spec: BasisSpec):
        self.axes = tuple(axes)
        self.p = spec.p
        d = len(axes)
        rs = [int(res[a]) for a in axes]
        self.classes, cen, rad, blocks = [], [], [], []
        pos = 0
        for k in _ball_radii(min(rs), spec):
            w = ball_halfwidth(k, self.p, d)
            if w == 0 or 2 * w < spec.min_cells or 2 * w > min(rs):
                continue
            step = k if spec.granularity == "dyadic" else spec.stride if spec.granularity == "stride" else 1
            axes_c = [np.arange(w, N - w + 1, dtype=np.int64) for N in rs]
            axes_c = [c[c % step == 0] for c in axes_c]
            c = np.stack(np.meshgrid(*axes_c, indexing="ij"), -1).reshape(-1, d)
            if not len(c):
                continue
            b = np.empty((len(c), d, 2), dtype=np.int64)
            b[:, :, 0] = c - w
            b[:, :, 1] = c + w
            blocks.append(b)
            cen.append(c.astype(np.float64))
            rad.append(np.full(len(c), float(k)))
            self.classes.append(((2 * w,) * d, pos, len(c)))
            pos += len(c)
        if not blocks:
            raise BasisError(f"p-ball basis has no balls fitting a grid of {tuple(rs)} cells")
        self.boxes = np.concatenate(blocks)
        self.centers = np.concatenate(cen)
        self.radii = np.concatenate(rad)
        # a sup-ball is its bounding cube
        self.mask = not math.isinf(self.p)


def _ball_radii(top: int, spec: BasisSpec):
    if spec.granularity == "dyadic":
        return [1 << j for j in range(top.bit_length() + 1) if (1 << j) <= top]
    if spec.granularity == "stride":
        return list(range(spec.stride, top + 1, spec.stride))
    return list(range(1, top + 1))


def ball_halfwidth(k: float, p: float, d: int) -> int:
    """Cells on each side of the centre vertex covered by a radius-k ball."""
    off = np.arange(int(math.ceil(k)) + 1) + 0.5
    if math.isinf(p):
        reach = off
    else:
        reach = (off**p + (d - 1) * 0.5**p) ** (1.0 / p)
    return int((reach < k).sum())


def _isotropic(spacing, axes, what):
    h = [spacing[a] for a in axes]
    if max(h) - min(h) > 1e-12 * max(h):
        raise BasisError(f"{what} need equal cell widths on axes {axes}, got {h}")


def _cube_atom(axes, res, spec, centered_c2=None):
    rs = [int(res[a]) for a in axes]
    classes = []
    for t in lengths(min(rs), spec):
        if centered_c2 is not None:
            st = [(c2 - t) // 2 for c2 in centered_c2]
            if any((c2 - t) % 2 for c2 in centered_c2) or any(s < 0 or s + t > N for s, N in zip(st, rs)):
                continue
            classes.append(((int(t),) * len(rs), np.array([st])))
            continue
        per = [starts(N, int(t), spec) for N in rs]
        st = np.stack(np.meshgrid(*per, indexing="ij"), -1).reshape(-1, len(rs))
        classes.append(((int(t),) * len(rs), st))
    return _BoxAtom(axes, classes)


def _interval_atom(axis, N, spec):
    return _BoxAtom((axis,), [((int(t),), starts(N, int(t), spec)) for t in lengths(N, spec)])


def _compile_atoms(spec: BasisSpec, axes: tuple[int, ...], res, spacing, domain) -> list[_Atom]:
    d = len(axes)
    if spec.kind == "intervals":
        if d != 1:
            raise BasisError(f"intervals live on one axis, got {d}")
        return [_interval_atom(axes[0], res[axes[0]], spec)]
    if spec.kind == "rectangles":
        return [_interval_atom(a, res[a], spec) for a in axes]
    if spec.kind == "cells":
        return [_BoxAtom((a,), [((1,), np.arange(res[a]))]) for a in axes]
    if spec.kind == "cubes":
        _isotropic(spacing, axes, "cubes")
        return [_cube_atom(axes, res, spec)]
    if spec.kind == "centered_cubes":
        _isotropic(spacing, axes, "centred cubes")
        return [_cube_atom(axes, res, spec, centered_c2=_center_c2(spec, axes, res, spacing, domain))]
    if spec.kind == "p_balls":
        if d == 1:
            # a one-dimensional ball is an even-length interval
            return [_BoxAtom((axes[0],), _even_intervals(res[axes[0]], spec))]
        _isotropic(spacing, axes, "p-balls")
        return [_BallAtom(axes, res, spec)]
    if spec.kind in ("cylinders", "product"):
        split = FactorSplit.of(spec.split) if spec.split else FactorSplit((d - 1, 1) if d > 1 else (1,))
        split.check(d)
        fspecs = factor_specs(spec, split)
        out = []
        for i, fs in enumerate(fspecs):
            out.extend(_compile_atoms(fs, tuple(axes[a] for a in split.axes(i)), res, spacing, domain))
        return out
    raise BasisError(f"cannot compile basis kind {spec.kind!r}")


def _even_intervals(N, spec):
    out = []
    for k in _ball_radii(N, spec):
        t = 2 * k
        if t > N or t < spec.min_cells:
            continue
        step = k if spec.granularity == "dyadic" else spec.stride if spec.granularity == "stride" else 1
        c = np.arange(k, N - k + 1)
        out.append(((t,), c[c % step == 0] - k))
    return out


def _center_c2(spec, axes, res, spacing, domain):
    center = spec.center if spec.center is not None else (0.0,) * len(axes)
    if len(center) != len(axes):
        raise BasisError(f"centre {center} has wrong dimension for axes {axes}")
    out = []
    for c, a in zip(center, axes):
        v = 2 * (c - domain.lo[a]) / spacing[a]
        if abs(v - round(v)) > 1e-9 or not 0 <= round(v) <= 2 * res[a]:
            raise BasisError(f"centre coordinate {c} on axis {a} is not a cell vertex or centre inside the grid")
        out.append(int(round(v)))
    return out


# -- compiled basis ------------------------------------------------------------------


@dataclass
class Chunk:
    """Shapes ``start .. start+len`` in padded (k, 3, 2) form."""

    start: int
    boxes: np.ndarray
    centers: np.ndarray | None = None
    radii: np.ndarray | None = None

    def __len__(self):
        return len(self.boxes)

    @property
    def sizes(self) -> np.ndarray:
        return np.prod(self.boxes[:, :, 1] - self.boxes[:, :, 0], axis=1)


class Basis:
    """A basis spec compiled against a grid's resolution."""

    def __init__(self, spec: BasisSpec, res: Sequence[int], spacing=None, domain=None, atoms=None):
        self.spec = spec
        self.res = tuple(int(r) for r in res)
        self.ndim = len(self.res)
        self.spacing = tuple(spacing) if spacing is not None else (1.0,) * self.ndim
        self.domain = domain
        if atoms is None:
            if spec.kind == "intervals" and self.ndim != 1:
                raise BasisError(f"intervals basis needs a one-dimensional grid, got dimension {self.ndim}")
            if spec.split is not None and spec.kind in ("product", "cylinders"):
                FactorSplit.of(spec.split).check(self.ndim)
            atoms = _compile_atoms(spec, tuple(range(self.ndim)), self.res, self.spacing, domain)
        self.atoms = atoms
        balls = [a for a in atoms if a.mask]
        if len(balls) > 1:
            raise BasisError("at most one masked p-ball factor is supported")
        self.is_mask = bool(balls)
        self.pn = balls[0].p if balls else 2.0
        self.lead = 3 - self.ndim  # padded axis of real axis a is a + lead
        self.ball_ax = np.zeros(3, dtype=np.bool_)
        if balls:
            self.ball_ax[[a + self.lead for a in balls[0].axes]] = True
        self.dims = tuple(a.count for a in atoms)
        self.count = int(np.prod(self.dims))

    @classmethod
    def of(cls, spec, gf: GridFunction) -> "Basis":
        if isinstance(spec, Basis):
            if spec.res != gf.res:
                raise BasisError(f"basis compiled for {spec.res}, grid is {gf.res}")
            return spec
        spec = _as_spec(spec)
        return cls(spec, gf.res, gf.spacing, gf.domain)

    def __len__(self):
        return self.count

    def chunk(self, lo: int, hi: int) -> Chunk:
        idx = np.arange(lo, hi, dtype=np.int64)
        multi = np.unravel_index(idx, self.dims) if len(self.dims) > 1 else (idx,)
        boxes = np.zeros((len(idx), 3, 2), dtype=np.int64)
        boxes[:, :, 1] = 1
        centers = radii = None
        for atom, sel in zip(self.atoms, multi):
            ax = [a + self.lead for a in atom.axes]
            boxes[:, ax] = atom.boxes[sel]
            if atom.mask:
                centers = np.zeros((len(idx), 3))
                centers[:, ax] = atom.centers[sel]
                radii = atom.radii[sel]
        return Chunk(lo, boxes, centers, radii)

    def chunks(self, size: int = CHUNK) -> Iterator[Chunk]:
        for lo in range(0, self.count, size):
            yield self.chunk(lo, min(self.count, lo + size))

    def shape(self, i: int) -> Shape:
        if not 0 <= i < self.count:
            raise IndexError(i)
        multi = np.unravel_index(i, self.dims) if len(self.dims) > 1 else (i,)
        ranges = [None] * self.ndim
        center = [0.0] * self.ndim
        radius = None
        for atom, j in zip(self.atoms, multi):
            for q, a in enumerate(atom.axes):
                ranges[a] = (int(atom.boxes[j, q, 0]), int(atom.boxes[j, q, 1]))
                if atom.mask:
                    center[a] = float(atom.centers[j, q])
            if atom.mask:
                radius = float(atom.radii[j])
        if not self.is_mask:
            return Shape(tuple(ranges))
        return Shape(tuple(ranges), tuple(center), radius, self.pn, tuple(bool(b) for b in self.ball_ax[self.lead :]))

    def shapes(self) -> Iterator[Shape]:
        for i in range(self.count):
            yield self.shape(i)

    def total_cells(self) -> int:
        """Sum over shapes of bounding-box cell counts (work estimate)."""
        tot = 1
        for atom in self.atoms:
            tot *= int(np.prod(atom.boxes[:, :, 1] - atom.boxes[:, :, 0], axis=1).sum())
        return tot

    def box_classes(self):
        """Yield ``(extents (3,), starts (q, 3), flat indices (q,))`` groups
        that together cover every shape of a box basis exactly once."""
        if self.is_mask:
            raise BasisError("extent classes only exist for box bases")
        strides = [int(np.prod(self.dims[i + 1 :])) for i in range(len(self.dims))]
        for combo in itertools.product(*[a.classes for a in self.atoms]):
            ext = np.ones(3, dtype=np.int64)
            sizes = [cnt for _, _, cnt in combo]
            grids = np.unravel_index(np.arange(int(np.prod(sizes))), sizes)
            st = np.zeros((len(grids[0]), 3), dtype=np.int64)
            idx = np.zeros(len(grids[0]), dtype=np.int64)
            for atom, (e, pos, cnt), g, stride in zip(self.atoms, combo, grids, strides):
                ax = [a + self.lead for a in atom.axes]
                ext[ax] = e
                st[:, ax] = atom.boxes[pos + g, :, 0]
                idx += (pos + g) * stride
            yield ext, st, idx

    def contains(self, s: Shape) -> bool:
        """Membership predicate: is ``s`` one of the enumerated shapes?"""
        if s.ndim != self.ndim or s.is_mask != self.is_mask:
            return False
        for atom in self.atoms:
            sub = np.array([s.ranges[a] for a in atom.axes], dtype=np.int64)
            hit = np.all(atom.boxes == sub[None], axis=(1, 2))
            if atom.mask:
                c = np.array([s.center[a] for a in atom.axes])
                hit &= np.all(atom.centers == c[None], axis=1) & (atom.radii == s.radius)
            if not hit.any():
                return False
        return True

    # -- factor structure ----------------------------------------------------

    def factor_bases(self, split) -> list["Basis"]:
        split = FactorSplit.of(split).check(self.ndim)
        out = []
        for i, fs in enumerate(factor_specs(self.spec, split)):
            axes = split.axes(i)
            out.append(
                Basis(
                    fs,
                    [self.res[a] for a in axes],
                    [self.spacing[a] for a in axes],
                    _subdomain(self.domain, axes),
                )
            )
        return out

    def cell_lists(self):
        """CSR (ptr, idx) of flat cell indices, one row per shape, over this basis's own grid."""
        ptr = np.zeros(self.count + 1, dtype=np.int64)
        rows = []
        res3 = (1,) * self.lead + self.res
        flat = np.arange(int(np.prod(res3))).reshape(res3)
        for ch in self.chunks():
            for q in range(len(ch)):
                b = ch.boxes[q]
                sl = tuple(slice(int(b[a, 0]), int(b[a, 1])) for a in range(3))
                grid = flat[sl]
                if ch.centers is not None:
                    s = Shape(tuple((int(b[a, 0]), int(b[a, 1])) for a in range(3)),
                              tuple(ch.centers[q]), float(ch.radii[q]), self.pn, tuple(bool(v) for v in self.ball_ax))
                    grid = grid[s.local_mask()]
                rows.append(grid.ravel())
                ptr[ch.start + q + 1] = grid.size
        ptr = np.cumsum(ptr)
        return ptr, (np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)).astype(np.int64)


def _subdomain(domain, axes):
    if domain is None:
        return None
    from .grid import Box

    return Box(tuple(domain.lo[a] for a in axes), tuple(domain.hi[a] for a in axes))


def enumerate_shapes(spec, gf: GridFunction) -> Iterator[Shape]:
    """Every shape of ``spec`` on ``gf``'s grid, in the deterministic basis order."""
    return Basis.of(spec, gf).shapes()


# -- doubling and engulfing --------------------------------------------------------


class EngulfError(BasisError):
    pass


@dataclass
class EngulfReport:
    kind: str
    passed: bool
    c_d_emp: float
    c_e_emp: float
    cap_d: float
    cap_e: float
    pairs_checked: int
    exhaustive: bool
    seed: int | None = None
    witness: dict | None = None
    series: list | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def _align(spec: BasisSpec) -> int:
    if spec.kind == "centered_cubes":
        return 3
    return {"full": 0, "dyadic": 1, "stride": 2}[spec.granularity]


class _BoxGeometry:
    """Parameters the cover kernels need for a single-atom box basis."""

    def __init__(self, basis: Basis):
        spec = basis.spec
        self.basis = basis
        self.cube = spec.kind in ("cubes", "centered_cubes")
        self.ndim = basis.ndim
        self.lead = 3 - basis.ndim
        self.res = np.array((1,) * self.lead + basis.res, dtype=np.int64)
        self.align = _align(spec)
        self.stride = spec.stride
        self.sides = lengths(max(basis.res), spec) if not self.cube else lengths(min(basis.res), spec)
        self.c2 = np.zeros(3, dtype=np.int64)
        if spec.kind == "centered_cubes":
            self.c2[self.lead :] = _center_c2(spec, tuple(range(basis.ndim)), basis.res, basis.spacing, basis.domain)

    def cover(self, lo, hi):
        return kernels.smallest_cover(
            np.asarray(lo, dtype=np.int64), np.asarray(hi, dtype=np.int64), self.res, self.ndim,
            self.cube, self.sides, self.align, self.stride, self.c2,
        )

    def doubles(self, boxes: np.ndarray) -> np.ndarray:
        """S~ for each padded box: the smallest member holding its clipped double."""
        spec = self.basis.spec
        lo, hi = boxes[:, :, 0], boxes[:, :, 1]
        t = hi - lo
        if spec.granularity == "dyadic" and spec.kind != "centered_cubes":
            clo = (lo // (2 * t)) * (2 * t)
        else:
            clo = lo - t // 2
            if spec.granularity == "stride":
                clo = (clo // spec.stride) * spec.stride
        chi = clo + 2 * t
        clo = np.maximum(clo, 0)
        chi = np.minimum(chi, self.res[None, :])
        clo[:, : self.lead] = 0
        chi[:, : self.lead] = 1
        out = boxes.copy()
        for q in range(len(boxes)):
            vol, tb = self.cover(clo[q], chi[q])
            if vol > 0:
                out[q] = tb
        return out


def _single_atom(basis: Basis):
    if basis.spec.kind not in ENGULFING_KINDS and basis.spec.kind != "rectangles":
        raise EngulfError(f"basis kind {basis.spec.kind!r} has no doubling rule")


def associate_double(s: Shape, spec, gf: GridFunction) -> Shape:
    """The enlargement S~ of ``s``: concentric double, clipped to the grid.

    Boxes take the smallest basis member containing the clipped double; balls
    double their radius about the same centre.
    """
    basis = Basis.of(spec, gf)
    if basis.spec.kind not in ENGULFING_KINDS:
        raise EngulfError(f"basis kind {basis.spec.kind!r} has no doubling rule")
    if s.is_mask or basis.spec.kind == "p_balls":
        return _ball_double(s, basis)
    box = _pad(s)
    return _unpad(_BoxGeometry(basis).doubles(box[None])[0], basis.ndim)


def _pad(s: Shape) -> np.ndarray:
    b = np.zeros((3, 2), dtype=np.int64)
    b[:, 1] = 1
    b[3 - s.ndim :] = s.ranges
    return b


def _unpad(b, ndim) -> Shape:
    return Shape(tuple((int(b[a, 0]), int(b[a, 1])) for a in range(3 - ndim, 3)))


def _ball_params(s: Shape, basis: Basis):
    if s.is_mask:
        return np.array(s.center), s.radius, s.p
    # sup-balls and 1-D balls are stored as boxes: recover centre and radius
    c = np.array([(a + b) / 2 for a, b in s.ranges])
    ext = s.extents
    if basis.ndim > 1 and not math.isinf(basis.spec.p):
        raise EngulfError("ball shape lost its mask")
    return c, ext[0] / 2, basis.spec.p


def _ball_shape(center, radius, p, res) -> Shape:
    """Ball clipped to the grid, with its bounding box trimmed to the mask."""
    n = len(res)
    pn = p if n > 1 else math.inf
    k = int(math.ceil(radius)) + 1
    ranges = tuple((max(0, int(math.floor(c)) - k), min(int(r), int(math.ceil(c)) + k)) for c, r in zip(center, res))
    probe = Shape(ranges, tuple(float(c) for c in center), float(radius), pn, (True,) * n)
    m = probe.local_mask()
    if not m.any():
        raise EngulfError("ball misses the grid")
    idx = np.argwhere(m)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    tight = tuple((ranges[a][0] + int(lo[a]), ranges[a][0] + int(hi[a])) for a in range(n))
    if math.isinf(pn):
        return Shape(tight)
    return Shape(tight, probe.center, probe.radius, pn, probe.ball_axes)


def _ball_double(s: Shape, basis: Basis) -> Shape:
    c, r, p = _ball_params(s, basis)
    return _ball_shape(c, 2 * r, p, basis.res)


def engulf(s_tilde: Shape, t: Shape, spec, gf: GridFunction, s: Shape | None = None) -> Shape:
    """A member T-bar containing S~ and T.

    Boxes get the smallest containing member. Balls follow the three-radius
    construction: centre at a vertex inside S ∩ T, radius just large enough.
    ``s`` (the undoubled shape) is needed to check the meeting hypothesis;
    it defaults to ``s_tilde``.
    """
    basis = Basis.of(spec, gf)
    _single_atom(basis)
    res = basis.res
    s = s_tilde if s is None else s
    S, St, T = s.cells(res), s_tilde.cells(res), t.cells(res)
    if not (S & T).any():
        raise EngulfError("shapes do not meet")
    if not (T & ~St).any():
        raise EngulfError("T lies inside the enlarged shape; nothing to engulf")
    if basis.spec.kind == "p_balls":
        inter = np.argwhere(S & T) + 0.5
        v = np.round(inter.mean(axis=0))
        pts = np.argwhere(St | T) + 0.5
        d = np.abs(pts - v[None])
        p = basis.spec.p if basis.ndim > 1 else math.inf
        need = d.max(axis=1).max() if math.isinf(p) else ((d**p).sum(axis=1) ** (1 / p)).max()
        return _ball_shape(v, math.floor(need) + 1, basis.spec.p, res)
    u = np.minimum(_pad(s_tilde), _pad(t))
    u[:, 1] = np.maximum(_pad(s_tilde), _pad(t))[:, 1]
    vol, tb = _BoxGeometry(basis).cover(u[:, 0], u[:, 1])
    if vol < 0:
        raise EngulfError("no basis member contains both shapes")
    return _unpad(tb, basis.ndim)


def check_engulfing(spec, gf: GridFunction, budget: int = 2 * 10**8, seed: int = 0,
                    cap_d: float | None = None, cap_e: float | None = None) -> EngulfReport:
    """Worst doubling and engulfing ratios over qualifying pairs (S, T).

    A pair qualifies when S meets T and T is not inside S~. All pairs are
    checked when there are at most ``budget`` of them; otherwise ``budget``
    pairs are sampled uniformly with ``seed``.
    """
    basis = Basis.of(spec, gf)
    n = basis.ndim
    cap_d = float(2**n) if cap_d is None else cap_d
    cap_e = float(6**n) if cap_e is None else cap_e
    kind = basis.spec.kind
    if kind not in ENGULFING_KINDS and kind != "rectangles":
        return EngulfReport(kind, False, math.nan, math.nan, cap_d, cap_e, 0, False,
                            note=f"basis kind {kind!r} has no doubling rule")
    if kind == "p_balls":
        return _check_balls(basis, gf, budget, seed, cap_d, cap_e)
    geo = _BoxGeometry(basis)
    S = basis.chunk(0, basis.count).boxes
    St = S.copy() if kind == "rectangles" else geo.doubles(S)
    vol = lambda b: np.prod(b[:, :, 1] - b[:, :, 0], axis=1).astype(np.float64)
    c_d = float((vol(St) / vol(S)).max())
    m = len(S)
    exhaustive = m * m <= budget
    ii = jj = np.zeros(0, dtype=np.int64)
    used_seed = None
    if not exhaustive:
        used_seed = seed
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, m, budget, dtype=np.int64)
        jj = rng.integers(0, m, budget, dtype=np.int64)
    worst, ws, wt, count = kernels.engulf_boxes(
        S, St, S, ii, jj, exhaustive, geo.res, n, geo.cube, geo.sides, geo.align, geo.stride, geo.c2
    )
    witness = None
    if ws >= 0:
        u0 = np.minimum(St[ws, :, 0], S[wt, :, 0])
        u1 = np.maximum(St[ws, :, 1], S[wt, :, 1])
        _, tb = geo.cover(u0, u1)
        witness = {
            "S": _unpad(S[ws], n).describe(gf),
            "S_tilde": _unpad(St[ws], n).describe(gf),
            "T": _unpad(S[wt], n).describe(gf),
            "T_bar": _unpad(tb, n).describe(gf) if np.isfinite(worst) else None,
            "ratio": float(worst),
        }
    c_e = float(worst)
    passed = bool(np.isfinite(c_e) and c_d <= cap_d + 1e-12 and c_e <= cap_e + 1e-12)
    note = None
    if kind == "rectangles":
        passed = False
        note = "rectangles have no doubling rule; S~ = S was used and the ratio grows without bound (see the H witness)"
    return EngulfReport(kind, passed, c_d, c_e, cap_d, cap_e, int(count), bool(exhaustive),
                        used_seed, witness, note=note)


def _check_balls(basis, gf, budget, seed, cap_d, cap_e):
    res = basis.res
    m = basis.count
    shapes = [basis.shape(i) for i in range(m)]
    cells = [s.cells(res) for s in shapes]
    doubles = [_ball_double(s, basis) for s in shapes]
    dcells = [d.cells(res) for d in doubles]
    c_d = max(dc.sum() / c.sum() for c, dc in zip(cells, dcells))
    exhaustive = m * m <= min(budget, 200_000)
    if exhaustive:
        pairs = itertools.product(range(m), range(m))
    else:
        rng = np.random.default_rng(seed)
        pairs = zip(rng.integers(0, m, min(budget, 20_000)).tolist(), rng.integers(0, m, min(budget, 20_000)).tolist())
    worst, wit, count = 0.0, None, 0
    for a, b in pairs:
        if not (cells[a] & cells[b]).any() or not (cells[b] & ~dcells[a]).any():
            continue
        count += 1
        tbar = engulf(doubles[a], shapes[b], basis, gf, s=shapes[a])
        r = tbar.count / cells[b].sum()
        if r > worst:
            worst = r
            wit = {"S": shapes[a].describe(gf), "S_tilde": doubles[a].describe(gf),
                   "T": shapes[b].describe(gf), "T_bar": tbar.describe(gf), "ratio": float(r)}
    passed = bool(c_d <= cap_d + 1e-12 and worst <= cap_e + 1e-12)
    note = None
    if c_d > cap_d + 1e-12:
        note = (f"cell-counted doubles of small balls reach ratio {c_d:.4g} > {cap_d:g}: "
                "a lattice ball of radius k holds fewer cells than its continuum volume")
    return EngulfReport("p_balls", passed, float(c_d), float(worst), cap_d, cap_e, count, exhaustive,
                        None if exhaustive else seed, wit, note=note)


def rectangle_witness(H: int) -> dict:
    """S = [0,1]x[0,H], T = [0,H]x[0,1] on unit cells: any rectangle holding
    both has area at least H^2, so |T-bar|/|T| >= H."""
    H = int(H)
    if H < 2:
        raise BasisError("witness needs H >= 2")
    res = np.array([1, H, H], dtype=np.int64)
    sides = np.arange(1, H + 1, dtype=np.int64)
    lo = np.array([0, 0, 0], dtype=np.int64)
    hi = np.array([1, H, H], dtype=np.int64)
    vol, tb = kernels.smallest_cover(lo, hi, res, 2, False, sides, 0, 1, np.zeros(3, dtype=np.int64))
    return {
        "H": H,
        "S": {"index_lo": [0, 0], "index_hi": [1, H]},
        "T": {"index_lo": [0, 0], "index_hi": [H, 1]},
        "T_bar": {"index_lo": [int(tb[1, 0]), int(tb[2, 0])], "index_hi": [int(tb[1, 1]), int(tb[2, 1])]},
        "ratio": float(vol) / H,
    }
