"""Cell-centred grid functions on boxes in R^n, plus CSV/JSON dump and load."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_DIM = 3


class GridError(ValueError):
    """Invalid grid construction or grid I/O."""


class NonFiniteSample(GridError):
    """A sampled value is NaN or infinite under the reject policy."""

    def __init__(self, index, value):
        self.index = tuple(int(i) for i in index)
        self.value = float(value)
        super().__init__(f"non-finite sample {self.value!r} at cell {self.index}")


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise GridError(f"box corners must have equal, positive length: {lo} {hi}")
        for a, b in zip(lo, hi):
            if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
                raise GridError(f"degenerate box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def ndim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @classmethod
    def parse(cls, text: str) -> "Box":
        """Parse ``"0,1x0,2"`` into the box [0,1]x[0,2]."""
        lo, hi = [], []
        for part in text.lower().split("x"):
            bits = part.split(",")
            if len(bits) != 2:
                raise GridError(f"bad domain axis {part!r}; expected 'lo,hi'")
            lo.append(float(bits[0]))
            hi.append(float(bits[1]))
        return cls(tuple(lo), tuple(hi))


def _check_res(domain: Box, res: Sequence[int]) -> tuple[int, ...]:
    res = tuple(int(r) for r in res)
    if len(res) != domain.ndim:
        raise GridError(f"resolution {res} does not match domain dimension {domain.ndim}")
    if any(r < 1 for r in res):
        raise GridError(f"resolution must be positive on every axis, got {res}")
    if len(res) > MAX_DIM:
        raise GridError(f"dimension {len(res)} exceeds supported maximum {MAX_DIM}")
    return res


class GridFunction:
    """Cell-centred samples of a scalar function on ``domain``.

    ``values`` has shape ``res``; axis ``i`` is the coordinate ``x_{i+1}``.
    Non-finite samples are rejected unless ``clip`` is given, in which case
    values (including infinities) are clipped to ``[-clip, clip]``. NaN is
    always rejected.
    """

    __slots__ = ("domain", "res", "values", "clip")

    def __init__(self, domain: Box, values, clip: float | None = None):
        values = np.array(values, dtype=np.float64)
        res = _check_res(domain, values.shape)
        nan = np.isnan(values)
        if nan.any():
            raise NonFiniteSample(np.argwhere(nan)[0], np.nan)
        if clip is None:
            bad = ~np.isfinite(values)
            if bad.any():
                idx = np.argwhere(bad)[0]
                raise NonFiniteSample(idx, values[tuple(idx)])
        else:
            if not clip > 0:
                raise GridError("clip threshold must be positive")
            values = np.clip(values, -clip, clip)
        values.setflags(write=False)
        self.domain = domain
        self.res = res
        self.values = values
        self.clip = clip

    @property
    def ndim(self) -> int:
        return len(self.res)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(w / r for w, r in zip(self.domain.widths, self.res))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.domain.lo[axis] + (np.arange(self.res[axis]) + 0.5) * h

    def centers(self) -> list[np.ndarray]:
        """Broadcastable cell-centre coordinate arrays, one per axis."""
        out = []
        for axis in range(self.ndim):
            shape = [1] * self.ndim
            shape[axis] = self.res[axis]
            out.append(self.axis_centers(axis).reshape(shape))
        return out

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values, clip=self.clip)

    def same_grid(self, other: "GridFunction") -> bool:
        return self.domain == other.domain and self.res == other.res

    def __repr__(self):
        return f"GridFunction(domain={self.domain}, res={self.res})"


def make_grid(domain: Box, res: Sequence[int]) -> GridFunction:
    res = _check_res(domain, res)
    return GridFunction(domain, np.zeros(res))


def padded3(values: np.ndarray) -> np.ndarray:
    """View ``values`` as a 3-D array with leading singleton axes.

    Leading padding keeps the last real axis innermost, so the kernels' inner
    loops run over contiguous memory.
    """
    shape = (1,) * (3 - values.ndim) + tuple(values.shape)
    return np.ascontiguousarray(values, dtype=np.float64).reshape(shape)


# -- dump / load ---------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def to_json(gf: GridFunction) -> str:
    head = {
        "domain": {"lo": list(gf.domain.lo), "hi": list(gf.domain.hi)},
        "res": list(gf.res),
        "values": None,
    }
    text = json.dumps(head)
    flat = ",".join(_fmt(v) for v in gf.values.ravel())
    return text.replace('"values": null', f'"values": [{flat}]')


def from_json(text: str, clip: float | None = None) -> GridFunction:
    try:
        doc = json.loads(text)
        domain = Box(tuple(doc["domain"]["lo"]), tuple(doc["domain"]["hi"]))
        res = tuple(int(r) for r in doc["res"])
        values = np.asarray(doc["values"], dtype=np.float64)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise GridError(f"malformed grid JSON: {exc}") from exc
    if values.size != int(np.prod(res)):
        raise GridError(f"grid JSON has {values.size} values for resolution {res}")
    return GridFunction(domain, values.reshape(res), clip=clip)


def to_csv(gf: GridFunction) -> str:
    head = "# box lo {} hi {} res {}".format(
        " ".join(_fmt(v) for v in gf.domain.lo),
        " ".join(_fmt(v) for v in gf.domain.hi),
        " ".join(str(r) for r in gf.res),
    )
    rows = gf.values.reshape(-1, gf.res[-1])
    lines = [head] + [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def from_csv(text: str, clip: float | None = None) -> GridFunction:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# box"):
        raise GridError("grid CSV must start with a '# box lo.. hi.. res..' header")
    tokens = lines[0].split()[2:]
    try:
        i_hi, i_res = tokens.index("hi"), tokens.index("res")
        lo = [float(t) for t in tokens[1:i_hi]]
        hi = [float(t) for t in tokens[i_hi + 1 : i_res]]
        res = tuple(int(t) for t in tokens[i_res + 1 :])
    except ValueError as exc:
        raise GridError(f"bad grid CSV header: {lines[0]!r}") from exc
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if values.size != int(np.prod(res)):
        raise GridError(f"grid CSV has {values.size} values for resolution {res}")
    return GridFunction(Box(tuple(lo), tuple(hi)), values.reshape(res), clip=clip)


def save(gf: GridFunction, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "json")
    path.write_text(to_csv(gf) if fmt == "csv" else to_json(gf))


def load(path, clip: float | None = None) -> GridFunction:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("#"):
        return from_csv(text, clip=clip)
    return from_json(text, clip=clip)
