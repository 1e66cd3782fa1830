"""Named test functions, sampling onto grids, and seeded random smooth functions."""

from __future__ import annotations

import numpy as np

from .expr import Expr, ExprError, parse
from .grid import Box, GridError, GridFunction


def _norm(n: int) -> str:
    return "sqrt(" + " + ".join(f"x{i + 1}^2" for i in range(n)) + ")"


# name -> (expression template taking the dimension, closed form on coordinate arrays)
CATALOG = {
    "neg_log_abs_diff": (lambda n: "-log(abs(x - y))", lambda c: -np.log(np.abs(c[0] - c[1]))),
    "abs_diff": (lambda n: "abs(x - y)", lambda c: np.abs(c[0] - c[1])),
    "max_xy": (lambda n: "max(x, y)", lambda c: np.maximum(c[0], c[1])),
    "diff": (lambda n: "x - y", lambda c: c[0] - c[1]),
    "neg_log_norm": (lambda n: f"-log({_norm(n)})", lambda c: -0.5 * np.log(sum(v * v for v in c))),
    "log_norm": (lambda n: f"log({_norm(n)})", lambda c: 0.5 * np.log(sum(v * v for v in c))),
    "indicator_halfspace": (lambda n: "(x / abs(x) + 1) / 2", lambda c: (c[0] > 0).astype(float)),
}


def catalog_expr(name: str, ndim: int) -> Expr:
    if name not in CATALOG:
        raise ExprError(f"unknown catalog function {name!r}; known: {', '.join(sorted(CATALOG))}")
    return parse(CATALOG[name][0](ndim))


def closed_form(name: str, coords) -> np.ndarray:
    return np.asarray(CATALOG[name][1](list(coords)), dtype=np.float64)


def sample(e: Expr | str, grid: GridFunction | Box, res=None, clip: float | None = None) -> GridFunction:
    """Evaluate ``e`` at every cell centre of ``grid``.

    ``grid`` is either an existing GridFunction (its domain, resolution and
    clip policy are reused) or a Box together with ``res``.
    """
    if isinstance(e, str):
        e = parse(e)
    if isinstance(grid, Box):
        if res is None:
            raise GridError("sampling onto a Box needs a resolution")
        shell = GridFunction(grid, np.zeros(tuple(int(r) for r in res)))
    else:
        shell = grid
        clip = grid.clip if clip is None else clip
    if e.arity > shell.ndim:
        raise ExprError(f"expression uses x{e.arity} but the grid has dimension {shell.ndim}")
    coords = shell.centers()
    values = np.broadcast_to(e(*coords), shell.res)
    return GridFunction(shell.domain, values, clip=clip)


def random_smooth_values(domain: Box, res, seed: int, degree: int = 2) -> np.ndarray:
    """A low-order trigonometric polynomial with seeded coefficients.

    Frequencies range over {0..degree}^n minus the zero vector, so the result
    is smooth and never constant.
    """
    rng = np.random.default_rng(seed)
    n = domain.ndim
    res = tuple(int(r) for r in res)
    u = []
    for a in range(n):
        t = (np.arange(res[a]) + 0.5) / res[a]
        shape = [1] * n
        shape[a] = res[a]
        u.append(t.reshape(shape))
    out = np.zeros(res)
    freqs = np.stack(np.meshgrid(*[np.arange(degree + 1)] * n, indexing="ij"), -1).reshape(-1, n)
    for k in freqs[1:]:
        phase = 2 * np.pi * sum(int(k[a]) * u[a] for a in range(n))
        a_k, b_k = rng.standard_normal(2) / (1.0 + float(np.abs(k).sum()))
        out = out + a_k * np.cos(phase) + b_k * np.sin(phase)
    return out


def function_from_config(cfg: dict, domain: Box, res, clip: float | None = None) -> GridFunction:
    """Build a grid function from ``{"fn": expr}``, ``{"fn_name": name}`` or
    ``{"random": {"seed": s, "degree": d}}``."""
    if "random" in cfg:
        r = cfg["random"]
        vals = random_smooth_values(domain, res, int(r["seed"]), int(r.get("degree", 2)))
        return GridFunction(domain, vals, clip=clip)
    if "fn_name" in cfg:
        return sample(catalog_expr(cfg["fn_name"], domain.ndim), domain, res, clip=clip)
    if "fn" in cfg:
        return sample(cfg["fn"], domain, res, clip=clip)
    raise ExprError("function config needs one of 'fn', 'fn_name' or 'random'")
