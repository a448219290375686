"""Pointwise evaluation of the extension of h d(omega).

    g(x', t) = int h(xi') e(x' . xi' + t |xi'|^2) dxi',   e(s) = exp(2 pi i s)

h is a sum of indicators of axis-aligned cubes, and both the phase and each
cube factor over the d-1 frequency axes, so every cube contributes a product
of one-dimensional Gauss-Legendre sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import FrequencyCube, Params, build_x, cube_centers, enumerate_cubes

TWO_PI = 2.0 * math.pi

# max half-span of the phase (radians) across one quadrature panel
_PANEL_SPAN = 2.4


class BudgetExceeded(RuntimeError):
    """A computation would exceed the configured node-evaluation budget."""


@dataclass(frozen=True)
class EvalPlan:
    """Quadrature tables for a fixed list of frequency cubes.

    ``offsets``/``weights`` are the 1-D nodes relative to a cube center; the
    tensor rule on each cube is their (d-1)-fold product.  ``axis_values``
    holds the distinct center coordinates per axis and ``axis_index`` maps
    every cube to them, so shared 1-D sums are computed once.
    """
    centers: np.ndarray
    half_width: float
    offsets: np.ndarray
    weights: np.ndarray
    order: int
    radius: float
    axis_values: tuple = field(repr=False)
    axis_index: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def nodes_per_axis(self) -> int:
        return len(self.offsets)

    @property
    def cube_volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim

    @property
    def total_measure(self) -> float:
        return len(self.centers) * self.cube_volume


def gauss_panels(half_width: float, order: int, panels: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-half_width, half_width, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    rad = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + rad[:, None] * x[None, :]).ravel()
    weights = (rad[:, None] * w[None, :]).ravel()
    return nodes, weights


def panels_for(radius: float, half_width: float, max_center: float) -> int:
    # phase slope in xi_j at (x, t) is x_j + 2 t xi_j, bounded by radius * sqrt(1 + 4 xi^2)
    xi = max_center + half_width
    span = TWO_PI * radius * math.sqrt(1.0 + 4.0 * xi * xi) * half_width
    span += TWO_PI * radius * half_width * half_width
    return max(1, math.ceil(span / _PANEL_SPAN))


def make_plan(p: Params, cubes: list[FrequencyCube] | None = None,
              radius: float | None = None, order: int | None = None,
              panels: int | None = None) -> EvalPlan:
    """Quadrature plan accurate for evaluation points with |x| <= radius (default R)."""
    if cubes is None:
        cubes = enumerate_cubes(p)
    centers = cube_centers(cubes)
    hw = p.half_width
    radius = float(p.R if radius is None else radius)
    order = p.quad_order if order is None else order
    if panels is None:
        panels = panels_for(radius, hw, float(np.max(np.abs(centers))))
    nodes, weights = gauss_panels(hw, order, panels)
    values, index = [], []
    for j in range(centers.shape[1]):
        u, inv = np.unique(centers[:, j], return_inverse=True)
        values.append(u)
        index.append(inv)
    return EvalPlan(centers, hw, nodes, weights, order, radius, tuple(values),
                    np.stack(index, axis=1))


def widen(plan: EvalPlan, radius: float) -> EvalPlan:
    """Same cubes, with enough panels for points out to ``radius``."""
    if radius <= plan.radius:
        return plan
    hw = plan.half_width
    panels = panels_for(radius, hw, float(np.max(np.abs(plan.centers))))
    nodes, weights = gauss_panels(hw, plan.order, panels)
    return replace(plan, offsets=nodes, weights=weights, radius=float(radius))


def _axis_sums(xi_centers, offsets, weights, x, t):
    """sum_k w_k e(x xi + t xi^2) with xi = center + offset_k, for every center.

    x and t are 1-D arrays of equal length; result has shape (len(x), len(centers)).
    """
    out = np.empty((len(x), len(xi_centers)), dtype=complex)
    for i, c in enumerate(xi_centers):
        xi = c + offsets
        phase = np.multiply.outer(x, xi)
        phase += np.multiply.outer(t, xi * xi)
        phase *= TWO_PI
        out[:, i] = np.exp(1j * phase) @ weights
    return out


def evaluate(plan: EvalPlan, points, chunk: int = 16384) -> np.ndarray:
    """Complex values of g at an (n, d) array of space-time points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != plan.dim + 1:
        raise ValueError(f"points must have {plan.dim + 1} coordinates")
    out = np.empty(len(points), dtype=complex)
    for s in range(0, len(points), chunk):
        blk = points[s:s + chunk]
        t = blk[:, -1]
        acc = np.zeros(len(blk), dtype=complex)
        tables = [_axis_sums(plan.axis_values[j], plan.offsets, plan.weights, blk[:, j], t)
                  for j in range(plan.dim)]
        for k in range(len(plan.centers)):
            term = tables[0][:, plan.axis_index[k, 0]].copy()
            for j in range(1, plan.dim):
                term *= tables[j][:, plan.axis_index[k, j]]
            acc += term
        out[s:s + chunk] = acc
    return out


def evaluate_grid(plan: EvalPlan, axes, t, shear=None, per_cube: bool = False) -> np.ndarray:
    """g on the tensor grid {(y_1, ..., y_{d-1}, t)} with x_j = y_j - 2 shear_j t.

    Uses e((y - 2 s t) xi + t xi^2) = e(y xi) e(t (xi^2 - 2 s xi)), so each
    axis reduces to one matrix product.  Result shape (n_1, ..., n_{d-1}, n_t),
    or with a leading cube axis when ``per_cube``.
    """
    t = np.asarray(t, dtype=float)
    dim = plan.dim
    shear = np.zeros(dim) if shear is None else np.asarray(shear, dtype=float)
    tables = []
    for j in range(dim):
        y = np.asarray(axes[j], dtype=float)
        tab = []
        for c in plan.axis_values[j]:
            xi = c + plan.offsets
            ey = np.exp(1j * TWO_PI * np.multiply.outer(y, xi))
            et = np.exp(1j * TWO_PI * np.multiply.outer(t, xi * xi - 2.0 * shear[j] * xi))
            tab.append((ey * plan.weights) @ et.T)
        tables.append(tab)
    shape = tuple(len(a) for a in axes) + (len(t),)
    cubes = []
    for k in range(len(plan.centers)):
        val = None
        for j in range(dim):
            f = tables[j][plan.axis_index[k, j]]
            f = f.reshape((1,) * j + (f.shape[0],) + (1,) * (dim - 1 - j) + (f.shape[1],))
            val = f if val is None else val * f
        cubes.append(np.broadcast_to(val, shape))
    if per_cube:
        return np.stack(cubes)
    return np.sum(cubes, axis=0)


def oracle_evaluate(p: Params, points, nodes_per_axis: int = 100,
                    cubes: list[FrequencyCube] | None = None,
                    budget: float = 2e9) -> np.ndarray:
    """Midpoint Riemann sum over a full tensor grid of every cube (no factorisation)."""
    if nodes_per_axis < 100:
        raise ValueError("oracle needs nodes_per_axis >= 100")
    if cubes is None:
        cubes = enumerate_cubes(p)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = p.d - 1
    per_cube = nodes_per_axis ** dim
    total = float(per_cube) * len(cubes) * len(points)
    if total > budget:
        raise BudgetExceeded(f"oracle needs {total:.3g} node evaluations > budget {budget:.3g}")
    h = 2.0 * p.half_width / nodes_per_axis
    u = -p.half_width + h * (np.arange(nodes_per_axis) + 0.5)
    local = np.stack(np.meshgrid(*([u] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    w = h ** dim
    out = np.zeros(len(points), dtype=complex)
    step = max(1, 2_000_000 // per_cube)
    for cube in cubes:
        xi = cube.center[None, :] + local
        xi2 = np.sum(xi * xi, axis=1)
        for s in range(0, len(points), step):
            blk = points[s:s + step]
            phase = blk[:, :-1] @ xi.T + np.multiply.outer(blk[:, -1], xi2)
            out[s:s + step] += np.exp(1j * TWO_PI * phase).sum(axis=1) * w
    return out


@dataclass
class AmplitudeStats:
    min: float
    max: float
    median: float
    constant: float
    offset_min: float
    offset_median: float
    coherent_fraction: float
    count: int


def amplitude_at_lattice_points(p: Params, count: int, rng: np.random.Generator,
                                offset: float = 1.0) -> AmplitudeStats:
    """|g| / R^{(d-1)(sigma-1)} at lattice points of B_{cd R} and at distance ``offset``."""
    lattice = build_x(p).centers
    if count < len(lattice):
        lattice = lattice[np.sort(rng.choice(len(lattice), size=count, replace=False))]
    plan = make_plan(p, radius=p.cd * p.R + offset + 1.0)
    scale = p.R ** ((p.d - 1) * (p.sigma - 1.0))
    at = np.abs(evaluate(plan, lattice)) / scale
    u = rng.normal(size=lattice.shape)
    u /= np.linalg.norm(u, axis=1)[:, None]
    off = np.abs(evaluate(plan, lattice + offset * u)) / scale
    return AmplitudeStats(
        min=float(at.min()), max=float(at.max()), median=float(np.median(at)),
        constant=float(max(at.max(), 1.0 / at.min())),
        offset_min=float(off.min()), offset_median=float(np.median(off)),
        coherent_fraction=float(np.mean(at >= off)), count=len(lattice))
