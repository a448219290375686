"""Frequency- and space-side geometry for the lattice example.

Frequency side: the lattice of small cubes carrying h, and the caps of side
R^{-1/2} over [0, 1]^{d-1}.  Space side: the tube tilings of B_R dual to the
caps, and the sampled unit-cube sets X and Y.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def _snap(v: float) -> float:
    # powers like 1024**0.4 come out as 16.000000000000004
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return float(r)
    return v


def integers_below(v: float) -> int:
    """Number of integers l with 1 <= l < v."""
    v = _snap(v)
    return max(0, math.ceil(v) - 1)


@dataclass(frozen=True)
class Params:
    d: int
    sigma: float
    R: float
    cd: float = 0.125
    quad_order: int = 8
    sample_spacing: float = 0.5
    eps_slack: float = 0.05
    threshold: float = 1.0 / 16.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        if not 0.0 < self.sigma < 0.5:
            raise ValueError(f"invariant 0 < sigma < 1/2 violated: sigma={self.sigma}")
        if not self.R > 1.0:
            raise ValueError(f"invariant R > 1 violated: R={self.R}")
        if not 0.0 < self.cd <= 1.0:
            raise ValueError(f"invariant cd in (0, 1] violated: cd={self.cd}")
        if int(self.quad_order) != self.quad_order or self.quad_order < 2:
            raise ValueError(f"quad_order must be an integer >= 2, got {self.quad_order}")
        if not 0.0 < self.sample_spacing <= 1.0:
            raise ValueError(f"sample_spacing must lie in (0, 1], got {self.sample_spacing}")
        if self.eps_slack < 0:
            raise ValueError(f"eps_slack must be >= 0, got {self.eps_slack}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")

    @property
    def cube_spacing(self) -> float:
        return self.R ** -self.sigma

    @property
    def half_width(self) -> float:
        return 1.0 / self.R

    @property
    def cap_side(self) -> float:
        return self.R ** -0.5

    @property
    def per_axis(self) -> int:
        """Cubes per frequency axis, i.e. #{l : 1 <= l < R^sigma}."""
        return integers_below(self.R ** self.sigma)

    @property
    def p_decoupling(self) -> float:
        return 2.0 * (self.d + 1) / (self.d - 1)

    @property
    def alpha(self) -> float:
        return self.d - (self.d + 1) * self.sigma

    def with_R(self, R: float) -> "Params":
        return Params(self.d, self.sigma, R, self.cd, self.quad_order,
                      self.sample_spacing, self.eps_slack, self.threshold)


@dataclass(frozen=True)
class FrequencyCube:
    index: tuple[int, ...]
    center: np.ndarray = field(compare=False)
    half_width: float


def enumerate_cubes(p: Params) -> list[FrequencyCube]:
    L = p.per_axis
    if L < 2 or _snap(p.R ** p.sigma) <= 2:
        raise ValueError(
            f"R^sigma = {p.R ** p.sigma:.4g} <= 2 leaves too few frequency cubes; increase R")
    step = p.cube_spacing
    if not step > 2 * p.half_width:
        raise ValueError("frequency cubes overlap: need R^-sigma > 2/R")
    cubes = []
    for idx in itertools.product(range(1, L + 1), repeat=p.d - 1):
        center = np.asarray(idx, dtype=float) * step
        cubes.append(FrequencyCube(tuple(idx), center, p.half_width))
    return cubes


def cube_centers(cubes) -> np.ndarray:
    return np.array([c.center for c in cubes], dtype=float).reshape(len(cubes), -1)


@dataclass(frozen=True)
class Cap:
    index: tuple[int, ...]
    corner: np.ndarray = field(compare=False)
    side: float
    cubes: tuple[FrequencyCube, ...] = ()

    @property
    def center(self) -> np.ndarray:
        return self.corner + 0.5 * self.side

    @property
    def axis(self) -> np.ndarray:
        n = np.append(-2.0 * self.center, 1.0)
        return n / np.linalg.norm(n)


def build_caps(p: Params, cubes: list[FrequencyCube]) -> list[Cap]:
    """All caps over [0, 1]^{d-1}, cells [k s, (k+1) s) with s = R^{-1/2}."""
    s = p.cap_side
    K = math.ceil(_snap(1.0 / s))
    members: dict[tuple[int, ...], list[FrequencyCube]] = {}
    for cube in cubes:
        k = tuple(int(v) for v in np.floor(cube.center / s + 1e-12))
        members.setdefault(k, []).append(cube)
    caps = []
    for idx in itertools.product(range(K), repeat=p.d - 1):
        corner = np.asarray(idx, dtype=float) * s
        caps.append(Cap(tuple(idx), corner, s, tuple(members.get(idx, ()))))
    return caps


def nonempty_caps(caps: list[Cap]) -> list[Cap]:
    return [c for c in caps if c.cubes]


@dataclass(frozen=True)
class Tube:
    cap: Cap
    anchor: tuple[int, ...]
    axis: np.ndarray = field(compare=False)
    dims: tuple[float, ...]


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


class TubeFamily:
    """Translates of the tube dual to one cap, covering B_R.

    Tubes live on a sheared lattice: with shear vector c (the cap center),
    y = x' + 2 c t is constant along the cap normal (-2c, 1).  Cell
    (k, m) is {(k_j - 1/2) w < y_j <= (k_j + 1/2) w, (m - 1/2) L < t <= (m + 1/2) L}
    with w = R^{1/2}, L = R; the right-closed cells send boundary points
    to the lexicographically smaller tube.
    """

    def __init__(self, cap: Cap, p: Params, overlap: float | None = None):
        self.cap = cap
        self.R = float(p.R)
        self.d = p.d
        self.shear = np.asarray(cap.center, dtype=float)
        self.width = math.sqrt(self.R)
        self.length = self.R
        self.overlap = self.width / 4.0 if overlap is None else overlap
        self.axis = cap.axis
        self._enumerate()

    def sheared(self, points) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = points[:, -1]
        y = points[:, :-1] + 2.0 * t[:, None] * self.shear[None, :]
        return y, t

    def cell_coords(self, points) -> np.ndarray:
        """Sheared coordinates in units of cell size, shape (n, d)."""
        y, t = self.sheared(points)
        return np.column_stack([y / self.width, t / self.length])

    def locate(self, points) -> np.ndarray:
        """Integer cell index of every point, shape (n, d)."""
        u = self.cell_coords(points)
        return np.ceil(u - 0.5).astype(np.int64)

    def _enumerate(self):
        R = self.R
        reach = R * np.sqrt(1.0 + 4.0 * self.shear ** 2)
        kmax = np.ceil(reach / self.width + 0.5).astype(int)
        mmax = math.ceil(R / self.length + 0.5)
        self._lo = np.append(-kmax, -mmax)
        self._shape = tuple(np.append(2 * kmax + 1, 2 * mmax + 1))
        grid = np.indices(self._shape).reshape(self.d, -1).T + self._lo
        keep = self._min_norm_sq(grid) <= R * R
        self.anchors = grid[keep]
        self._slot = np.full(int(np.prod(self._shape)), -1, dtype=np.int64)
        self._slot[np.flatnonzero(keep)] = np.arange(len(self.anchors))

    def _min_norm_sq(self, anchors: np.ndarray) -> np.ndarray:
        # f(t) = t^2 + sum_j dist(2 c_j t, [lo_j, hi_j])^2 is convex in t
        w, L = self.width, self.length
        lo = (anchors[:, :-1] - 0.5) * w
        hi = (anchors[:, :-1] + 0.5) * w
        a = (anchors[:, -1] - 0.5) * L
        b = (anchors[:, -1] + 0.5) * L

        c2 = 2.0 * self.shear[None, :]

        def f(t):
            s = c2 * t[:, None]
            gap = np.maximum(lo - s, 0.0) + np.maximum(s - hi, 0.0)
            return t * t + np.sum(gap * gap, axis=1)

        # f is piecewise quadratic; its minimum sits at an end point or at the
        # stationary point of one piece, i.e. of one below/inside/above pattern
        best = np.minimum(f(a), f(b))
        for pattern in itertools.product((-1, 0, 1), repeat=self.d - 1):
            pat = np.asarray(pattern)
            target = np.where(pat < 0, lo, np.where(pat > 0, hi, 0.0))
            act = (pat != 0)[None, :]
            num = np.sum(np.where(act, c2 * target, 0.0), axis=1)
            den = 1.0 + np.sum(np.where(act, c2 * c2, 0.0), axis=1)
            best = np.minimum(best, f(np.clip(num / den, a, b)))
        return best

    def slots(self, cells: np.ndarray) -> np.ndarray:
        """Tube number for each integer cell row, -1 when not in the family."""
        cells = np.atleast_2d(cells)
        rel = cells - self._lo
        ok = np.all((rel >= 0) & (rel < np.asarray(self._shape)), axis=1)
        out = np.full(len(cells), -1, dtype=np.int64)
        if ok.any():
            flat = np.ravel_multi_index(tuple(rel[ok].T), self._shape)
            out[ok] = self._slot[flat]
        return out

    def tube_of(self, points) -> np.ndarray:
        return self.slots(self.locate(points))

    def __len__(self) -> int:
        return len(self.anchors)

    def __getitem__(self, i: int) -> Tube:
        dims = (self.width,) * (self.d - 1) + (self.length,)
        return Tube(self.cap, tuple(int(v) for v in self.anchors[i]), self.axis, dims)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def _bump_1d(self, u, k, size):
        # telescoping ramps: sum over k of the bumps is identically 1
        h = self.overlap / size
        lo = _smoothstep((u - (k - 0.5)) / h + 0.5)
        hi = _smoothstep((u - (k + 0.5)) / h + 0.5)
        return lo - hi

    def partition_weights(self, points, tube_ids) -> np.ndarray:
        """Smooth partition-of-unity weight psi_T(x) for each (point, tube) pair."""
        u = self.cell_coords(points)
        cells = self.anchors[np.asarray(tube_ids)]
        sizes = np.append(np.full(self.d - 1, self.width), self.length)
        out = np.ones(len(u))
        for j in range(self.d):
            out *= self._bump_1d(u[:, j], cells[:, j], sizes[j])
        return out

    def neighbours(self, points) -> np.ndarray:
        """Tubes whose bump can be nonzero at each point, shape (n, 3^d); -1 pads."""
        base = self.locate(points)
        offs = np.array(list(itertools.product((-1, 0, 1), repeat=self.d)))
        cells = base[:, None, :] + offs[None, :, :]
        ids = self.slots(cells.reshape(-1, self.d)).reshape(len(base), -1)
        return ids


def build_tubes(cap: Cap, p: Params) -> TubeFamily:
    return TubeFamily(cap, p)


@dataclass
class SampledSet:
    """Finite quadrature representation of a union of unit cubes (or a ball)."""
    points: np.ndarray
    weights: np.ndarray
    descriptor: str
    centers: np.ndarray
    owner: np.ndarray
    alpha: float | None = None

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, cube_mask: np.ndarray) -> "SampledSet":
        cube_mask = np.asarray(cube_mask, dtype=bool)
        keep = cube_mask[self.owner]
        remap = np.cumsum(cube_mask) - 1
        return SampledSet(self.points[keep], self.weights[keep], self.descriptor,
                          self.centers[cube_mask], remap[self.owner[keep]], self.alpha)


def lattice_points(p: Params) -> np.ndarray:
    """(n' R^sigma, n_d R^{2 sigma}) whose unit cube lies inside B_{cd R}."""
    rad = p.cd * p.R - 0.5 * math.sqrt(p.d)
    if rad < 0:
        return np.empty((0, p.d))
    sx = p.R ** p.sigma
    st = p.R ** (2 * p.sigma)
    nx = int(math.floor(rad / sx))
    nt = int(math.floor(rad / st))
    axes = [np.arange(-nx, nx + 1) * sx] * (p.d - 1) + [np.arange(-nt, nt + 1) * st]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.d)
    return grid[np.sum(grid * grid, axis=1) <= rad * rad]


def unit_cube_offsets(d: int, spacing: float) -> tuple[np.ndarray, float]:
    m = max(1, int(round(1.0 / spacing)))
    o = -0.5 + (np.arange(m) + 0.5) / m
    offs = np.stack(np.meshgrid(*([o] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return offs, (1.0 / m) ** d


def cube_union(centers: np.ndarray, d: int, spacing: float, descriptor: str,
               alpha: float | None = None) -> SampledSet:
    offs, w = unit_cube_offsets(d, spacing)
    pts = (centers[:, None, :] + offs[None, :, :]).reshape(-1, d)
    owner = np.repeat(np.arange(len(centers)), len(offs))
    return SampledSet(pts, np.full(len(pts), w), descriptor, centers, owner, alpha)


def build_x(p: Params) -> SampledSet:
    centers = lattice_points(p)
    if len(centers) == 0:
        raise ValueError(
            f"no lattice point fits in B_(cd R) with cd={p.cd}, R={p.R}; R is too small")
    return cube_union(centers, p.d, p.sample_spacing, "X-lattice")


def build_y(p: Params) -> SampledSet:
    x = build_x(p)
    x.descriptor = "Y-fractal"
    x.alpha = p.alpha
    return x


@dataclass
class FractalCertificate:
    alpha: float
    constant: float
    radii: np.ndarray
    worst_per_radius: np.ndarray


def fractal_certificate(Y: SampledSet, R: float, rng: np.random.Generator,
                        centers_per_radius: int = 64) -> FractalCertificate:
    """Largest observed |B_r cap Y| / r^alpha over dyadic r and random balls B_r in B_R."""
    d = Y.points.shape[1]
    tree = cKDTree(Y.points)
    w = float(Y.weights[0])
    radii = 2.0 ** np.arange(0, int(math.floor(math.log2(R))) + 1)
    worst = np.zeros(len(radii))
    for i, r in enumerate(radii):
        room = R - r
        near = Y.centers[np.linalg.norm(Y.centers, axis=1) <= room]
        pick = rng.choice(len(near), size=min(len(near), centers_per_radius // 2),
                          replace=False) if len(near) else np.empty(0, dtype=int)
        # uniform points of B_room
        u = rng.normal(size=(centers_per_radius, d))
        u /= np.linalg.norm(u, axis=1)[:, None]
        u *= room * rng.random(centers_per_radius)[:, None] ** (1.0 / d)
        cs = np.vstack([near[pick], u]) if len(pick) else u
        counts = tree.query_ball_point(cs, r, return_length=True)
        worst[i] = np.max(counts) * w / r ** Y.alpha
    return FractalCertificate(Y.alpha, float(np.max(worst)), radii, worst)
