"""Wave packet decomposition of g: cap pieces g_theta and tube pieces g_{theta,T}.

A tube piece is g_theta times a smooth partition-of-unity bump subordinate to
the tube tiling of its cap, so the pieces of one cap resum to g_theta exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .extension import EvalPlan, evaluate, evaluate_grid, make_plan
from .geometry import Cap, Params, TubeFamily, build_caps, enumerate_cubes, nonempty_caps


@dataclass
class CapPiece:
    cap: Cap
    plan: EvalPlan

    def __call__(self, points) -> np.ndarray:
        return evaluate(self.plan, points)


def cap_decompose(p: Params, radius: float | None = None) -> list[CapPiece]:
    cubes = enumerate_cubes(p)
    caps = nonempty_caps(build_caps(p, cubes))
    return [CapPiece(cap, make_plan(p, list(cap.cubes), radius=radius)) for cap in caps]


@dataclass(frozen=True)
class WavePacket:
    tube: object
    magnitude: float
    active: bool


class PacketSet:
    """All wave packets of one cap: a tube family plus per-tube magnitudes."""

    def __init__(self, piece: CapPiece, family: TubeFamily, magnitudes: np.ndarray,
                 samples: np.ndarray):
        self.piece = piece
        self.family = family
        self.magnitudes = magnitudes
        self.samples = samples
        self.active = np.ones(len(magnitudes), dtype=bool)

    def set_threshold(self, level: float):
        self.active = self.magnitudes >= level

    def __len__(self) -> int:
        return len(self.magnitudes)

    def __getitem__(self, i: int) -> WavePacket:
        return WavePacket(self.family[i], float(self.magnitudes[i]), bool(self.active[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def packet_value(self, i: int, points) -> np.ndarray:
        """g_{theta,T}(x) for tube i."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        psi = self.family.partition_weights(points, np.full(len(points), i))
        return psi * self.piece(points)

    def resum(self, points) -> np.ndarray:
        """sum over tubes T of g_{theta,T}(x)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ids = self.family.neighbours(points)
        total = np.zeros(len(points))
        for col in range(ids.shape[1]):
            tid = ids[:, col]
            ok = tid >= 0
            if ok.any():
                total[ok] += self.family.partition_weights(points[ok], tid[ok])
        return total * self.piece(points)


def _tube_magnitudes(piece: CapPiece, family: TubeFamily, n_trans: int, n_long: int):
    """RMS of |g_theta| over an interior sample grid of every tube, clipped to B_R."""
    d = family.d
    R = family.R
    w, L = family.width, family.length
    lo, shape = family._lo, family._shape
    frac = (np.arange(n_trans) + 0.5) / n_trans - 0.5
    axes = [((lo[j] + np.arange(shape[j]))[:, None] + frac[None, :]).ravel() * w
            for j in range(d - 1)]
    tfrac = (np.arange(n_long) + 0.5) / n_long - 0.5
    sq_sum = np.zeros(int(np.prod(shape)))
    all_sum = np.zeros_like(sq_sum)
    inside = np.zeros_like(sq_sum)
    cells_t = lo[-1] + np.arange(shape[-1])
    for ci, m in enumerate(cells_t):
        t = (m + tfrac) * L
        val = evaluate_grid(piece.plan, axes, t, shear=family.shear)
        mag2 = (val.real ** 2 + val.imag ** 2)
        # |x|^2 with x_j = y_j - 2 c_j t
        r2 = np.zeros(mag2.shape)
        for j in range(d - 1):
            xj = axes[j][:, None] - 2.0 * family.shear[j] * t[None, :]
            r2 = r2 + xj.reshape((1,) * j + xj.shape[:1] + (1,) * (d - 2 - j) + xj.shape[1:])
        r2 = r2 + (t * t).reshape((1,) * (d - 1) + (-1,))
        r2 = np.broadcast_to(r2, mag2.shape)
        ins = r2 <= R * R
        # fold sample axes into their tube cells
        split = []
        for j in range(d - 1):
            split += [shape[j], n_trans]
        split.append(n_long)
        red = tuple(range(1, 2 * (d - 1), 2)) + (2 * (d - 1),)
        s_in = np.where(ins, mag2, 0.0).reshape(split).sum(axis=red)
        s_all = mag2.reshape(split).sum(axis=red)
        c_in = ins.reshape(split).sum(axis=red)
        view = np.zeros(shape)
        for arr, dst in ((s_in, sq_sum), (s_all, all_sum), (c_in, inside)):
            view[...] = 0.0
            view[..., ci] = arr
            dst += view.ravel()
    per = n_trans ** (d - 1) * n_long
    slot = family._slot
    keep = slot >= 0
    order = slot[keep]
    sq, al, cnt = np.empty(len(family)), np.empty(len(family)), np.empty(len(family))
    sq[order], al[order], cnt[order] = sq_sum[keep], all_sum[keep], inside[keep]
    rms = np.where(cnt > 0, np.sqrt(sq / np.maximum(cnt, 1)), np.sqrt(al / per))
    return rms, cnt


def packetize(piece: CapPiece, p: Params, n_trans: int = 4, n_long: int = 8) -> PacketSet:
    """Wave packets of one cap; activity is relative to this cap's largest packet."""
    family = TubeFamily(piece.cap, p)
    mags, cnt = _tube_magnitudes(piece, family, n_trans, n_long)
    ps = PacketSet(piece, family, mags, cnt)
    ps.set_threshold(p.threshold * mags.max())
    return ps


def packetize_all(pieces: list[CapPiece], p: Params, **kw) -> list[PacketSet]:
    """Packetize every cap; a packet is active when its magnitude is at least
    ``p.threshold`` times the largest magnitude over all caps."""
    sets = [packetize(pc, p, **kw) for pc in pieces]
    top = max(s.magnitudes.max() for s in sets)
    for s in sets:
        s.set_threshold(p.threshold * top)
    return sets


def dyadic_classes(magnitudes: np.ndarray, reference: float) -> np.ndarray:
    """Class k holds magnitudes in (reference 2^{-k-1}, reference 2^{-k}]."""
    mags = np.asarray(magnitudes, dtype=float)
    with np.errstate(divide="ignore"):
        k = np.floor(np.log2(reference / mags))
    return np.where(mags > 0, k, np.inf)


def relevant_mask(ps: PacketSet, points) -> np.ndarray:
    """Active packets whose tube contains at least one of ``points``."""
    ids = ps.family.tube_of(points)
    hit = np.zeros(len(ps), dtype=bool)
    hit[ids[ids >= 0]] = True
    return hit & ps.active


def comparability_factor(sets: list[PacketSet], points=None) -> float:
    """max / min magnitude over active packets (restricted to tubes meeting ``points``)."""
    mags = []
    for s in sets:
        mask = s.active if points is None else relevant_mask(s, points)
        mags.append(s.magnitudes[mask])
    mags = np.concatenate(mags)
    if len(mags) == 0:
        raise ValueError("no active packets")
    return float(mags.max() / mags.min())


@dataclass
class PacketCensus:
    points: np.ndarray
    M: np.ndarray
    per_cap: np.ndarray

    @property
    def max(self) -> int:
        return int(self.M.max())


def census_at(points, sets: list[PacketSet]) -> PacketCensus:
    """Number of active packets whose tube contains each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    per_cap = np.zeros((len(points), len(sets)), dtype=bool)
    for i, s in enumerate(sets):
        ids = s.family.tube_of(points)
        ok = ids >= 0
        per_cap[ok, i] = s.active[ids[ok]]
    return PacketCensus(points, per_cap.sum(axis=1), per_cap)


def incidence_fraction(sets: list[PacketSet], cube_centers: np.ndarray) -> float:
    """Largest fraction of the unit cubes (given by centers) inside one active tube."""
    worst = 0
    for s in sets:
        ids = s.family.tube_of(cube_centers)
        ids = ids[ids >= 0]
        counts = np.bincount(ids, minlength=len(s))
        counts = counts[s.active]
        if len(counts):
            worst = max(worst, int(counts.max()))
    return worst / len(cube_centers)


@dataclass
class OrthogonalityReport:
    ratios: np.ndarray
    low: float
    high: float

    @property
    def fraction_in_band(self) -> float:
        return float(np.mean((self.ratios >= self.low) & (self.ratios <= self.high)))


def _ball_ratio(pieces, center, radius, spacing):
    axes = [c + np.arange(-radius + spacing / 2, radius, spacing) for c in center]
    vals = np.stack([evaluate_grid(pc.plan, axes[:-1], axes[-1]) for pc in pieces])
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    inside = r2 <= radius * radius
    whole = np.abs(vals.sum(axis=0)) ** 2
    parts = np.sum(vals.real ** 2 + vals.imag ** 2, axis=0)
    return float(np.sum(whole[inside]) / np.sum(parts[inside]))


def local_orthogonality_check(pieces: list[CapPiece], p: Params, trials: int,
                              rng: np.random.Generator, radius: float | None = None,
                              spacing: float = 0.5, low: float = 0.25,
                              high: float = 4.0) -> OrthogonalityReport:
    """int_B |g|^2 / sum_theta int_B |g_theta|^2 over random balls B inside B_{R/2}.

    Default ball radius is R^{1/2}; pass ``radius=p.R`` with ``trials=1``
    for the global (Plancherel) ratio.
    """
    r = math.sqrt(p.R) if radius is None else radius
    room = max(0.0, p.R / 2 - r) if radius is None else 0.0
    ratios = np.empty(trials)
    for i in range(trials):
        u = rng.normal(size=p.d)
        u *= room * rng.random() ** (1.0 / p.d) / np.linalg.norm(u)
        ratios[i] = _ball_ratio(pieces, u, r, spacing)
    return OrthogonalityReport(ratios, low, high)
