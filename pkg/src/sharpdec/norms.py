"""L^p norms on sampled sets, norms against the weight w_{B_R}, and ||h||_{L^2}."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma
from scipy.stats import qmc

from .extension import evaluate, widen
from .geometry import Params, SampledSet


@dataclass(frozen=True)
class NormResult:
    value: float
    p: float
    set: str
    sample_count: int
    est_rel_error: float = float("nan")


def lp_norm_on_set(values, sampled: SampledSet, p: float) -> NormResult:
    """(sum_i w_i |v_i|^p)^{1/p} for field values at the set's sample points."""
    if len(sampled) == 0:
        raise ValueError("cannot take a norm over an empty set")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(np.asarray(values))
    if a.shape != sampled.weights.shape:
        raise ValueError("one value per sample point is required")
    # factor out the max so |v|^p cannot underflow
    top = float(a.max())
    if top == 0.0:
        return NormResult(0.0, p, sampled.descriptor, len(sampled))
    s = np.sum(sampled.weights * (a / top) ** p)
    return NormResult(top * float(s) ** (1.0 / p), p, sampled.descriptor, len(sampled))


def refinement_error(norm_at: Callable[[float], float], spacing: float) -> float:
    """Relative change of a norm when the sampling step is halved."""
    coarse = norm_at(spacing)
    fine = norm_at(spacing / 2.0)
    return abs(fine - coarse) / fine


def ball_volume(d: int, r: float = 1.0) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1) * r ** d


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / gamma(d / 2)


@dataclass(frozen=True)
class WeightedBall:
    """w(x) = 1 on B_R and (|x|/R)^{-N} outside, sampled on radial shells."""
    R: float
    decay_power: float = 100.0
    shells: int = 64
    tail_shells: int = 32
    angles: int = 256
    cutoff_weight: float = 1e-12

    def weight(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.R, 1.0, (np.maximum(r, self.R) / self.R) ** -self.decay_power)

    @property
    def cutoff(self) -> float:
        return self.R * self.cutoff_weight ** (-1.0 / self.decay_power)

    def radial_rule(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes r and weights w(r) r^{d-1} dr over [0, cutoff]."""
        x, w = np.polynomial.legendre.leggauss(self.shells)
        r1 = 0.5 * self.R * (x + 1.0)
        w1 = 0.5 * self.R * w
        xt, wt = np.polynomial.legendre.leggauss(self.tail_shells)
        span = self.cutoff - self.R
        r2 = self.R + 0.5 * span * (xt + 1.0)
        w2 = 0.5 * span * wt
        r = np.concatenate([r1, r2])
        wr = np.concatenate([w1, w2]) * self.weight(r) * r ** (d - 1)
        return r, wr

    def sphere_rule(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Directions on S^{d-1} with weights summing to its area."""
        n = self.angles
        if d == 2:
            phi = 2.0 * math.pi * np.arange(n) / n
            return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(n, 2.0 * math.pi / n)
        if d == 3:
            m = max(2, n // 8)
            z, wz = np.polynomial.legendre.leggauss(m)
            phi = 2.0 * math.pi * np.arange(2 * m) / (2 * m)
            s = np.sqrt(1.0 - z * z)
            dirs = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                             np.outer(z, np.ones_like(phi))], axis=-1).reshape(-1, 3)
            w = np.outer(wz, np.full(2 * m, 2.0 * math.pi / (2 * m))).ravel()
            return dirs, w
        # d >= 4: normalised quasi-random Gaussian directions, equal weights
        k = int(math.ceil(math.log2(max(n * 8, 64))))
        g = qmc.MultivariateNormalQMC(np.zeros(d), seed=12345).random(2 ** k)
        dirs = g / np.linalg.norm(g, axis=1)[:, None]
        return dirs, np.full(len(dirs), sphere_area(d) / len(dirs))

    def quadrature(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        r, wr = self.radial_rule(d)
        dirs, wa = self.sphere_rule(d)
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        w = np.outer(wr, wa).ravel()
        return pts, w

    def integral_of_weight(self, d: int) -> float:
        """Closed form of int w over the truncated support."""
        N = self.decay_power
        rho = self.cutoff / self.R
        tail = sphere_area(d) * self.R ** d * (1.0 - rho ** (d - N)) / (N - d)
        return ball_volume(d, self.R) + tail

    def tail_factor(self, d: int) -> float:
        return self.integral_of_weight(d) / ball_volume(d, self.R) - 1.0


def weighted_lp(func: Callable[[np.ndarray], np.ndarray], p: float, ball: WeightedBall,
                d: int) -> NormResult:
    pts, w = ball.quadrature(d)
    a = np.abs(func(pts))
    top = float(a.max())
    s = np.sum(w * (a / top) ** p) if top > 0 else 0.0
    return NormResult(top * float(s) ** (1.0 / p), p, "w_B_R", len(pts))


def lp_norm_weighted(piece, p: float, ball: WeightedBall) -> NormResult:
    """||g_theta||_{L^p(w_{B_R})} by radial-shell quadrature."""
    d = piece.plan.dim + 1
    inner = widen(piece.plan, ball.R)
    outer = widen(piece.plan, ball.cutoff)

    def field(pts):
        r = np.linalg.norm(pts, axis=1)
        out = np.empty(len(pts), dtype=complex)
        near = r <= inner.radius
        out[near] = evaluate(inner, pts[near])
        out[~near] = evaluate(outer, pts[~near])
        return out

    return weighted_lp(field, p, ball, d)


def rhs_refined_decoupling(pieces, p: float, M: int, ball: WeightedBall,
                           norms: list[NormResult] | None = None) -> NormResult:
    """M^{1/2 - 1/p} (sum_theta ||g_theta||^p_{L^p(w_{B_R})})^{1/p}, without R^eps."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if norms is None:
        norms = [lp_norm_weighted(pc, p, ball) for pc in pieces]
    vals = np.array([n.value for n in norms])
    top = vals.max()
    agg = top * float(np.sum((vals / top) ** p)) ** (1.0 / p)
    return NormResult(M ** (0.5 - 1.0 / p) * agg, p, "rhs-refined-decoupling",
                      sum(n.sample_count for n in norms))


def l2_density_norm(p: Params, n_cubes: int | None = None) -> float:
    """||h||_{L^2(d omega)} in the graph-projection convention."""
    if n_cubes is None:
        n_cubes = p.per_axis ** (p.d - 1)
    return math.sqrt(n_cubes * (2.0 / p.R) ** (p.d - 1))
