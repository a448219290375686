"""The eight acceptance criteria, each at its stated tolerance."""
import json
import time

import numpy as np
import pytest

from sharpdec.experiments import SweepConfig, estimate_cost, run_campaign
from sharpdec.extension import evaluate, make_plan, oracle_evaluate
from sharpdec.geometry import Params, build_x, enumerate_cubes
from sharpdec.records import ResultRecord, cache_lookup, cache_store
from sharpdec.wavepacket import (cap_decompose, census_at, local_orthogonality_check,
                                 packetize_all)


def ball_points(rng, n, d, radius):
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=1)[:, None]
    return u * radius * rng.random(n)[:, None] ** (1.0 / d)


def fits_summary(rep):
    return ", ".join(f"{k} {f.slope:+.4f} (pred {f.predicted:+.4f})" for k, f in rep.fits.items())


@pytest.mark.parametrize("sigma", [0.25, 0.4])
def test_criterion_1_amplitude_law(verdict, sigma):
    cfg = SweepConfig(d=2, sigma=sigma, campaigns=("amplitude",))
    assert cfg.R_list == [2.0 ** k for k in range(8, 14)]
    t0 = time.perf_counter()
    rep = run_campaign("amplitude", cfg)
    dt = time.perf_counter() - t0
    fit = rep.fits["amplitude"]
    ok = abs(fit.slope - (sigma - 1)) <= 0.05 + cfg.eps_slack and dt < 60
    assert verdict(1, f"amplitude law, sigma={sigma}", ok,
                   f"slope {fit.slope:+.4f} vs {sigma - 1:+.4f}, {dt:.1f}s")


def test_criterion_2_refined_decoupling_d2(verdict):
    cfg = SweepConfig(d=2, sigma=0.25, campaigns=("decoupling",))
    t0 = time.perf_counter()
    rep = run_campaign("decoupling", cfg)
    dt = time.perf_counter() - t0
    f = rep.fits
    pred = -13 / 24
    ok = (rep.p == 6.0
          and abs(f["lhs"].slope - pred) <= 0.05 + cfg.eps_slack
          and abs(f["rhs"].slope - pred) <= 0.05 + cfg.eps_slack
          and f["ratio"].passed and abs(f["ratio"].slope) <= 0.1 + cfg.eps_slack
          and rep.checks["comparability"].value <= 8
          and abs(f["M"].slope - 0.25) <= 0.1
          and rep.passed and dt < 600)
    assert verdict(2, "refined decoupling sharpness d=2", ok,
                   f"{fits_summary(rep)}; comparability "
                   f"{rep.checks['comparability'].value:.3g}; {dt:.1f}s")


def test_criterion_3_d3_stress(verdict):
    cfg = SweepConfig(d=3, sigma=0.25, tol=0.1, campaigns=("decoupling",))
    assert cfg.R_list == [128.0, 256.0, 512.0, 1024.0]
    t0 = time.perf_counter()
    rep = run_campaign("decoupling", cfg)
    dt = time.perf_counter() - t0
    f = rep.fits
    ok = (rep.p == 4.0
          and abs(f["lhs"].slope + 1.0) <= 0.1 + cfg.eps_slack
          and abs(f["rhs"].slope + 1.0) <= 0.1 + cfg.eps_slack
          and dt < 1800)
    assert verdict(3, "d=3 stress", ok, f"{fits_summary(rep)}; {dt:.1f}s")


def test_criterion_4_corollary(verdict):
    cfg = SweepConfig(d=2, sigma=0.25, campaigns=("corollary",))
    rep = run_campaign("corollary", cfg)
    f = rep.fits
    alpha = rep.rows[0]["alpha"]
    ok = (alpha == pytest.approx(1.25)
          and abs(f["lhs"].slope + 0.125) <= 0.05 + cfg.eps_slack
          and abs(f["rhs"].slope + 0.125) <= 0.05 + cfg.eps_slack
          and f["ratio"].passed and abs(f["ratio"].slope) <= 0.1 + cfg.eps_slack
          and f["incidence"].slope <= -0.5 + 0.1
          and rep.checks["fractal_constant"].value <= 4
          and rep.passed)
    assert verdict(4, "L2 corollary", ok,
                   f"{fits_summary(rep)}; fractal C {rep.checks['fractal_constant'].value:.3g}")


@pytest.mark.parametrize("d,nodes", [(2, 10_000), (3, 2_000)])
def test_criterion_5_oracle_equivalence(verdict, d, nodes):
    p = Params(d, 0.25, 64)
    pts = ball_points(np.random.default_rng(0), 20, d, p.R)
    fast = evaluate(make_plan(p), pts)
    slow = oracle_evaluate(p, pts, nodes_per_axis=nodes)
    rel = float(np.linalg.norm(fast - slow) / np.linalg.norm(slow))
    exact = len(enumerate_cubes(p)) * (2 / p.R) ** (d - 1)
    g0 = evaluate(make_plan(p), np.zeros((1, d)))[0]
    o0 = oracle_evaluate(p, np.zeros((1, d)), nodes_per_axis=100)[0]
    err0 = max(abs(g0 - exact), abs(o0 - exact))
    ok = rel < 1e-6 and err0 < 1e-12
    assert verdict(5, f"oracle equivalence d={d}", ok,
                   f"relative error {rel:.2e}, g(0) error {err0:.1e}")


def test_criterion_6_structure(verdict):
    rng = np.random.default_rng(0)
    p = Params(2, 0.25, 4096)
    pieces = cap_decompose(p)
    plan = make_plan(p, radius=2 * p.R)
    g0 = evaluate(plan, np.zeros((1, 2)))[0].real

    pts = ball_points(rng, 500, 2, p.R)
    g = evaluate(plan, pts)
    cap_err = float(np.max(np.abs(sum(pc(pts) for pc in pieces) - g)) / g0)

    sets = packetize_all(pieces, p)
    inner = ball_points(rng, 300, 2, p.R / 2)
    tube_err = 0.0
    for ps in sets:
        gt = ps.piece(inner)
        tube_err = max(tube_err, float(np.max(np.abs(ps.resum(inner) - gt)) / np.abs(gt).max()))

    orth = local_orthogonality_check(pieces, p, 200, rng)

    probe = np.vstack([build_x(p).points, ball_points(rng, 5000, 2, p.R)])
    m_ok = bool(np.all(census_at(probe, sets).M <= len(pieces)))

    wide = ball_points(rng, 5000, 2, 2 * p.R)
    tri = float(np.max(np.abs(evaluate(plan, wide))) / g0)

    ok = (cap_err < 1e-10 and tube_err < 1e-8 and orth.fraction_in_band >= 0.95
          and m_ok and tri <= 1 + 1e-12)
    assert verdict(6, "structural properties", ok,
                   f"cap {cap_err:.1e}, tube {tube_err:.1e}, orthogonality "
                   f"{orth.fraction_in_band:.0%} in band, census ok {m_ok}, max|g|/g(0) {tri:.4f}")


def test_criterion_7_determinism(verdict, tmp_path):
    cfg = SweepConfig(d=2, sigma=0.25, seed=11)
    recs = []
    for name in ("amplitude", "decoupling", "corollary"):
        a = ResultRecord.from_report(run_campaign(name, cfg), cfg)
        b = ResultRecord.from_report(run_campaign(name, cfg), cfg)
        same = json.dumps(a.content(), sort_keys=True) == json.dumps(b.content(), sort_keys=True)
        recs.append((a, same))
    identical = all(s for _, s in recs)
    trip = True
    for rec, _ in recs:
        cache_store(tmp_path, rec)
        trip &= cache_lookup(tmp_path, rec.config_hash) == rec
    assert verdict(7, "determinism and cache round trip", identical and trip,
                   f"bit-identical {identical}, round trip {trip}")


def test_criterion_8_performance(verdict):
    p = Params(2, 0.25, 4096)
    plan = make_plan(p)
    pts = np.random.default_rng(0).uniform(-p.R / 1.5, p.R / 1.5, (20_000, 2))
    evaluate(plan, pts[:256])
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        evaluate(plan, pts)
        best = min(best, time.perf_counter() - t0)
    rate = len(pts) * len(plan.centers) * plan.nodes_per_axis ** (p.d - 1) / best
    cfg = SweepConfig(d=2)
    cost = estimate_cost(cfg)
    ok = rate >= 1e7 and cost <= cfg.budget
    assert verdict(8, "performance", ok,
                   f"{rate:.3g} cube-node evaluations/s, default sweep cost {cost:.3g} "
                   f"of budget {cfg.budget:.3g}")
