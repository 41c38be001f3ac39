"""Acceptance criteria 1-8 at their stated budgets and tolerances.

Each test prints one ``ACCEPTANCE k: PASS/FAIL`` line; the lines are
repeated in the pytest terminal summary.
"""

from fractions import Fraction as Fr
import filecmp
import math
import time

import numpy as np
import pytest
import yaml
from scipy import stats

from cltlab import billiard as bl
from cltlab import observables, regularity as rg, transfer as tr
from cltlab.cli import run
from cltlab.clt import bernstein_schedule, block_statistics, clt_test, green_kubo_variance, variance_ratio
from cltlab.correlations import autocorrelation
from cltlab.rng import generator
from cltlab.systems import DoublingMap, IteratedMap, ToralAutomorphism

from oracles import sawtooth_correlation

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

DOUBLING = DoublingMap()
CAT = ToralAutomorphism([[2, 1], [1, 1]])


def test_1_sawtooth_exact_law(criterion):
    start = time.perf_counter()
    saw = observables.sawtooth(DOUBLING)
    s = autocorrelation(DOUBLING, saw, range(17), 1_000_000, 101)
    z = [abs(s.at(n)[0].real - float(sawtooth_correlation(n))) / s.at(n)[1] for n in range(9)]
    sigma2, diag = green_kubo_variance(s, 16)
    elapsed = time.perf_counter() - start
    ok = max(z) < 3 and abs(sigma2 - 0.25) < 0.02 * 0.25 and elapsed < 60
    assert criterion(1, ok, f"max |z| over n=0..8 = {max(z):.2f} (< 3), sigma2_GK = {sigma2:.5f} "
                            f"(0.25 +- 2%), {elapsed:.1f}s (< 60s)")


@pytest.mark.parametrize("name", ["doubling", "cat"])
def test_2_clt(name, criterion):
    system = DOUBLING if name == "doubling" else CAT
    f = observables.cos_first_coordinate(system)
    start = time.perf_counter()
    rep = clt_test(system, f, 2000, 5000, 202, mean=0.0)
    elapsed = time.perf_counter() - start
    ks = rep.ks_by_mode
    ok = max(ks.values()) < 0.03 and abs(ks["empirical"] - ks["green-kubo"]) < 0.01 and elapsed < 120
    assert criterion(f"2-{name}", ok, f"KS empirical = {ks['empirical']:.4f}, green-kubo = {ks['green-kubo']:.4f} "
                                      f"(< 0.03, differ by < 0.01), {elapsed:.1f}s (< 120s)")


def test_3_variance_convergence(criterion):
    saw = observables.sawtooth(DOUBLING)
    sigma2, diag = green_kubo_variance(autocorrelation(DOUBLING, saw, range(17), 1_000_000, 303), 16)
    rows = []
    for n, N in [(100, 1_000_000), (1000, 1_000_000), (10_000, 200_000)]:
        r, se = variance_ratio(DOUBLING, saw, n, N, 304)
        rows.append((n, r, abs(r - sigma2), se))
    # sigma2 is shared by all rows, so only the ratio errors enter the comparisons
    decreasing = all(b[2] <= a[2] + 2 * math.hypot(a[3], b[3]) for a, b in zip(rows, rows[1:]))
    resolved = rows[0][2] > rows[1][2] + 2 * math.hypot(rows[0][3], rows[1][3])
    final = abs(rows[-1][1] - 0.25) < 0.05 * 0.25
    detail = ", ".join(f"n={n}: |ratio-GK|={d:.5f}+-{e:.5f}" for n, _, d, e in rows)
    assert criterion(3, decreasing and resolved and final,
                     f"{detail}; GK se {diag['standard_error']:.5f}; final ratio {rows[-1][1]:.5f} (0.25 +- 5%)")


def test_4_bernstein(criterion):
    f = observables.cos_first_coordinate(DOUBLING)
    sch = bernstein_schedule(10_000, 0.4, 0.2)
    ts = [0.0, 0.5, 1.0, 2.0, 4.0]
    st = block_statistics(DOUBLING, f, sch, ts, 100_000, 404)
    gaps = [st.gap(i)[0] for i in range(len(ts))]
    resid = max(abs(st.direct(i) - st.telescoped(i)) for i in range(len(ts)))
    ok = ((sch.p, sch.q, sch.k) == (39, 6, 222) and gaps[0] == 0.0 and max(gaps[1:]) <= 0.1
          and resid < 1e-10)
    assert criterion(4, ok, f"(p,q,k)=({sch.p},{sch.q},{sch.k}), block gaps at t=0.5,1,2,4: "
                            f"{', '.join(f'{g:.4f}' for g in gaps[1:])} (<= 0.1), t=0 gap {gaps[0]}, "
                            f"telescoping residual {resid:.1e} (< 1e-10)")


def _rel(a, b):
    b = float(b)
    return abs(a - b) / max(abs(b), 1e-300)


def test_5_regularity_calculus(criterion):
    rng = np.random.default_rng(505)
    worst = 0.0
    rk_free = True
    for _ in range(1000):
        K = rng.uniform(0, 20, 4)
        th = rng.uniform(0.01, 0.99, 4)
        M = rng.uniform(0.05, 5, 4)
        n = int(rng.integers(0, 40))
        F = [Fr(float(v)) for v in M]
        # product rule
        b = rg.product_budget(rg.RegularityBudget(K[0], th[0], M[0]), rg.RegularityBudget(K[1], th[1], M[1]))
        worst = max(worst, _rel(b.K, F[0] * Fr(K[1]) + Fr(K[0]) * F[1]))
        # pullback contraction
        pb = rg.pullback_budget(rg.RegularityBudget(K[0], th[0], M[0], rg.H_MINUS), n)
        worst = max(worst, _rel(pb.K, Fr(K[0]) * Fr(th[0]) ** n))
        # multi-time closure
        i0 = int(rng.integers(0, 6))
        offs = [i0, i0 + 1, i0 + 3, i0 + 4]
        mb = rg.multitime_budget([rg.RegularityBudget(K[j], th[j], M[j]) for j in range(4)], offs)
        T = max(Fr(float(t)) for t in th)
        oracle = max(Fr(float(k)) for k in K) * math.prod(F) / min(F) * T ** i0 / (1 - T)
        worst = max(worst, _rel(mb.K, oracle))
        # billiard pair bound
        c = rg.BilliardBoundConstants(float(rng.uniform(0.5, 0.99)), float(rng.uniform(0.1, 10)),
                                      float(rng.uniform(0.1, 5)))
        f = rg.RegularityBudget(K[0], th[0], M[0], rg.H_PLUS)
        g = rg.RegularityBudget(K[1], th[1], M[1], rg.H_MINUS)
        bound, rate = rg.billiard_pair_bound(f, g, c, n)
        r_or = Fr(max(c.theta_upsilon, th[0], th[1], math.exp(-1 / c.kappa)) ** 0.25)
        B = Fr(c.C0) * (Fr(K[0]) * F[1] + F[0] * Fr(K[1]) + F[0] * F[1])
        worst = max(worst, _rel(bound, B * r_or ** n))
        # multiple-correlation bound
        r, k = int(rng.integers(0, 8)), int(rng.integers(0, 8))
        mbound = rg.billiard_multi_bound(f, r, g, k, c, n)
        pre = Fr(c.C0) * F[0] ** r * F[1] ** k * (Fr(K[0]) / (1 - Fr(th[0])) * F[1]
                                                  + F[0] * Fr(K[1]) / (1 - Fr(th[1])) + F[0] * F[1])
        worst = max(worst, _rel(mbound, pre * r_or ** n))
        f1, g1 = rg.RegularityBudget(K[0], th[0], 1.0, rg.H_PLUS), rg.RegularityBudget(K[1], th[1], 1.0, rg.H_MINUS)
        rk_free &= rg.billiard_multi_bound(f1, r, g1, k, c, n) == rg.billiard_multi_bound(f1, 0, g1, 0, c, n)
    ok = worst < 1e-12 and rk_free
    assert criterion(5, ok, f"1000 draws x 5 formulas, worst relative error {worst:.1e} (< 1e-12), "
                            f"unit-norm prefactor r,k-independent: {rk_free}")


def test_6_transfer_suite(criterion):
    G = 1 << 14
    phi = tr.ulam_density(DOUBLING, G)
    ulam_err = float(np.max(np.abs(phi.values - 1)))

    devs = []
    for n in (12, 13, 14):
        f = tr.GridFunction.sample(lambda x: np.abs(np.sin(np.pi * (x - 1 / 3))), 1 << n)
        devs.append(tr.verify_transfer_identity(DOUBLING, f, tr.GridFunction(np.ones(1 << n))))
    ratios = [a / b for a, b in zip(devs, devs[1:])]
    halving = all(2 / 1.5 <= q <= 2 * 1.5 for q in ratios)

    sq = IteratedMap(DOUBLING, 2)
    rng = generator(606)
    ly = []
    for _ in range(20):
        xs = np.concatenate([[0.0], np.sort(rng.random(10)), [1.0]])
        ys = rng.normal(size=12)
        ly.append(tr.lasota_yorke_residual(sq, tr.GridFunction.sample(lambda x: np.interp(x, xs, ys), G), 0.0))
    ly_ok = all(c.holds for c in ly)

    f = tr.GridFunction.sample(lambda x: np.cos(2 * np.pi * x), G)
    tv_rows = []
    for p in (10, 39, 251):
        tv, gtv = tr.block_transfer_variation(DOUBLING, f, 1.0, p, math.sqrt(0.5), phi)
        tv_rows.append((p, tv, tr.doubling_block_tv_bound(gtv, p)))
    tv_ok = all(tv <= bound for _, tv, bound in tv_rows)

    sch = bernstein_schedule(10_000, 0.4, 0.2)
    saw = tr.GridFunction.sample(lambda x: x - 0.5, G)
    scale = math.sqrt(sch.k * tr.grid_block_variance(DOUBLING, saw, sch.p, phi))
    qs = list(range(1, sch.q + 1))
    fits = []
    for t in (1.0, 4.0):
        gaps = tr.block_gap_vs_q(DOUBLING, saw, t, sch.p, qs, scale, phi)
        fits.append(tr.fit_geometric(qs, gaps))
    fit_ok = all(res < 0.2 and rho < 1 for rho, _, res in fits)

    ok = ulam_err < 1e-10 and halving and ly_ok and tv_ok and fit_ok
    assert criterion(6, ok, f"Ulam |phi-1| = {ulam_err:.1e}; identity ratios {', '.join(f'{q:.3f}' for q in ratios)}; "
                            f"LY holds on {sum(c.holds for c in ly)}/20; "
                            f"block TV {', '.join(f'p={p}: {v:.3f}<={b:.3f}' for p, v, b in tv_rows)}; "
                            f"gap fits rho={', '.join(f'{r:.3f}' for r, _, _ in fits)} "
                            f"resid={', '.join(f'{e:.3f}' for _, _, e in fits)} (< 0.2)")


def test_7_billiard_substrate(criterion):
    two = bl.BilliardGeometry((((0.0, 0.0), 0.4), ((0.5, 0.5), 0.2)))
    X = bl.sample_srb(two, generator(707), 100_000)
    Y = bl.collision_batch(two, X)
    ok_rows = Y.status == bl.OK
    pval = stats.kstest(Y.coords[ok_rows, 2], lambda p: 0.5 * (1 + np.sin(p))).pvalue

    one = bl.BilliardGeometry((((0.5, 0.5), 0.25),))
    mfp, _, _ = bl.mean_free_path(one, 1_000_000, seed=708, cap=1e4)
    exact = (1 - math.pi * 0.25 ** 2) / (2 * 0.25)
    mfp_err = abs(mfp / exact - 1)

    Z = bl.sample_srb(two, generator(709), 1000)
    W = bl.collision_batch(two, Z)
    good = W.status == bl.OK
    back = bl.reverse(bl.collision_batch(two, bl.reverse(W.coords[good])).coords)
    dr = np.abs(back[:, 1] - Z[good, 1])
    per = two.perimeters[Z[good, 0].astype(int)]
    rev = float(max(np.max(np.minimum(dr, per - dr)), np.max(np.abs(back[:, 2] - Z[good, 2])),
                    np.max(np.abs(back[:, 0] - Z[good, 0]))))

    est = bl.estimate_dynamical_holder(two, bl.reflection_angle(), 10_000, 100, seed=710)
    ok = pval > 0.01 and mfp_err < 0.01 and rev < 1e-9 and good.sum() >= 999 and est.violation_fraction <= 0.01
    assert criterion(7, ok, f"SRB KS p = {pval:.3f} (> 0.01); mean free path {mfp:.5f} vs {exact:.5f} "
                            f"(err {mfp_err:.2%} < 1%); reversal error {rev:.1e} on {int(good.sum())} collisions "
                            f"(< 1e-9); Hoelder fit theta = {est.theta:.3f}, violations {est.violation_fraction:.2%} (<= 1%)")


ACCEPTANCE_CONFIGS = {
    "sawtooth": {"seed": 808, "system": {"name": "doubling"}, "observable": {"name": "sawtooth", "mean": 0.0},
                 "budgets": {"samples": 1_000_000, "lags": 16}},
    "doubling-cos": {"seed": 809, "system": {"name": "doubling"},
                     "observable": {"name": "cos-first-coordinate", "mean": 0.0},
                     "schedule": {"n": 10_000, "a": 0.4, "b": 0.2, "t_grid": [0.5, 1, 2, 4]},
                     "budgets": {"block_samples": 100_000, "clt_n": 2000, "clt_samples": 5000}},
    "cat-cos": {"seed": 810, "system": {"name": "cat"},
                "observable": {"name": "cos-first-coordinate", "mean": 0.0},
                "budgets": {"clt_n": 2000, "clt_samples": 5000}},
    "billiard": {"seed": 811, "system": {"name": "billiard", "scatterers": [
        {"center": [0.0, 0.0], "radius": 0.4}, {"center": [0.5, 0.5], "radius": 0.2}]},
        "observable": {"name": "reflection-angle"},
        "budgets": {"samples": 100_000, "pair_budget": 10_000},
        "regularity": {"estimate": True, "n_max": 10}},
}
RUNS = [("sawtooth", "correlations"), ("doubling-cos", "clt"), ("doubling-cos", "bernstein"),
        ("doubling-cos", "transfer"), ("cat-cos", "clt"), ("billiard", "billiard-check"),
        ("billiard", "regularity"), ("billiard", "simulate")]


def test_8_determinism(tmp_path, criterion):
    same = []
    for name, command in RUNS:
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(yaml.safe_dump(ACCEPTANCE_CONFIGS[name]))
        outs = [tmp_path / f"{name}-{command}-{i}" for i in (1, 2)]
        for out in outs:
            assert run([command, "--config", str(cfg), "--out", str(out)]) == 0
        files = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
        match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], files, shallow=False)
        m1 = yaml.safe_load((outs[0] / "manifest.json").read_text())["files"]
        m2 = yaml.safe_load((outs[1] / "manifest.json").read_text())["files"]
        same.append((f"{command}/{name}", not mismatch and not errors and m1 == m2 and bool(files)))
    ok = all(s for _, s in same)
    assert criterion(8, ok, f"{sum(s for _, s in same)}/{len(same)} reruns bit-identical "
                            f"({', '.join(n for n, s in same if not s) or 'all outputs and manifest checksums'})")
