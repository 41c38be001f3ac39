import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cltlab import observables
from cltlab.clt import (
    bernstein_schedule,
    block_gap,
    block_statistics,
    block_variable,
    block_variance,
    clt_test,
    emit_histogram,
    green_kubo_variance,
    histogram_rows,
    ks_statistic,
    variance_ratio,
)
from cltlab.correlations import CorrelationSeries
from cltlab.errors import DegenerateObservableError, InsufficientDataError
from cltlab.io import read_csv
from cltlab.rng import generator

from oracles import sawtooth_correlation, sawtooth_green_kubo


def series(values):
    return CorrelationSeries(np.arange(len(values)), values, np.zeros(len(values)), 1)


def test_schedule_examples():
    s = bernstein_schedule(10**6, 0.4, 0.2)
    assert (s.p, s.q, s.k) == (251, 15, 3759)
    s = bernstein_schedule(10**4, 0.4, 0.2)
    assert (s.p, s.q, s.k) == (39, 6, 222)
    for a, b in [(0.2, 0.2), (0.2, 0.3), (0.5, 0.2), (0.4, 0.0)]:
        with pytest.raises(ValueError):
            bernstein_schedule(10**4, a, b)


@settings(max_examples=300, deadline=None)
@given(st.integers(100, 10**9), st.floats(0.05, 0.49), st.floats(0.01, 0.9))
def test_schedule_invariants(n, a, frac):
    b = a * frac
    if not 0 < b < a:
        return
    s = bernstein_schedule(n, a, b)
    assert s.k * (s.p + s.q) <= n < (s.k + 1) * (s.p + s.q)
    assert s.p == math.floor(n ** a + 1e-9) and s.q == math.floor(n ** b + 1e-9)


def test_covered_fraction_increases():
    fr = [bernstein_schedule(10**e, 0.4, 0.2).covered_fraction for e in range(3, 7)]
    assert all(x < y for x, y in zip(fr, fr[1:])) and fr[-1] > 0.94


def test_block_variable(doubling):
    f = observables.cos_first_coordinate(doubling)
    sch = bernstein_schedule(10**4, 0.4, 0.2)
    assert block_variable(doubling, f, 0.0, sch, 0.3, 5, 1.0) == 1
    xs = generator(1).random(1000) * 0.999
    for x in xs[:50]:
        assert abs(abs(block_variable(doubling, f, 1.7, sch, x, 3, 19.5)) - 1) < 1e-12
    # w_r = w_1 o F^{(p+q)(r-1)} with the same floating-point orbit
    for x in xs:
        y = x
        for _ in range(sch.p + sch.q):
            y = doubling.step(y)
        assert block_variable(doubling, f, 1.0, sch, x, 2, 19.5) == block_variable(doubling, f, 1.0, sch, y, 1, 19.5)


def test_block_gap(doubling):
    f = observables.cos_first_coordinate(doubling)
    sch = bernstein_schedule(10**4, 0.4, 0.2)
    assert block_gap(doubling, f, 0.0, sch, 5000, 2) == (0.0, 0.0)
    gap, se = block_gap(doubling, f, 1.0, sch, 20_000, 2)
    assert gap <= 0.1 and gap <= 2


def test_block_means_bounded_and_even(doubling):
    f = observables.cos_first_coordinate(doubling)
    sch = bernstein_schedule(10**4, 0.4, 0.2)
    st_ = block_statistics(doubling, f, sch, [-2.0, 2.0], 20_000, 3)
    se = np.abs(st_.batch["means"].std(axis=0, ddof=1)) / math.sqrt(32)
    assert np.all(np.abs(st_.means) <= 1 + 3 * se + 1e-12)
    g_neg, s_neg = st_.gap(0)
    g_pos, s_pos = st_.gap(1)
    assert abs(g_neg - g_pos) <= 3 * math.hypot(s_neg, s_pos) + 1e-12


def test_degenerate_block_variance(doubling):
    with pytest.raises(DegenerateObservableError):
        block_variance(doubling, observables.constant(doubling, 0.0), 39, 4)


def test_green_kubo_examples():
    exact = [float(sawtooth_correlation(n)) for n in range(13)] + [2.0 ** -n / 12 for n in range(13, 60)]
    sig, diag = green_kubo_variance(series(exact))
    assert sig == pytest.approx(0.25, abs=1e-15)
    assert float(sawtooth_green_kubo()) == pytest.approx(0.25, abs=1e-15)
    assert green_kubo_variance(series([0.5] + [0.0] * 10))[0] == 0.5
    assert green_kubo_variance(series(np.zeros(12)))[0] == 0.0


def test_variance_ratio(doubling, cat):
    assert variance_ratio(doubling, observables.constant(doubling, 3.0), 100, 1000, 5) == (0.0, 0.0)
    r, se = variance_ratio(doubling, observables.sawtooth(doubling), 1000, 10_000, 5)
    assert r == pytest.approx(0.25, rel=0.05)
    r, se = variance_ratio(cat, observables.cos_first_coordinate(cat), 1000, 10_000, 6)
    assert r == pytest.approx(0.5, rel=0.05)
    with pytest.raises(InsufficientDataError):
        variance_ratio(doubling, observables.sawtooth(doubling), 10, 10, 5)


def test_ks_statistic_matches_scipy():
    x = generator(7).normal(size=3000)
    assert ks_statistic(x) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)
    u = generator(8).random(500)
    assert ks_statistic(u, lambda v: np.clip(v, 0, 1)) == pytest.approx(
        stats.kstest(u, "uniform").statistic, abs=1e-14)


def test_clt_sawtooth_mode_agreement(doubling):
    rep = clt_test(doubling, observables.sawtooth(doubling), 2000, 5000, 9, mean=0.0)
    assert rep.ks_statistic < 0.03
    assert abs(rep.ks_by_mode["empirical"] - rep.ks_by_mode["green-kubo"]) < 0.01
    assert 0 <= rep.ks_statistic <= 1 and rep.variance_ratio >= 0


def test_clt_degenerate(doubling):
    with pytest.raises(DegenerateObservableError):
        clt_test(doubling, observables.constant(doubling, 0.0), 100, 1000, 10)


def test_histogram(tmp_path):
    x = generator(11).normal(size=100_000)
    rows = emit_histogram(x, 40, tmp_path / "h.csv")
    header, body = read_csv(tmp_path / "h.csv")
    assert header == ["bin_left", "bin_right", "count", "normal_density_at_center"] and len(body) == 40
    for lo, hi, c, dens in rows:
        if abs(0.5 * (lo + hi)) < 1.5:
            emp = c / (x.size * (hi - lo))
            assert abs(emp / dens - 1) < 0.1
    one = histogram_rows([0.3], 5)
    assert sum(1 for r in one if r[2] > 0) == 1
    with pytest.raises(ValueError):
        histogram_rows(x, 1)
    with pytest.raises(InsufficientDataError):
        histogram_rows([], 5)
