"""Bernstein blocks, Green-Kubo variance and empirical CLT checks."""

from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np
from scipy.special import ndtr

from cltlab.errors import DegenerateObservableError, InconsistentSeriesError, InsufficientDataError
from cltlab.rng import (
    batch_standard_error,
    chunk_size_for,
    ensemble_sums,
    substream,
)
from cltlab.systems import birkhoff_sums

DEFAULT_T_GRID = (0.5, 1.0, 2.0, 4.0)
KS_THRESHOLD = 0.03


@dataclass(frozen=True)
class BernsteinSchedule:
    n: int
    a: float
    b: float
    p: int
    q: int
    k: int

    @property
    def covered_fraction(self):
        """Share of S_n carried by the long blocks, k p / n."""
        return self.k * self.p / self.n

    @property
    def block_ratio(self):
        return (self.p + self.q) / self.p

    def block_starts(self):
        return np.arange(self.k) * (self.p + self.q)

    def to_dict(self):
        return {**asdict(self), "covered_fraction": self.covered_fraction, "block_ratio": self.block_ratio}


def bernstein_schedule(n, a=0.4, b=0.2):
    if not 0 < b < a < 0.5:
        raise ValueError(f"need 0 < b < a < 1/2, got a={a}, b={b}")
    n = int(n)
    # exact powers of ten otherwise round down by one ulp
    p, q = int(math.floor(n ** a + 1e-9)), int(math.floor(n ** b + 1e-9))
    if p < 1 or q < 1:
        raise ValueError(f"n={n} too small: p={p}, q={q}")
    k = n // (p + q)
    if k < 2:
        raise ValueError(f"n={n} too small: only {k} blocks")
    return BernsteinSchedule(n, float(a), float(b), p, q, k)


# ---------------------------------------------------------------- Var S_p

_VAR_CACHE = {}
VAR_SP_BUDGET = 10_000


def block_variance(system, f, p, seed, budget=VAR_SP_BUDGET, workers=1):
    """Monte Carlo Var S_p, cached per (system, observable, p, seed, budget)."""
    ss = substream(seed, "var-sp")
    key = (json.dumps(system.descriptor(), sort_keys=True, default=str),
           json.dumps(f.descriptor(), sort_keys=True, default=str), int(p),
           tuple(ss.spawn_key), ss.entropy, int(budget))
    if key not in _VAR_CACHE:
        s = birkhoff_sums(system, f, p, budget, ss, workers=workers)
        _VAR_CACHE[key] = float(np.var(s)) if np.ptp(s) > 0 else 0.0
    v = _VAR_CACHE[key]
    sup = f.sup_norm if f.sup_norm is not None else 1.0
    if v < 1e-12 * p * sup ** 2 or v == 0.0:
        raise DegenerateObservableError(f"Var S_p = {v:.3g} is degenerate for p={p}")
    return v


def block_sums(paths_values, schedule):
    """(count, k) block sums from (count, >= k(p+q)) observable values."""
    p, q, k = schedule.p, schedule.q, schedule.k
    v = np.asarray(paths_values)[:, : k * (p + q)]
    return v.reshape(len(v), k, p + q)[:, :, :p].sum(axis=2)


def block_variables(sums, t, schedule, var_sp):
    """w_r = exp(i t S_r / sqrt(k Var S_p)) for every row and block."""
    return np.exp(1j * t * sums / math.sqrt(schedule.k * var_sp))


def block_variable(system, f, t, schedule, point, r, var_sp):
    """w_r at a single point, iterating the map in floating point."""
    if not 1 <= r <= schedule.k:
        raise ValueError("block index out of range")
    if not var_sp > 0:
        raise DegenerateObservableError("Var S_p must be positive")
    start = (schedule.p + schedule.q) * (r - 1)
    x = system.check_point(point)
    for _ in range(start):
        x = system.step(x)
    total = 0.0
    for j in range(schedule.p):
        total += float(np.real(f(np.asarray(x, dtype=float))))
        if j + 1 < schedule.p:
            x = system.step(x)
    return complex(np.exp(1j * t * total / math.sqrt(schedule.k * var_sp)))


@dataclass
class BlockStatistics:
    """Ensemble means of block variables and their products, per t.

    ``prefix[i, r-1]`` is <w_1...w_r>, ``shifted[i, r-1]`` is <w_2...w_r>
    (1 for r = 1), ``suffix[i, r-1]`` is <w_r...w_k>.
    """

    ts: np.ndarray
    schedule: BernsteinSchedule
    var_sp: float
    samples: int
    means: np.ndarray
    prefix: np.ndarray
    shifted: np.ndarray
    suffix: np.ndarray
    batch: dict = field(repr=False, default_factory=dict)

    def gap(self, i):
        """|<w_1...w_k> - prod <w_r>| and its batch standard error."""
        direct = self.prefix[i, -1] - np.prod(self.means[i])
        bm = self.batch["prefix"][:, i, -1] - np.prod(self.batch["means"][:, i], axis=1)
        return abs(direct), float(batch_standard_error(np.abs(bm)))

    def pair_gaps(self, i):
        """|<w_1 W_r o F^{p+q}> - <w_1><W_r>| for r = 2..k, with standard errors."""
        g = self.prefix[i, 1:] - self.means[i, 0] * self.shifted[i, 1:]
        bm = self.batch["prefix"][:, i, 1:] - self.batch["means"][:, i, :1] * self.batch["shifted"][:, i, 1:]
        return np.abs(g), batch_standard_error(np.abs(bm))

    def telescoped(self, i):
        """sum_r prod_{j<r}<w_j> (<w_r...w_k> - <w_r><w_{r+1}...w_k>)."""
        m, s = self.means[i], self.suffix[i]
        lead = np.concatenate([[1.0 + 0j], np.cumprod(m[:-2])])
        return complex(np.sum(lead * (s[:-1] - m[:-1] * s[1:])))

    def direct(self, i):
        return complex(self.prefix[i, -1] - np.prod(self.means[i]))


def block_statistics(system, f, schedule, ts, budget, seed, *, var_sp=None, workers=1):
    """Estimate every block-variable mean needed by the block gap, shared across ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if var_sp is None:
        var_sp = block_variance(system, f, schedule.p, seed, workers=workers)
    k = schedule.k
    length = k * (schedule.p + schedule.q)

    def fn(rng, size):
        sums = block_sums(f(system.sample_paths(rng, size, length)), schedule)
        cols = []
        for t in ts:
            w = block_variables(sums, t, schedule, var_sp)
            pre = np.cumprod(w, axis=1)
            sh = np.cumprod(np.concatenate([np.ones((size, 1)), w[:, 1:]], axis=1), axis=1)
            suf = np.cumprod(w[:, ::-1], axis=1)[:, ::-1]
            cols.append(np.concatenate([w, pre, sh, suf], axis=1))
        return np.concatenate(cols, axis=1)

    bs = ensemble_sums(fn, budget, substream(seed, "blocks"), chunk_size=chunk_size_for(length),
                       workers=workers)
    nt = len(ts)
    mean = bs.mean().reshape(nt, 4, k)
    bm = bs.batch_means().reshape(-1, nt, 4, k)
    return BlockStatistics(ts, schedule, var_sp, bs.n, mean[:, 0], mean[:, 1], mean[:, 2], mean[:, 3],
                           {"means": bm[:, :, 0], "prefix": bm[:, :, 1], "shifted": bm[:, :, 2]})


def block_gap(system, f, t, schedule, budget, seed, *, var_sp=None, workers=1):
    """(|<w_1...w_k> - prod <w_r>|, standard error) at a single t."""
    if t == 0:
        return 0.0, 0.0
    st = block_statistics(system, f, schedule, [t], budget, seed, var_sp=var_sp, workers=workers)
    return st.gap(0)


# ---------------------------------------------------------------- variances


def green_kubo_variance(series, cutoff=None):
    """sigma^2 = C(0) + 2 sum_{1..cutoff} C(i) from an autocorrelation series."""
    from cltlab.correlations import moment_condition

    lags = np.asarray(series.lags)
    est = np.real(np.asarray(series.estimates))
    se = np.asarray(series.standard_errors, dtype=float)
    cutoff = int(lags.max()) if cutoff is None else int(cutoff)
    if cutoff > lags.max() or lags[0] != 0:
        raise ValueError("series must start at lag 0 and reach the cutoff")
    sel = (lags >= 1) & (lags <= cutoff)
    sigma2 = float(est[lags == 0][0] + 2 * est[sel].sum())
    # lag estimates share samples, so errors add linearly
    sigma2_se = float(se[lags == 0][0] + 2 * np.sum(se[sel]))
    if sigma2 < -3 * sigma2_se or (sigma2 < 0 and sigma2_se == 0):
        raise InconsistentSeriesError(f"negative variance {sigma2:.3g} (s.e. {sigma2_se:.3g})")
    decade = sel & (lags > cutoff - 10)
    partial, flag = moment_condition(series, cutoff)
    return sigma2, {"cutoff": cutoff, "standard_error": sigma2_se,
                    "last_decade": float(2 * est[decade].sum()),
                    "moment_partial_sum": partial, "moment_tail_flag": flag}


def _sample_variance(s):
    return float(np.var(s, ddof=1)) if np.ptp(s) > 0 else 0.0


def variance_ratio(system, f, n, N, seed, *, workers=1):
    """(Var S_n / n, standard error) over N mu-distributed starts."""
    if N < 1000:
        raise InsufficientDataError("variance_ratio needs at least 1000 samples")
    s = birkhoff_sums(system, f, n, N, substream(seed, "var-ratio"), workers=workers)
    ratio = _sample_variance(s) / n
    if ratio == 0.0:
        return 0.0, 0.0
    batches = np.array_split(s, 32)
    se = float(np.std([_sample_variance(b) / n for b in batches], ddof=1) / math.sqrt(32))
    return ratio, se


# ---------------------------------------------------------------- CLT


def ks_statistic(samples, cdf=ndtr):
    """Kolmogorov-Smirnov distance between the empirical CDF and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise InsufficientDataError("no samples")
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass
class CLTReport:
    n: int
    samples: int
    ks_statistic: float
    variance_ratio: float
    sigma2_green_kubo: float
    sigma2_empirical: float
    normalization: str
    centering: str
    mean: float
    ks_by_mode: dict
    ks_threshold: float = KS_THRESHOLD
    iid_critical_5pct: float = 0.0
    passed: bool = False
    gk_diagnostics: dict = field(default_factory=dict)
    normalized: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("normalized")
        return d


def clt_test(system, f, n, N, seed, *, normalization="empirical", mean=None,
             gk_budget=1_000_000, gk_cutoff=16, workers=1):
    """KS distance of (S_n - n<f>)/sqrt(normaliser) from the standard normal."""
    from cltlab.correlations import autocorrelation

    if normalization not in ("empirical", "green-kubo"):
        raise ValueError("normalization must be 'empirical' or 'green-kubo'")
    s = birkhoff_sums(system, f, n, N, substream(seed, "clt-sums"), workers=workers)
    centering = "supplied" if mean is not None else "estimated"
    mu = float(mean) if mean is not None else float(s.mean() / n)
    dev = s - n * mu
    sigma2_emp = float(np.mean(dev ** 2) if mean is not None else _sample_variance(s)) / n
    sup = f.sup_norm if f.sup_norm is not None else 1.0
    if sigma2_emp <= 1e-12 * sup ** 2:
        raise DegenerateObservableError(f"Var S_n / n = {sigma2_emp:.3g}: degenerate observable")
    series = autocorrelation(system, f, range(gk_cutoff + 1), gk_budget, substream(seed, "clt-gk"),
                             workers=workers)
    sigma2_gk, diag = green_kubo_variance(series, gk_cutoff)
    if sigma2_gk <= 1e-12 * sup ** 2:
        raise DegenerateObservableError(f"Green-Kubo variance {sigma2_gk:.3g} is degenerate")
    z = {"empirical": dev / math.sqrt(n * sigma2_emp), "green-kubo": dev / math.sqrt(n * sigma2_gk)}
    ks = {mode: ks_statistic(v) for mode, v in z.items()}
    chosen = ks[normalization]
    return CLTReport(n, N, chosen, sigma2_emp, sigma2_gk, sigma2_emp, normalization, centering, mu, ks,
                     KS_THRESHOLD, 1.358 / math.sqrt(N), chosen < KS_THRESHOLD, diag, z[normalization])


def histogram_rows(samples, bins):
    """(bin_left, bin_right, count, normal_density_at_center) rows."""
    if bins < 2:
        raise ValueError("need at least two bins")
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InsufficientDataError("empty sample set")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = np.exp(-0.5 * centers ** 2) / math.sqrt(2 * math.pi)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i]), float(dens[i])) for i in range(bins)]


def emit_histogram(samples, bins, path):
    from cltlab.io import write_csv

    rows = histogram_rows(samples, bins)
    write_csv(path, ("bin_left", "bin_right", "count", "normal_density_at_center"), rows)
    return rows
