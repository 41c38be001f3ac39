"""Monte Carlo pair, auto and multiple correlations and decay fits."""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from cltlab.errors import InsufficientDataError
from cltlab.io import read_csv, write_csv, write_json
from cltlab.rng import (
    N_BATCHES,
    batch_standard_error,
    chunk_size_for,
    ensemble_sums,
    generator,
    substream,
)

MIN_BUDGET = 1000


@dataclass
class CorrelationSeries:
    lags: np.ndarray
    estimates: np.ndarray
    standard_errors: np.ndarray
    sample_count: int
    estimator: str = "ensemble"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=np.int64)
        self.estimates = np.asarray(self.estimates, dtype=complex)
        self.standard_errors = np.asarray(self.standard_errors, dtype=float)
        if not (len(self.lags) == len(self.estimates) == len(self.standard_errors)):
            raise ValueError("lags, estimates and standard errors must have equal length")
        if np.any(np.diff(self.lags) <= 0) or np.any(self.lags < 0):
            raise ValueError("lags must be ascending and nonnegative")
        if np.any(self.standard_errors < 0):
            raise ValueError("standard errors must be nonnegative")

    def at(self, lag):
        i = np.searchsorted(self.lags, lag)
        if i >= len(self.lags) or self.lags[i] != lag:
            raise KeyError(lag)
        return self.estimates[i], self.standard_errors[i]

    def rows(self):
        return [(int(l), float(e.real), float(e.imag), float(s), int(self.sample_count))
                for l, e, s in zip(self.lags, self.estimates, self.standard_errors)]

    def to_csv(self, path):
        """CSV plus a JSON sidecar with the same stem."""
        path = Path(path)
        write_csv(path, ("lag", "re", "im", "se", "n_samples"), self.rows())
        write_json(path.with_suffix(".json"), {"estimator": self.estimator, "sample_count": self.sample_count,
                                               **self.metadata})

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        _, rows = read_csv(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        est = [complex(float(r[1]), float(r[2])) for r in rows]
        return cls([int(r[0]) for r in rows], est, [float(r[3]) for r in rows],
                   int(meta.pop("sample_count")), meta.pop("estimator"), meta)


@dataclass
class DecayFit:
    rate_hat: float
    prefactor_hat: float
    window: tuple
    residual: float
    lags_used: list


def _probe_constant(system, f, seed):
    """True if f takes a single value on a probe sample from the invariant measure."""
    x = system.sample_paths(generator(seed, "probe"), 4096, 1)[:, 0]
    v = np.asarray(f(x))
    return bool(np.all(v == v.flat[0]))


def _check_budget(budget):
    if budget < MIN_BUDGET:
        raise InsufficientDataError(f"budget {budget} below {MIN_BUDGET}")


def pair_correlation(system, f, g, lags, budget, seed, *, estimator="ensemble", workers=1):
    """<f g o F^n> - <f><g> for each lag n, with batch-means standard errors."""
    lags = np.asarray(sorted(set(int(l) for l in lags)), dtype=np.int64)
    if lags.size == 0 or lags[0] < 0:
        raise ValueError("lags must be nonnegative")
    _check_budget(budget)
    meta = {"system": system.descriptor(), "f": f.descriptor(), "g": g.descriptor(), "budget": int(budget),
            "seed": _seed_repr(seed)}
    if _probe_constant(system, f, seed) or _probe_constant(system, g, seed):
        zeros = np.zeros(len(lags))
        return CorrelationSeries(lags, zeros, zeros, budget, estimator, {**meta, "constant": True})
    if estimator == "ensemble":
        est, se = _ensemble_pair(system, f, g, lags, budget, seed, workers)
    elif estimator == "time-average":
        est, se = _time_average_pair(system, f, g, lags, budget, seed)
    else:
        raise ValueError("estimator must be 'ensemble' or 'time-average'")
    return CorrelationSeries(lags, est, se, budget, estimator, meta)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def _cov_from_means(m, nl):
    f0 = m[..., 0]
    gl = m[..., 1:1 + nl]
    fg = m[..., 1 + nl:]
    return fg - f0[..., None] * gl


def _ensemble_pair(system, f, g, lags, budget, seed, workers):
    L = int(lags[-1]) + 1
    nl = len(lags)

    def fn(rng, size):
        paths = system.sample_paths(rng, size, L)
        fv = np.asarray(f(paths[:, 0]))
        gv = np.asarray(g(paths[:, lags]))
        return np.concatenate([fv[:, None], gv, fv[:, None] * gv], axis=1)

    bs = ensemble_sums(fn, budget, substream(seed, "pair"), chunk_size=chunk_size_for(L), workers=workers)
    est = _cov_from_means(bs.mean(), nl)
    se = batch_standard_error(_cov_from_means(bs.batch_means(), nl))
    return est, se


def _time_average_pair(system, f, g, lags, budget, seed):
    L = int(lags[-1])
    path = system.sample_paths(generator(seed, "time-average"), 1, budget + L)[0]
    fv = np.asarray(f(path))
    gv = np.asarray(g(path)) if g is not f else fv
    head = fv[:budget]
    bounds = np.linspace(0, budget, N_BATCHES + 1).astype(int)
    est = np.empty(len(lags), dtype=complex)
    bm = np.empty((N_BATCHES, len(lags)), dtype=complex)
    for j, lag in enumerate(lags):
        gl = gv[lag:lag + budget]
        prod = head * gl
        est[j] = prod.mean() - head.mean() * gl.mean()
        for b in range(N_BATCHES):
            s = slice(bounds[b], bounds[b + 1])
            bm[b, j] = prod[s].mean() - head[s].mean() * gl[s].mean()
    return est, batch_standard_error(bm)


def autocorrelation(system, f, lags, budget, seed, *, estimator="ensemble", workers=1):
    return pair_correlation(system, f, f, lags, budget, seed, estimator=estimator, workers=workers)


def fit_decay_rate(series, window=None):
    """Log-linear fit of |C(n)| over lags in ``window`` where |C(n)| > 2 s.e."""
    lags, est, se = series.lags, np.abs(series.estimates), series.standard_errors
    lo, hi = (int(lags[0]), int(lags[-1])) if window is None else (int(window[0]), int(window[1]))
    sel = (lags >= lo) & (lags <= hi) & (est > 2 * se) & (est > 0)
    if sel.sum() < 3:
        raise InsufficientDataError("fewer than three significant lags in the fit window")
    x, y = lags[sel].astype(float), np.log(est[sel])
    slope, intercept = np.polyfit(x, y, 1)
    if slope > 0:
        raise InsufficientDataError(f"estimates grow with lag (slope {slope:.3g})")
    resid = float(np.sqrt(np.mean((y - (intercept + slope * x)) ** 2)))
    return DecayFit(float(math.exp(slope)), float(math.exp(intercept)), (lo, hi), resid, lags[sel].tolist())


def moment_condition(series, cutoff):
    """(sum_{n=1}^{cutoff} n |C(n)|, tail flag); the flag is raised when the last
    ten lags carry more than 5% of the sum."""
    lags = series.lags
    need = np.arange(1, cutoff + 1)
    if not np.all(np.isin(need, lags)):
        raise ValueError(f"series does not cover lags 1..{cutoff}")
    sel = (lags >= 1) & (lags <= cutoff)
    terms = lags[sel] * np.abs(series.estimates[sel])
    total = float(terms.sum())
    tail = float(terms[lags[sel] > cutoff - 10].sum())
    return total, bool(total > 0 and tail > 0.05 * total)


def multiple_correlation(system, factors, budget, seed, *, workers=1):
    """<prod_j f_j o F^{i_j}> - prod_j <f_j> for ``factors`` = [(observable, offset), ...]."""
    obs = [f for f, _ in factors]
    offs = np.asarray([int(i) for _, i in factors], dtype=np.int64)
    if len(offs) == 0 or offs[0] < 0 or np.any(np.diff(offs) < 0):
        raise ValueError("offsets must be nonnegative and ascending")
    _check_budget(budget)
    if all(_probe_constant(system, f, seed) for f in obs):
        return 0j, 0.0
    L = int(offs[-1]) + 1

    def fn(rng, size):
        paths = system.sample_paths(rng, size, L)
        vals = [np.asarray(f(paths[:, i])) for f, i in zip(obs, offs)]
        prod = vals[0].copy()
        for v in vals[1:]:
            prod = prod * v
        return np.column_stack([prod] + vals)

    def combine(mv):
        return mv[..., 0] - np.prod(mv[..., 1:], axis=-1)

    bs = ensemble_sums(fn, budget, substream(seed, "multi"), chunk_size=chunk_size_for(L), workers=workers)
    est = complex(combine(bs.mean()))
    se = float(batch_standard_error(combine(bs.batch_means())))
    return est, se


@dataclass
class TelescopingResult:
    t: float
    gaps: np.ndarray  # r = 2..k
    standard_errors: np.ndarray
    gap_sum: float
    direct: complex
    telescoped: complex

    @property
    def identity_residual(self):
        return abs(self.direct - self.telescoped)


def telescoping_gap(system, f, schedule, t, budget, seed, *, var_sp=None, workers=1):
    """Per-block pair gaps |<w_1 W_r o F^{p+q}> - <w_1><W_r>|, r = 2..k, and their sum."""
    from cltlab.clt import block_statistics

    st = block_statistics(system, f, schedule, [t], budget, seed, var_sp=var_sp, workers=workers)
    gaps, se = st.pair_gaps(0)
    return TelescopingResult(float(t), gaps, se, float(gaps.sum()), st.direct(0), st.telescoped(0))
