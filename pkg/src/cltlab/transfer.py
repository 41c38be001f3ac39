"""Transfer-operator numerics for piecewise expanding interval maps.

Functions live on the grid {j/G : 0 <= j < G} and are extended to [0, 1] by
linear interpolation, with the last segment extrapolated up to x = 1. Total
variation is the grid-partition sum, a lower bound of the true variation;
integrals are grid means.
"""

from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np
from scipy import sparse

from cltlab.errors import ConvergenceError, UnsupportedSystemError
from cltlab.io import write_csv
from cltlab.systems import IntervalMap

DEFAULT_GRID = 1 << 14


@dataclass
class GridFunction:
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.iscomplexobj(v):
            v = v.astype(float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("grid functions need at least two samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        self.values = v

    @property
    def G(self):
        return self.values.size

    @property
    def x(self):
        return np.arange(self.G) / self.G

    @classmethod
    def sample(cls, func, G=DEFAULT_GRID, **metadata):
        return cls(np.asarray(func(np.arange(G) / G)), dict(metadata))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        u = y * self.G
        j = np.clip(np.floor(u).astype(np.int64), 0, self.G - 2)
        t = u - j
        v = self.values
        return v[j] + t * (v[j + 1] - v[j])

    def _new(self, values):
        return GridFunction(values, dict(self.metadata))

    def __mul__(self, other):
        return self._new(self.values * (other.values if isinstance(other, GridFunction) else other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self._new(self.values - (other.values if isinstance(other, GridFunction) else other))

    def integral(self):
        return complex(self.values.mean()) if np.iscomplexobj(self.values) else float(self.values.mean())

    def l1(self):
        return float(np.abs(self.values).mean())

    def sup(self):
        return float(np.abs(self.values).max())

    def to_csv(self, path):
        v = self.values.astype(complex)
        write_csv(path, ("x", "re", "im"), zip(self.x, v.real, v.imag))


def _require_branches(system):
    if not isinstance(system, IntervalMap) or not system.branches:
        raise UnsupportedSystemError(f"{getattr(system, 'name', system)!r} has no inverse branches")


def transfer_apply(system, g):
    """(Lg)(x) = sum over branches with x in the (closed) image of g(h(x)) / |F'(h(x))|."""
    _require_branches(system)
    x = g.x
    out = np.zeros(g.G, dtype=g.values.dtype)
    for br in system.branches:
        lo, hi = br.image
        m = (x >= lo) & (x <= hi)
        if not np.any(m):
            continue
        y = br.inverse(x[m])
        out[m] += g(y) / br.dabs(y)
    return g._new(out)


def transfer_power(system, g, m):
    for _ in range(m):
        g = transfer_apply(system, g)
    return g


def total_variation(g):
    return float(np.sum(np.abs(np.diff(g.values))))


def compose_forward(system, f):
    """Grid samples of f o F."""
    return f._new(f(system.forward_array(f.x)))


def verify_transfer_identity(system, f, g):
    """max_x |L((f o F) g)(x) - f(x) (Lg)(x)| on the grid."""
    lhs = transfer_apply(system, compose_forward(system, f) * g)
    rhs = f * transfer_apply(system, g)
    return float(np.max(np.abs(lhs.values - rhs.values)))


class LYCheck(NamedTuple):
    residual: float
    allowance: float

    @property
    def holds(self):
        return self.residual <= self.allowance


def lasota_yorke_residual(system, g, A=0.0):
    """V(Lg) - (2/lambda V(g) + A |g|_1) with grid allowance 8 V(g) / G."""
    _require_branches(system)
    lam = system.expansion
    if lam is None or lam <= 2:
        raise UnsupportedSystemError(f"inf|F'| = {lam} <= 2: apply to an iterate F^m")
    vg = total_variation(g)
    res = total_variation(transfer_apply(system, g)) - (2.0 / lam * vg + A * g.l1())
    return LYCheck(res, 8.0 * vg / g.G)


# ---------------------------------------------------------------- Ulam


def ulam_matrix(system, bins):
    """Row-stochastic bin-to-bin transition matrix: P[i, j] = |I_i ∩ F^-1 I_j| / |I_i|."""
    _require_branches(system)
    edges = np.arange(bins + 1) / bins
    rows, cols, vals = [], [], []
    for br in system.branches:
        lo, hi = br.image
        inner = edges[(edges > lo) & (edges < hi)]
        pre = br.inverse(inner)
        src = edges[(edges > br.a) & (edges < br.b)]
        pts = np.unique(np.concatenate([[br.a, br.b], pre, src]))
        pts = pts[(pts >= br.a) & (pts <= br.b)]
        mid = 0.5 * (pts[:-1] + pts[1:])
        length = np.diff(pts)
        keep = length > 0
        mid, length = mid[keep], length[keep]
        i = np.minimum((mid * bins).astype(np.int64), bins - 1)
        img = br.forward(mid)
        j = np.clip((np.clip(img, 0.0, 1.0) * bins).astype(np.int64), 0, bins - 1)
        rows.append(i)
        cols.append(j)
        vals.append(length)
    P = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(bins, bins)).tocsr()
    P.sum_duplicates()
    rs = np.asarray(P.sum(axis=1)).ravel()
    if np.any(rs <= 0):
        raise UnsupportedSystemError("branches do not cover [0, 1)")
    return sparse.diags(1.0 / rs) @ P


def ulam_density(system, bins, tol=1e-14, max_iter=10_000):
    """Invariant density from the leading left fixed vector of the Ulam matrix."""
    if bins < 16:
        raise ValueError("need at least 16 bins")
    PT = ulam_matrix(system, bins).T.tocsr()
    v = np.full(bins, 1.0 / bins)
    for it in range(max_iter):
        w = PT @ v
        w /= w.sum()
        change = float(np.abs(w - v).sum())
        v = w
        if change < tol:
            return GridFunction(v * bins, {"ulam_bins": bins, "iterations": it + 1})
    raise ConvergenceError(f"Ulam power iteration did not converge in {max_iter} steps")


# ---------------------------------------------------------------- block recursion


def unimodular_factor(f, t, scale):
    """g = exp(i t f / scale) on the grid."""
    return f._new(np.exp(1j * t * f.values / scale))


def variation_recursion(system, f, t, schedule, phi, var_sp, steps=None, A=None):
    """Rows (p, V(L^p G_p), bound_p) for L^p G_p = L(L^{p-1} G_{p-1}) g, G_0 = phi g.

    ``bound_p = c^p V(phi g) + (A + |phi|_inf V(g)) / (1 - c)`` with (c, A) the
    map's variation inequality constants.
    """
    c, A = system.lasota_yorke(A)
    if not c < 1:
        raise UnsupportedSystemError(f"variation contraction {c} >= 1")
    g = unimodular_factor(f, t, math.sqrt(schedule.k * var_sp))
    h = phi * g
    v0, vg = total_variation(h), total_variation(g)
    tail = (A + phi.sup() * vg) / (1 - c)
    steps = schedule.p if steps is None else steps
    rows = [(0, v0, v0 + tail)]
    for p in range(1, steps + 1):
        h = transfer_apply(system, h) * g
        rows.append((p, total_variation(h), c ** p * v0 + tail))
    return rows


def block_transfer_variation(system, f, t, p, scale, phi=None):
    """V(L^{p-1}(phi w_1)) with w_1 = prod_{j<p} g o F^j, g = exp(i t f / scale)."""
    g = unimodular_factor(f, t, scale)
    h = g if phi is None else phi * g
    for _ in range(p - 1):
        h = transfer_apply(system, h) * g
    return total_variation(h), total_variation(g)


def doubling_block_tv_bound(g_tv, p=None):
    """p-independent bound 4 V(g) on V(L^{p-1} w_1) for unimodular g under doubling."""
    return 4.0 * float(g_tv)


def multicorrelation(system, factors, phi):
    """<prod_j g_j o F^j> = integral of h_last, h_0 = phi g_0, h_j = L(h_{j-1}) g_j.

    ``factors`` is a sequence of GridFunctions or None (the constant 1).
    """
    h = phi
    first = True
    for gj in factors:
        if not first:
            h = transfer_apply(system, h)
        first = False
        if gj is not None:
            h = h * gj
    return h.integral()


def grid_block_variance(system, f, p, phi):
    """Var S_p = p C(0) + 2 sum_{j<p} (p - j) C(j), C(j) = int L^j(phi f) f - (int phi f)^2."""
    mean = (phi * f).integral()
    h = phi * f
    total = 0.0
    for j in range(p):
        cj = float(np.real((h * f).integral() - mean ** 2))
        total += (p if j == 0 else 2 * (p - j)) * cj
        h = transfer_apply(system, h)
    return total


def block_gap_vs_q(system, f, t, p, qs, scale, phi):
    """|<w_1 w_2> - <w_1><w_2>| for two blocks of length p separated by q, per q."""
    g = unimodular_factor(f, t, scale)
    one_block = multicorrelation(system, [g] * p, phi)
    out = []
    for q in qs:
        both = multicorrelation(system, [g] * p + [None] * q + [g] * p, phi)
        out.append(abs(both - one_block * one_block))
    return np.asarray(out)


def fit_geometric(qs, values):
    """(rho, prefactor, rms log residual) of values ~ prefactor * rho^q."""
    qs = np.asarray(qs, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(qs, y, 1)
    resid = float(np.sqrt(np.mean((y - intercept - slope * qs) ** 2)))
    return float(math.exp(slope)), float(math.exp(intercept)), resid


# ---------------------------------------------------------------- bounds


@dataclass(frozen=True)
class PwConstants:
    """Decay constants with ``Lambda > 1``: correlations decay like Lambda^-n."""

    K: float = 1.0
    Lambda: float = 2.0
    b: float = 1.0
    A: float = 1.0
    lam: float = 4.0

    def __post_init__(self):
        if self.K <= 0 or self.b <= 0 or self.A <= 0:
            raise ValueError("K, b and A must be positive")
        if not self.Lambda > 1:
            raise ValueError("Lambda must exceed 1")
        if not self.lam > 2:
            raise ValueError("lambda must exceed 2")

    @property
    def rate(self):
        return 1.0 / self.Lambda


def pw_pair_bound(f_l1, g_l1, g_tv, c, n):
    if min(f_l1, g_l1, g_tv) < 0 or n < 0:
        raise ValueError("norms and n must be nonnegative")
    return c.K * c.Lambda ** (-n) * f_l1 * (g_l1 + c.b * g_tv)


def expanding_multicorr_bound(c, q, block_tv):
    """K Lambda^{-q-1} (1 + b V(L^{p-1}(phi w_1)))."""
    return c.K * c.Lambda ** (-q - 1) * (1 + c.b * block_tv)
