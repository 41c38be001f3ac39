"""Map systems: the doubling and tent maps, general piecewise expanding
interval maps, iterates F^m, and hyperbolic toral automorphisms.

Ensembles never iterate floating point orbits of the doubling, tent or toral
maps. A doubling/tent sample is a stream of random binary digits and F^j x is
read off as a 64-bit window of that stream; a toral sample is a point of the
lattice (2**-64 Z)^2 on which the integer matrix acts exactly modulo 2**64.
Single-point stepping (:func:`step`, :func:`orbit`) uses ordinary floating
point, so the float orbit of a dyadic x under doubling reaches 0 after at
most 53 steps, exactly as the true orbit of that dyadic number does.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from cltlab import kernels
from cltlab.errors import DomainError, UnsupportedSystemError


@dataclass(frozen=True)
class Branch:
    """One monotone C^2 piece of an interval map.

    ``forward`` maps ``[a, b)`` onto its image, ``inverse`` maps the image
    back and ``dabs`` is |F'| as a function of x. All are vectorised.
    """

    a: float
    b: float
    forward: Callable
    inverse: Callable
    dabs: Callable

    @property
    def image(self):
        lo, hi = float(self.forward(np.float64(self.a))), float(self.forward(np.float64(self.b)))
        return (lo, hi) if lo <= hi else (hi, lo)


class MapSystem:
    """Common interface. Phase points are floats (interval), pairs (torus) or
    ``(scatterer_id, r, phi)`` triples (billiard); batches add leading axes."""

    name = "abstract"
    dim = 1

    def descriptor(self):
        return {"name": self.name}

    def check_point(self, point):
        raise NotImplementedError

    def step(self, point):
        raise NotImplementedError

    def sample_invariant(self, rng, size=None):
        raise UnsupportedSystemError(f"{self.name} has no invariant-measure sampler")

    def sample_paths(self, rng, count, length):
        """``count`` independent mu-distributed orbits of ``length`` points each."""
        x = self.sample_invariant(rng, size=count)
        out = np.empty((count, length) + np.shape(x)[1:])
        for j in range(length):
            out[:, j] = x
            if j + 1 < length:
                x = self.step_array(x)
        return out

    def step_array(self, x):
        return np.array([self.step(p) for p in x])


# ---------------------------------------------------------------- interval maps


class IntervalMap(MapSystem):
    dim = 1
    branches: tuple = ()
    expansion = None  # inf |F'|
    ly_contraction = None  # sharper variation contraction than 2/lambda, if known
    ly_constant = None

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x >= 0.0) | ~(x < 1.0)):
            raise DomainError(f"{self.name}: point outside [0, 1): {x}")
        return x

    def forward_array(self, x):
        x = np.asarray(x, dtype=float)
        edges = np.array([br.b for br in self.branches[:-1]])
        idx = np.searchsorted(edges, x, side="right")
        y = np.empty_like(x)
        for k, br in enumerate(self.branches):
            m = idx == k
            if np.any(m):
                y[m] = br.forward(x[m])
        return np.mod(y, 1.0)

    def step(self, x):
        self.check_point(x)
        return float(self.forward_array(np.array([x]))[0])

    def step_array(self, x):
        return self.forward_array(x)

    def lasota_yorke(self, A=None):
        """(contraction, A) for the variation inequality V(Lg) <= c V(g) + A |g|_1."""
        if self.ly_contraction is not None:
            return self.ly_contraction, (self.ly_constant or 0.0) if A is None else A
        if self.expansion is None or self.expansion <= 2:
            raise UnsupportedSystemError(
                f"{self.name}: inf|F'| = {self.expansion} <= 2; use an iterate F^m")
        if A is None:
            if self.ly_constant is None:
                raise UnsupportedSystemError(f"{self.name}: Lasota-Yorke constant A not supplied")
            A = self.ly_constant
        return 2.0 / self.expansion, A

    def inverse_branch_check(self, grid=1025):
        """max |F(h(y)) - y| over a grid of each branch image."""
        worst = 0.0
        for br in self.branches:
            lo, hi = br.image
            y = np.linspace(lo, hi, grid)
            worst = max(worst, float(np.max(np.abs(br.forward(br.inverse(y)) - y))))
        return worst


def _digit_words(rng, count, length):
    return rng.integers(0, 2**64, size=(count, length // 64 + 2), dtype=np.uint64)


class DoublingMap(IntervalMap):
    name = "doubling"
    expansion = 2.0
    ly_contraction = 0.5  # V(Lg) <= V(g)/2 by splitting at 1/2
    ly_constant = 0.0

    def __init__(self):
        self.branches = (
            Branch(0.0, 0.5, lambda x: 2.0 * x, lambda y: y / 2.0, lambda x: np.full(np.shape(x), 2.0)),
            Branch(0.5, 1.0, lambda x: 2.0 * x - 1.0, lambda y: (y + 1.0) / 2.0,
                   lambda x: np.full(np.shape(x), 2.0)),
        )

    def forward_array(self, x):
        return np.mod(2.0 * np.asarray(x, dtype=float), 1.0)

    def sample_invariant(self, rng, size=None):
        return rng.random(size)

    def sample_paths(self, rng, count, length):
        return kernels.doubling_orbit(_digit_words(rng, count, length), length)


class TentMap(IntervalMap):
    name = "tent"
    expansion = 2.0
    ly_contraction = 0.5  # both branches are full, slope 2
    ly_constant = 0.0

    def __init__(self):
        self.branches = (
            Branch(0.0, 0.5, lambda x: 2.0 * x, lambda y: y / 2.0, lambda x: np.full(np.shape(x), 2.0)),
            Branch(0.5, 1.0, lambda x: 2.0 - 2.0 * x, lambda y: 1.0 - y / 2.0,
                   lambda x: np.full(np.shape(x), 2.0)),
        )

    def forward_array(self, x):
        x = np.asarray(x, dtype=float)
        return np.mod(np.where(x < 0.5, 2.0 * x, 2.0 - 2.0 * x), 1.0)

    def sample_invariant(self, rng, size=None):
        return rng.random(size)

    def sample_paths(self, rng, count, length):
        # T^j x has the digits of 2^j x, complemented iff digit j-1 is a one
        y = kernels.doubling_orbit(_digit_words(rng, count, length), length)
        flip = np.zeros(y.shape, dtype=bool)
        flip[:, 1:] = y[:, :-1] >= 0.5
        return np.where(flip, 1.0 - y, y)


class PiecewiseExpandingMap(IntervalMap):
    """Interval map given by explicit branches; |F'| is supplied analytically."""

    def __init__(self, branches, name="piecewise", expansion=None, ly_constant=None,
                 density_bins=1024, params=None):
        self.branches = tuple(sorted(branches, key=lambda br: br.a))
        self.name = name
        self.params = params or {}
        if expansion is None:
            expansion = min(float(np.min(br.dabs(np.linspace(br.a, br.b, 1025))))
                            for br in self.branches)
        self.expansion = float(expansion)
        if self.expansion <= 1.0:
            raise ValueError(f"{name}: not expanding, inf|F'| = {self.expansion}")
        self.ly_constant = ly_constant
        self.density_bins = density_bins
        self._density = None

    def descriptor(self):
        return {"name": self.name, "expansion": self.expansion, **self.params}

    def invariant_density(self):
        if self._density is None:
            from cltlab.transfer import ulam_density

            self._density = ulam_density(self, self.density_bins)
        return self._density

    def sample_invariant(self, rng, size=None):
        phi = self.invariant_density().values.real
        p = phi / phi.sum()
        n = p.size
        m = 1 if size is None else size
        bins = rng.choice(n, size=m, p=p)
        x = (bins + rng.random(m)) / n
        return float(x[0]) if size is None else x


class IteratedMap(IntervalMap):
    """F^m for an interval map F; branches are composed exactly."""

    def __init__(self, base, power):
        if power < 1:
            raise ValueError("power must be >= 1")
        self.base = base
        self.power = int(power)
        self.name = f"{base.name}^{power}"
        self.expansion = base.expansion ** power
        if base.ly_contraction is not None and base.ly_contraction ** power <= 2.0 / self.expansion:
            self.ly_contraction = base.ly_contraction ** power
            self.ly_constant = base.ly_constant
        branches = base.branches
        for _ in range(power - 1):
            branches = _compose(branches, base.branches)
        self.branches = tuple(sorted(branches, key=lambda br: br.a))

    def descriptor(self):
        return {"name": self.name, "base": self.base.descriptor(), "power": self.power}

    def forward_array(self, x):
        for _ in range(self.power):
            x = self.base.forward_array(x)
        return x

    def sample_invariant(self, rng, size=None):
        return self.base.sample_invariant(rng, size)

    def sample_paths(self, rng, count, length):
        return self.base.sample_paths(rng, count, (length - 1) * self.power + 1)[:, :: self.power]


def _compose(first, second):
    """Branches of G o F where ``first`` are F's branches and ``second`` G's."""
    out = []
    for b1 in first:
        lo1, hi1 = b1.image
        for b2 in second:
            lo, hi = max(lo1, b2.a), min(hi1, b2.b)
            if hi - lo <= 1e-15:
                continue
            u, v = float(b1.inverse(np.float64(lo))), float(b1.inverse(np.float64(hi)))
            a, b = min(u, v), max(u, v)
            out.append(Branch(
                a, b,
                (lambda f1, f2: lambda x: f2(f1(x)))(b1.forward, b2.forward),
                (lambda h1, h2: lambda y: h1(h2(y)))(b1.inverse, b2.inverse),
                (lambda f1, d1, d2: lambda x: d1(x) * d2(f1(x)))(b1.forward, b1.dabs, b2.dabs),
            ))
    return out


# ---------------------------------------------------------------- toral maps


class ToralAutomorphism(MapSystem):
    """x -> A x mod 1 on the 2-torus for a hyperbolic integer matrix A."""

    dim = 2

    def __init__(self, matrix=((2, 1), (1, 1)), name="cat"):
        A = np.array(matrix, dtype=np.int64)
        if A.shape != (2, 2):
            raise ValueError("matrix must be 2x2")
        det = int(round(np.linalg.det(A)))
        if det not in (1, -1) or A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] != det:
            raise ValueError(f"matrix must be unimodular, det = {det}")
        ev = np.linalg.eigvals(A.astype(float))
        if np.any(np.isclose(np.abs(ev), 1.0)):
            raise ValueError("matrix has an eigenvalue on the unit circle")
        self.matrix = A
        self.name = name
        self.nu = float(1.0 / np.max(np.abs(ev)))  # contraction along stable leaves

    def descriptor(self):
        return {"name": self.name, "matrix": self.matrix.tolist(), "nu": self.nu}

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (2,) or np.any(~(p >= 0.0) | ~(p < 1.0)):
            raise DomainError(f"{self.name}: point outside [0,1)^2: {p}")
        return p

    def step_array(self, p):
        p = np.asarray(p, dtype=float)
        return np.mod(p @ self.matrix.T.astype(float), 1.0)

    def step(self, p):
        self.check_point(p)
        return tuple(float(v) for v in self.step_array(np.asarray(p, dtype=float)))

    def sample_invariant(self, rng, size=None):
        return rng.random(2) if size is None else rng.random((size, 2))

    def sample_paths(self, rng, count, length):
        xy = rng.integers(0, 2**64, size=(2, count), dtype=np.uint64)
        (a, b), (c, d) = self.matrix.tolist()
        return kernels.toral_orbit(xy[0], xy[1], a, b, c, d, length)


# ---------------------------------------------------------------- observables


@dataclass(frozen=True)
class Observable:
    """A vectorised function of phase points with an optional regularity budget."""

    name: str
    func: Callable = field(repr=False)
    params: dict = field(default_factory=dict)
    budget: Optional[object] = None
    sup_norm: Optional[float] = None

    def __call__(self, points):
        return self.func(points)

    def descriptor(self):
        return {"name": self.name, **self.params}


# ---------------------------------------------------------------- operations


def step(system, point):
    return system.step(point)


def orbit(system, point, n):
    """[x, Fx, ..., F^n x]."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pts = [point]
    for _ in range(n):
        pts.append(system.step(pts[-1]))
    return pts


def birkhoff_sum(system, f, point, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    total = np.sum(f(np.array(orbit(system, point, n - 1), dtype=float)))
    return complex(total) if np.iscomplexobj(total) else float(total)


def sample_invariant(system, rng):
    return system.sample_invariant(rng)


def birkhoff_sums(system, f, n, count, seed, *, workers=1, center=0.0):
    """S_n - n*center for ``count`` mu-distributed starting points."""
    from cltlab.rng import chunk_size_for, ensemble_collect

    def fn(rng, size):
        vals = f(system.sample_paths(rng, size, n))
        return vals.sum(axis=1) - n * center

    return ensemble_collect(fn, count, seed, chunk_size=chunk_size_for(n), workers=workers)
