"""Periodic Lorentz gas with circular scatterers in the unit torus.

A collision is stored as ``(scatterer_id, r, phi)``: ``r`` is arc length
counter-clockwise from the rightmost point of the disk and ``phi`` the angle
of the outgoing velocity from the normal pointing into the table, positive
towards the counter-clockwise tangent. Batches are ``(N, 3)`` float arrays
with the id stored as a float.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from cltlab import kernels
from cltlab.errors import (
    HorizonCapError,
    InsufficientDataError,
    InvalidGeometryError,
    SingularCollisionError,
)
from cltlab.rng import generator
from cltlab.systems import MapSystem, Observable

HALF_PI = 0.5 * math.pi
GRAZING = 1e-9  # |phi| > pi/2 - GRAZING counts as tangential

OK, CAPPED, SINGULAR_IN, SINGULAR_OUT = 0, 1, 2, 3


@dataclass(frozen=True)
class Scatterer:
    center: tuple
    radius: float


@dataclass(frozen=True)
class BilliardGeometry:
    scatterers: tuple
    cap: float = 100.0
    horizon: str = "unchecked"  # verified-finite | suspected-infinite | unchecked

    def __post_init__(self):
        scs = tuple(s if isinstance(s, Scatterer) else Scatterer(tuple(s[0]), float(s[1]))
                    for s in self.scatterers)
        object.__setattr__(self, "scatterers", scs)
        if not scs:
            raise InvalidGeometryError("no scatterers")
        for i, s in enumerate(scs):
            if not s.radius > 0:
                raise InvalidGeometryError(f"scatterer {i}: radius must be positive")
            if not all(0.0 <= c < 1.0 for c in s.center):
                raise InvalidGeometryError(f"scatterer {i}: centre {s.center} not in [0,1)^2")
        overlaps = _overlaps(scs)
        if overlaps:
            i, j, off, gap = overlaps[0]
            raise InvalidGeometryError(
                f"scatterers {i} and {j} (image offset {off}) overlap by {-gap:.3g}")
        if self.cap <= 0:
            raise InvalidGeometryError("free-path cap must be positive")

    @property
    def cx(self):
        return np.array([s.center[0] for s in self.scatterers], dtype=float)

    @property
    def cy(self):
        return np.array([s.center[1] for s in self.scatterers], dtype=float)

    @property
    def radii(self):
        return np.array([s.radius for s in self.scatterers], dtype=float)

    @property
    def perimeters(self):
        return 2 * np.pi * self.radii

    def descriptor(self):
        return {"scatterers": [{"center": list(s.center), "radius": s.radius} for s in self.scatterers],
                "cap": self.cap, "horizon": self.horizon}


def _overlaps(scs):
    """(i, j, offset, gap) for every pair of disks (images included) with gap <= 0."""
    bad = []
    for i, a in enumerate(scs):
        for j, b in enumerate(scs):
            if j < i:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if i == j and di == 0 and dj == 0:
                        continue
                    d = math.hypot(b.center[0] + di - a.center[0], b.center[1] + dj - a.center[1])
                    gap = d - a.radius - b.radius
                    if gap <= 0:
                        bad.append((i, j, (di, dj), gap))
    return bad


@dataclass(frozen=True)
class CollisionCoordinate:
    scatterer_id: int
    r: float
    phi: float

    def as_array(self):
        return np.array([self.scatterer_id, self.r, self.phi], dtype=float)


@dataclass(frozen=True)
class HStripParams:
    k0: int = 2

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")


@dataclass(frozen=True)
class StripLabel:
    scatterer_id: int
    strip: int
    tangential: bool = False


# ---------------------------------------------------------------- geometry checks


@dataclass
class HorizonReport:
    status: str
    max_free_path: float
    samples: int
    capped: int
    probe_directions: list = field(default_factory=list)
    geometry: BilliardGeometry = None


def _free_points(geom, rng, n):
    pts = np.empty((0, 2))
    while len(pts) < n:
        cand = rng.random((2 * n, 2))
        pts = np.vstack([pts, cand[_not_inside(geom, cand)]])
    return pts[:n]


def validate_geometry(geom, samples=10_000, seed=0, max_probe=3):
    """Sampling-based horizon check.

    Traces ``samples`` random rays plus rays along every rational direction
    (a, b) with |a|, |b| <= ``max_probe`` from a line of starting points.
    Any flight longer than ``geom.cap`` marks the table suspected-infinite.
    """
    if _overlaps(geom.scatterers):
        raise InvalidGeometryError("scatterers overlap")
    rng = generator(seed, "horizon")
    pts = _free_points(geom, rng, samples)
    ang = rng.random(samples) * 2 * np.pi
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    probes = []
    for a in range(0, max_probe + 1):
        for b in range(-max_probe, max_probe + 1):
            if (a, b) == (0, 0) or math.gcd(a, abs(b)) != 1 or (a == 0 and b < 0):
                continue
            probes.append((a, b))
    starts = []
    pdirs = []
    offsets = (np.arange(256) + 0.5) / 256
    for a, b in probes:
        u = np.array([a, b], dtype=float) / math.hypot(a, b)
        line = np.column_stack([offsets, np.full(256, 0.0)]) if b != 0 else \
            np.column_stack([np.full(256, 0.0), offsets])
        starts.append(line)
        pdirs.append(np.tile(u, (256, 1)))
    starts = np.vstack(starts)
    pdirs = np.vstack(pdirs)
    keep = _not_inside(geom, starts)
    o = np.vstack([pts, starts[keep]])
    d = np.vstack([dirs, pdirs[keep]])
    sid, t, _, _, status = kernels.trace_rays(o[:, 0], o[:, 1], d[:, 0], d[:, 1],
                                              np.full(len(o), -1), geom.cx, geom.cy,
                                              geom.radii, geom.cap)
    capped = int(status.sum())
    max_fp = float(np.max(t[status == 0])) if np.any(status == 0) else float("inf")
    open_dirs = _open_probe_dirs(probes, keep, status[samples:])
    verdict = "suspected-infinite" if capped else "verified-finite"
    return HorizonReport(verdict, geom.cap if capped else max_fp, len(o), capped,
                         open_dirs, replace(geom, horizon=verdict))


def _not_inside(geom, pts):
    keep = np.ones(len(pts), dtype=bool)
    for s in geom.scatterers:
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                keep &= np.hypot(pts[:, 0] - s.center[0] - di, pts[:, 1] - s.center[1] - dj) > s.radius
    return keep


def _open_probe_dirs(probes, keep, status):
    owner = np.repeat(np.arange(len(probes)), 256)[keep]
    return [list(probes[k]) for k in np.unique(owner[status == 1])]


# ---------------------------------------------------------------- collision map


def reverse(coords):
    """Time reversal (r, phi) -> (r, -phi)."""
    c = np.array(coords, dtype=float, copy=True)
    c[..., 2] = -c[..., 2]
    return c


@dataclass
class CollisionBatch:
    coords: np.ndarray  # (N, 3) next collision; rows with status != OK are nan
    free_path: np.ndarray
    status: np.ndarray
    offset: np.ndarray  # lattice offset of the scatterer copy that was hit


def collision_batch(geom, coords):
    """Apply the billiard map to each row of ``coords``."""
    c = np.atleast_2d(np.asarray(coords, dtype=float))
    n = len(c)
    sid = c[:, 0].astype(np.int64)
    R = geom.radii[sid]
    theta = c[:, 1] / R
    phi = c[:, 2]
    status = np.zeros(n, dtype=np.int8)
    status[~(np.abs(phi) < HALF_PI - GRAZING)] = SINGULAR_IN
    qx = geom.cx[sid] + R * np.cos(theta)
    qy = geom.cy[sid] + R * np.sin(theta)
    vx = np.cos(theta + phi)
    vy = np.sin(theta + phi)
    hit, t, oi, oj, st = kernels.trace_rays(qx, qy, vx, vy, sid, geom.cx, geom.cy, geom.radii,
                                            float(geom.cap))
    status[(status == OK) & (st == 1)] = CAPPED
    good = status == OK
    hs = np.where(good, hit, 0)
    R2 = geom.radii[hs]
    px = qx + t * vx - (geom.cx[hs] + oi)
    py = qy + t * vy - (geom.cy[hs] + oj)
    norm = np.hypot(px, py)
    with np.errstate(invalid="ignore"):
        nx, ny = px / norm, py / norm
        vn = vx * nx + vy * ny
        wx, wy = vx - 2 * vn * nx, vy - 2 * vn * ny
        phi2 = np.arctan2(wx * -ny + wy * nx, wx * nx + wy * ny)
        th2 = np.mod(np.arctan2(py, px), 2 * np.pi)
    r2 = R2 * th2
    r2 = np.where(r2 >= 2 * np.pi * R2, 0.0, r2)
    status[good & ~(np.abs(phi2) < HALF_PI - GRAZING)] = SINGULAR_OUT
    out = np.column_stack([hs.astype(float), r2, phi2])
    out[status != OK] = np.nan
    fp = np.where(status == OK, t, np.nan)
    return CollisionBatch(out, fp, status, np.column_stack([oi, oj]))


def collision_map(geom, c):
    """Next collision and the flight length to it."""
    arr = c.as_array() if isinstance(c, CollisionCoordinate) else np.asarray(c, dtype=float)
    res = collision_batch(geom, arr[None, :])
    st = int(res.status[0])
    if st == SINGULAR_IN:
        raise SingularCollisionError(f"tangential collision phi={arr[2]!r}", step=0)
    if st == CAPPED:
        raise HorizonCapError(f"free path exceeds cap {geom.cap}")
    if st == SINGULAR_OUT:
        raise SingularCollisionError("next collision is tangential", step=1)
    s, r, phi = res.coords[0]
    return CollisionCoordinate(int(s), float(r), float(phi)), float(res.free_path[0])


def inverse_collision_map(geom, c):
    """F^{-1} = R o F o R with R the reversal phi -> -phi."""
    back, fp = collision_map(geom, CollisionCoordinate(c.scatterer_id, c.r, -c.phi))
    return CollisionCoordinate(back.scatterer_id, back.r, -back.phi), fp


def sample_srb(geom, rng, size=None):
    """Collision coordinates distributed by cos(phi) dr dphi / (2 |boundary|)."""
    m = 1 if size is None else size
    w = geom.perimeters / geom.perimeters.sum()
    sid = rng.choice(len(w), size=m, p=w)
    r = rng.random(m) * geom.perimeters[sid]
    phi = np.arcsin(2 * rng.random(m) - 1)
    out = np.column_stack([sid.astype(float), r, phi])
    if size is None:
        return CollisionCoordinate(int(sid[0]), float(r[0]), float(phi[0]))
    return out


def mean_free_path_formula(geom):
    """pi |Q| / |boundary Q| for the unit-cell table Q."""
    area = 1.0 - float(np.sum(np.pi * geom.radii ** 2))
    return math.pi * area / float(geom.perimeters.sum())


# ---------------------------------------------------------------- H-strips


def h_strip_label(c, params=HStripParams()):
    phi = float(c.phi)
    code = int(strip_codes(np.array([phi]), params.k0)[0])
    tangential = abs(phi) >= HALF_PI
    return StripLabel(int(c.scatterer_id), 0 if tangential else code, tangential)


TANGENTIAL_CODE = 1 << 40


def strip_codes(phi, k0=2):
    """Signed strip index for each phi: 0 central, +-k near phi = +-pi/2.

    Strip k >= k0 holds pi/2 - k^-2 < |phi| <= pi/2 - (k+1)^-2; tangential
    angles get +-TANGENTIAL_CODE.
    """
    phi = np.asarray(phi, dtype=float)
    d = HALF_PI - np.abs(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.ceil(1.0 / np.sqrt(d)) - 1
    code = np.where(d >= 1.0 / k0 ** 2, 0, k)
    code = np.where(d <= 0, TANGENTIAL_CODE, code)
    return (np.sign(phi) * code).astype(np.int64)


def separation_times(geom, X, Y, direction="future", cap=100, params=HStripParams()):
    """Vectorised separation times.

    Returns ``(s, error_step)``: ``s`` is -1 where the pair did not separate
    within ``cap`` iterations or hit an error; ``error_step`` is the iterate
    index of a singular collision or capped flight, -1 otherwise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).copy()
    if direction == "past":
        X, Y = reverse(X), reverse(Y)
    elif direction != "future":
        raise ValueError("direction must be 'future' or 'past'")
    n = len(X)
    s = np.full(n, -1, dtype=np.int64)
    err = np.full(n, -1, dtype=np.int64)
    active = np.arange(n)
    for it in range(cap + 1):
        bad = ~(np.abs(X[active, 2]) < HALF_PI - GRAZING) | ~(np.abs(Y[active, 2]) < HALF_PI - GRAZING)
        err[active[bad]] = it
        active = active[~bad]
        diff = (X[active, 0] != Y[active, 0]) | (strip_codes(X[active, 2], params.k0)
                                                 != strip_codes(Y[active, 2], params.k0))
        s[active[diff]] = it
        active = active[~diff]
        if it == cap or active.size == 0:
            break
        bx = collision_batch(geom, X[active])
        by = collision_batch(geom, Y[active])
        failed = (bx.status == CAPPED) | (by.status == CAPPED)
        err[active[failed]] = it + 1
        X[active] = bx.coords
        Y[active] = by.coords
        active = active[~failed]
    return s, err


def separation_time(geom, x, y, direction="future", cap=100, params=HStripParams()):
    """Smallest n with F^{+-n}x, F^{+-n}y in different H-strips; None if > cap."""
    X = x.as_array() if isinstance(x, CollisionCoordinate) else np.asarray(x, dtype=float)
    Y = y.as_array() if isinstance(y, CollisionCoordinate) else np.asarray(y, dtype=float)
    if np.array_equal(X, Y):
        # identical orbits never separate; skip the iteration
        if not abs(X[2]) < HALF_PI - GRAZING:
            raise SingularCollisionError("tangential collision", step=0)
        return None
    s, err = separation_times(geom, X[None], Y[None], direction, cap, params)
    if err[0] >= 0:
        raise SingularCollisionError(f"singular or capped collision at iterate {err[0]}",
                                     step=int(err[0]))
    return None if s[0] < 0 else int(s[0])


# ---------------------------------------------------------------- Hoelder envelope


@dataclass
class HolderEstimate:
    K: float
    theta: float
    violation_fraction: float
    diagnostics: dict

    def to_budget(self, sup_norm, tag):
        from cltlab.regularity import RegularityBudget

        theta = self.theta if np.isfinite(self.theta) else 0.5
        return RegularityBudget(self.K, theta, sup_norm, tag)


def sample_pairs(geom, rng, n, log10_delta=(-12.0, -2.0)):
    """SRB points and nearby partners at distances 10^U, U uniform in ``log10_delta``."""
    X = sample_srb(geom, rng, n)
    delta = 10.0 ** rng.uniform(*log10_delta, size=n)
    ang = rng.random(n) * 2 * np.pi
    Y = X.copy()
    sid = X[:, 0].astype(int)
    Y[:, 1] = np.mod(X[:, 1] + delta * np.cos(ang), geom.perimeters[sid])
    Y[:, 2] = X[:, 2] + delta * np.sin(ang)
    ok = np.abs(Y[:, 2]) < HALF_PI - GRAZING
    return X[ok], Y[ok], delta[ok]


def estimate_dynamical_holder(geom, f, pair_budget=10_000, cap=100, seed=0, *,
                              direction="future", params=HStripParams(), quantile=0.99,
                              min_per_bin=20, log10_delta=(-12.0, -2.0)):
    """Fit |f(x) - f(y)| <= K theta^s(x,y) to the upper envelope of sampled pairs.

    Per separation time s the ``quantile`` of |f(x)-f(y)| is taken; a line is
    fitted to log(quantile) vs s, then lifted until it dominates every bin's
    quantile. The fraction of all used pairs above the lifted line is
    returned as ``violation_fraction``.
    """
    rng = generator(seed, "holder", direction)
    X, Y, delta = sample_pairs(geom, rng, pair_budget, log10_delta)
    s, err = separation_times(geom, X, Y, direction, cap, params)
    df = np.abs(np.asarray(f(X)) - np.asarray(f(Y)))
    used = (s >= 0) & (err < 0) & np.isfinite(df)
    diag = {"pairs": int(len(X)), "used": int(used.sum()), "cap_exceeded": int(((s < 0) & (err < 0)).sum()),
            "errors": int((err >= 0).sum()), "direction": direction}
    if used.sum() < max(3 * min_per_bin, 50):
        raise InsufficientDataError(f"only {int(used.sum())} separated pairs")
    s_u, df_u = s[used], df[used]
    if np.all(df_u == 0):
        return HolderEstimate(0.0, float("nan"), 0.0, {**diag, "bins": []})
    bins = []
    for k in np.unique(s_u):
        vals = df_u[s_u == k]
        if len(vals) < min_per_bin:
            continue
        q = float(np.quantile(vals, quantile, method="higher"))
        if q > 0:
            bins.append((int(k), q, len(vals)))
    if len(bins) < 3:
        raise InsufficientDataError("fewer than three populated separation-time bins")
    sk = np.array([b[0] for b in bins], dtype=float)
    lq = np.log([b[1] for b in bins])
    slope, _ = np.polyfit(sk, lq, 1)
    if slope >= 0:
        raise InsufficientDataError(f"envelope does not decay (slope {slope:.3g})")
    log_k = float(np.max(lq - slope * sk))
    K, theta = math.exp(log_k), math.exp(slope)
    bound = K * theta ** s_u.astype(float)
    viol = float(np.mean(df_u > bound * (1 + 1e-12)))
    diag["bins"] = [{"s": b[0], "quantile": b[1], "count": b[2]} for b in bins]
    return HolderEstimate(K, theta, viol, diag)


# ---------------------------------------------------------------- system + observables


def reflection_angle():
    return Observable("reflection-angle", lambda p: np.asarray(p, dtype=float)[..., 2],
                      sup_norm=HALF_PI)


def free_path(geom):
    def f(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 3)
        return collision_batch(geom, flat).free_path.reshape(p.shape[:-1])

    return Observable("free-path", f, sup_norm=geom.cap)


class BilliardMap(MapSystem):
    """The collision map as a :class:`MapSystem`.

    Ensemble paths that meet a singular or capped collision are discarded and
    replaced by fresh SRB samples; ``dropped_paths`` counts them.
    """

    dim = 3

    def __init__(self, geometry):
        self.geometry = geometry
        self.name = "billiard"
        self.dropped_paths = 0

    def descriptor(self):
        return {"name": self.name, **self.geometry.descriptor()}

    def check_point(self, p):
        return p

    def step(self, point):
        c = point if isinstance(point, CollisionCoordinate) else CollisionCoordinate(
            int(point[0]), float(point[1]), float(point[2]))
        nxt, _ = collision_map(self.geometry, c)
        return (nxt.scatterer_id, nxt.r, nxt.phi)

    def step_array(self, x):
        return collision_batch(self.geometry, x).coords

    def sample_invariant(self, rng, size=None):
        return sample_srb(self.geometry, rng, size)

    def sample_paths(self, rng, count, length):
        out = np.empty((0, length, 3))
        for _ in range(100):
            need = count - len(out)
            if need <= 0:
                break
            x = sample_srb(self.geometry, rng, need)
            paths = np.empty((need, length, 3))
            ok = np.ones(need, dtype=bool)
            for j in range(length):
                paths[:, j] = x
                if j + 1 < length:
                    res = collision_batch(self.geometry, x)
                    ok &= res.status == OK
                    x = np.where(ok[:, None], res.coords, x)
            self.dropped_paths += int((~ok).sum())
            out = np.concatenate([out, paths[ok]])
        if len(out) < count:
            raise HorizonCapError("too many paths hit singular or capped collisions")
        return out


def trajectory(geom, start, n):
    """Rows (step, scatterer_id, r, phi, free_path) of an n-collision orbit."""
    rows = []
    c = start
    for k in range(n):
        nxt, fp = collision_map(geom, c)
        rows.append((k, c.scatterer_id, c.r, c.phi, fp))
        c = nxt
    return rows


def mean_free_path(geom, samples, seed=0, cap=None, chunk=1 << 16):
    """Monte Carlo mean flight length under SRB.

    Flights longer than ``cap`` (default ``geom.cap``) are excluded and
    counted; on infinite-horizon tables this biases the mean downwards.
    """
    if cap is not None:
        geom = replace(geom, cap=float(cap))
    rng = generator(seed, "mfp")
    total, total_sq, n, capped = 0.0, 0.0, 0, 0
    for start in range(0, samples, chunk):
        m = min(chunk, samples - start)
        res = collision_batch(geom, sample_srb(geom, rng, m))
        fp = res.free_path[res.status == OK]
        capped += int((res.status == CAPPED).sum())
        total += float(fp.sum())
        total_sq += float((fp ** 2).sum())
        n += fp.size
    mean = total / n
    se = math.sqrt(max(total_sq / n - mean ** 2, 0.0) / n)
    return mean, se, capped
