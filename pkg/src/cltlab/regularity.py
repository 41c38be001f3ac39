"""Regularity budgets and the correlation bounds built from them.

Every operation returns an upper bound; nothing here claims tightness.
"""

from dataclasses import asdict, dataclass
import math

from cltlab.errors import ClassMismatchError

H_PLUS = "H_plus_star"
H_MINUS = "H_minus_star"
BOTH = "both"
TAGS = (H_PLUS, H_MINUS, BOTH)


def _check_unit(name, v):
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class RegularityBudget:
    """|f(x) - f(y)| <= K theta^s(x, y) and |f| <= sup_norm."""

    K: float
    theta: float
    sup_norm: float
    tag: str = BOTH

    def __post_init__(self):
        if self.K < 0 or self.sup_norm < 0:
            raise ValueError("K and sup_norm must be nonnegative")
        _check_unit("theta", self.theta)
        if self.tag not in TAGS:
            raise ValueError(f"tag must be one of {TAGS}")

    def to_dict(self):
        return asdict(self)


def _merge_tags(a, b):
    if a == b or b == BOTH:
        return a
    if a == BOTH:
        return b
    raise ClassMismatchError(f"cannot combine {a} with {b}")


def product_budget(a, b):
    tag = _merge_tags(a.tag, b.tag)
    return RegularityBudget(a.sup_norm * b.K + a.K * b.sup_norm, max(a.theta, b.theta),
                            a.sup_norm * b.sup_norm, tag)


def pullback_budget(b, steps, direction="forward"):
    """Budget of f o F^steps (forward) or f o F^-steps (backward)."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    need = H_MINUS if direction == "forward" else H_PLUS
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if b.tag not in (need, BOTH):
        raise ClassMismatchError(f"{b.tag} observables do not pull back {direction}")
    return RegularityBudget(b.K * b.theta ** steps, b.theta, b.sup_norm, b.tag)


def multitime_budget(budgets, offsets):
    """Budget of prod_i f_i o F^{i_i} for strictly increasing offsets i_0 < i_1 < ..."""
    budgets = list(budgets)
    offsets = [int(o) for o in offsets]
    if not budgets:
        raise ValueError("empty factor list")
    if len(offsets) != len(budgets):
        raise ValueError("one offset per factor")
    if offsets[0] < 0 or any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ValueError("offsets must be nonnegative and strictly increasing")
    tag = budgets[0].tag
    for b in budgets[1:]:
        tag = _merge_tags(tag, b.tag)
    theta = max(b.theta for b in budgets)
    sups = [b.sup_norm for b in budgets]
    # prod M / min M, written without the division so a zero norm is harmless
    i_min = min(range(len(sups)), key=sups.__getitem__)
    others = math.prod(m for i, m in enumerate(sups) if i != i_min)
    K = max(b.K for b in budgets) * others * theta ** offsets[0] / (1 - theta)
    return RegularityBudget(K, theta, math.prod(sups), tag)


# ---------------------------------------------------------------- billiards


@dataclass(frozen=True)
class BilliardBoundConstants:
    theta_upsilon: float = 0.9
    kappa: float = 1.0
    C0: float = 1.0

    def __post_init__(self):
        _check_unit("theta_upsilon", self.theta_upsilon)
        if self.kappa <= 0 or self.C0 <= 0:
            raise ValueError("kappa and C0 must be positive")


def _billiard_tags(f, g):
    if f.tag not in (H_PLUS, BOTH):
        raise ClassMismatchError(f"left observable must be {H_PLUS}, got {f.tag}")
    if g.tag not in (H_MINUS, BOTH):
        raise ClassMismatchError(f"right observable must be {H_MINUS}, got {g.tag}")


def billiard_rate(f, g, c):
    return max(c.theta_upsilon, f.theta, g.theta, math.exp(-1.0 / c.kappa)) ** 0.25


def billiard_pair_bound(f, g, c, n):
    """(bound, rate) for |<f g o F^n> - <f><g>|."""
    _billiard_tags(f, g)
    rate = billiard_rate(f, g, c)
    pre = c.C0 * (f.K * g.sup_norm + f.sup_norm * g.K + f.sup_norm * g.sup_norm)
    return pre * rate ** n, rate


def billiard_multi_bound(f, r, g, k, c, n):
    """Bound for r+1 identical left factors and k+1 identical right factors."""
    _billiard_tags(f, g)
    rate = billiard_rate(f, g, c)
    Mf, Mg = f.sup_norm, g.sup_norm
    pre = c.C0 * Mf ** r * Mg ** k * (f.K / (1 - f.theta) * Mg + Mf * g.K / (1 - g.theta) + Mf * Mg)
    return pre * rate ** n


# ---------------------------------------------------------------- Anosov


@dataclass(frozen=True)
class AnosovBudget:
    """Norm data: ||f||_s = sup_norm + s_seminorm, ||f||_u = l1_norm + u_seminorm."""

    s_seminorm: float = 0.0
    u_seminorm: float = 0.0
    sup_norm: float = 0.0
    l1_norm: float = 0.0
    alpha: float = 0.5
    beta: float = 0.5
    nu: float = 0.5
    delta: float = 0.1

    def __post_init__(self):
        for name in ("s_seminorm", "u_seminorm", "sup_norm", "l1_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        _check_unit("nu", self.nu)
        for name in ("alpha", "beta"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def s_norm(self):
        return self.sup_norm + self.s_seminorm

    @property
    def u_norm(self):
        return self.l1_norm + self.u_seminorm


@dataclass(frozen=True)
class AnosovBoundConstants:
    theta: float = 0.5
    C0: float = 1.0
    volume_of_one: float = 1.0

    def __post_init__(self):
        _check_unit("theta", self.theta)
        if self.C0 <= 0 or self.volume_of_one <= 0:
            raise ValueError("C0 and volume_of_one must be positive")


def anosov_product_bound(factors, side, volume_of_one=1.0):
    """Norm bound for a product of factors composed with increasing powers of F."""
    factors = list(factors)
    if not factors:
        raise ValueError("empty factor list")
    f0 = factors[0]
    if any((f.nu, f.alpha, f.beta) != (f0.nu, f0.alpha, f0.beta) for f in factors):
        raise ValueError("factors must share nu, alpha, beta")
    sups = [f.sup_norm for f in factors]
    prod = math.prod(sups)
    i_min = min(range(len(sups)), key=sups.__getitem__)
    others = math.prod(m for i, m in enumerate(sups) if i != i_min)
    if side == "stable":
        semi = max(f.s_seminorm for f in factors)
        return (prod + others * semi) / (1 - f0.nu ** f0.beta)
    if side == "unstable":
        semi = max(f.u_seminorm for f in factors)
        return max(1.0, volume_of_one) * (prod + others * semi) / (1 - f0.nu ** f0.alpha)
    raise ValueError("side must be 'stable' or 'unstable'")


def anosov_product_budget(factors, side, volume_of_one=1.0):
    """Budget whose s-norm (stable) or u-norm (unstable) equals the product bound."""
    factors = list(factors)
    bound = anosov_product_bound(factors, side, volume_of_one)
    f0 = factors[0]
    sup = math.prod(f.sup_norm for f in factors)
    common = dict(alpha=f0.alpha, beta=f0.beta, nu=f0.nu, delta=f0.delta)
    if side == "stable":
        return AnosovBudget(s_seminorm=bound - sup, sup_norm=sup, l1_norm=sup * volume_of_one, **common)
    l1 = sup * volume_of_one
    return AnosovBudget(u_seminorm=bound - l1, sup_norm=sup, l1_norm=l1, **common)


def anosov_pair_bound(f, g, c, n):
    return c.C0 * f.u_norm * g.s_norm * c.theta ** n


def anosov_multi_bound(f0, r, g0, k, max_u, max_s, c, n):
    """Bound for r+1 left factors with sup norm ||f0|| and k+1 right factors with ||g0||."""
    Mf, Mg = f0.sup_norm, g0.sup_norm
    return c.C0 * Mf ** r * Mg ** k * (max_u * Mg + Mf * max_s + Mf * Mg) * c.theta ** n
