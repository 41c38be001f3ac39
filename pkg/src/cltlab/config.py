"""Experiment configuration: YAML in, validated objects out.

Every validation failure raises :class:`ConfigError` carrying the dotted
path of the offending field.
"""

from dataclasses import dataclass, field
import os
from pathlib import Path

import numpy as np
import sympy
import yaml

from cltlab import billiard, observables
from cltlab.clt import DEFAULT_T_GRID, bernstein_schedule
from cltlab.errors import ConfigError
from cltlab.io import dumps, sha256_text
from cltlab.regularity import (
    AnosovBoundConstants,
    AnosovBudget,
    BilliardBoundConstants,
    RegularityBudget,
)
from cltlab.systems import (
    Branch,
    DoublingMap,
    IteratedMap,
    PiecewiseExpandingMap,
    TentMap,
    ToralAutomorphism,
)
from cltlab.transfer import PwConstants

BUDGET_DEFAULTS = {
    "samples": 100_000,
    "pair_budget": 10_000,
    "block_samples": 100_000,
    "grid": 1 << 14,
    "lags": 16,
    "gk_budget": 1_000_000,
    "gk_cutoff": 16,
    "clt_n": 2000,
    "clt_samples": 5000,
    "histogram_bins": 40,
    "trajectory": 1000,
    "cap": 100,
}


NON_SEMANTIC = ("output", "workers")


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    system: object
    observable: object
    observable_mean: object
    schedule: object
    t_grid: tuple
    budgets: dict
    billiard_constants: BilliardBoundConstants
    anosov_constants: AnosovBoundConstants
    pw_constants: PwConstants
    regularity: dict
    output: Path
    workers: int
    source_text: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        # where results go and how many threads compute them do not change them
        return sha256_text(dumps({k: v for k, v in self.raw.items() if k not in NON_SEMANTIC}))

    def provenance(self):
        return {"config_sha256": self.config_hash, "seed": self.seed}


def _get(d, key, where, kind=None, default=None, required=False):
    if not isinstance(d, dict):
        raise ConfigError(f"expected a mapping at {where or 'top level'}", where or "<root>")
    path = f"{where}.{key}" if where else key
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"missing required field {path}", path)
        return default
    v = d[key]
    if kind is not None:
        try:
            if kind is int and not float(v).is_integer():
                raise ValueError
            v = kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{path} must be {kind.__name__}, got {v!r}", path) from None
    return v


def _wrap(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path) from None


# ---------------------------------------------------------------- systems

_X, _Y = sympy.symbols("x y", real=True)


def sympy_branch(domain, formula, inverse=None, where="system.branches"):
    """Branch from a formula in x; |F'| is differentiated symbolically."""
    try:
        expr = sympy.sympify(formula, locals={"x": _X})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse branch formula {formula!r}: {exc}", f"{where}.formula") from None
    if expr.free_symbols - {_X}:
        raise ConfigError(f"branch formula may only use x: {formula!r}", f"{where}.formula")
    a, b = (float(v) for v in domain)
    if not 0.0 <= a < b <= 1.0:
        raise ConfigError(f"branch domain {domain} must satisfy 0 <= a < b <= 1", f"{where}.domain")
    deriv = sympy.diff(expr, _X)
    if inverse is None:
        sols = sympy.solve(sympy.Eq(expr, _Y), _X)
        fwd = sympy.lambdify(_X, expr, "numpy")
        mid = float(fwd(np.float64(0.5 * (a + b))))
        inv_expr = None
        for s in sols:
            try:
                val = complex(s.subs(_Y, mid))
            except TypeError:
                continue
            if abs(val.imag) < 1e-12 and a - 1e-9 <= val.real <= b + 1e-9:
                inv_expr = s
                break
        if inv_expr is None:
            raise ConfigError(f"no closed-form inverse for {formula!r}; supply 'inverse'", f"{where}.inverse")
    else:
        try:
            inv_expr = sympy.sympify(inverse, locals={"y": _Y, "x": _Y})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"cannot parse inverse {inverse!r}: {exc}", f"{where}.inverse") from None
    fwd = _vectorised(sympy.lambdify(_X, expr, "numpy"))
    inv = _vectorised(sympy.lambdify(_Y, inv_expr, "numpy"))
    dabs = _vectorised(sympy.lambdify(_X, sympy.Abs(deriv), "numpy"))
    return Branch(a, b, fwd, inv, dabs)


def _vectorised(fn):
    def call(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()

    return call


def build_system(node, where="system"):
    name = _get(node, "name", where, str, required=True)
    power = _get(node, "power", where, int, 1)
    if power < 1:
        raise ConfigError("power must be >= 1", f"{where}.power")
    if name == "doubling":
        system = DoublingMap()
    elif name == "tent":
        system = TentMap()
    elif name == "piecewise":
        branches = _get(node, "branches", where, required=True)
        if not isinstance(branches, list) or not branches:
            raise ConfigError("branches must be a nonempty list", f"{where}.branches")
        brs = []
        for i, b in enumerate(branches):
            w = f"{where}.branches[{i}]"
            brs.append(sympy_branch(_get(b, "domain", w, list, required=True),
                                    _get(b, "formula", w, str, required=True),
                                    _get(b, "inverse", w, str), w))
        system = _wrap(where, PiecewiseExpandingMap, brs, name=_get(node, "label", where, str, "piecewise"),
                       ly_constant=_get(node, "ly_constant", where, float),
                       density_bins=_get(node, "density_bins", where, int, 1024),
                       params={"branches": branches})
    elif name in ("cat", "toral"):
        matrix = _get(node, "matrix", where, list, [[2, 1], [1, 1]])
        system = _wrap(f"{where}.matrix", ToralAutomorphism, matrix, name=name)
    elif name == "billiard":
        scs = _get(node, "scatterers", where, list, required=True)
        items = []
        for i, s in enumerate(scs):
            w = f"{where}.scatterers[{i}]"
            items.append(billiard.Scatterer(tuple(float(c) for c in _get(s, "center", w, list, required=True)),
                                            _get(s, "radius", w, float, required=True)))
        geom = _wrap(f"{where}.scatterers", billiard.BilliardGeometry, tuple(items),
                     cap=_get(node, "cap", where, float, 100.0))
        system = billiard.BilliardMap(geom)
        system.k0 = _get(node, "k0", where, int, 2)
        if system.k0 < 1:
            raise ConfigError("k0 must be >= 1", f"{where}.k0")
    else:
        raise ConfigError(f"unknown system {name!r}", f"{where}.name")
    if power > 1:
        if name in ("cat", "toral", "billiard"):
            raise ConfigError("iterate power is supported for interval maps only", f"{where}.power")
        system = IteratedMap(system, power)
    return system


def build_observable(node, system, where="observable"):
    name = _get(node, "name", where, str, required=True)
    params = _get(node, "params", where, dict, {})
    try:
        return observables.make_observable(name, system, **params)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc), f"{where}.name" if "unknown" in str(exc) else f"{where}.params") from None


def _budget(node, where):
    if node is None:
        return None
    return _wrap(where, RegularityBudget, _get(node, "K", where, float, required=True),
                 _get(node, "theta", where, float, required=True),
                 _get(node, "sup_norm", where, float, required=True), _get(node, "tag", where, str, "both"))


def _anosov_budget(node, where):
    keys = ("s_seminorm", "u_seminorm", "sup_norm", "l1_norm", "alpha", "beta", "nu", "delta")
    kw = {k: _get(node, k, where, float) for k in keys}
    return _wrap(where, AnosovBudget, **{k: v for k, v in kw.items() if v is not None})


def parse_config(data, source_text=""):
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", "<root>")
    seed = _get(data, "seed", "", int, required=True)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be a u64", "seed")
    system = build_system(_get(data, "system", "", dict, required=True))
    obs_node = _get(data, "observable", "", dict, required=True)
    observable = build_observable(obs_node, system)
    mean = _get(obs_node, "mean", "observable", float)

    sched = _get(data, "schedule", "", dict, {})
    n = _get(sched, "n", "schedule", int, 10_000)
    a = _get(sched, "a", "schedule", float, 0.4)
    b = _get(sched, "b", "schedule", float, 0.2)
    if not 0 < b < a < 0.5:
        field_ = "schedule.a" if not a < 0.5 or a <= b else "schedule.b"
        raise ConfigError(f"need 0 < b < a < 1/2, got a={a}, b={b}", field_)
    schedule = _wrap("schedule.n", bernstein_schedule, n, a, b)
    t_grid = tuple(float(t) for t in _get(sched, "t_grid", "schedule", list, list(DEFAULT_T_GRID)))

    budgets = dict(BUDGET_DEFAULTS)
    user = _get(data, "budgets", "", dict, {})
    for k, v in user.items():
        if k not in BUDGET_DEFAULTS:
            raise ConfigError(f"unknown budget {k!r}", f"budgets.{k}")
        budgets[k] = _get(user, k, "budgets", int)
        if budgets[k] <= 0:
            raise ConfigError("budgets must be positive", f"budgets.{k}")

    consts = _get(data, "constants", "", dict, {})
    bc = _wrap("constants.billiard", BilliardBoundConstants, **_get(consts, "billiard", "constants", dict, {}))
    ac = _wrap("constants.anosov", AnosovBoundConstants, **_get(consts, "anosov", "constants", dict, {}))
    pc = _wrap("constants.pw", PwConstants, **_get(consts, "pw", "constants", dict, {}))

    reg = _get(data, "regularity", "", dict, {})
    regularity = {
        "f": _budget(_get(reg, "f", "regularity", dict), "regularity.f"),
        "g": _budget(_get(reg, "g", "regularity", dict), "regularity.g"),
        "r": _get(reg, "r", "regularity", int, 2),
        "k": _get(reg, "k", "regularity", int, 2),
        "n_max": _get(reg, "n_max", "regularity", int, 20),
        "estimate": bool(_get(reg, "estimate", "regularity", default=False)),
        "anosov": [_anosov_budget(s, f"regularity.anosov[{i}]")
                   for i, s in enumerate(_get(reg, "anosov", "regularity", list, []))],
    }

    workers = _get(data, "workers", "", int, os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError("workers must be >= 1", "workers")
    output = Path(_get(data, "output", "", str, "runs/out"))
    return ExperimentConfig(data, seed, system, observable, mean, schedule, t_grid, budgets, bc, ac, pc,
                            regularity, output, workers, source_text)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "--config") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}", "<root>") from None
    return parse_config(data, text)
