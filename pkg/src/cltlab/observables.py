"""Built-in observables and the name registry used by configs."""

import numpy as np

from cltlab.systems import IntervalMap, Observable, ToralAutomorphism


def _first(points, system):
    p = np.asarray(points, dtype=float)
    return p[..., 0] if isinstance(system, ToralAutomorphism) else p


def cos_first_coordinate(system, frequency=1):
    k = int(frequency)
    return Observable("cos-first-coordinate", lambda p: np.cos(2 * np.pi * k * _first(p, system)),
                      {"frequency": k}, sup_norm=1.0)


def sawtooth(system):
    return Observable("sawtooth", lambda p: _first(p, system) - 0.5, sup_norm=0.5)


def constant(system, value=1.0):
    c = float(value)

    def f(p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape if system.dim == 1 else p.shape[:-1], c)

    return Observable("constant", f, {"value": c}, sup_norm=abs(c))


def tabulated(values):
    """Linear interpolation of samples given on the uniform grid {j/G} of [0, 1)."""
    v = np.asarray(values, dtype=float)
    G = v.size
    xs = np.arange(G + 1) / G
    ys = np.append(v, v[-1] + (v[-1] - v[-2]))
    return Observable("tabulated", lambda p: np.interp(np.asarray(p, dtype=float), xs, ys),
                      {"grid": G}, sup_norm=float(np.max(np.abs(v))))


def make_observable(name, system, **params):
    if name == "cos-first-coordinate":
        return cos_first_coordinate(system, **params)
    if name == "sawtooth":
        return sawtooth(system)
    if name == "constant":
        return constant(system, **params)
    if name == "tabulated":
        if not isinstance(system, IntervalMap):
            raise ValueError("tabulated observables need an interval system")
        return tabulated(params["values"])
    if name in ("free-path", "reflection-angle"):
        from cltlab import billiard

        if not isinstance(system, billiard.BilliardMap):
            raise ValueError(f"{name} needs a billiard system")
        return billiard.free_path(system.geometry) if name == "free-path" else billiard.reflection_angle()
    raise ValueError(f"unknown observable {name!r}")
