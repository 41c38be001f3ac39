"""Correlation decay, multiple correlations and the CLT for chaotic maps.

Systems: the doubling and tent maps, piecewise expanding interval maps,
hyperbolic toral automorphisms and the periodic Lorentz gas.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from cltlab.kernels import backend_name  # noqa: E402
from cltlab.systems import (  # noqa: E402
    DoublingMap,
    IteratedMap,
    Observable,
    PiecewiseExpandingMap,
    TentMap,
    ToralAutomorphism,
    birkhoff_sum,
    orbit,
    step,
)

__all__ = [
    "DoublingMap", "IteratedMap", "Observable", "PiecewiseExpandingMap", "TentMap", "ToralAutomorphism",
    "backend_name", "birkhoff_sum", "orbit", "step",
]
