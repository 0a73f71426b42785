"""towerlab: transfer-operator numerics for intermittent interval maps and
their torus extensions.

The pipeline: interval map families -> first-return inducing scheme ->
Ulam-discretized twisted transfer operators -> renewal sequences and the
suspension tower -> correlation decay measurements and spectral diagnostics.
"""

__version__ = "0.1.0"

from .cocycles import (
    ToralCocycle,
    ToralObservable,
    cocycle_from_records,
    observable_from_records,
    preset_cocycle,
    zero_cocycle,
)
from .inducing import InducingScheme, SymbolicMetric, build_scheme
from .interval_maps import IntermittentMap, make_doubling, make_lsv, make_thaler, map_from_name
from .operators import TwistedOperatorSet, UlamGrid, UlamPieceFactory

__all__ = [
    "__version__",
    "IntermittentMap",
    "make_lsv",
    "make_thaler",
    "make_doubling",
    "map_from_name",
    "InducingScheme",
    "SymbolicMetric",
    "build_scheme",
    "ToralCocycle",
    "ToralObservable",
    "cocycle_from_records",
    "observable_from_records",
    "preset_cocycle",
    "zero_cocycle",
    "UlamGrid",
    "UlamPieceFactory",
    "TwistedOperatorSet",
]
