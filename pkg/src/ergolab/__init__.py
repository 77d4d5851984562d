"""ergolab — a numerical laboratory for occupation and waiting times of
interval maps preserving an infinite measure.

Subpackages by theme:

* :mod:`ergolab.maps` — two-branch interval maps, branch inverses, charts.
* :mod:`ergolab.invariant` — invariant measure, level sets, wandering rates,
  Laplace transforms, polynomial-family asymptotics.
* :mod:`ergolab.entrance` — transfer-operator sums, asymptotic entrance
  densities, exact identity verifiers.
* :mod:`ergolab.specfun` — limit-law distribution functions.
* :mod:`ergolab.orbitstats` — orbit simulation and occupation statistics.
* :mod:`ergolab.sampling` — initial laws and deterministic samplers.
* :mod:`ergolab.experiments` — Monte Carlo and quadrature experiments.
* :mod:`ergolab.cli` — command-line front end.
"""

from . import errors
from .maps import (
    MapModel,
    ReferencePartition,
    boole_map,
    thaler_map,
    canonical_partition,
    make_partition,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "MapModel",
    "ReferencePartition",
    "boole_map",
    "thaler_map",
    "canonical_partition",
    "make_partition",
    "__version__",
]
