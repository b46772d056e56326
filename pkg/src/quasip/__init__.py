"""Phase-space toolkit: quasiprobability reconstruction and condensate coherence tracking.

The package bundles four layers that compose into one pipeline:

* :mod:`quasip.phasespace` -- Bessel-kernel quasiprobability fields, pattern
  functions, circular statistics.
* :mod:`quasip.tomography` / :mod:`quasip.homodyne` -- binned estimation of the
  regularized P distribution from quadrature data, and multi-channel record
  processing (Husimi histogram, annulus postselection, phase reconstruction).
* :mod:`quasip.twa` / :mod:`quasip.bridge` -- stochastic Gross-Pitaevskii
  trajectories in the truncated Wigner approximation, and the radial kernel
  that converts Wigner samples into the same regularized P representation.
* :mod:`quasip.analysis` -- decay-time fits and circular statistics on phase
  samples.

``quasip.cli`` exposes the batch command-line surface (``quasip synth``,
``reconstruct``, ``simulate``, ``fit``, ``sweep``).
"""

from quasip.phasespace import (
    DEFAULT_R,
    CircularStats,
    PhaseSpaceGrid,
    QuasiProbabilityField,
    circular_stats,
    kernel_g,
    kernel_h,
    kernel_omega,
    pattern_function,
    tabulate_omega,
)
from quasip.states import StateSpec

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_R",
    "CircularStats",
    "PhaseSpaceGrid",
    "QuasiProbabilityField",
    "StateSpec",
    "circular_stats",
    "kernel_g",
    "kernel_h",
    "kernel_omega",
    "pattern_function",
    "tabulate_omega",
    "__version__",
]
