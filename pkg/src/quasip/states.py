"""Single-mode state specifications for the synthetic data generators.

Quadrature convention throughout: ``[q, p] = 2i``, vacuum quadrature variance 1.
A coherent amplitude ``alpha`` then has mean quadrature ``2*Re(e^{i*phi}*alpha)``
at local-oscillator phase ``phi``, and a thermal occupation ``nbar`` adds
``2*nbar`` to the quadrature variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_KINDS = ("vacuum", "coherent", "thermal", "displaced_thermal", "phase_diffused")


@dataclass(frozen=True)
class StateSpec:
    """Parametrized single-mode state used by the synthetic generators.

    ``kappa`` is the width (radians) of a wrapped-normal random rotation
    applied to the displacement, sample by sample.
    """

    kind: str
    alpha0: complex = 0j
    nbar: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown state kind {self.kind!r}; expected one of {_KINDS}")
        if self.nbar < 0:
            raise ValueError("nbar must be nonnegative")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not np.isfinite(self.alpha0):
            raise ValueError("alpha0 must be finite")

    @classmethod
    def vacuum(cls) -> "StateSpec":
        return cls("vacuum")

    @classmethod
    def coherent(cls, alpha0: complex) -> "StateSpec":
        return cls("coherent", alpha0=complex(alpha0))

    @classmethod
    def thermal(cls, nbar: float) -> "StateSpec":
        return cls("thermal", nbar=float(nbar))

    @classmethod
    def displaced_thermal(cls, alpha0: complex, nbar: float) -> "StateSpec":
        return cls("displaced_thermal", alpha0=complex(alpha0), nbar=float(nbar))

    @classmethod
    def phase_diffused(cls, alpha0: complex, nbar: float, kappa: float) -> "StateSpec":
        return cls("phase_diffused", alpha0=complex(alpha0), nbar=float(nbar), kappa=float(kappa))

    def displacements(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Per-sample coherent displacement, including the random rotation."""
        alpha = np.full(n, complex(self.alpha0), dtype=complex)
        if self.kind == "phase_diffused" and self.kappa > 0:
            alpha = alpha * np.exp(1j * rng.normal(0.0, self.kappa, size=n))
        return alpha

    def quadrature_variance(self) -> float:
        """Variance of a single measured quadrature (vacuum = 1)."""
        return 2.0 * self.nbar + 1.0

    def wigner_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw complex amplitudes from the state's Wigner distribution.

        The symmetric-ordered occupation is ``<|a|^2> = nbar + 1/2 + |alpha0|^2``,
        i.e. each quadrature component carries variance ``(2*nbar + 1)/4``.
        """
        sigma = np.sqrt((2.0 * self.nbar + 1.0) / 4.0)
        noise = rng.normal(0.0, sigma, size=(n, 2))
        return self.displacements(n, rng) + noise[:, 0] + 1j * noise[:, 1]
