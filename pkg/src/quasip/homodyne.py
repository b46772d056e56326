"""Three-channel record processing and a physically motivated record generator.

Each pulse yields quadratures (X1, X2, X3) plus the relative phase ``dphi``
between the postselection and target local oscillators.  Channels 1 and 2
measure conjugate quadratures of the same latent amplitude ``a`` (Husimi
coordinates, X1 ~ 2 Re a, X2 ~ 2 Im a, each with one unit of vacuum noise);
channel 3 measures the delay-evolved amplitude at LO phase ``dphi``.  The
reconstructed target phase is ``(dphi + atan2(X2, X1)) mod 2pi``, so the
estimated field lives in a frame phase-locked to the selection instant: a
static state reconstructs on the positive real axis, and phase fluctuations
accumulated over the target delay carry the physics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from quasip.states import StateSpec
from quasip.tomography import QuadratureDataset

TWO_PI = 2.0 * np.pi

PULSE_PERIOD_NS = 1.0 / 0.0754  # 75.4 MHz repetition rate


@dataclass
class RecordBatch:
    """Columnar stream of multi-channel records, ordered by pulse index."""

    t_index: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    dphi: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        self.t_index = np.asarray(self.t_index, dtype=np.int64)
        for name in ("x1", "x2", "x3", "dphi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if arr.shape != self.t_index.shape or arr.ndim != 1:
                raise ValueError("record columns must be 1-d arrays of equal length")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in column {name}")
        if self.t_index.size > 1 and np.any(np.diff(self.t_index) <= 0):
            raise ValueError("t_index must be strictly increasing")

    def __len__(self) -> int:
        return self.t_index.size

    def take(self, mask_or_idx) -> "RecordBatch":
        return RecordBatch(
            self.t_index[mask_or_idx],
            self.x1[mask_or_idx],
            self.x2[mask_or_idx],
            self.x3[mask_or_idx],
            self.dphi[mask_or_idx],
            self.meta,
        )

    def radius(self) -> np.ndarray:
        return np.hypot(self.x1, self.x2)


@dataclass(frozen=True)
class AnnulusSelector:
    """Postselection ring of radius ``s`` and thickness ``w`` in the (X1, X2) plane."""

    s: float
    w: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("annulus radius must be nonnegative")
        if self.w <= 0:
            raise ValueError("annulus width must be positive")

    def interval(self) -> tuple:
        return (max(self.s - 0.5 * self.w, 0.0), self.s + 0.5 * self.w)


@dataclass
class HusimiHistogram:
    counts: np.ndarray
    q_edges: np.ndarray
    p_edges: np.ndarray
    total: int
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class DynamicsSpec:
    """Optional latent-amplitude dynamics for the record generator.

    ``phase_diffusion_rate`` D gives Wiener phase increments of variance
    2*D*dt (rad^2); ``amplitude_relax_rate`` is the Ornstein-Uhlenbeck rate of
    the complex fluctuation around the displacement; ``oscillation_freq_ghz``
    modulates the displacement amplitude sinusoidally in absolute time.
    ``delay_ps`` separates the target measurement from the postselection
    instant within each pulse record.
    """

    phase_diffusion_rate: float = 0.0  # 1/ps
    amplitude_relax_rate: float = 0.0  # 1/ps
    oscillation_freq_ghz: float = 0.0
    modulation_depth: float = 0.1
    delay_ps: float = 0.0
    pulse_period_ns: float = PULSE_PERIOD_NS
    sweep_period: int = 997  # pulses per triangle sweep of dphi

    def __post_init__(self):
        if self.phase_diffusion_rate < 0 or self.amplitude_relax_rate < 0:
            raise ValueError("dynamics rates must be nonnegative")
        if self.sweep_period < 2:
            raise ValueError("sweep period must cover at least two pulses")


def triangle_sweep(t_index: np.ndarray, period: int) -> np.ndarray:
    """Recorded LO phase sweep: triangle wave covering [0, 2pi]."""
    frac = (t_index % period) / period
    tri = 2.0 * np.where(frac < 0.5, frac, 1.0 - frac)
    return TWO_PI * tri


def synth_records(
    state: StateSpec,
    n: int,
    seed: int,
    dynamics: DynamicsSpec | None = None,
) -> RecordBatch:
    """Generate ``n`` pulse records for ``state``; deterministic per seed.

    The latent amplitude is redrawn each pulse from the state's Wigner
    distribution (pulses are far apart compared to any coherence time of
    interest), modulated in amplitude when an oscillation frequency is set,
    and propagated over ``delay_ps`` (OU relaxation of the fluctuation plus
    Wiener phase diffusion) before the target channel measures it.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need n >= 1 records")
    dyn = dynamics or DynamicsSpec()
    rng = np.random.default_rng(seed)
    t_index = np.arange(n, dtype=np.int64)
    t_ps = t_index * (dyn.pulse_period_ns * 1e3)

    sigma = np.sqrt((2.0 * state.nbar + 1.0) / 4.0)
    disp = state.displacements(n, rng)
    fluct = (rng.normal(0.0, sigma, n) + 1j * rng.normal(0.0, sigma, n))

    if dyn.oscillation_freq_ghz > 0:
        mod = 1.0 + dyn.modulation_depth * np.sin(TWO_PI * dyn.oscillation_freq_ghz * 1e-3 * t_ps)
    else:
        mod = np.ones(n)
    a_sel = disp * mod + fluct

    tau = dyn.delay_ps
    if tau > 0:
        if dyn.oscillation_freq_ghz > 0:
            mod_tau = 1.0 + dyn.modulation_depth * np.sin(
                TWO_PI * dyn.oscillation_freq_ghz * 1e-3 * (t_ps + tau)
            )
        else:
            mod_tau = mod
        decay = np.exp(-dyn.amplitude_relax_rate * tau)
        refresh = sigma * np.sqrt(max(1.0 - decay**2, 0.0))
        fluct_tau = fluct * decay + (
            rng.normal(0.0, 1.0, n) + 1j * rng.normal(0.0, 1.0, n)
        ) * refresh
        dtheta = rng.normal(0.0, np.sqrt(2.0 * dyn.phase_diffusion_rate * tau), n)
        a_tgt = (disp * mod_tau + fluct_tau) * np.exp(1j * dtheta)
    else:
        a_tgt = a_sel

    dphi = triangle_sweep(t_index, dyn.sweep_period)
    x1 = 2.0 * a_sel.real + rng.normal(0.0, 1.0, n)
    x2 = 2.0 * a_sel.imag + rng.normal(0.0, 1.0, n)
    x3 = 2.0 * np.real(np.exp(1j * dphi) * a_tgt) + rng.normal(0.0, 1.0, n)
    meta = {"state": state.kind, "seed": int(seed), "delay_ps": float(tau), "n": n}
    return RecordBatch(t_index, x1, x2, x3, dphi, meta)


def orthogonality_filter(records: RecordBatch, window: int) -> RecordBatch:
    """Keep records whose X1*X2 product is within 2.5% of the rolling
    peak-to-peak of the product over a centered ``window`` (truncated at the
    stream edges); preserves order."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(records) == 0:
        return records
    prod = records.x1 * records.x2
    hi = maximum_filter1d(prod, size=window, mode="constant", cval=-np.inf)
    lo = minimum_filter1d(prod, size=window, mode="constant", cval=np.inf)
    keep = np.abs(prod) <= 0.025 * (hi - lo)
    return records.take(keep)


def husimi_histogram(records: RecordBatch, bins: int = 81, extent: float | None = None) -> HusimiHistogram:
    """Histogram of (X1, X2) pairs; the joint-quadrature (Husimi) picture."""
    if len(records) == 0:
        raise ValueError("cannot histogram an empty record stream")
    if extent is None:
        extent = float(np.max(np.abs(np.concatenate([records.x1, records.x2])))) + 1.0
    edges = np.linspace(-extent, extent, bins + 1)
    counts, qe, pe = np.histogram2d(records.x1, records.x2, bins=(edges, edges))
    pts = np.stack([records.x1, records.x2])
    return HusimiHistogram(
        counts=counts.astype(np.int64),
        q_edges=qe,
        p_edges=pe,
        total=len(records),
        mean=pts.mean(axis=1),
        cov=np.cov(pts) if len(records) > 1 else np.zeros((2, 2)),
    )


def reconstruct_phase(x1, x2, dphi):
    """Target phase (dphi + atan2(X2, X1)) mod 2pi; rejects the zero vector."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any((x1 == 0.0) & (x2 == 0.0)):
        raise ValueError("phase undefined for (X1, X2) = (0, 0)")
    out = np.mod(np.asarray(dphi, dtype=float) + np.arctan2(x2, x1), TWO_PI)
    return out if out.ndim else float(out)


@dataclass
class PostselectionResult:
    dataset: QuadratureDataset
    n_kept: int
    empty: bool


def postselect(records: RecordBatch, sel: AnnulusSelector) -> PostselectionResult:
    """Keep records with sqrt(X1^2+X2^2) inside the closed annulus and emit
    the target (x, phi) pairs for estimation.  An empty selection yields an
    empty dataset flagged with ``empty=True``."""
    lo, hi = sel.interval()
    rad = records.radius()
    mask = (rad >= lo) & (rad <= hi)
    kept = records.take(mask)
    if len(kept) == 0:
        ds = QuadratureDataset(np.empty(0), np.empty(0), meta={"s": sel.s, "w": sel.w})
        return PostselectionResult(ds, 0, True)
    phi = reconstruct_phase(kept.x1, kept.x2, kept.dphi)
    meta = dict(kept.meta or {})
    meta.update({"s": sel.s, "w": sel.w, "n_kept": int(len(kept))})
    return PostselectionResult(QuadratureDataset(kept.x3, phi, meta), int(len(kept)), False)


def range_gate(records: RecordBatch, lower_pct: float = 1.0, upper_pct: float = 99.0) -> RecordBatch:
    """Optional stability gate: drop records whose selection-plane radius
    falls outside the given percentiles (removes drift jumps); off by default
    in the pipeline."""
    rad = records.radius()
    lo, hi = np.percentile(rad, [lower_pct, upper_pct])
    return records.take((rad >= lo) & (rad <= hi))
