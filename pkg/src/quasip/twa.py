"""Stochastic Gross-Pitaevskii dynamics with an incoherent reservoir (TWA).

Model (2D periodic grid, fields per unit cell of volume dV = (L/N)^2):

    dpsi = (1/i hbar)[ -hbar^2 grad^2/(2 m_eff) + (i hbar/2)(R_r n_res - gamma_c)
                       + g_r n_res + g_c |psi|^2_- ] psi dt + dW
    dn_res/dt = (-gamma_r - R_r |psi|^2_-) n_res + P_pump

with the renormalized density |psi|^2_- = |psi|^2 - 1/dV and complex noise
<dW dW*> = (R_r n_res + gamma_c) dt / (2 dV) per cell.  The deterministic
drift is advanced with classical RK4 (spectral Laplacian, periodic
boundaries); noise is added once per step after the drift stage with the
Ito (start-of-step) reservoir density.  The kinetic phase rate at the grid
diagonal sets the enforced step bound dt <= 0.4 * 2 m_eff hbar/(hbar k_max)^2.

Mode amplitudes are normalized so |psi_k|^2 is a symmetric-ordered mode
occupation (vacuum 1/2): psi_k = sqrt(dV)/N * sum_r psi(r) e^{-i k r}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from quasip.analysis import DecaySeries

HBAR_DEFAULT = 0.6582  # meV ps
ELECTRON_MASS = 510998950.0 / 299.792458**2  # meV ps^2 / um^2 (m_e c^2 / c^2)


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters of the condensate model.

    Units: rates in 1/ps, interactions in meV um^2, pump in 1/(ps um^2),
    lengths in um, mass in electron masses.
    """

    m_eff: float = 1e-4
    gamma_c: float = 0.2
    gamma_r: float = 0.3
    R_r: float = 0.015
    g_c: float = 6e-3
    g_r: float = 6e-3
    P0: float = 8.0
    pump_width: float = 40.0
    L: float = 230.4
    N: int = 256
    dt: float = 0.02
    hbar: float = HBAR_DEFAULT

    def __post_init__(self):
        for name in ("m_eff", "gamma_c", "gamma_r", "R_r", "g_c", "g_r", "pump_width",
                     "L", "dt", "hbar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.P0 < 0:
            raise ValueError("P0 must be nonnegative")
        if self.N < 4:
            raise ValueError("grid too small")
        if self.dt > self.dt_bound():
            raise ValueError(
                f"dt={self.dt} exceeds the kinetic stability bound {self.dt_bound():.4g} ps"
            )

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def dv(self) -> float:
        return self.dx**2

    @property
    def mass_abs(self) -> float:
        """Effective mass in meV ps^2/um^2."""
        return self.m_eff * ELECTRON_MASS

    def kinetic_rate(self, k_sq: float) -> float:
        """Phase rotation rate hbar k^2 / (2 m_eff) in rad/ps."""
        return self.hbar * k_sq / (2.0 * self.mass_abs)

    def dt_bound(self) -> float:
        k_max_sq = 2.0 * (np.pi / self.dx) ** 2
        return 0.4 / self.kinetic_rate(k_max_sq)

    def coordinates(self) -> tuple:
        x = (np.arange(self.N) - self.N // 2) * self.dx
        return x[:, None], x[None, :]

    def k_squared(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)
        return k[:, None] ** 2 + k[None, :] ** 2


@dataclass
class CondensateState:
    """Complex polariton field and reservoir density on the spatial grid."""

    psi: np.ndarray
    n_res: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        self.n_res = np.asarray(self.n_res, dtype=float)
        if self.psi.shape != self.n_res.shape:
            raise ValueError("psi and n_res must share a shape")


@dataclass
class TrajectoryEnsemble:
    """Batch of independent trajectories with per-trajectory RNG streams."""

    psi: np.ndarray  # (M, N, N) complex
    n_res: np.ndarray  # (M, N, N) real
    t: float
    rngs: list
    params: ModelParams
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.psi.shape[0]

    @classmethod
    def from_seed(cls, params: ModelParams, n_traj: int, seed: int,
                  psi=None, n_res=None, t: float = 0.0, meta=None) -> "TrajectoryEnsemble":
        if n_traj < 1:
            raise ValueError("need at least one trajectory")
        seqs = np.random.SeedSequence(seed).spawn(n_traj)
        rngs = [np.random.default_rng(s) for s in seqs]
        shape = (n_traj, params.N, params.N)
        psi = np.zeros(shape, dtype=complex) if psi is None else np.broadcast_to(psi, shape).copy()
        if n_res is None:
            n_res = np.broadcast_to(reservoir_steady(params), shape).copy()
        else:
            n_res = np.broadcast_to(n_res, shape).copy()
        return cls(psi.astype(complex), n_res.astype(float), t, rngs, params, meta or {"seed": seed})


@dataclass(frozen=True)
class InitPrepTarget:
    """Steady-state targets for the displaced-thermal initial ensemble."""

    n_mean: float
    n_var: float
    coherence: float | None = None
    k_s: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n_mean < 0 or self.n_var < 0:
            raise ValueError("targets must be nonnegative")


def pump_profile(params: ModelParams) -> np.ndarray:
    """Gaussian continuous-wave pump P0 exp(-r^2/w^2), centered on the grid."""
    x, y = params.coordinates()
    return params.P0 * np.exp(-(x**2 + y**2) / params.pump_width**2)


def reservoir_steady(params: ModelParams, include_renormalization: bool = True) -> np.ndarray:
    """Stationary reservoir density for an absent condensate field.

    With psi = 0 the renormalized density is exactly -1/dV, so the steady
    state is P/(gamma_r - R_r/dV); ``include_renormalization=False`` returns
    the mean-field P/gamma_r.
    """
    pump = pump_profile(params)
    if not include_renormalization:
        return pump / params.gamma_r
    denom = params.gamma_r - params.R_r / params.dv
    if denom <= 0:
        raise ValueError(
            "unphysical parameters: gamma_r <= R_r/dV makes the empty reservoir unstable"
        )
    return pump / denom


def _drift(psi, n_res, params: ModelParams, pump, k_sq, renormalize: bool = True):
    """Deterministic drift of (psi, n_res); accepts (..., N, N) batches."""
    axes = (-2, -1)
    psi_k = sfft.fft2(psi, axes=axes, workers=-1)
    psi_k *= k_sq
    kin = sfft.ifft2(psi_k, axes=axes, workers=-1, overwrite_x=True)
    density = psi.real * psi.real
    density += psi.imag * psi.imag
    if renormalize:
        density -= 1.0 / params.dv
    # local coefficient: (R_r/2 - i g_r/hbar) n + (-i g_c/hbar) |psi|^2_- - gamma_c/2
    local = (0.5 * params.R_r - 1j * params.g_r / params.hbar) * n_res
    local += (-1j * params.g_c / params.hbar) * density
    local -= 0.5 * params.gamma_c
    local *= psi
    kin *= -1j * params.hbar / (2.0 * params.mass_abs)
    kin += local
    dn = params.R_r * density
    dn += params.gamma_r
    dn *= -n_res
    dn += pump
    return kin, dn


def _rk4(psi, n_res, params, pump, k_sq, dt, renormalize=True):
    k1p, k1n = _drift(psi, n_res, params, pump, k_sq, renormalize)
    k2p, k2n = _drift(psi + (0.5 * dt) * k1p, n_res + (0.5 * dt) * k1n, params, pump, k_sq, renormalize)
    k3p, k3n = _drift(psi + (0.5 * dt) * k2p, n_res + (0.5 * dt) * k2n, params, pump, k_sq, renormalize)
    k4p, k4n = _drift(psi + dt * k3p, n_res + dt * k3n, params, pump, k_sq, renormalize)
    # accumulate Runge-Kutta average in the k1 buffers
    k2p *= 2.0
    k2p += k1p
    k3p *= 2.0
    k3p += k2p
    k3p += k4p
    k3p *= dt / 6.0
    k3p += psi
    k2n *= 2.0
    k2n += k1n
    k3n *= 2.0
    k3n += k2n
    k3n += k4n
    k3n *= dt / 6.0
    k3n += n_res
    return k3p, k3n


def _noise_scale(n_res, params: ModelParams, dt: float) -> np.ndarray:
    """Per-component std of the complex Wiener increment (Ito, start of step)."""
    return np.sqrt((params.R_r * n_res + params.gamma_c) * dt / (4.0 * params.dv))


def step(state: CondensateState, params: ModelParams, rng=None) -> CondensateState:
    """Advance a single trajectory by one dt; noise off when ``rng`` is None.

    Raises on a non-finite field, naming the first offending cell.
    """
    pump = pump_profile(params)
    k_sq = params.k_squared()
    scale = _noise_scale(state.n_res, params, params.dt) if rng is not None else None
    psi, n_res = _rk4(state.psi, state.n_res, params, pump, k_sq, params.dt)
    if rng is not None:
        xi = rng.standard_normal((2,) + psi.shape)
        psi = psi + scale * (xi[0] + 1j * xi[1])
    if not (np.all(np.isfinite(psi.real)) and np.all(np.isfinite(psi.imag))):
        bad = np.argwhere(~np.isfinite(psi))[0]
        raise FloatingPointError(
            f"non-finite field at cell {tuple(bad)} after step to t={state.t + params.dt:.4f} ps"
        )
    return CondensateState(psi, np.maximum(n_res, 0.0), state.t + params.dt)


def evolve_ensemble(ens: TrajectoryEnsemble, n_steps: int, noise: bool = True,
                    check_every: int = 50) -> TrajectoryEnsemble:
    """Advance all trajectories by ``n_steps`` of dt (in place) and return it.

    Noise is drawn from each trajectory's own generator, so results are
    bit-identical regardless of how the ensemble is partitioned across runs.
    """
    params = ens.params
    pump = pump_profile(params)
    k_sq = params.k_squared()
    dt = params.dt
    for istep in range(n_steps):
        if noise:
            scale = _noise_scale(ens.n_res, params, dt)
        ens.psi, ens.n_res = _rk4(ens.psi, ens.n_res, params, pump, k_sq, dt)
        np.maximum(ens.n_res, 0.0, out=ens.n_res)
        if noise:
            for j, rng in enumerate(ens.rngs):
                xi = rng.standard_normal((2, params.N, params.N))
                ens.psi[j] += scale[j] * (xi[0] + 1j * xi[1])
        ens.t += dt
        if (istep + 1) % check_every == 0 or istep + 1 == n_steps:
            if not np.all(np.isfinite(ens.psi.view(float))):
                bad = np.argwhere(~np.isfinite(ens.psi))[0]
                raise FloatingPointError(
                    f"trajectory {bad[0]}: non-finite field at cell "
                    f"{tuple(bad[1:])}, t={ens.t:.4f} ps"
                )
    return ens


def _check_on_lattice(k_s, params: ModelParams) -> tuple:
    dk = 2.0 * np.pi / params.L
    k_s = (float(k_s[0]), float(k_s[1]))
    idx = []
    for comp in k_s:
        ratio = comp / dk
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)) + 1e-12:
            raise ValueError(f"k_s component {comp} is not on the reciprocal lattice (dk={dk:.6g})")
        idx.append(int(round(ratio)))
    return tuple(idx)


def mode_amplitude(psi: np.ndarray, k_s, params: ModelParams):
    """Fourier amplitude of mode ``k_s`` (rad/um pair), occupation-normalized.

    Accepts a single (N, N) field or an (M, N, N) batch; normalization obeys
    Parseval (sum_k |psi_k|^2 = dV sum_r |psi|^2), so |psi_k|^2 is a
    symmetric-ordered occupation with vacuum value 1/2.
    """
    kx_idx, ky_idx = _check_on_lattice(k_s, params)
    x, y = params.coordinates()
    dk = 2.0 * np.pi / params.L
    phase = np.exp(-1j * dk * (kx_idx * x + ky_idx * y))
    amp = np.sum(psi * phase, axis=(-2, -1)) * (np.sqrt(params.dv) / params.N)
    return amp


def mode_spectrum(psi: np.ndarray, params: ModelParams) -> np.ndarray:
    """|psi_k|^2 over the full reciprocal lattice with the same normalization."""
    amps = sfft.fft2(psi, axes=(-2, -1), workers=-1) * (np.sqrt(params.dv) / params.N)
    return np.abs(amps) ** 2


@dataclass
class ModeStats:
    n_mean: float
    n_var: float
    n_coh: float
    n_th: float
    n_coh_fluct: float
    n_th_fluct: float
    coherence_proxy: float
    phase_samples: np.ndarray


def mode_stats(samples: np.ndarray) -> ModeStats:
    """Symmetric-ordering-corrected statistics of mode amplitude samples.

    <n> = <|psi_k|^2>_W - 1/2 and <n^2> = <|psi_k|^4>_W - <|psi_k|^2>_W
    (the Weyl symmetrization of |alpha|^4 is a'2a2 + 2 a'a + 1/2, checked
    against coherent/thermal/Fock moments).

    Two displaced-thermal decompositions are reported.  ``n_coh`` is the
    ensemble-mean route |<psi_k>_W|^2, meaningful only for phase-locked
    ensembles (prepared states, phase-referenced data): a spontaneously
    condensed steady ensemble carries a uniform random phase per trajectory
    and averages to zero however coherent each trajectory is.
    ``n_coh_fluct`` inverts the number fluctuations instead
    (n_var = n_coh(2 n_th + 1) + n_th(n_th + 1)), which is phase invariant,
    and feeds ``coherence_proxy`` = n_coh_fluct/n_mean.  Neither is claimed
    equal to a resource-theoretic coherence measure.
    """
    samples = np.asarray(samples, dtype=complex).ravel()
    if samples.size < 2:
        raise ValueError("mode statistics need at least two trajectories")
    m2 = float(np.mean(np.abs(samples) ** 2))
    m4 = float(np.mean(np.abs(samples) ** 4))
    n_mean = m2 - 0.5
    n_sq = m4 - m2
    n_var = n_sq - n_mean**2
    n_coh = float(np.abs(np.mean(samples)) ** 2)
    n_th = n_mean - n_coh
    inner = max(n_mean * (n_mean + 1.0) - n_var, 0.0)
    n_th_fluct = float(np.clip(n_mean - np.sqrt(inner), 0.0, max(n_mean, 0.0)))
    n_coh_fluct = max(n_mean, 0.0) - n_th_fluct
    denom = max(n_mean, 1e-300)
    return ModeStats(
        n_mean=n_mean,
        n_var=n_var,
        n_coh=n_coh,
        n_th=n_th,
        n_coh_fluct=n_coh_fluct,
        n_th_fluct=n_th_fluct,
        coherence_proxy=float(np.clip(n_coh_fluct / denom, 0.0, 1.0)) if n_mean > 0 else 0.0,
        phase_samples=np.angle(samples),
    )


def meanfield_envelope(params: ModelParams, t_max: float = 400.0, tol: float = 1e-4,
                       check_interval: float = 10.0) -> tuple:
    """Stationary mean-field profile (noise off, bare |psi|^2).

    Returns (envelope normalized to unit peak, reservoir field, converged
    total density).  Below threshold the condensate decays; the pump profile
    shape is returned instead (the thermal ensemble carries no envelope
    information of its own).
    """
    pump = pump_profile(params)
    k_sq = params.k_squared()
    psi = np.full((params.N, params.N), 1e-3 + 0j)
    n_res = pump / params.gamma_r
    steps = max(1, int(round(check_interval / params.dt)))
    norm_prev = None
    t = 0.0
    while t < t_max:
        for _ in range(steps):
            psi, n_res = _rk4(psi, n_res, params, pump, k_sq, params.dt, renormalize=False)
        t += steps * params.dt
        norm = float(np.sum(np.abs(psi) ** 2) * params.dv)
        if norm_prev is not None and norm > 1e-6:
            if abs(norm - norm_prev) <= tol * norm:
                break
        norm_prev = norm
    dens = np.abs(psi) ** 2
    total = float(dens.sum() * params.dv)
    if dens.max() <= 1e-8:
        prof = pump / pump.max()
        return prof, n_res, 0.0
    return np.sqrt(dens / dens.max()), n_res, total


@dataclass
class PreparedEnsemble:
    ensemble: TrajectoryEnsemble
    mu: complex
    sigma: float
    residuals: dict
    achieved: ModeStats
    envelope: np.ndarray


def prepare_initial_state(
    target: InitPrepTarget,
    params: ModelParams,
    n_traj: int,
    seed: int,
    tol: float = 1e-2,
    max_iter: int = 60,
    envelope: np.ndarray | None = None,
    n_res: np.ndarray | None = None,
) -> PreparedEnsemble:
    """Iteratively match a displaced-thermal ensemble to steady-state targets.

    Per-point samples Normal(mu, sigma) (complex, per-component sigma) are
    multiplied by the normalized mean-field envelope; mu and sigma are
    adjusted until the measured mode statistics agree with the targets within
    ``tol`` (relative).  The measuring step samples the mode projection
    directly (an exact distributional identity for the sampled grids, which
    keeps the iteration cheap); the returned ensemble holds full spatial
    grids built with the converged parameters.

    The Gaussian family has two free parameters.  When a coherence target is
    given, (n_mean, coherence) are matched and the n_var residual is only
    reported: tracking phase decay needs the right occupation and coherent
    fraction, and steady states near threshold are not displaced-thermal, so
    all three targets are generally not simultaneously reachable.  Without a
    coherence target, (n_mean, n_var) are matched via the displaced-thermal
    inversion.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if envelope is None:
        envelope, res_field, _ = meanfield_envelope(params)
        if n_res is None:
            n_res = res_field
    s1 = float(envelope.sum())
    s2 = float(np.sum(envelope**2))
    c_mean = np.sqrt(params.dv) / params.N * s1  # beta = mu * c_mean
    c_var = params.dv / params.N**2 * s2  # s^2 = sigma^2 * c_var

    if target.coherence is not None:
        n_coh_t = float(np.clip(target.coherence, 0.0, 1.0)) * target.n_mean
        n_th_t = target.n_mean - n_coh_t
        matched = ("n_mean", "coherence")
    else:
        if target.n_var < target.n_mean - 1e-9:
            raise ValueError("target below the shot-noise floor: need n_var >= n_mean")
        inner = target.n_mean * (target.n_mean + 1.0) - target.n_var
        n_th_t = target.n_mean - np.sqrt(max(inner, 0.0))
        n_coh_t = target.n_mean - n_th_t
        matched = ("n_mean", "n_var")
    beta_sq = max(n_coh_t, 0.0)
    s_sq = max((n_th_t + 0.5) / 2.0, 0.25)

    rng_probe = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    m_probe = max(int(36 / tol**2), 4 * n_traj, 10000)

    residuals = {}
    for _ in range(max_iter):
        beta = np.sqrt(beta_sq)
        s = np.sqrt(s_sq)
        z = beta + s * (rng_probe.standard_normal(m_probe) + 1j * rng_probe.standard_normal(m_probe))
        stats = mode_stats(z)
        residuals = {
            "n_mean": abs(stats.n_mean - target.n_mean) / max(target.n_mean, 1e-12),
            "n_var": abs(stats.n_var - target.n_var) / max(target.n_var, 1e-12),
        }
        if target.coherence is not None:
            residuals["coherence"] = abs(stats.coherence_proxy - target.coherence) / max(
                target.coherence, 1e-12
            )
        if max(residuals[k] for k in matched) < tol:
            break
        beta_sq = max(beta_sq + 0.7 * (n_coh_t - stats.n_coh), 0.0)
        n_th_meas = stats.n_mean - stats.n_coh
        s_sq = max(s_sq + 0.35 * (n_th_t - n_th_meas), 0.25)
    else:
        raise RuntimeError(
            f"initial-state preparation did not converge within {max_iter} iterations; "
            f"best residuals {residuals}"
        )

    mu = np.sqrt(beta_sq) / c_mean
    sigma = np.sqrt(s_sq / c_var)

    ens = TrajectoryEnsemble.from_seed(params, n_traj, seed, n_res=n_res,
                                       meta={"seed": seed, "prepared": True})
    kx_idx, ky_idx = _check_on_lattice(target.k_s, params)
    x, y = params.coordinates()
    dk = 2.0 * np.pi / params.L
    carrier = np.exp(1j * dk * (kx_idx * x + ky_idx * y))
    for j, rng in enumerate(ens.rngs):
        zgrid = mu + sigma * (
            rng.standard_normal((params.N, params.N))
            + 1j * rng.standard_normal((params.N, params.N))
        )
        ens.psi[j] = zgrid * envelope * carrier
    achieved = mode_stats(mode_amplitude(ens.psi, target.k_s, params))
    return PreparedEnsemble(ens, complex(mu), float(sigma), residuals, achieved, envelope)


def phase_variance_series(
    ens: TrajectoryEnsemble,
    k_s,
    t_grid,
    mode: str = "samples",
    r_filter: float = 0.7,
    n_groups: int = 10,
) -> DecaySeries:
    """Evolve the ensemble and record the circular phase variance of mode k_s.

    ``mode="samples"`` takes the variance of per-trajectory mode phases;
    ``mode="bridge"`` convolves the mode samples with the Wigner-to-P kernel
    and evaluates the field's circular variance.  Times must be increasing,
    start at or after the ensemble time, and align with the step size.
    Standard errors come from splitting the ensemble into groups.
    """
    if mode not in ("samples", "bridge"):
        raise ValueError("mode must be 'samples' or 'bridge'")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if t_grid[0] < ens.t - 1e-9:
        raise ValueError("t_grid starts before the ensemble time")
    params = ens.params
    if mode == "bridge":
        from quasip import bridge as _bridge
        from quasip.phasespace import PhaseSpaceGrid, circular_stats

    values = []
    errors = []
    for t_target in t_grid:
        n_steps = int(round((t_target - ens.t) / params.dt))
        if abs(ens.t + n_steps * params.dt - t_target) > 1e-6:
            raise ValueError(f"time {t_target} is not aligned with dt={params.dt}")
        if n_steps > 0:
            evolve_ensemble(ens, n_steps)
        amps = mode_amplitude(ens.psi, k_s, params)
        if mode == "samples":
            phases = np.angle(amps)
            resultant = np.exp(1j * phases)
            values.append(1.0 - float(np.abs(resultant.mean())))
            groups = np.array_split(resultant, min(n_groups, amps.size))
            gv = np.array([1.0 - abs(g.mean()) for g in groups if g.size])
            errors.append(float(gv.std(ddof=1) / np.sqrt(gv.size)) if gv.size > 1 else np.nan)
        else:
            extent = float(np.max(np.abs(amps))) + 4.0
            span = np.ceil(extent / 0.5) * 0.5
            grid = PhaseSpaceGrid(-span, span, -span, span, step=max(span / 60, 0.1))
            table = _bridge.k_table_for(r_filter, r_max=2.0 * np.sqrt(2.0) * span)
            fld = _bridge.convolve_samples(amps, table, grid)
            values.append(circular_stats(fld).variance)
            errors.append(np.nan)
    return DecaySeries(
        np.asarray(t_grid), np.asarray(values), stderrs=np.asarray(errors),
        label=f"var_phi_{mode}",
    )


def effective_potential_diagnostic(params: ModelParams) -> float:
    """Sign-carrying coefficient of the nonlinear effective potential at the
    pump center: g_c [1 - P*_pump (g_r gamma_c)/(g_c gamma_r)], with
    P*_pump = P0 R_r/(gamma_c gamma_r)."""
    p_star = params.P0 * params.R_r / (params.gamma_c * params.gamma_r)
    return params.g_c * (1.0 - p_star * (params.g_r * params.gamma_c) / (params.g_c * params.gamma_r))


def homogeneous_threshold(params: ModelParams) -> float:
    """Mean-field condensation threshold of the uniform-pump model."""
    return params.gamma_c * params.gamma_r / params.R_r


def threshold_bisection(params: ModelParams, p_lo: float = 0.5, p_hi: float = 40.0,
                        tol: float = 1e-3, max_iter: int = 200) -> float:
    """Locate the uniform-pump mean-field threshold by bisecting the linear
    net gain R_r n_res - gamma_c at the reservoir steady state n_res = P/gamma_r."""
    gain = lambda p: params.R_r * (p / params.gamma_r) - params.gamma_c
    if gain(p_lo) >= 0 or gain(p_hi) <= 0:
        raise ValueError("bracket does not straddle the threshold")
    for _ in range(max_iter):
        mid = 0.5 * (p_lo + p_hi)
        if gain(mid) > 0:
            p_hi = mid
        else:
            p_lo = mid
        if p_hi - p_lo < tol * p_hi:
            break
    return 0.5 * (p_lo + p_hi)


def locate_coherence_threshold(
    params: ModelParams,
    n_traj: int = 32,
    seed: int = 0,
    t_relax: float = 300.0,
    p_lo: float = 2.0,
    p_hi: float = 30.0,
    k_s=(0.0, 0.0),
    n_iter: int = 6,
) -> float:
    """Stochastic threshold: bisection on the k_s coherence proxy crossing 1/2.

    Each probe relaxes an ensemble from pump-on vacuum noise for ``t_relax``
    and measures mode statistics; expensive, intended for sweep orchestration
    rather than unit tests.
    """

    def proxy(p0: float) -> float:
        pr = replace(params, P0=p0)
        ens = TrajectoryEnsemble.from_seed(pr, n_traj, seed)
        evolve_ensemble(ens, int(round(t_relax / pr.dt)))
        return mode_stats(mode_amplitude(ens.psi, k_s, pr)).coherence_proxy

    lo, hi = p_lo, p_hi
    f_lo, f_hi = proxy(lo) - 0.5, proxy(hi) - 0.5
    if f_lo >= 0 or f_hi <= 0:
        raise ValueError("bracket does not straddle the coherence threshold")
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if proxy(mid) - 0.5 > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def steady_state_targets(
    params: ModelParams, n_traj: int, seed: int, t_relax: float, k_s=(0.0, 0.0)
) -> tuple:
    """Relax an ensemble from pump-on vacuum noise and measure the steady
    mode statistics used as initial-state preparation targets."""
    ens = TrajectoryEnsemble.from_seed(params, n_traj, seed)
    evolve_ensemble(ens, int(round(t_relax / params.dt)))
    stats = mode_stats(mode_amplitude(ens.psi, k_s, params))
    return stats, ens


def simulate_coherence_decay(
    params: ModelParams,
    n_traj: int,
    seed: int,
    t_relax: float,
    t_grid,
    k_s=(0.0, 0.0),
    mode: str = "samples",
    r_filter: float = 0.7,
) -> tuple:
    """Full decay workflow: steady-state targets, prepared displaced-thermal
    ensemble, evolution with phase-variance recording.

    Returns (DecaySeries, PreparedEnsemble, steady ModeStats).
    """
    stats, relaxed = steady_state_targets(params, n_traj, seed, t_relax, k_s)
    n_var = max(stats.n_var, stats.n_mean)  # clip sub-Poissonian sampling noise
    target = InitPrepTarget(max(stats.n_mean, 0.0), n_var, stats.coherence_proxy, tuple(k_s))
    prep = prepare_initial_state(
        target, params, n_traj, seed + 1, n_res=np.median(relaxed.n_res, axis=0)
    )
    series = phase_variance_series(prep.ensemble, k_s, t_grid, mode=mode, r_filter=r_filter)
    return series, prep, stats
