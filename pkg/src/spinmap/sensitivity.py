"""Sensitive-slice theory: spatial maps of detection SNR and derived volumes.

The signal-to-noise ratio of one nucleus after K weak measurements is

    S(beta) = A(beta) (1 - exp(-Gamma K t_s)) / (Gamma t_s sqrt(K) sqrt(t_pol + K t_s))

with the measurement gain beta encoding position through the transverse
hyperfine coupling.  Close to the electron, back-action (Gamma ~ beta^2)
suppresses the signal; far away the amplitude A ~ beta vanishes, so S peaks
on a shell ("sensitive slice") whose radius is tuned by the interaction time
t_beta.  The count-rate prefactor eps*sqrt(C) is dropped throughout: values
are relative SNR, and all derived geometric quantities are invariant to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import CONSTANTS, PhysicalConstants
from .signal_model import ExperimentConfig, GlobalParams, decay_rate_components

__all__ = [
    "SliceMap",
    "SliceGrid",
    "Grid3D",
    "SensitivityField3D",
    "sensitivity",
    "optimal_beta",
    "slice_map",
    "sensitivity_field_3d",
    "half_signal_mask",
    "sensitive_volume",
    "expected_spin_count",
    "ridge_radius",
    "slice_scaling_configs",
    "write_slice_map_csv",
]


def _snr_from_couplings(a_par, a_perp, globals_: GlobalParams, config: ExperimentConfig):
    """Vectorized SNR for coupling arrays; |sin beta| keeps the field nonnegative."""
    beta = np.asarray(a_perp, dtype=float) * config.t_beta / math.pi
    amp = 0.5 * globals_.p0 * np.abs(np.sin(beta))
    gamma = decay_rate_components(a_par, a_perp, globals_, config.t_beta, config.t_s)
    x = gamma * config.record_duration
    # (1 - e^-x)/(Gamma t_s) = K * (-expm1(-x)/x), finite for x -> 0
    with np.errstate(invalid="ignore"):
        h = np.where(x > 0.0, -np.expm1(-x) / np.where(x > 0.0, x, 1.0), 1.0)
    norm = math.sqrt(config.k_samples) * math.sqrt(config.t_pol + config.record_duration)
    return amp * config.k_samples * h / norm


def sensitivity(
    beta: float,
    globals_: GlobalParams,
    config: ExperimentConfig,
    a_par: float = 0.0,
) -> float:
    """SNR of one spin with measurement gain beta and parallel coupling a_par.

    The transverse coupling is reconstructed from beta = a_perp t_beta / pi;
    intrinsic (1/T2n*) and optical-readout (t_ell) dephasing enter whenever
    the globals carry them.
    """
    if np.any(np.asarray(beta) < 0.0):
        raise ValueError("beta must be nonnegative")
    a_perp = np.asarray(beta, dtype=float) * math.pi / config.t_beta
    out = _snr_from_couplings(a_par, a_perp, globals_, config)
    return float(out) if np.isscalar(beta) or np.asarray(beta).ndim == 0 else out


def optimal_beta(k_samples: int) -> float:
    """Measurement gain sqrt(2/K) balancing signal against back-action."""
    if k_samples < 2:
        raise ValueError("k_samples must be >= 2")
    return math.sqrt(2.0 / k_samples)


@dataclass(frozen=True)
class SliceGrid:
    """Cylindrical (rho, z) evaluation grid for 2D slice maps, meters."""

    rho_max: float = 3.0e-9
    z_max: float = 3.0e-9
    n_rho: int = 240
    n_z: int = 240

    def __post_init__(self):
        if self.n_rho < 2 or self.n_z < 2:
            raise ValueError("grid resolution must be at least 2 per axis")

    @property
    def rho_axis(self) -> np.ndarray:
        return np.linspace(0.0, self.rho_max, self.n_rho)

    @property
    def z_axis(self) -> np.ndarray:
        return np.linspace(-self.z_max, self.z_max, self.n_z)


@dataclass(frozen=True, eq=False)
class SliceMap:
    """Sensitivity over a (rho, z) half-plane; values indexed [i_rho, i_z]."""

    rho_axis: np.ndarray
    z_axis: np.ndarray
    values: np.ndarray


def _couplings_on_grid(rho, z, consts: PhysicalConstants):
    """Dipole couplings at cylindrical coordinates (arrays broadcast together)."""
    r = np.sqrt(rho**2 + z**2)
    safe_r = np.where(r > 0.0, r, np.inf)
    cos_t = z / safe_r
    sin_t = rho / safe_r
    c_over_r3 = consts.dipole_coefficient / safe_r**3
    a_par = c_over_r3 * (3.0 * cos_t**2 - 1.0)
    a_perp = c_over_r3 * 3.0 * np.abs(sin_t * cos_t)
    return a_par, a_perp


def slice_map(
    config: ExperimentConfig,
    globals_: GlobalParams,
    grid: SliceGrid = SliceGrid(),
    consts: PhysicalConstants = CONSTANTS,
) -> SliceMap:
    """Evaluate the sensitivity on a (rho, z) grid for one interaction time."""
    rho = grid.rho_axis[:, None]
    z = grid.z_axis[None, :]
    a_par, a_perp = _couplings_on_grid(rho, z, consts)
    values = _snr_from_couplings(a_par, a_perp, globals_, config)
    return SliceMap(rho_axis=grid.rho_axis, z_axis=grid.z_axis, values=values)


@dataclass(frozen=True)
class Grid3D:
    """Cube of voxels centered on the electron spin."""

    half_width: float = 3.0e-9
    n: int = 120

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid resolution must be at least 2 per axis")

    @property
    def axis(self) -> np.ndarray:
        """Voxel-center coordinates along each Cartesian axis."""
        step = 2.0 * self.half_width / self.n
        return -self.half_width + step * (np.arange(self.n) + 0.5)

    @property
    def voxel_volume(self) -> float:
        return (2.0 * self.half_width / self.n) ** 3


@dataclass(frozen=True, eq=False)
class SensitivityField3D:
    """Combined sensitivity of a set of interaction times on a voxel cube."""

    axis: np.ndarray
    values: np.ndarray  # shape (n, n, n), indexed [ix, iy, iz]
    voxel_volume: float


def sensitivity_field_3d(
    configs,
    globals_: GlobalParams,
    grid: Grid3D = Grid3D(),
    consts: PhysicalConstants = CONSTANTS,
) -> SensitivityField3D:
    """Combine the per-t_beta sensitivities in quadrature on a 3D grid.

    Independent measurements add SNR in quadrature, so the combined field is
    sqrt(sum_c S_c^2) over the supplied configurations.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("at least one configuration is required")
    ax = grid.axis
    rho = np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)[:, :, None]
    z = ax[None, None, :]
    a_par, a_perp = _couplings_on_grid(rho, z, consts)
    total = np.zeros((grid.n, grid.n, grid.n))
    for config in configs:
        total += _snr_from_couplings(a_par, a_perp, globals_, config) ** 2
    return SensitivityField3D(
        axis=ax, values=np.sqrt(total), voxel_volume=grid.voxel_volume
    )


def half_signal_mask(values: np.ndarray, fraction: float = 0.5) -> np.ndarray:
    """Smallest voxel set (by descending sensitivity) holding `fraction` of the signal.

    Signal is accumulated as power (amplitude SNR squared), the quantity that
    adds across voxels and across independent measurements; the mask is the
    most sensitive voxel set whose summed power reaches the requested fraction
    of the total.
    """
    flat = values.ravel()
    power = flat**2
    total = float(power.sum())
    if not total > 0.0:
        raise ValueError("sensitivity field is identically zero")
    order = np.argsort(flat)[::-1]
    csum = np.cumsum(power[order])
    count = int(np.searchsorted(csum, fraction * total)) + 1
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:count]] = True
    return mask.reshape(values.shape)


def sensitive_volume(
    configs,
    globals_: GlobalParams,
    grid: Grid3D = Grid3D(),
    consts: PhysicalConstants = CONSTANTS,
) -> float:
    """Volume (m^3) of the region contributing 50% of the total signal power."""
    field = sensitivity_field_3d(configs, globals_, grid, consts)
    return int(half_signal_mask(field.values).sum()) * field.voxel_volume


def expected_spin_count(volume: float, density: float) -> float:
    """Expected number of nuclei in a sensitive volume at the given density."""
    if volume < 0.0 or density < 0.0:
        raise ValueError("volume and density must be nonnegative")
    return density * volume


def ridge_radius(
    config: ExperimentConfig,
    globals_: GlobalParams,
    consts: PhysicalConstants = CONSTANTS,
    theta: float = 0.25 * math.pi,
    r_bounds: tuple[float, float] = (0.05e-9, 30.0e-9),
) -> float:
    """Radius of maximum sensitivity along a fixed polar direction (m).

    At theta = 45 deg the transverse coupling at fixed radius is largest, so
    this ray crosses the sensitive slice at its outermost point.
    """
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    c3 = consts.dipole_coefficient

    def neg_snr(r):
        pref = c3 / r**3
        return -float(
            _snr_from_couplings(
                pref * (3.0 * cos_t**2 - 1.0),
                pref * 3.0 * abs(sin_t * cos_t),
                globals_,
                config,
            )
        )

    res = minimize_scalar(
        neg_snr, bounds=r_bounds, method="bounded", options={"xatol": 1e-14}
    )
    return float(res.x)


def slice_scaling_configs(
    t_betas,
    record_duration: float,
    b0: float,
    gamma_n: float,
    t_pol: float,
    contrast_eps: float = 0.3,
    counts_c: float = 0.05,
) -> list[ExperimentConfig]:
    """Config family for slice-radius scaling studies.

    Readouts are run back to back (t_s = t_beta) with a fixed total record
    duration, so K = record_duration / t_beta; under these conditions the
    slice radius follows t_beta^(1/6).
    """
    configs = []
    for t_beta in t_betas:
        k = int(round(record_duration / t_beta))
        configs.append(
            ExperimentConfig(
                b0=b0,
                gamma_n=gamma_n,
                t_s=float(t_beta),
                t_beta=float(t_beta),
                k_samples=k,
                t_pol=t_pol,
                contrast_eps=contrast_eps,
                counts_c=counts_c,
            )
        )
    return configs


def write_slice_map_csv(path, smap: SliceMap) -> None:
    """Export a slice map as CSV rows (rho_nm, z_nm, sensitivity)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rho_nm,z_nm,sensitivity\n")
        for i, rho in enumerate(smap.rho_axis):
            for j, z in enumerate(smap.z_axis):
                fh.write(f"{rho * 1e9!r},{z * 1e9!r},{smap.values[i, j]!r}\n")
