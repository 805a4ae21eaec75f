"""Fit uncertainties: bootstrap resampling and Monte Carlo position errors.

The residues of the final fit define per-spectrum noise statistics; adding
fresh Gaussian noise of that size to the model spectra produces artificial
datasets, each re-minimized from the original solution by a deterministic
local search.  The spread of the refitted parameters is the quoted standard
error, and independent-normal Monte Carlo propagation through the position
inversion turns coupling errors into (sigma_r, sigma_theta, sigma_phi) and an
uncertainty volume

    dV = (2 sigma_r) (2 r sigma_theta) (2 r sin(theta) sigma_phi),

the product of +-1-standard-error arc lengths.  dV is an empirically
validated surrogate for the published uncertainty volumes (it reproduces the
well-constrained reference rows); the exact published construction is not
documented.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import CONSTANTS, PhysicalConstants, position_from_hyperfine
from .likelihood import (
    ClusterModel,
    DatasetBundle,
    FitResult,
    decode_model,
    encode_model,
    model_residues,
    neg_log_likelihood,
)
from .signal_model import ComplexSpectrum, TWO_PI

__all__ = [
    "PositionUncertainty",
    "BootstrapResult",
    "local_refine",
    "bootstrap",
    "propagate_position_errors",
    "write_result_table_csv",
]

logger = logging.getLogger(__name__)

# characteristic scales per parameter kind, used to normalize the search space
_SPIN_SCALES = (TWO_PI * 1.0e3, TWO_PI * 1.0e3, 1.0)  # a_par, a_perp (rad/s), phi (rad)
_GLOBAL_SCALES = (0.1, 10.0, 1.0e-6)  # p0, gamma0 (1/s), t_ell (s)


@dataclass(frozen=True)
class PositionUncertainty:
    """Monte-Carlo position statistics of one spin."""

    r_mean: float
    theta_mean: float
    phi_mean: float
    sigma_r: float
    sigma_theta: float
    sigma_phi: float
    delta_v: float  # m^3

    @property
    def delta_v_a3(self) -> float:
        return self.delta_v * 1e30


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Bootstrap means and standard errors in the theta parameter layout."""

    mean_model: ClusterModel
    param_means: np.ndarray
    param_stderr: np.ndarray
    position_stats: tuple[PositionUncertainty, ...]
    resamples: int

    @property
    def spin_errors(self) -> np.ndarray:
        """Standard errors of (a_par, a_perp, phi) per spin, shape (n, 3)."""
        n = (self.param_stderr.size - 3) // 3
        return self.param_stderr[: 3 * n].reshape(n, 3)

    @property
    def global_errors(self) -> np.ndarray:
        """Standard errors of (p0, gamma0, t_ell)."""
        return self.param_stderr[-3:]

    @property
    def delta_vs_a3(self) -> np.ndarray:
        return np.array([ps.delta_v_a3 for ps in self.position_stats])


def _scales(n_spins: int) -> np.ndarray:
    out = np.empty(3 * n_spins + 3)
    for i in range(n_spins):
        out[3 * i : 3 * i + 3] = _SPIN_SCALES
    out[-3:] = _GLOBAL_SCALES
    return out


def local_refine(
    start: ClusterModel,
    bundle: DatasetBundle,
    ftol: float = 1e-10,
    max_iters: int = 10_000,
) -> ClusterModel:
    """Deterministic local minimization of the likelihood term.

    Runs a bounded quasi-Newton descent in kind-normalized coordinates from
    the given model; terminates when the relative cost change drops below
    `ftol` or after `max_iters` iterations.  Only physicality bounds are
    imposed (a_perp >= 0, 0 < p0 <= 1, gamma0 >= 0, t_ell >= 0).
    """
    n = start.n_spins
    k_spec = bundle.k_spectral
    scales = _scales(n)
    x0 = encode_model(start) / scales

    lo = np.full(x0.size, -np.inf)
    hi = np.full(x0.size, np.inf)
    for i in range(n):
        lo[3 * i + 1] = 0.0  # a_perp
    lo[-3], hi[-3] = 1e-6 / _GLOBAL_SCALES[0], 1.0 / _GLOBAL_SCALES[0]  # p0
    lo[-2] = 0.0  # gamma0
    lo[-1] = 0.0  # t_ell

    def cost(x):
        model = decode_model(x * scales, n)
        return neg_log_likelihood(model_residues(model, bundle), k_spec, model.m_params)

    res = minimize(
        cost,
        x0,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        options={"ftol": ftol, "maxiter": max_iters},
    )
    if not np.all(np.isfinite(res.x)):
        raise ValueError("local refinement produced non-finite parameters")
    return decode_model(res.x * scales, n)


def _resampled_spectra(
    bundle: DatasetBundle,
    model: ClusterModel,
    noise_stats,
    rng: np.random.Generator,
):
    """Model spectra plus Gaussian noise drawn from the residue statistics."""
    from .signal_model import fid, fid_to_spectrum

    out = []
    for config, (std_re, std_im) in zip(bundle.configs, noise_stats):
        base = fid_to_spectrum(fid(model.spins, model.globals_, config))
        re = base.re + rng.normal(0.0, std_re, base.re.size)
        im = base.im + rng.normal(0.0, std_im, base.im.size)
        out.append(
            ComplexSpectrum(freq_hz=base.freq_hz, re=re, im=im, psd=re**2 + im**2)
        )
    return out


def bootstrap(
    fit: FitResult,
    bundle: DatasetBundle,
    resamples: int = 100,
    seed: int = 0,
    mc_samples: int = 100_000,
    consts: PhysicalConstants = CONSTANTS,
) -> BootstrapResult:
    """Parameter uncertainties by residue-based bootstrap resampling.

    The mean and standard deviation of the Re and Im fit residues of each
    spectrum set the noise level; `resamples` artificial bundles (model
    spectra + zero-mean Gaussian noise of that standard deviation) are each
    re-minimized starting from the fitted solution.  Returns per-parameter
    means and standard errors plus propagated per-spin position statistics.
    """
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    model = fit.model
    residues = model_residues(model, bundle)
    noise_stats = [
        (float(np.std(res["re"], ddof=1)), float(np.std(res["im"], ddof=1)))
        for res in residues
    ]
    streams = np.random.SeedSequence(seed).spawn(resamples + 1)
    thetas = np.empty((resamples, model.m_params))
    for p in range(resamples):
        rng = np.random.default_rng(streams[p])
        synthetic = bundle.with_spectra(
            _resampled_spectra(bundle, model, noise_stats, rng)
        )
        thetas[p] = encode_model(local_refine(model, synthetic))
    means = thetas.mean(axis=0)
    stderr = thetas.std(axis=0, ddof=1)
    mean_model = decode_model(means, model.n_spins)
    mc_rng = np.random.default_rng(streams[-1])
    position_stats = tuple(
        propagate_position_errors(
            spin_mean=means[3 * i : 3 * i + 3],
            spin_err=stderr[3 * i : 3 * i + 3],
            mc_samples=mc_samples,
            rng=mc_rng,
            consts=consts,
        )
        for i in range(model.n_spins)
    )
    return BootstrapResult(
        mean_model=mean_model,
        param_means=means,
        param_stderr=stderr,
        position_stats=position_stats,
        resamples=resamples,
    )


def propagate_position_errors(
    spin_mean,
    spin_err,
    mc_samples: int = 100_000,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    consts: PhysicalConstants = CONSTANTS,
) -> PositionUncertainty:
    """Monte Carlo propagation of coupling errors to position errors.

    Draws (a_par, a_perp, phi) from independent normals around `spin_mean`
    with standard deviations `spin_err` (a_perp <= 0 redrawn, logged when the
    rejection fraction exceeds 10%), maps every sample through the position
    inversion, and reduces to means, standard deviations and the uncertainty
    volume dV = 8 sigma_r r^2 sin(theta) sigma_theta sigma_phi.
    """
    if mc_samples < 100:
        raise ValueError("mc_samples must be >= 100")
    if rng is None:
        rng = np.random.default_rng(seed)
    a_par_m, a_perp_m, phi_m = (float(v) for v in spin_mean)
    a_par_s, a_perp_s, phi_s = (float(v) for v in spin_err)

    a_par = rng.normal(a_par_m, a_par_s, mc_samples)
    phi = rng.normal(phi_m, phi_s, mc_samples)
    a_perp = rng.normal(a_perp_m, a_perp_s, mc_samples)
    rejected = 0
    bad = a_perp <= 0.0
    while np.any(bad):
        rejected += int(bad.sum())
        a_perp[bad] = rng.normal(a_perp_m, a_perp_s, int(bad.sum()))
        bad = a_perp <= 0.0
    if rejected > 0.1 * mc_samples:
        logger.info(
            "rejected %d/%d nonpositive a_perp draws during error propagation",
            rejected,
            mc_samples,
        )

    x = a_par / a_perp
    theta = np.arctan(0.5 * (-3.0 * x + np.sqrt(9.0 * x * x + 8.0)))
    r = (consts.dipole_coefficient * 3.0 * np.sin(theta) * np.cos(theta) / a_perp) ** (
        1.0 / 3.0
    )
    r_mean = float(r.mean())
    theta_mean = float(theta.mean())
    sigma_r = float(r.std(ddof=1))
    sigma_theta = float(theta.std(ddof=1))
    sigma_phi = float(phi.std(ddof=1))
    delta_v = (
        8.0 * sigma_r * r_mean**2 * math.sin(theta_mean) * sigma_theta * sigma_phi
    )
    return PositionUncertainty(
        r_mean=r_mean,
        theta_mean=theta_mean,
        phi_mean=float(phi.mean()),
        sigma_r=sigma_r,
        sigma_theta=sigma_theta,
        sigma_phi=sigma_phi,
        delta_v=delta_v,
    )


def write_result_table_csv(path, result: BootstrapResult) -> None:
    """Export bootstrap results in the reference-table column layout."""
    n = len(result.position_stats)
    means = result.param_means
    errs = result.param_stderr
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "index,a_par_khz,a_par_err_khz,a_perp_khz,a_perp_err_khz,"
            "r_nm,r_err_nm,theta_deg,theta_err_deg,phi_deg,phi_err_deg,delta_v_a3\n"
        )
        for i in range(n):
            ps = result.position_stats[i]
            row = (
                means[3 * i] / TWO_PI / 1e3,
                errs[3 * i] / TWO_PI / 1e3,
                means[3 * i + 1] / TWO_PI / 1e3,
                errs[3 * i + 1] / TWO_PI / 1e3,
                ps.r_mean * 1e9,
                ps.sigma_r * 1e9,
                math.degrees(ps.theta_mean),
                math.degrees(ps.sigma_theta),
                math.degrees(ps.phi_mean),
                math.degrees(ps.sigma_phi),
                ps.delta_v_a3,
            )
            fh.write(f"{i + 1}," + ",".join(f"{v:.2f}" for v in row) + "\n")
