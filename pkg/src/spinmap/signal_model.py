"""Analytic forward model for weakly-measured free-induction-decay signals.

A cluster of n nuclear spins sampled by a train of K weak measurements
produces the trace

    x(k t_s) = sum_i A(beta_i) exp(-Gamma_i k t_s) cos(omega_i k t_s + phi_i)

where beta_i = a_perp_i t_beta / pi is the measurement gain of spin i,
A = p0 sin(beta)/2 the probability amplitude, Gamma the total dephasing rate
(measurement back-action + intrinsic + optical-readout contributions) and
omega_i the average precession frequency.  The first sample sits at t = t_s.

Conventions
-----------
* All couplings and frequencies are angular (rad/s) internally; file and CSV
  interfaces use ordinary frequencies (value / 2 pi).
* The Larmor reference is omega0 = |gamma_n| B0; spectra report frequency
  relative to the detection frequency (the aliased Larmor position).
* Spectra use the unnormalized one-sided DFT X_j = sum_k x_k e^(-i 2 pi k j / K)
  over bins j = 1 .. K/2, with no windowing or zero padding, so model and data
  share identical leakage and truncation behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpinParams",
    "GlobalParams",
    "ExperimentConfig",
    "FidTrace",
    "ComplexSpectrum",
    "measurement_gain",
    "precession_frequency",
    "amplitude",
    "decay_rate",
    "decay_rate_components",
    "fid",
    "fid_to_spectrum",
    "write_trace",
    "read_trace",
    "write_spectrum_csv",
]

TWO_PI = 2.0 * math.pi

# phase fit window chosen to avoid wrapping artifacts for phases near 0 or 360 deg
PHI_WINDOW = (-0.5 * math.pi, 2.5 * math.pi)


@dataclass(frozen=True)
class SpinParams:
    """Per-nucleus fit parameters.

    a_par : parallel hyperfine coupling (rad/s, signed)
    a_perp : transverse hyperfine coupling (rad/s, >= 0)
    phi : signal phase / hyperfine azimuth (rad), kept in [-pi/2, 5 pi/2)
    """

    a_par: float
    a_perp: float
    phi: float

    def __post_init__(self):
        if not np.isfinite(self.a_par):
            raise ValueError("a_par must be finite")
        if not (np.isfinite(self.a_perp) and self.a_perp >= 0.0):
            raise ValueError(f"a_perp must be nonnegative, got {self.a_perp}")
        phi = float(self.phi)
        if not np.isfinite(phi):
            raise ValueError("phi must be finite")
        if not (PHI_WINDOW[0] <= phi < PHI_WINDOW[1]):
            phi = (phi - PHI_WINDOW[0]) % TWO_PI + PHI_WINDOW[0]
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class GlobalParams:
    """Cluster-wide nuisance parameters shared by all spins.

    p0 : initial nuclear polarization, in (0, 1]
    t2n_star : intrinsic nuclear dephasing time (s); may be numpy.inf
    t_ell : effective optical-readout dephasing time (s), >= 0
    """

    p0: float
    t2n_star: float
    t_ell: float

    def __post_init__(self):
        if not (0.0 < self.p0 <= 1.0):
            raise ValueError(f"p0 must lie in (0, 1], got {self.p0}")
        if not self.t2n_star > 0.0:
            raise ValueError("t2n_star must be positive (numpy.inf allowed)")
        if not (np.isfinite(self.t_ell) and self.t_ell >= 0.0):
            raise ValueError("t_ell must be nonnegative and finite")

    @property
    def gamma0(self) -> float:
        """Intrinsic dephasing rate 1/T2n* (0 when t2n_star is infinite)."""
        return 0.0 if np.isinf(self.t2n_star) else 1.0 / self.t2n_star

    @classmethod
    def from_gamma0(cls, p0: float, gamma0: float, t_ell: float) -> "GlobalParams":
        return cls(p0=p0, t2n_star=np.inf if gamma0 == 0.0 else 1.0 / gamma0, t_ell=t_ell)


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol constants of one measurement run.

    b0 : bias field (T)
    gamma_n : nuclear gyromagnetic ratio magnitude (rad/s/T)
    t_s : sampling period (s)
    t_beta : interaction time of one weak readout (s), <= t_s
    k_samples : number of weak measurements K (>= 2)
    t_pol : polarization time per trace (s)
    contrast_eps : optical contrast epsilon (dimensionless)
    counts_c : photons collected per readout C (dimensionless)
    """

    b0: float
    gamma_n: float
    t_s: float
    t_beta: float
    k_samples: int
    t_pol: float
    contrast_eps: float
    counts_c: float

    def __post_init__(self):
        if self.b0 <= 0.0 or self.gamma_n <= 0.0:
            raise ValueError("b0 and gamma_n must be positive")
        for name in ("t_s", "t_beta", "t_pol", "contrast_eps", "counts_c"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.t_beta > self.t_s:
            raise ValueError("t_beta must not exceed the sampling period t_s")
        if int(self.k_samples) != self.k_samples or self.k_samples < 2:
            raise ValueError("k_samples must be an integer >= 2")
        object.__setattr__(self, "k_samples", int(self.k_samples))

    @property
    def omega0(self) -> float:
        """Larmor angular frequency |gamma_n| B0 (rad/s)."""
        return self.gamma_n * self.b0

    @property
    def larmor_hz(self) -> float:
        return self.omega0 / TWO_PI

    @property
    def sample_times(self) -> np.ndarray:
        """Sampling instants t = k t_s for k = 1 .. K."""
        return self.t_s * np.arange(1, self.k_samples + 1)

    @property
    def reference_offset_hz(self) -> float:
        """Aliased position of the Larmor frequency in the one-sided band.

        Undersampling folds the Larmor line to larmor_hz mod 1/t_s; all
        supported configurations place this below the Nyquist frequency.
        """
        return self.larmor_hz % (1.0 / self.t_s)

    @property
    def record_duration(self) -> float:
        return self.k_samples * self.t_s


@dataclass(frozen=True, eq=False)
class FidTrace:
    """K real probability-amplitude samples plus their acquisition settings."""

    config: ExperimentConfig
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (self.config.k_samples,):
            raise ValueError(
                f"expected {self.config.k_samples} samples, got shape {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    """One-sided complex spectrum of a trace (bins 1 .. K/2).

    freq_hz is relative to the detection frequency; psd = re^2 + im^2.
    """

    freq_hz: np.ndarray
    re: np.ndarray
    im: np.ndarray
    psd: np.ndarray


def measurement_gain(a_perp, t_beta):
    """Measurement gain beta = a_perp t_beta / pi of one weak readout."""
    if np.any(np.asarray(a_perp) < 0.0) or np.any(np.asarray(t_beta) <= 0.0):
        raise ValueError("require a_perp >= 0 and t_beta > 0")
    return a_perp * t_beta / math.pi


def precession_frequency(a_par, a_perp, omega0):
    """Average nuclear precession frequency (rad/s).

    Exact form omega = (omega0 + sqrt((omega0 + a_par)^2 + a_perp^2)) / 2,
    the mean of the two electron-branch frequencies.  The weak-coupling
    approximation omega0 + a_par/2 is not applied here.
    """
    if np.any(np.asarray(omega0) <= 0.0):
        raise ValueError("omega0 must be positive")
    return 0.5 * (omega0 + np.hypot(omega0 + np.asarray(a_par, dtype=float), a_perp))


def amplitude(p0, beta):
    """Probability amplitude A = p0 sin(beta) / 2 of one spin's FID signal."""
    if np.any(np.asarray(p0) <= 0.0) or np.any(np.asarray(p0) > 1.0):
        raise ValueError("p0 must lie in (0, 1]")
    return 0.5 * p0 * np.sin(beta)


def decay_rate_components(a_par, a_perp, globals_: GlobalParams, t_beta, t_s):
    """Total dephasing rate for given couplings (array-polymorphic), in 1/s.

    Gamma = a_perp^2 t_beta^2 / (4 t_s pi^2)   measurement back-action
          + 1 / T2n*                           intrinsic dephasing
          + a_par^2 t_ell^2 / (2 t_s)          optical-readout dephasing
    """
    beta = np.asarray(a_perp, dtype=float) * t_beta / math.pi
    gamma_beta = beta**2 / (4.0 * t_s)
    gamma_opt = (np.asarray(a_par, dtype=float) * globals_.t_ell) ** 2 / (2.0 * t_s)
    return gamma_beta + globals_.gamma0 + gamma_opt


def decay_rate(spin: SpinParams, globals_: GlobalParams, t_beta: float, t_s: float) -> float:
    """Total dephasing rate of one spin's FID signal (1/s)."""
    return float(
        decay_rate_components(spin.a_par, spin.a_perp, globals_, t_beta, t_s)
    )


def fid(spins, globals_: GlobalParams, config: ExperimentConfig) -> FidTrace:
    """Synthesize the noiseless multi-spin FID trace.

    The trace is the superposition of single-spin contributions; an empty
    cluster yields the zero trace.
    """
    t = config.sample_times
    x = np.zeros(config.k_samples)
    for spin in spins:
        beta = measurement_gain(spin.a_perp, config.t_beta)
        omega = precession_frequency(spin.a_par, spin.a_perp, config.omega0)
        gamma = decay_rate(spin, globals_, config.t_beta, config.t_s)
        x += amplitude(globals_.p0, beta) * np.exp(-gamma * t) * np.cos(omega * t + spin.phi)
    return FidTrace(config=config, samples=x)


def fid_to_spectrum(trace: FidTrace) -> ComplexSpectrum:
    """One-sided DFT of a trace, X_j = sum_{k=1..K} x_k e^(-i 2 pi k j / K).

    Bins j = 1 .. K/2 are returned (DC dropped); the frequency axis is
    j / (K t_s) shifted by the aliased Larmor position, i.e. relative to the
    detection frequency.
    """
    x = trace.samples
    k_samples = x.size
    half = k_samples // 2
    j = np.arange(half + 1)
    # numpy's rfft indexes samples from 0; the model's first sample is k = 1
    spec = np.fft.rfft(x) * np.exp(-2j * math.pi * j / k_samples)
    spec = spec[1 : half + 1]
    freq = j[1 : half + 1] / (k_samples * trace.config.t_s)
    re = np.ascontiguousarray(spec.real)
    im = np.ascontiguousarray(spec.imag)
    return ComplexSpectrum(
        freq_hz=freq - trace.config.reference_offset_hz,
        re=re,
        im=im,
        psd=re**2 + im**2,
    )


# ---------------------------------------------------------------------------
# trace and spectrum persistence
# ---------------------------------------------------------------------------

_HEADER_KEYS = (
    "b0_mT",
    "gamma_n_MHz_per_T",
    "t_s_us",
    "t_beta_us",
    "k_samples",
    "t_pol_ms",
    "contrast",
    "counts",
)


def _config_to_header(config: ExperimentConfig) -> dict:
    return {
        "b0_mT": config.b0 * 1e3,
        "gamma_n_MHz_per_T": config.gamma_n / TWO_PI / 1e6,
        "t_s_us": config.t_s * 1e6,
        "t_beta_us": config.t_beta * 1e6,
        "k_samples": config.k_samples,
        "t_pol_ms": config.t_pol * 1e3,
        "contrast": config.contrast_eps,
        "counts": config.counts_c,
    }


def _config_from_header(header: dict) -> ExperimentConfig:
    return ExperimentConfig(
        b0=float(header["b0_mT"]) * 1e-3,
        gamma_n=float(header["gamma_n_MHz_per_T"]) * 1e6 * TWO_PI,
        t_s=float(header["t_s_us"]) * 1e-6,
        t_beta=float(header["t_beta_us"]) * 1e-6,
        k_samples=int(header["k_samples"]),
        t_pol=float(header["t_pol_ms"]) * 1e-3,
        contrast_eps=float(header["contrast"]),
        counts_c=float(header["counts"]),
    )


def write_trace(path, trace: FidTrace) -> None:
    """Write a trace as a key = value header followed by one sample per line."""
    header = _config_to_header(trace.config)
    lines = [f"{key} = {header[key]!r}" for key in _HEADER_KEYS]
    lines[_HEADER_KEYS.index("k_samples")] = f"k_samples = {trace.config.k_samples}"
    lines += [repr(float(v)) for v in trace.samples]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path) -> FidTrace:
    """Read a trace written by :func:`write_trace`."""
    header = {}
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
            else:
                samples.append(float(line))
    missing = [key for key in _HEADER_KEYS if key not in header]
    if missing:
        raise ValueError(f"trace header is missing keys: {missing}")
    config = _config_from_header(header)
    return FidTrace(config=config, samples=np.array(samples))


def write_spectrum_csv(path, spectrum: ComplexSpectrum) -> None:
    """Export a spectrum as CSV with columns freq_hz, re, im, psd."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("freq_hz,re,im,psd\n")
        for f, re, im, psd in zip(spectrum.freq_hz, spectrum.re, spectrum.im, spectrum.psd):
            fh.write(f"{f!r},{re!r},{im!r},{psd!r}\n")
