"""Information-criterion cost for cluster-model selection.

Fitting happens in the spectral domain: for each dataset (one per interaction
time) the model trace is synthesized, transformed exactly like the data, and
separate residues are formed for the real part, imaginary part and power of
the complex spectrum.  The joint negative log-likelihood over D datasets is

    G = -3 D K ln(K - M - 1) + K sum_d sum_part ln(RSS_{d,part})

with K the number of spectral points per part, M = 3n + 3 the parameter
count, and the K - M - 1 denominator coming from the unbiased variance
estimator.  Model order is selected by minimizing IC = G + P with the
weighted-average penalty P_WIC = (P_AIC^2 + P_BIC^2) / (P_AIC + P_BIC).

Only IC differences between models matter; absolute values carry no meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Position
from .signal_model import (
    ComplexSpectrum,
    ExperimentConfig,
    FidTrace,
    GlobalParams,
    SpinParams,
    fid,
    fid_to_spectrum,
)

__all__ = [
    "ClusterModel",
    "DatasetBundle",
    "CostBreakdown",
    "FitResult",
    "PARTS",
    "RSS_FLOOR",
    "model_residues",
    "neg_log_likelihood",
    "penalty",
    "ic_cost",
    "encode_model",
    "decode_model",
]

PARTS = ("re", "im", "psd")

# keeps ln(RSS) finite on noiseless self-fits
RSS_FLOOR = 1e-300


@dataclass(frozen=True)
class ClusterModel:
    """A candidate cluster: n per-spin parameter triples plus the globals."""

    spins: tuple[SpinParams, ...]
    globals_: GlobalParams

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))

    @property
    def n_spins(self) -> int:
        return len(self.spins)

    @property
    def m_params(self) -> int:
        return 3 * self.n_spins + 3


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """D recorded traces (one per t_beta) with their complex spectra."""

    traces: tuple[FidTrace, ...]
    spectra: tuple[ComplexSpectrum, ...]

    def __post_init__(self):
        traces = tuple(self.traces)
        spectra = tuple(self.spectra)
        if not traces or len(traces) != len(spectra):
            raise ValueError("need one spectrum per trace, at least one dataset")
        k = {tr.config.k_samples for tr in traces}
        ts = {tr.config.t_s for tr in traces}
        if len(k) != 1 or len(ts) != 1:
            raise ValueError("all datasets must share k_samples and t_s")
        t_betas = [tr.config.t_beta for tr in traces]
        if len(set(t_betas)) != len(t_betas):
            raise ValueError("interaction times must be distinct across datasets")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "spectra", spectra)

    @classmethod
    def from_traces(cls, traces) -> "DatasetBundle":
        traces = tuple(traces)
        return cls(traces=traces, spectra=tuple(fid_to_spectrum(tr) for tr in traces))

    def with_spectra(self, spectra) -> "DatasetBundle":
        """Same acquisition settings with replaced spectra (bootstrap resamples)."""
        return DatasetBundle(traces=self.traces, spectra=tuple(spectra))

    @property
    def n_datasets(self) -> int:
        return len(self.traces)

    @property
    def k_samples(self) -> int:
        return self.traces[0].config.k_samples

    @property
    def k_spectral(self) -> int:
        """Spectral points per part (one-sided bins 1 .. K/2)."""
        return self.k_samples // 2

    @property
    def configs(self) -> tuple[ExperimentConfig, ...]:
        return tuple(tr.config for tr in self.traces)


def model_residues(model: ClusterModel, bundle: DatasetBundle):
    """Per-dataset spectral residues {part: data - model} for re, im and psd."""
    residues = []
    for config, spectrum in zip(bundle.configs, bundle.spectra):
        model_spec = fid_to_spectrum(fid(model.spins, model.globals_, config))
        residues.append(
            {
                "re": spectrum.re - model_spec.re,
                "im": spectrum.im - model_spec.im,
                "psd": spectrum.psd - model_spec.psd,
            }
        )
    return residues


def _rss_table(residues):
    return tuple(
        {part: float(np.dot(res[part], res[part])) for part in PARTS} for res in residues
    )


def neg_log_likelihood(residues, k_samples: int, m_params: int) -> float:
    """Joint negative log-likelihood (up to model-independent constants).

    `residues` is the structure returned by :func:`model_residues`;
    `k_samples` is the number of spectral points per part.  Requires
    k_samples > m_params + 1 for the unbiased variance denominator.
    """
    dof = k_samples - m_params - 1
    if dof <= 0:
        raise ValueError(
            f"too few samples for {m_params} parameters (K - M - 1 = {dof})"
        )
    rss = _rss_table(residues)
    d = len(rss)
    log_sum = sum(math.log(max(table[part], RSS_FLOOR)) for table in rss for part in PARTS)
    return -3.0 * d * k_samples * math.log(dof) + k_samples * log_sum


def penalty(k_samples: int, m_params: int, kind: str = "WIC") -> float:
    """Over-fitting penalty: AIC (finite-sample corrected), BIC, or their
    weighted average WIC = (AIC^2 + BIC^2) / (AIC + BIC)."""
    if m_params == 0:
        return 0.0
    kind = kind.upper()
    if kind == "BIC":
        return m_params * math.log(k_samples)
    if k_samples - m_params - 1 <= 0:
        raise ValueError("AIC penalty requires k_samples > m_params + 1")
    p_aic = 2.0 * m_params * k_samples / (k_samples - m_params - 1)
    if kind == "AIC":
        return p_aic
    if kind == "WIC":
        p_bic = m_params * math.log(k_samples)
        return (p_aic**2 + p_bic**2) / (p_aic + p_bic)
    raise ValueError(f"unknown penalty kind {kind!r}")


@dataclass(frozen=True)
class CostBreakdown:
    """IC decomposition: per-(dataset, part) RSS, likelihood term, penalty."""

    rss: tuple[dict, ...]
    neg_log_likelihood: float
    penalty: float
    ic_total: float

    def report(self) -> str:
        lines = ["dataset  part  rss"]
        for d, table in enumerate(self.rss):
            for part in PARTS:
                lines.append(f"{d:7d}  {part:4s}  {table[part]!r}")
        lines.append(f"neg_log_likelihood = {self.neg_log_likelihood!r}")
        lines.append(f"penalty            = {self.penalty!r}")
        lines.append(f"ic_total           = {self.ic_total!r}")
        return "\n".join(lines)


def ic_cost(model: ClusterModel, bundle: DatasetBundle, kind: str = "WIC") -> CostBreakdown:
    """Full information-criterion cost of a model against a bundle.

    The sample size entering both the likelihood and the penalty is the
    spectral point count per part (K/2); constant offsets cancel in model
    comparison.
    """
    residues = model_residues(model, bundle)
    k = bundle.k_spectral
    g = neg_log_likelihood(residues, k, model.m_params)
    p = penalty(k, model.m_params, kind)
    return CostBreakdown(
        rss=_rss_table(residues), neg_log_likelihood=g, penalty=p, ic_total=g + p
    )


@dataclass(frozen=True, eq=False)
class FitResult:
    """A fitted cluster: model, its cost, and (optionally) derived positions."""

    model: ClusterModel
    cost: CostBreakdown | None = None
    positions: tuple[Position, ...] | None = None
    seed: int | None = None

    @property
    def n_spins(self) -> int:
        return self.model.n_spins

    @property
    def ic_total(self) -> float:
        if self.cost is None:
            raise ValueError("fit result carries no cost breakdown")
        return self.cost.ic_total


# ---------------------------------------------------------------------------
# parameter-vector codec (theta layout: 3 per spin, then p0, 1/T2n*, t_ell)
# ---------------------------------------------------------------------------


def encode_model(model: ClusterModel) -> np.ndarray:
    """Flatten a model to theta = [a_par_i, a_perp_i, phi_i ..., p0, gamma0, t_ell]."""
    theta = np.empty(model.m_params)
    for i, spin in enumerate(model.spins):
        theta[3 * i : 3 * i + 3] = (spin.a_par, spin.a_perp, spin.phi)
    theta[-3:] = (model.globals_.p0, model.globals_.gamma0, model.globals_.t_ell)
    return theta


def decode_model(theta, n_spins: int) -> ClusterModel:
    """Rebuild a ClusterModel from a parameter vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3 * n_spins + 3,):
        raise ValueError(f"expected {3 * n_spins + 3} parameters, got {theta.shape}")
    spins = tuple(
        SpinParams(a_par=theta[3 * i], a_perp=theta[3 * i + 1], phi=theta[3 * i + 2])
        for i in range(n_spins)
    )
    globals_ = GlobalParams.from_gamma0(p0=theta[-3], gamma0=theta[-2], t_ell=theta[-1])
    return ClusterModel(spins=spins, globals_=globals_)
