"""Ground-truth cluster generation and forward synthesis with shot noise.

Clusters are drawn either from the diamond lattice (site occupation at the
13C isotope abundance) or from a continuum Poisson process at a given number
density; both reproduce the 1.94 nm^-3 natural-abundance carbon-13 density.
Forward synthesis maps positions to hyperfine parameters, evaluates the
analytic FID for every interaction time and, optionally, adds i.i.d. Gaussian
noise of standard deviation 1/(eps sqrt(C repetitions)) per time sample, the
photon-shot-noise level in probability units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CONSTANTS, PhysicalConstants, Position, hyperfine_from_position
from .likelihood import ClusterModel, DatasetBundle, FitResult, ic_cost
from .signal_model import FidTrace, GlobalParams, SpinParams, fid

__all__ = [
    "DIAMOND_LATTICE_CONSTANT",
    "ClusterSpec",
    "NoiseSpec",
    "diamond_lattice_sites",
    "sample_cluster",
    "generate_bundle",
    "write_truth_csv",
]

DIAMOND_LATTICE_CONSTANT = 0.357e-9  # cubic cell edge, 8 carbon sites per cell

# conventional-cell fractional coordinates of the 8 carbon sites
_BASIS = np.array(
    [
        (0.00, 0.00, 0.00),
        (0.00, 0.50, 0.50),
        (0.50, 0.00, 0.50),
        (0.50, 0.50, 0.00),
        (0.25, 0.25, 0.25),
        (0.25, 0.75, 0.75),
        (0.75, 0.25, 0.75),
        (0.75, 0.75, 0.25),
    ]
)


@dataclass(frozen=True)
class ClusterSpec:
    """How to draw a random 13C cluster around the electron spin.

    mode : 'lattice' (site occupation at `abundance`) or 'continuum'
           (Poisson process at `density`)
    radius : ball radius around the origin (m)
    abundance : site occupation probability (natural 13C: 0.011)
    density : number density for continuum mode (m^-3)
    exclusion_radius : drop nuclei closer than this to the electron (m)
    """

    mode: str = "lattice"
    radius: float = 3.0e-9
    abundance: float = 0.011
    density: float = 1.94e27
    exclusion_radius: float = 0.25e-9

    def __post_init__(self):
        if self.mode not in ("lattice", "continuum"):
            raise ValueError(f"unknown cluster mode {self.mode!r}")
        if not (0.0 <= self.abundance <= 1.0):
            raise ValueError("abundance must lie in [0, 1]")
        if self.density < 0.0:
            raise ValueError("density must be nonnegative")
        if self.radius <= 0.0 or self.exclusion_radius < 0.0:
            raise ValueError("radii must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Photon-shot-noise settings in probability units."""

    contrast_eps: float = 0.3
    counts_c: float = 0.05
    repetitions: float = 1e5

    def __post_init__(self):
        for name in ("contrast_eps", "counts_c", "repetitions"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def sigma(self) -> float:
        """Per-sample standard deviation 1/(eps sqrt(C repetitions))."""
        return 1.0 / (self.contrast_eps * math.sqrt(self.counts_c * self.repetitions))


def _rotation_111_to_z() -> np.ndarray:
    """Rotation taking crystal [111] (the NV symmetry axis) onto z."""
    ez = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    ex = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    ey = np.cross(ez, ex)
    return np.vstack([ex, ey, ez])


def diamond_lattice_sites(
    radius: float, lattice_constant: float = DIAMOND_LATTICE_CONSTANT
) -> np.ndarray:
    """Carbon sites within `radius` of the origin, NV frame (z along [111]).

    The origin site itself (the electron's location) is excluded.
    """
    n_cells = int(math.ceil(radius / lattice_constant)) + 1
    grid = np.arange(-n_cells, n_cells + 1)
    cells = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = (cells[:, None, :] + _BASIS[None, :, :]).reshape(-1, 3) * lattice_constant
    rotation = _rotation_111_to_z()
    sites = sites @ rotation.T
    dist = np.linalg.norm(sites, axis=1)
    return sites[(dist <= radius) & (dist > 1e-15)]


def sample_cluster(spec: ClusterSpec, seed: int = 0) -> list[Position]:
    """Draw a random nuclear cluster according to the spec."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if spec.mode == "lattice":
        sites = diamond_lattice_sites(spec.radius)
        keep = rng.random(len(sites)) < spec.abundance
        sites = sites[keep]
        sites = sites[np.linalg.norm(sites, axis=1) >= spec.exclusion_radius]
        return [Position.from_cartesian(site) for site in sites]
    # continuum: uniform in the shell between exclusion radius and radius
    r0, r1 = spec.exclusion_radius, spec.radius
    volume = 4.0 / 3.0 * math.pi * (r1**3 - r0**3)
    count = rng.poisson(spec.density * volume)
    radii = (rng.random(count) * (r1**3 - r0**3) + r0**3) ** (1.0 / 3.0)
    cos_t = rng.uniform(-1.0, 1.0, count)
    phi = rng.uniform(0.0, 2.0 * math.pi, count)
    return [
        Position(r=float(r), theta=math.acos(float(c)), phi=float(p))
        for r, c, p in zip(radii, cos_t, phi)
    ]


def generate_bundle(
    cluster,
    globals_: GlobalParams,
    configs,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    consts: PhysicalConstants = CONSTANTS,
) -> tuple[DatasetBundle, FitResult]:
    """Synthesize a dataset bundle from known positions, plus the truth record.

    Noise, when given, is applied per time-domain sample from per-dataset
    derived streams, so bundles are reproducible regardless of scheduling.
    """
    cluster = list(cluster)
    spins = tuple(
        SpinParams(*hyperfine_from_position(pos, consts)) for pos in cluster
    )
    model = ClusterModel(spins=spins, globals_=globals_)
    streams = np.random.SeedSequence(seed).spawn(len(list(configs)))
    traces = []
    for config, stream in zip(configs, streams):
        trace = fid(spins, globals_, config)
        if noise is not None:
            rng = np.random.default_rng(stream)
            trace = FidTrace(
                config=config,
                samples=trace.samples + rng.normal(0.0, noise.sigma, config.k_samples),
            )
        traces.append(trace)
    bundle = DatasetBundle.from_traces(traces)
    try:
        cost = ic_cost(model, bundle)
    except ValueError:
        cost = None  # more parameters than spectral points: cost undefined
    truth = FitResult(model=model, cost=cost, positions=tuple(cluster))
    return bundle, truth


def write_truth_csv(path, truth: FitResult) -> None:
    """Write the generating cluster as a position table."""
    from .signal_model import TWO_PI

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,a_par_khz,a_perp_khz,r_nm,theta_deg,phi_deg\n")
        for i, (spin, pos) in enumerate(zip(truth.model.spins, truth.positions)):
            fh.write(
                f"{i + 1},{spin.a_par / TWO_PI / 1e3!r},{spin.a_perp / TWO_PI / 1e3!r},"
                f"{pos.r * 1e9!r},{math.degrees(pos.theta)!r},{math.degrees(pos.phi)!r}\n"
            )
