"""Generalized simulated annealing for the cluster-model likelihood.

The sampler draws single-coordinate jumps from the one-dimensional Tsallis
visiting distribution

    g(dx) ~ [1 + (q_v - 1) dx^2 / T^(2/(3-q_v))]^(-1/(q_v-1))

which is a Student-t with nu = (3 - q_v)/(q_v - 1) degrees of freedom and
scale T^(1/(3-q_v)) / sqrt(3 - q_v); q_v -> 1 recovers Gaussian (classical)
annealing and q_v = 2 Cauchy (fast) annealing.  Both the visiting and the
acceptance temperatures follow the cooling law

    T(t) = T(1) (2^(q_v-1) - 1) / ((1 + t)^(q_v-1) - 1)

evaluated at rescaled times t/400 and t/200 respectively, and the acceptance
temperature is additionally divided by the iteration counter.  Moves are
accepted with the generalized Metropolis rule at q_a = -1 and rejected
outright when any two spins of the proposal would sit closer than one
carbon-carbon bond length.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import CONSTANTS, PhysicalConstants, position_from_hyperfine
from .likelihood import (
    ClusterModel,
    CostBreakdown,
    DatasetBundle,
    FitResult,
    decode_model,
    encode_model,
    ic_cost,
    penalty,
)
from .signal_model import TWO_PI

__all__ = [
    "R_CC",
    "AnnealSchedule",
    "ParameterBounds",
    "AnnealResult",
    "MultiStartResult",
    "visiting_temperature",
    "tsallis_sample",
    "tsallis_step",
    "acceptance_probability",
    "constrained_accept",
    "anneal",
    "multi_start",
]

# diamond carbon-carbon bond length: smallest possible 13C pair distance
R_CC = 0.154e-9


@dataclass(frozen=True)
class AnnealSchedule:
    """Cooling and proposal settings of one annealing run."""

    q_v: float = 2.7
    q_a: float = -1.0
    t_a_init: float = 1.0e3
    max_iters: int = 5000
    visit_time_divisor: int = 400
    accept_time_divisor: int = 200
    t_v_init: tuple | None = None  # per-parameter; None derives from bounds widths
    whole_vector: bool = False

    def __post_init__(self):
        if not (1.0 < self.q_v < 3.0):
            raise ValueError("q_v must lie in (1, 3)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.visit_time_divisor < 1 or self.accept_time_divisor < 1:
            raise ValueError("time divisors must be >= 1")


@dataclass(frozen=True)
class ParameterBounds:
    """Search intervals per parameter kind, in internal units (rad/s, rad, s)."""

    a_par: tuple = (-TWO_PI * 9.0e3, TWO_PI * 9.0e3)
    a_perp: tuple = (0.0, TWO_PI * 80.0e3)
    phi: tuple = (-0.5 * math.pi, 2.5 * math.pi)
    p0: tuple = (0.3, 1.0)
    gamma0: tuple = (0.0, 1.0 / 12.0e-3)
    t_ell: tuple = (0.0, 8.0e-6)

    def __post_init__(self):
        for name in ("a_par", "a_perp", "phi", "p0", "gamma0", "t_ell"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} bounds must satisfy lo < hi")
        if self.a_perp[0] < 0.0:
            raise ValueError("a_perp lower bound must be >= 0")

    @classmethod
    def for_experiment(cls, f_k_hz: float, a_perp_max_hz: float, t_s: float) -> "ParameterBounds":
        """Bounds from the spectral support: a_par in 2 pi [-2 f_k, +2 f_k]."""
        return cls(
            a_par=(-2.0 * TWO_PI * f_k_hz, 2.0 * TWO_PI * f_k_hz),
            a_perp=(0.0, TWO_PI * a_perp_max_hz),
            t_ell=(0.0, t_s),
        )

    def vectors(self, n_spins: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (lo, hi) arrays matching the theta layout for n spins."""
        lo = np.empty(3 * n_spins + 3)
        hi = np.empty(3 * n_spins + 3)
        for i in range(n_spins):
            lo[3 * i : 3 * i + 3] = (self.a_par[0], self.a_perp[0], self.phi[0])
            hi[3 * i : 3 * i + 3] = (self.a_par[1], self.a_perp[1], self.phi[1])
        lo[-3:] = (self.p0[0], self.gamma0[0], self.t_ell[0])
        hi[-3:] = (self.p0[1], self.gamma0[1], self.t_ell[1])
        return lo, hi


@dataclass(frozen=True, eq=False)
class AnnealResult:
    """Outcome of one annealing run."""

    best_model: ClusterModel
    best_cost: CostBreakdown
    accepted_steps: int
    iterations: int
    seed: int

    @property
    def best_ic(self) -> float:
        return self.best_cost.ic_total


@dataclass(frozen=True, eq=False)
class MultiStartResult:
    """Best fit per spin count and the overall IC winner."""

    by_n: dict
    winner: FitResult


def visiting_temperature(t, q_v: float, t_init):
    """Cooling law T(t) = T(1) (2^(q_v-1) - 1) / ((1 + t)^(q_v-1) - 1).

    Valid for any t > 0; rescaled times below 1 run hotter than T(1), which
    is what the divisor trick exploits to widen early exploration.
    """
    if np.any(np.asarray(t) <= 0.0):
        raise ValueError("time must be positive")
    e = q_v - 1.0
    return t_init * (2.0**e - 1.0) / ((1.0 + np.asarray(t, dtype=float)) ** e - 1.0)


def tsallis_sample(rng: np.random.Generator, t_visit: float, q_v: float, size=None):
    """Draw visiting-distribution jumps at temperature t_visit.

    Uses the chi-scaled Gaussian construction (Student-t) specialized to one
    dimension: nu = (3 - q_v)/(q_v - 1), scale T^(1/(3-q_v))/sqrt(3-q_v).
    """
    nu = (3.0 - q_v) / (q_v - 1.0)
    scale = t_visit ** (1.0 / (3.0 - q_v)) / math.sqrt(3.0 - q_v)
    return scale * rng.standard_t(nu, size=size)


def _reflect(value: float, lo: float, hi: float) -> float:
    """Fold a value into [lo, hi] by reflection at the boundaries."""
    width = hi - lo
    y = (value - lo) % (2.0 * width)
    return lo + (y if y <= width else 2.0 * width - y)


def tsallis_step(
    current: np.ndarray,
    temps: np.ndarray,
    q_v: float,
    rng: np.random.Generator,
    lo: np.ndarray,
    hi: np.ndarray,
    whole_vector: bool = False,
) -> np.ndarray:
    """Propose a new parameter vector by Tsallis-distributed jumps.

    By default a single rng-chosen coordinate moves (better convergence than
    whole-vector updates for this problem); out-of-bounds proposals are
    reflected back into the search box.
    """
    proposal = np.array(current, dtype=float)
    if whole_vector:
        for m in range(proposal.size):
            proposal[m] = _reflect(
                proposal[m] + tsallis_sample(rng, temps[m], q_v), lo[m], hi[m]
            )
    else:
        m = int(rng.integers(proposal.size))
        proposal[m] = _reflect(
            proposal[m] + tsallis_sample(rng, temps[m], q_v), lo[m], hi[m]
        )
    return proposal


def acceptance_probability(delta_e: float, t_a: float, q_a: float) -> float:
    """Generalized Metropolis rule; improving moves are always accepted.

    For q_a < 1 the probability is [1 - (1 - q_a) dE / T]^(1/(1-q_a)), set to
    zero where the bracket is negative (hence a hard cutoff at dE = T/(1-q_a)).
    """
    if t_a <= 0.0:
        raise ValueError("acceptance temperature must be positive")
    if delta_e <= 0.0:
        return 1.0
    if q_a == 1.0:
        return min(1.0, math.exp(-delta_e / t_a))
    bracket = 1.0 - (1.0 - q_a) * delta_e / t_a
    if bracket <= 0.0:
        return 0.0
    return min(1.0, bracket ** (1.0 / (1.0 - q_a)))


def _decode_positions(theta: np.ndarray, n_spins: int, consts: PhysicalConstants):
    """Cartesian upper-hemisphere positions implied by a parameter vector."""
    out = np.empty((n_spins, 3))
    for i in range(n_spins):
        pos = position_from_hyperfine(
            theta[3 * i], theta[3 * i + 1], theta[3 * i + 2], consts
        )
        out[i] = pos.to_cartesian()
    return out


def _bond_length_ok(
    theta: np.ndarray,
    n_spins: int,
    consts: PhysicalConstants,
    min_distance: float,
) -> bool:
    if n_spins < 2:
        return True
    try:
        xyz = _decode_positions(theta, n_spins, consts)
    except ValueError:
        return False
    diff = xyz[:, None, :] - xyz[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    iu = np.triu_indices(n_spins, k=1)
    return bool(np.all(dist[iu] >= min_distance))


def constrained_accept(
    proposal: ClusterModel,
    base_probability: float,
    consts: PhysicalConstants = CONSTANTS,
    min_distance: float = R_CC,
) -> float:
    """Multiply an acceptance probability by the bond-length constraint factor.

    The factor is 0 whenever any two spins of the proposal decode to
    upper-hemisphere positions closer than `min_distance`, else 1.
    """
    ok = _bond_length_ok(
        encode_model(proposal), proposal.n_spins, consts, min_distance
    )
    return base_probability if ok else 0.0


class _BundleCost:
    """Fast IC evaluation for parameter vectors against a fixed bundle.

    Produces values identical to likelihood.ic_cost(decode_model(theta, n))
    but without per-call dataclass construction.
    """

    def __init__(self, bundle: DatasetBundle, n_spins: int, kind: str = "WIC"):
        self.n = n_spins
        self.m = 3 * n_spins + 3
        self.k_spec = bundle.k_spectral
        self.d = bundle.n_datasets
        if self.k_spec - self.m - 1 <= 0:
            raise ValueError("bundle too short for this many spins")
        self.penalty = penalty(self.k_spec, self.m, kind)
        k = bundle.k_samples
        j = np.arange(1, self.k_spec + 1)
        self._phase = np.exp(-2j * math.pi * np.arange(self.k_spec + 1) / k)
        self._sets = []
        for tr, sp in zip(bundle.traces, bundle.spectra):
            cfg = tr.config
            self._sets.append(
                {
                    "t": cfg.sample_times,
                    "omega0": cfg.omega0,
                    "t_beta": cfg.t_beta,
                    "t_s": cfg.t_s,
                    "re": sp.re,
                    "im": sp.im,
                    "psd": sp.psd,
                }
            )
        self._log_dof = math.log(self.k_spec - self.m - 1)

    def _trace(self, theta: np.ndarray, ds) -> np.ndarray:
        n = self.n
        a_par = theta[0 : 3 * n : 3]
        a_perp = theta[1 : 3 * n : 3]
        phi = theta[2 : 3 * n : 3]
        p0, gamma0, t_ell = theta[-3:]
        beta = a_perp * ds["t_beta"] / math.pi
        amp = 0.5 * p0 * np.sin(beta)
        omega = 0.5 * (ds["omega0"] + np.hypot(ds["omega0"] + a_par, a_perp))
        gamma = (
            beta**2 / (4.0 * ds["t_s"]) + gamma0 + (a_par * t_ell) ** 2 / (2.0 * ds["t_s"])
        )
        t = ds["t"][:, None]
        return (amp * np.exp(-gamma * t) * np.cos(omega * t + phi)).sum(axis=1)

    def cost(self, theta: np.ndarray) -> float:
        log_sum = 0.0
        for ds in self._sets:
            x = self._trace(theta, ds)
            spec = np.fft.rfft(x) * self._phase
            re = spec.real[1:]
            im = spec.imag[1:]
            psd = re**2 + im**2
            for res in (re - ds["re"], im - ds["im"], psd - ds["psd"]):
                log_sum += math.log(max(float(np.dot(res, res)), 1e-300))
        g = -3.0 * self.d * self.k_spec * self._log_dof + self.k_spec * log_sum
        return g + self.penalty


def _default_t_v_init(widths: np.ndarray, q_v: float) -> np.ndarray:
    """Initial visiting temperatures whose t = 1 jump scale spans each interval."""
    return ((3.0 - q_v) * widths**2) ** ((3.0 - q_v) / 2.0)


def _anneal_core(
    cost_fn,
    lo: np.ndarray,
    hi: np.ndarray,
    schedule: AnnealSchedule,
    rng: np.random.Generator,
    constraint_fn=None,
):
    """Generic annealing loop over a box-bounded cost; returns best-ever state."""
    n_params = lo.size
    widths = hi - lo
    t_v_init = (
        np.asarray(schedule.t_v_init, dtype=float)
        if schedule.t_v_init is not None
        else _default_t_v_init(widths, schedule.q_v)
    )
    theta = lo + widths * rng.random(n_params)
    if constraint_fn is not None:
        for _ in range(1000):
            if constraint_fn(theta):
                break
            theta = lo + widths * rng.random(n_params)
        else:
            raise ValueError("could not draw a feasible starting point")
    current_cost = cost_fn(theta)
    best = theta.copy()
    best_cost = current_cost
    accepted = 0
    for t in range(1, schedule.max_iters + 1):
        temps = visiting_temperature(
            t / schedule.visit_time_divisor, schedule.q_v, t_v_init
        )
        proposal = tsallis_step(
            theta, temps, schedule.q_v, rng, lo, hi, schedule.whole_vector
        )
        if constraint_fn is not None and not constraint_fn(proposal):
            continue
        prop_cost = cost_fn(proposal)
        t_a = (
            visiting_temperature(
                t / schedule.accept_time_divisor, schedule.q_v, schedule.t_a_init
            )
            / t
        )
        p = acceptance_probability(prop_cost - current_cost, t_a, schedule.q_a)
        if p >= 1.0 or rng.random() < p:
            theta = proposal
            current_cost = prop_cost
            accepted += 1
            if current_cost < best_cost:
                best = theta.copy()
                best_cost = current_cost
    return best, best_cost, accepted


def anneal(
    bundle: DatasetBundle,
    n_spins: int,
    bounds: ParameterBounds,
    schedule: AnnealSchedule = AnnealSchedule(),
    seed: int = 0,
    consts: PhysicalConstants = CONSTANTS,
) -> AnnealResult:
    """One GSA run against a bundle at fixed spin count."""
    lo, hi = bounds.vectors(n_spins)
    evaluator = _BundleCost(bundle, n_spins)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    constraint = (
        (lambda th: _bond_length_ok(th, n_spins, consts, R_CC)) if n_spins >= 2 else None
    )
    best, _, accepted = _anneal_core(
        evaluator.cost, lo, hi, schedule, rng, constraint_fn=constraint
    )
    model = decode_model(best, n_spins)
    return AnnealResult(
        best_model=model,
        best_cost=ic_cost(model, bundle),
        accepted_steps=accepted,
        iterations=schedule.max_iters,
        seed=seed,
    )


def _run_job(args):
    bundle, n, bounds, schedule, seed, refine = args
    result = anneal(bundle, n, bounds, schedule, seed=seed)
    model = result.best_model
    if refine:
        from .uncertainty import local_refine

        model = local_refine(model, bundle)
    return n, seed, model, ic_cost(model, bundle)


def multi_start(
    bundle: DatasetBundle,
    n_range,
    bounds: ParameterBounds,
    schedule: AnnealSchedule = AnnealSchedule(),
    restarts: int = 1,
    master_seed: int = 0,
    workers: int = 1,
    refine: bool = False,
) -> MultiStartResult:
    """Annealing from `restarts` random starts for each candidate spin count.

    Every (n, restart) job owns a private stream derived from the master seed,
    so results are identical no matter how jobs are scheduled; the per-n best
    and the overall winner are deterministic minima keyed by (IC, n, restart).
    """
    n_range = list(n_range)
    if not n_range:
        raise ValueError("n_range must not be empty")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    args = []
    for n in n_range:
        for rep in range(restarts):
            seq = np.random.SeedSequence(master_seed, spawn_key=(n, rep))
            args.append((bundle, n, bounds, schedule, int(seq.generate_state(1)[0]), refine))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_job, args, chunksize=1))
    else:
        outcomes = [_run_job(a) for a in args]
    by_n = {}
    keys = {}
    for rep_index, (n, seed, model, cost) in enumerate(outcomes):
        key = (cost.ic_total, n, rep_index)
        if n not in by_n or key < keys[n]:
            by_n[n] = FitResult(model=model, cost=cost, seed=seed)
            keys[n] = key
    winner_n = min(by_n, key=lambda n: (by_n[n].ic_total, n))
    return MultiStartResult(by_n=by_n, winner=by_n[winner_n])
