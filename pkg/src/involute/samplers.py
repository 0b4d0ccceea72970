"""Concrete sampler constructors and the chain runner.

Every sampler here is a :class:`~involute.core.KernelSpec`: a proposal
sampler, one or more involutions, and an acceptance rule.  Random-walk and
independence samplers use the swap involution; trajectory samplers use
palindromic split-step maps with a terminal momentum flip; multiproposal
samplers use slot swaps on a proposal cloud with Barker-weighted selection.
Acceptance rules work in log space throughout.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    DIVERGED,
    KernelSpec,
    barker_weights_log,
    master_step,
    mh_probability_log,
    mhgj_acceptance_log,
)
from .errors import ConfigurationError, DivergenceError, NumericError
from .hilbert import (
    CovarianceSpectrum,
    TrajectoryLog,
    cameron_martin_log_alpha,
    sample_prior,
)
from .integrators import (
    DIVERGENCE_LIMIT,
    PhasePoint,
    SplitDynamics,
    jacobian_abs_det_fd,
    leapfrog_involution,
)
from .rng import rng_stream


@dataclass
class LebesgueReference:
    """Marker: densities are taken against Lebesgue measure."""


@dataclass
class GaussianReference:
    """Densities are taken against a centered Gaussian prior with this spectrum."""

    spectrum: CovarianceSpectrum


@dataclass
class TargetModel:
    """A target measure, described relative to a reference measure.

    ``log_density_ratio`` evaluates the log of the target density against
    the reference: the log of the usual unnormalized density for a Lebesgue
    reference, or minus the likelihood potential for a Gaussian reference.
    ``gradient`` (and optionally ``surrogate_gradient``) differentiate
    ``log_density_ratio``.  ``log_density_ratio_batch``, when present, maps
    an ``(m, dim)`` stack of states to ``m`` values at once and lets
    cloud-based samplers evaluate all slots in one call.
    """

    log_density_ratio: Callable[[np.ndarray], float]
    reference: LebesgueReference | GaussianReference = field(default_factory=LebesgueReference)
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    surrogate_gradient: Callable[[np.ndarray], np.ndarray] | None = None
    log_density_ratio_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def potential(self, q: np.ndarray) -> float:
        return -float(self.log_density_ratio(q))

    def log_ratio_rows(self, rows: np.ndarray) -> np.ndarray:
        if self.log_density_ratio_batch is not None:
            return np.asarray(self.log_density_ratio_batch(rows), dtype=float)
        return np.array([float(self.log_density_ratio(row)) for row in rows])


def swap_involution(state: np.ndarray, aux: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exchange state and auxiliary point; its own inverse by construction."""
    return aux, state


def _require_reference(target: TargetModel, kind, name: str):
    if not isinstance(target.reference, kind):
        raise ConfigurationError(
            f"{name} requires a {kind.__name__} target, got {type(target.reference).__name__}"
        )


def _single_proposal_mh(log_ratio: Callable[[np.ndarray, np.ndarray, tuple], float]):
    """Wrap a log-ratio function into a two-outcome acceptance rule."""

    def acceptance(state, aux, mapped):
        if mapped[1] is DIVERGED:
            return np.array([1.0, 0.0])
        try:
            a = mh_probability_log(log_ratio(state, aux, mapped[1]))
        except NumericError:
            a = 0.0
        return np.array([1.0 - a, a])

    return acceptance


def build_rwm(target: TargetModel, proposal_scale: float) -> KernelSpec:
    """Symmetric Gaussian random-walk Metropolis."""
    _require_reference(target, LebesgueReference, "build_rwm")
    if not proposal_scale > 0:
        raise ConfigurationError(f"proposal_scale must be positive, got {proposal_scale}")
    if target.log_density_ratio is None:
        raise ConfigurationError("target density is required")
    lr = target.log_density_ratio

    def propose(state, rng):
        return state + proposal_scale * rng.standard_normal(state.shape)

    def log_ratio(state, aux, _mapped):
        return float(lr(aux)) - float(lr(state))

    return KernelSpec(propose=propose, involutions=[None, swap_involution],
                      acceptance=_single_proposal_mh(log_ratio), proposal_count=1)


def build_mh(target: TargetModel, proposal_sampler, proposal_log_density) -> KernelSpec:
    """Metropolis-Hastings with a possibly asymmetric proposal density.

    ``proposal_sampler(state, rng)`` draws the candidate;
    ``proposal_log_density(origin, candidate)`` evaluates the kernel density.
    """
    _require_reference(target, LebesgueReference, "build_mh")
    lr = target.log_density_ratio

    def log_ratio(state, aux, _mapped):
        forward = float(proposal_log_density(state, aux))
        backward = float(proposal_log_density(aux, state))
        return float(lr(aux)) + backward - float(lr(state)) - forward

    return KernelSpec(propose=proposal_sampler, involutions=[None, swap_involution],
                      acceptance=_single_proposal_mh(log_ratio), proposal_count=1)


def build_mhgj(target: TargetModel, aux_sampler, aux_log_density, involution,
               log_abs_det_jacobian=None) -> KernelSpec:
    """Deterministic-jump sampler with a Jacobian-corrected acceptance.

    The involution may move mass off the graph of the swap map, so the
    acceptance multiplies the joint density ratio by |det| of the jump's
    derivative.  When no analytic ``log_abs_det_jacobian(state, aux)`` is
    supplied the determinant is estimated by dense central differences,
    which restricts the combined dimension to 10.
    """
    _require_reference(target, LebesgueReference, "build_mhgj")
    lr = target.log_density_ratio

    def log_joint(state, aux):
        return float(lr(state)) + float(aux_log_density(state, aux))

    def log_det(state, aux):
        if log_abs_det_jacobian is not None:
            return float(log_abs_det_jacobian(state, aux))
        det = jacobian_abs_det_fd(
            lambda pt: PhasePoint(*involution(pt.q, pt.v)), PhasePoint(state, aux))
        return float(np.log(det)) if det > 0.0 else -np.inf

    def acceptance(state, aux, mapped):
        if mapped[1] is DIVERGED:
            return np.array([1.0, 0.0])
        q2, v2 = mapped[1]
        a = mhgj_acceptance_log(log_joint(state, aux), log_joint(q2, v2),
                                log_det(state, aux))
        return np.array([1.0 - a, a])

    return KernelSpec(propose=aux_sampler, involutions=[None, involution],
                      acceptance=acceptance, proposal_count=1)


def _mass_vector(mass) -> np.ndarray:
    m = np.asarray(mass, dtype=float)
    if np.any(m <= 0.0) or not np.all(np.isfinite(m)):
        raise ConfigurationError("mass entries must be positive and finite")
    return m


def _build_hmc_like(target: TargetModel, step_size: float, n_steps: int,
                    mass, force) -> KernelSpec:
    _require_reference(target, LebesgueReference, "trajectory samplers on flat references")
    if force is None:
        raise ConfigurationError("a gradient (or surrogate) is required")
    if n_steps < 1:
        raise ConfigurationError("n_steps must be at least 1")
    m = _mass_vector(mass)
    m_std = np.sqrt(m)
    lr = target.log_density_ratio
    dyn = SplitDynamics(force=force, flow=lambda u: u / m, dt=step_size, n_steps=n_steps)

    def hamiltonian(q, v):
        return -float(lr(q)) + 0.5 * float(np.sum(v * v / m))

    def propose(state, rng):
        return m_std * rng.standard_normal(state.shape)

    def involution(state, aux):
        end = leapfrog_involution(PhasePoint(state, aux), dyn)
        return end.q, end.v

    def log_ratio(state, aux, image):
        q2, v2 = image
        return hamiltonian(state, aux) - hamiltonian(q2, v2)

    return KernelSpec(propose=propose, involutions=[None, involution],
                      acceptance=_single_proposal_mh(log_ratio), proposal_count=1)


def build_hmc(target: TargetModel, step_size: float, n_steps: int, mass=1.0) -> KernelSpec:
    """Leapfrog Hamiltonian Monte Carlo with a diagonal mass matrix.

    Velocities are refreshed from ``N(0, mass)`` every step; the trajectory
    map is the n-step palindromic leapfrog followed by a momentum flip, and
    the acceptance probability is the clipped exponential of the energy
    drop.  Divergent trajectories count as rejections.
    """
    return _build_hmc_like(target, step_size, n_steps, mass, target.gradient)


def build_surrogate_hmc(target: TargetModel, step_size: float, n_steps: int,
                        mass=1.0, surrogate=None) -> KernelSpec:
    """HMC whose trajectories follow a surrogate force field.

    Only the trajectory uses the surrogate; the acceptance rule keeps the
    exact energies, so the invariant measure is untouched no matter how
    crude the surrogate is.  Defaults to ``target.surrogate_gradient``.
    """
    force = surrogate if surrogate is not None else target.surrogate_gradient
    return _build_hmc_like(target, step_size, n_steps, mass, force)


def build_pcn(target: TargetModel, rho: float) -> KernelSpec:
    """Preconditioned Crank-Nicolson: prior-reversible autoregressive proposal.

    The proposal ``rho * q + sqrt(1 - rho^2) * xi`` with a prior draw ``xi``
    leaves the Gaussian reference invariant, so the acceptance ratio is the
    bare likelihood ratio and is dimension-robust.
    """
    _require_reference(target, GaussianReference, "build_pcn")
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}")
    spectrum = target.reference.spectrum
    lr = target.log_density_ratio
    spread = np.sqrt(1.0 - rho ** 2)

    def propose(state, rng):
        return rho * state + spread * sample_prior(spectrum, rng)

    def log_ratio(state, aux, _mapped):
        return float(lr(aux)) - float(lr(state))

    return KernelSpec(propose=propose, involutions=[None, swap_involution],
                      acceptance=_single_proposal_mh(log_ratio), proposal_count=1)


def build_inf_hmc(target: TargetModel, delta_a: float, delta_b: float, n_steps: int,
                  surrogate=None, psi=None, psi_sampler=None) -> KernelSpec:
    """Gaussian-reference HMC with exact rotations and surrogate kicks.

    Each sub-step is kick(delta_a), rotate(delta_b), kick(delta_a); the kick
    force is a surrogate ``f`` for the prior-preconditioned potential
    gradient (default: eigenvalues times the gradient of the potential).
    The acceptance ratio comes from :func:`cameron_martin_log_alpha`, which
    is exact for any ``f``, so surrogate error costs acceptance rate but
    never biases the invariant measure.

    ``psi`` optionally biases the velocity proposal; it is experimental and
    the caller must then supply the matching ``psi_sampler``.  ``n_steps``
    may be 0, in which case the map is a bare momentum flip and the
    acceptance probability is identically 1.
    """
    _require_reference(target, GaussianReference, "build_inf_hmc")
    if psi is not None and psi_sampler is None:
        raise ConfigurationError("a nonzero psi requires its matching psi_sampler")
    if n_steps < 0:
        raise ConfigurationError("n_steps must be nonnegative")
    if not (delta_a > 0 and delta_b > 0) and n_steps > 0:
        raise ConfigurationError("step sizes must be positive")
    spectrum = target.reference.spectrum
    lam = spectrum.eigenvalues

    if surrogate is None:
        if target.gradient is None:
            raise ConfigurationError("either a surrogate force or target.gradient is required")
        grad = target.gradient
        surrogate = lambda q: -lam * np.asarray(grad(q), dtype=float)  # noqa: E731

    def phi(q):
        return -float(target.log_density_ratio(q))

    def propose(state, rng):
        if psi_sampler is not None:
            return psi_sampler(state, rng)
        return sample_prior(spectrum, rng)

    if n_steps == 0:
        def flip_only(state, aux):
            return state, -aux

        def accept_always(state, aux, mapped):
            return np.array([0.0, 1.0])

        return KernelSpec(propose=propose, involutions=[None, flip_only],
                          acceptance=accept_always, proposal_count=1)

    cos_b, sin_b = np.cos(delta_b), np.sin(delta_b)
    cache: dict = {}

    def trajectory(q: np.ndarray, v: np.ndarray) -> TrajectoryLog:
        key = (q.tobytes(), v.tobytes())
        hit = cache.get(key)
        if hit is not None:
            return hit
        states = [PhasePoint(q, v)]
        forces = [np.asarray(surrogate(q), dtype=float)]
        if not np.all(np.isfinite(forces[0])):
            raise DivergenceError("surrogate force non-finite at start", step_index=0)
        cur_q, cur_v = q, v
        for i in range(n_steps):
            v_half = cur_v - delta_a * forces[-1]
            q_rot = cur_q * cos_b + v_half * sin_b
            v_rot = v_half * cos_b - cur_q * sin_b
            f_new = np.asarray(surrogate(q_rot), dtype=float)
            if not np.all(np.isfinite(f_new)):
                raise DivergenceError(f"surrogate force non-finite at sub-step {i}",
                                      step_index=i)
            v_new = v_rot - delta_a * f_new
            if max(float(np.max(np.abs(q_rot))), float(np.max(np.abs(v_new)))) > DIVERGENCE_LIMIT:
                raise DivergenceError(f"trajectory diverged at sub-step {i}", step_index=i)
            states.append(PhasePoint(q_rot, v_new))
            forces.append(f_new)
            cur_q, cur_v = q_rot, v_new
        log = TrajectoryLog(states=states, surrogate_values=forces,
                            delta_a=delta_a, delta_b=delta_b)
        if len(cache) > 8:
            cache.clear()
        cache[key] = log
        return log

    def involution(state, aux):
        log = trajectory(state, aux)
        end = log.states[-1]
        return end.q, -end.v

    def acceptance(state, aux, mapped):
        if mapped[1] is DIVERGED:
            return np.array([1.0, 0.0])
        log = trajectory(state, aux)
        try:
            a = mh_probability_log(cameron_martin_log_alpha(log, phi, psi, spectrum))
        except NumericError:
            a = 0.0
        return np.array([1.0 - a, a])

    return KernelSpec(propose=propose, involutions=[None, involution],
                      acceptance=acceptance, proposal_count=1)


def _slot_swap(j: int):
    def swap_j(state, aux):
        new_aux = aux.copy()
        new_state = aux[j - 1].copy()
        new_aux[j - 1] = state
        return new_state, new_aux

    return swap_j


def _barker_acceptance(target: TargetModel):
    def acceptance(state, aux, mapped):
        slots = np.vstack([state[None, :], aux])
        return barker_weights_log(target.log_ratio_rows(slots))

    return acceptance


def build_multiproposal(target: TargetModel, cloud_sampler, pivot_sampler,
                        n_proposals: int) -> KernelSpec:
    """Pivot-and-cloud kernel with Barker-weighted selection.

    A pivot is drawn from ``pivot_sampler(state, rng)`` and ``n_proposals``
    candidates i.i.d. from ``cloud_sampler(pivot, rng)``; the next state is
    selected among the current state and all candidates with probabilities
    proportional to their target/reference density ratios.  The pair of
    samplers must jointly leave the reference measure reversible (a
    symmetric kernel used for both, for a flat reference, qualifies).
    """
    if n_proposals < 1:
        raise ConfigurationError("n_proposals must be at least 1")

    def propose(state, rng):
        pivot = np.asarray(pivot_sampler(state, rng), dtype=float)
        return np.stack([np.asarray(cloud_sampler(pivot, rng), dtype=float)
                         for _ in range(n_proposals)])

    involutions = [None] + [_slot_swap(j) for j in range(1, n_proposals + 1)]
    return KernelSpec(propose=propose, involutions=involutions,
                      acceptance=_barker_acceptance(target), proposal_count=n_proposals)


def symmetric_walk_pair(scale: float):
    """A Gaussian random-walk sampler usable as both pivot and cloud kernel."""
    if not scale > 0:
        raise ConfigurationError("scale must be positive")

    def sampler(center, rng):
        return center + scale * rng.standard_normal(center.shape)

    return sampler, sampler


def build_mpcn(target: TargetModel, rho: float, n_proposals: int) -> KernelSpec:
    """Multiproposal preconditioned Crank-Nicolson.

    The pivot is a pCN move from the current state and the cloud consists of
    i.i.d. pCN moves from the pivot; selection weights are the likelihood
    factors ``exp(-Phi)`` of the current state and every candidate.  The
    whole cloud is drawn in one vectorized call.
    """
    _require_reference(target, GaussianReference, "build_mpcn")
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}")
    if n_proposals < 1:
        raise ConfigurationError("n_proposals must be at least 1")
    spectrum = target.reference.spectrum
    spread = np.sqrt(1.0 - rho ** 2)
    prior_std = spectrum.std

    def propose(state, rng):
        pivot = rho * state + spread * (prior_std * rng.standard_normal(state.shape))
        noise = prior_std * rng.standard_normal((n_proposals, state.shape[0]))
        return rho * pivot + spread * noise

    involutions = [None] + [_slot_swap(j) for j in range(1, n_proposals + 1)]
    return KernelSpec(propose=propose, involutions=involutions,
                      acceptance=_barker_acceptance(target), proposal_count=n_proposals)


SAMPLER_KINDS = ("rwm", "mh", "mhgj", "hmc", "surrogate_hmc", "pcn",
                 "inf_hmc", "multiproposal", "mpcn")


@dataclass
class SamplerConfig:
    """Declarative sampler choice, as consumed by the command-line runner.

    ``step_size`` doubles as the random-walk scale for ``rwm`` and
    ``multiproposal``; ``delta_a``/``delta_b`` default to half and one
    ``step_size`` for ``inf_hmc``.  ``target_accept`` enables dual-averaging
    step-size adaptation during a burn-in window.
    """

    kind: str
    step_size: float = 0.1
    n_steps: int = 8
    proposal_count: int = 1
    rho: float = 0.9
    mass: object = 1.0
    delta_a: float | None = None
    delta_b: float | None = None
    target_accept: float | None = None

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigurationError(
                f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        if not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")
        if self.n_steps < 0:
            raise ConfigurationError("n_steps must be nonnegative")
        if self.proposal_count < 1:
            raise ConfigurationError("proposal_count must be at least 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"rho must lie in [0, 1], got {self.rho}")
        if self.target_accept is not None and not 0.0 < self.target_accept < 1.0:
            raise ConfigurationError("target_accept must lie strictly in (0, 1)")


def build_sampler(target: TargetModel, config: SamplerConfig,
                  step_size: float | None = None) -> KernelSpec:
    """Instantiate the sampler a config describes; ``step_size`` overrides."""
    step = config.step_size if step_size is None else step_size
    if config.kind == "rwm":
        return build_rwm(target, step)
    if config.kind == "hmc":
        return build_hmc(target, step, config.n_steps, config.mass)
    if config.kind == "surrogate_hmc":
        return build_surrogate_hmc(target, step, config.n_steps, config.mass)
    if config.kind == "pcn":
        return build_pcn(target, config.rho)
    if config.kind == "inf_hmc":
        delta_a = config.delta_a if config.delta_a is not None else step / 2.0
        delta_b = config.delta_b if config.delta_b is not None else step
        return build_inf_hmc(target, delta_a, delta_b, config.n_steps)
    if config.kind == "multiproposal":
        cloud, pivot = symmetric_walk_pair(step)
        return build_multiproposal(target, cloud, pivot, config.proposal_count)
    if config.kind == "mpcn":
        return build_mpcn(target, config.rho, config.proposal_count)
    raise ConfigurationError(
        f"sampler kind {config.kind!r} needs explicit callables; "
        "call build_mh or build_mhgj directly")


@dataclass
class ChainRecord:
    """States plus per-step selection metadata for one chain."""

    states: np.ndarray
    chosen_indices: np.ndarray
    probabilities: np.ndarray
    wall_seconds: float

    @property
    def n_iterations(self) -> int:
        return self.chosen_indices.size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def acceptance_rate(self) -> float:
        if self.chosen_indices.size == 0:
            return 0.0
        return float(np.mean(self.chosen_indices != 0))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def tail(self, burn_in: int) -> "ChainRecord":
        """Drop the first ``burn_in`` transitions, prorating the wall time."""
        if not 0 <= burn_in < self.n_iterations:
            raise ConfigurationError(
                f"burn_in must lie in [0, {self.n_iterations}), got {burn_in}")
        kept = self.n_iterations - burn_in
        return ChainRecord(
            states=self.states[burn_in:],
            chosen_indices=self.chosen_indices[burn_in:],
            probabilities=self.probabilities[burn_in:],
            wall_seconds=self.wall_seconds * (kept / self.n_iterations),
        )


def run_chain(initial: np.ndarray, spec: KernelSpec, n_iterations: int,
              seed: int = 0, rng: np.random.Generator | None = None) -> ChainRecord:
    """Iterate the master kernel and record the full trace.

    The recorded wall time covers only the stepping loop.  Passing the same
    seed (or the same generator state) reproduces the chain bit for bit.
    """
    if n_iterations < 1:
        raise ConfigurationError("n_iterations must be at least 1")
    if rng is None:
        rng = rng_stream(seed, "chain")
    state = np.array(initial, dtype=float)
    if state.ndim != 1:
        raise ConfigurationError("initial state must be a 1-d array")

    states = np.empty((n_iterations + 1, state.size))
    chosen = np.empty(n_iterations, dtype=np.int64)
    probabilities = np.empty((n_iterations, spec.proposal_count + 1))
    states[0] = state

    start = time.perf_counter()
    for k in range(n_iterations):
        record = master_step(state, spec, rng)
        state = record.next_state
        states[k + 1] = state
        chosen[k] = record.chosen_index
        probabilities[k] = record.probabilities
    wall = time.perf_counter() - start

    return ChainRecord(states=states, chosen_indices=chosen,
                       probabilities=probabilities, wall_seconds=wall)
