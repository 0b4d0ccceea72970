"""Measure-level machinery for involutive transition kernels.

A transition kernel is assembled from three pieces: a proposal sampler on an
auxiliary space, a family of involutions on the product of state and
auxiliary space, and an acceptance rule that splits unit probability mass
across the involution images.  ``master_step`` executes one transition of
any kernel so assembled; the remaining functions are the standard acceptance
families (Metropolis-Hastings ratios, Barker weights, Jacobian-corrected
ratios for deterministic jumps) and brute-force reversibility checkers used
to validate the shipped samplers.

Conventions
-----------
States are 1-d float arrays.  An auxiliary point is a plain array as well:
shape ``(dim,)`` when the kernel carries a single proposal, ``(p, dim)``
when it carries a cloud of ``p`` proposals.  Involutions take and return
``(state, aux)`` pairs.  Index 0 always denotes "stay put": the identity
involution is implicit and never evaluated, and a recorded ``chosen_index``
of 0 counts as a rejection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateWeightsError,
    DivergenceError,
    NumericError,
    UndefinedDensityError,
)

StateVector = np.ndarray
AuxiliaryPoint = np.ndarray
Involution = Callable[[StateVector, AuxiliaryPoint], tuple[StateVector, AuxiliaryPoint]]

PROB_SUM_TOL = 1e-9


class _Diverged:
    """Sentinel standing in for a proposal image lost to numerical blow-up."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover
        return "DIVERGED"


DIVERGED = _Diverged()


@dataclass
class KernelSpec:
    """Everything ``master_step`` needs to run one involutive transition.

    Parameters
    ----------
    propose : callable ``(state, rng) -> aux``
        Draws the auxiliary point.  Must consume randomness only from the
        supplied generator.
    involutions : sequence of length ``proposal_count + 1``
        Maps ``(state, aux) -> (state', aux')``.  Entry 0 may be ``None``,
        meaning the identity; it is never evaluated on the rejection branch.
        A map may raise :class:`DivergenceError`, in which case its image is
        treated as unreachable and the acceptance rule must give it zero mass.
    acceptance : callable ``(state, aux, mapped) -> probs``
        Returns the probability vector over indices ``0..proposal_count``.
        ``mapped`` is the list of involution images, with ``mapped[0]`` the
        untouched ``(state, aux)`` pair and ``DIVERGED`` marking blow-ups.
    proposal_count : int
        Number of non-identity involutions, ``p >= 1``.
    """

    propose: Callable[[StateVector, np.random.Generator], AuxiliaryPoint]
    involutions: Sequence[Involution | None]
    acceptance: Callable[..., np.ndarray]
    proposal_count: int

    def __post_init__(self):
        if self.proposal_count < 1:
            raise ConfigurationError("proposal_count must be at least 1")
        if len(self.involutions) != self.proposal_count + 1:
            raise ConfigurationError(
                f"expected {self.proposal_count + 1} involutions "
                f"(identity slot included), got {len(self.involutions)}"
            )


@dataclass
class StepRecord:
    """Outcome of one master-kernel transition."""

    chosen_index: int
    probabilities: np.ndarray
    next_state: StateVector

    @property
    def accepted(self) -> bool:
        return self.chosen_index != 0


def master_step(state: StateVector, spec: KernelSpec, rng: np.random.Generator) -> StepRecord:
    """Run one transition of the involutive master kernel.

    Samples the auxiliary point, evaluates every non-identity involution,
    asks the acceptance rule for the probability split, and selects the next
    state categorically.  Selection uses a single uniform draw compared
    against cumulative probabilities in index order, so runs are
    bit-reproducible given identical streams.
    """
    state = np.asarray(state, dtype=float)
    aux = spec.propose(state, rng)
    if isinstance(aux, np.ndarray) and aux.ndim >= 1 and aux.shape[-1] != state.shape[-1]:
        raise ConfigurationError(
            f"auxiliary point dimension {aux.shape[-1]} does not match state dimension {state.shape[-1]}"
        )

    mapped: list = [(state, aux)]
    for invol in spec.involutions[1:]:
        try:
            mapped.append(invol(state, aux))
        except DivergenceError:
            mapped.append(DIVERGED)

    probs = np.asarray(spec.acceptance(state, aux, mapped), dtype=float)
    if probs.shape != (spec.proposal_count + 1,):
        raise ConfigurationError(
            f"acceptance rule returned shape {probs.shape}, "
            f"expected ({spec.proposal_count + 1},)"
        )
    if not np.all(np.isfinite(probs)) or probs.min() < -1e-12 or probs.max() > 1.0 + 1e-12:
        raise ConfigurationError(f"acceptance probabilities out of range: {probs}")
    if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
        raise ConfigurationError(
            f"acceptance probabilities sum to {probs.sum():.12g}, not 1"
        )

    u = rng.uniform()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, spec.proposal_count)

    if idx == 0:
        invol0 = spec.involutions[0]
        next_state = state if invol0 is None else np.asarray(invol0(state, aux)[0], dtype=float)
    else:
        image = mapped[idx]
        if image is DIVERGED:
            raise ConfigurationError(
                "acceptance rule assigned positive mass to a diverged image"
            )
        next_state = np.asarray(image[0], dtype=float)

    return StepRecord(chosen_index=idx, probabilities=probs, next_state=next_state)


def mh_probability(ratio: float) -> float:
    """Metropolis-Hastings clip: ``min(ratio, 1)`` for a ratio in plain space."""
    ratio = float(ratio)
    if np.isnan(ratio):
        raise NumericError("MH ratio is NaN")
    if ratio < 0.0:
        raise NumericError(f"MH ratio must be nonnegative, got {ratio}")
    return min(ratio, 1.0)


def mh_probability_log(log_ratio: float) -> float:
    """Metropolis-Hastings clip for a log-space ratio: ``exp(min(log_ratio, 0))``.

    ``-inf`` maps to 0 and ``+inf`` to 1; NaN raises.
    """
    log_ratio = float(log_ratio)
    if np.isnan(log_ratio):
        raise NumericError("log MH ratio is NaN")
    return float(np.exp(min(log_ratio, 0.0)))


def barker_weights(unnormalized: np.ndarray) -> np.ndarray:
    """Normalize nonnegative weights to a probability vector.

    Raises :class:`DegenerateWeightsError` when every weight is zero.
    """
    w = np.asarray(unnormalized, dtype=float)
    if np.any(np.isnan(w)) or np.any(w < 0.0):
        raise NumericError(f"weights must be nonnegative and non-NaN: {w}")
    total = float(w.sum())
    if total <= 0.0:
        raise DegenerateWeightsError("all proposal weights are zero")
    return w / total


def barker_weights_log(log_weights: np.ndarray) -> np.ndarray:
    """Normalize log-space weights via a max-shift, tolerating ``-inf`` entries."""
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)):
        raise NumericError("log weights contain NaN")
    shift = float(lw.max())
    if shift == -np.inf:
        raise DegenerateWeightsError("all log weights are -inf")
    w = np.exp(lw - shift)
    return w / float(w.sum())


def mhgj_acceptance(g_current: float, g_mapped: float, abs_det_jacobian: float) -> float:
    """Acceptance for a deterministic jump with a volume correction.

    ``g`` is the joint density of state and auxiliary point against a common
    reference; ``abs_det_jacobian`` is |det| of the jump's derivative at the
    current point.  A vanishing ``g_current`` leaves the ratio undefined.
    """
    g_current = float(g_current)
    g_mapped = float(g_mapped)
    abs_det_jacobian = float(abs_det_jacobian)
    if g_current <= 0.0:
        raise UndefinedDensityError(
            f"joint density at the current point must be positive, got {g_current}"
        )
    if g_mapped < 0.0 or abs_det_jacobian < 0.0:
        raise NumericError("mapped density and |det| must be nonnegative")
    ratio = g_mapped * abs_det_jacobian / g_current
    return mh_probability(ratio)


def mhgj_acceptance_log(log_g_current: float, log_g_mapped: float, log_abs_det: float) -> float:
    """Log-space variant of :func:`mhgj_acceptance`."""
    if log_g_current == -np.inf:
        raise UndefinedDensityError("joint density at the current point is zero")
    return mh_probability_log(log_g_mapped + log_abs_det - log_g_current)


@dataclass
class InvolutionReport:
    """Result of a brute-force involution check."""

    max_deviation: float
    tol: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def check_involution(mapping, test_points, tol: float = 1e-10) -> InvolutionReport:
    """Verify ``mapping(mapping(x)) == x`` on a batch of phase points.

    ``mapping`` takes ``(q, v)`` and returns a pair; ``test_points`` is an
    iterable of such pairs.  The report carries the worst sup-norm deviation.
    """
    worst = 0.0
    count = 0
    for point in test_points:
        q, v = point
        q1, v1 = mapping(np.asarray(q, dtype=float), np.asarray(v, dtype=float))
        q2, v2 = mapping(q1, v1)
        dev = max(
            float(np.max(np.abs(q2 - q))) if np.size(q) else 0.0,
            float(np.max(np.abs(v2 - v))) if np.size(v) else 0.0,
        )
        worst = max(worst, dev)
        count += 1
    if count == 0:
        raise ConfigurationError("check_involution needs at least one test point")
    return InvolutionReport(max_deviation=worst, tol=tol, n_points=count)


def check_detailed_balance_discrete(pmf: np.ndarray, kernel: np.ndarray) -> float:
    """Max violation of ``pi_i K_ij == pi_j K_ji`` for a finite-state kernel.

    ``kernel`` rows must sum to 1 and ``pmf`` must sum to 1, each to 1e-12;
    the return value is the largest absolute flow imbalance over all pairs.
    """
    pmf = np.asarray(pmf, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    n = pmf.shape[0]
    if pmf.ndim != 1 or kernel.shape != (n, n):
        raise ConfigurationError(
            f"dimension mismatch: pmf {pmf.shape}, kernel {kernel.shape}"
        )
    if abs(float(pmf.sum()) - 1.0) > 1e-12:
        raise ConfigurationError(f"pmf sums to {pmf.sum():.15g}, not 1")
    row_err = float(np.max(np.abs(kernel.sum(axis=1) - 1.0)))
    if row_err > 1e-12:
        raise ConfigurationError(f"kernel rows sum to 1 only within {row_err:.3g}")
    flow = pmf[:, None] * kernel
    return float(np.max(np.abs(flow - flow.T)))
