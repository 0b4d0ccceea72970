"""Finite-state analogues of the shipped kernels, plus exact enumeration.

Discretizing to a handful of states makes reversibility checkable to
machine precision: the full transition matrix of a kernel can be written
down by summing over every auxiliary outcome.  These helpers back both the
test suite and the ``check detailed_balance`` command.  States are encoded
as shape-``(1,)`` float arrays holding the state index so that the generic
master kernel can run them unchanged.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .core import KernelSpec, barker_weights, mh_probability
from .errors import ConfigurationError


def _validate_stochastic(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError(f"{name} must be a square matrix")
    if np.any(matrix < 0.0) or np.max(np.abs(matrix.sum(axis=1) - 1.0)) > 1e-12:
        raise ConfigurationError(f"{name} must be row-stochastic")
    return matrix


def _validate_pmf(pmf, n_states: int, name: str = "pmf") -> np.ndarray:
    pmf = np.asarray(pmf, dtype=float)
    if pmf.shape != (n_states,):
        raise ConfigurationError(
            f"{name} must have one entry per state, expected {n_states}")
    if not np.all(np.isfinite(pmf)) or np.any(pmf <= 0.0):
        raise ConfigurationError(f"{name} entries must be finite and positive")
    return pmf


def mh_kernel_matrix(pmf: np.ndarray, proposal: np.ndarray) -> np.ndarray:
    """Exact Metropolis-Hastings transition matrix on a finite state space."""
    proposal = _validate_stochastic(proposal, "proposal")
    pmf = _validate_pmf(pmf, proposal.shape[0])
    n = pmf.size
    kernel = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if j == i or proposal[i, j] == 0.0:
                continue
            ratio = (pmf[j] * proposal[j, i]) / (pmf[i] * proposal[i, j])
            kernel[i, j] = proposal[i, j] * mh_probability(ratio)
        kernel[i, i] = 1.0 - kernel[i].sum()
    return kernel


def always_accept_kernel_matrix(proposal: np.ndarray) -> np.ndarray:
    """Deliberately biased kernel: the MH ratio replaced by the constant 1.

    Serves as the negative control; it satisfies detailed balance only when
    the proposal itself happens to be reversible for the target.
    """
    return _validate_stochastic(proposal, "proposal").copy()


def barker_multiproposal_kernel_matrix(pmf: np.ndarray, reference_pmf: np.ndarray,
                                       proposal: np.ndarray, pivot_proposal: np.ndarray,
                                       n_proposals: int) -> np.ndarray:
    """Exact transition matrix of the pivot-and-cloud kernel, by enumeration.

    The auxiliary draw is a pivot from ``pivot_proposal`` followed by
    ``n_proposals`` i.i.d. cloud points from ``proposal`` at the pivot; the
    selection weights are the density ratios ``pmf / reference_pmf`` at the
    current state and each cloud point.  Complexity is
    ``n_states ** (n_proposals + 2)``, so keep both small.
    """
    proposal = _validate_stochastic(proposal, "proposal")
    pivot_proposal = _validate_stochastic(pivot_proposal, "pivot_proposal")
    n = proposal.shape[0]
    pmf = _validate_pmf(pmf, n)
    reference_pmf = _validate_pmf(reference_pmf, n, "reference_pmf")
    if pivot_proposal.shape[0] != n:
        raise ConfigurationError("pivot_proposal must match the state count")
    if n_proposals < 1:
        raise ConfigurationError("n_proposals must be at least 1")
    ratio = pmf / reference_pmf

    kernel = np.zeros((n, n))
    for start in range(n):
        for pivot in range(n):
            w_pivot = pivot_proposal[start, pivot]
            if w_pivot == 0.0:
                continue
            for cloud in product(range(n), repeat=n_proposals):
                w_cloud = w_pivot * float(np.prod(proposal[pivot, list(cloud)]))
                if w_cloud == 0.0:
                    continue
                slots = (start,) + cloud
                weights = barker_weights(ratio[list(slots)])
                for slot_value, prob in zip(slots, weights):
                    kernel[start, slot_value] += w_cloud * prob
    return kernel


def _categorical(row: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(np.cumsum(row), rng.uniform(), side="right"))


def discrete_mh_spec(pmf: np.ndarray, proposal: np.ndarray,
                     always_accept: bool = False) -> KernelSpec:
    """A runnable single-proposal MH kernel on a finite state space.

    With ``always_accept`` the acceptance rule is replaced by the constant 1,
    matching :func:`always_accept_kernel_matrix`.
    """
    proposal = _validate_stochastic(proposal, "proposal")
    pmf = _validate_pmf(pmf, proposal.shape[0])

    def propose(state, rng):
        i = int(state[0])
        return np.array([float(_categorical(proposal[i], rng))])

    def swap(state, aux):
        return aux, state

    def acceptance(state, aux, mapped):
        if always_accept:
            return np.array([0.0, 1.0])
        i, j = int(state[0]), int(aux[0])
        if i == j:
            return np.array([0.0, 1.0])
        ratio = (pmf[j] * proposal[j, i]) / (pmf[i] * proposal[i, j])
        a = mh_probability(ratio)
        return np.array([1.0 - a, a])

    return KernelSpec(propose=propose, involutions=[None, swap],
                      acceptance=acceptance, proposal_count=1)
