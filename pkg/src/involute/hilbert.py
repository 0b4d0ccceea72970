"""Gaussian reference measures on spectrally truncated Hilbert spaces.

Targets here have the form  exp(-Phi(q)) d(prior)  with a centered Gaussian
prior whose covariance is diagonal in the retained basis.  The module owns
the covariance spectrum type, prior sampling, the whitened inner product,
and the closed-form log acceptance ratio for palindromic kick-rotate-kick
trajectories driven by a surrogate force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError
from .integrators import PhasePoint


@dataclass
class CovarianceSpectrum:
    """Eigenvalues of a trace-class prior covariance, largest first."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ConfigurationError("spectrum must be a nonempty 1-d array")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            raise ConfigurationError("spectrum eigenvalues must be finite and positive")
        if np.any(np.diff(lam) > 0.0):
            raise ConfigurationError("spectrum eigenvalues must be nonincreasing")
        self.eigenvalues = lam

    @property
    def truncation(self) -> int:
        return self.eigenvalues.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)


def power_spectrum(truncation: int, decay: float = 1.0) -> CovarianceSpectrum:
    """Spectrum ``lambda_i = i^(-2 * decay)``, i = 1..truncation."""
    if truncation < 1:
        raise ConfigurationError("truncation must be at least 1")
    i = np.arange(1, truncation + 1, dtype=float)
    return CovarianceSpectrum(i ** (-2.0 * decay))


def sample_prior(spectrum: CovarianceSpectrum, rng: np.random.Generator) -> np.ndarray:
    """One draw from the centered Gaussian with the given diagonal covariance."""
    return spectrum.std * rng.standard_normal(spectrum.truncation)


def whitened_dot(a: np.ndarray, b: np.ndarray, spectrum: CovarianceSpectrum) -> float:
    """Inner product after whitening both arguments by the prior covariance.

    Equals ``sum(a_i * b_i / lambda_i)``, i.e. the Cameron-Martin pairing of
    the truncated space.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != (spectrum.truncation,):
        raise ConfigurationError(
            f"whitened_dot expects two vectors of shape ({spectrum.truncation},)"
        )
    return float(np.sum(a * b / spectrum.eigenvalues))


def whitened_norm_sq(a: np.ndarray, spectrum: CovarianceSpectrum) -> float:
    return whitened_dot(a, a, spectrum)


@dataclass
class TrajectoryLog:
    """States and surrogate-force values along one palindromic trajectory.

    ``states[i]`` is the phase point after ``i`` full kick-rotate-kick
    sub-steps (so ``states[0]`` is the start and no momentum flip is ever
    recorded here), and ``surrogate_values[i]`` is the surrogate force
    evaluated at ``states[i].q``.  ``delta_a`` is the outer kick time of
    each sub-step and ``delta_b`` the inner rotation angle.
    """

    states: list[PhasePoint]
    surrogate_values: list[np.ndarray]
    delta_a: float
    delta_b: float

    def __post_init__(self):
        if len(self.states) != len(self.surrogate_values):
            raise ConfigurationError("one surrogate value per recorded state is required")
        if len(self.states) < 1:
            raise ConfigurationError("trajectory log cannot be empty")

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1


def cameron_martin_log_alpha(traj: TrajectoryLog, phi, psi, spectrum: CovarianceSpectrum) -> float:
    """Log acceptance ratio of a surrogate-driven kick-rotate-kick trajectory.

    ``phi`` is the potential against the Gaussian prior and ``psi`` an
    optional auxiliary-bias potential (``None`` means identically zero).
    The exact rotation leaves the prior invariant, so only the kicks
    contribute: boundary and interior cross terms in the whitened pairing
    plus a squared-norm correction for the two half-open ends.  When the
    surrogate equals the preconditioned potential gradient this reproduces
    the exact Hamiltonian energy difference of the trajectory.

    Requires at least one sub-step; the degenerate zero-step map is its own
    inverse and needs no ratio.
    """
    n = traj.n_steps
    if n < 1:
        raise ConfigurationError("log acceptance ratio needs at least one sub-step")
    q0, v0 = traj.states[0]
    qn, vn = traj.states[-1]
    f0 = traj.surrogate_values[0]
    fn = traj.surrogate_values[-1]
    da = traj.delta_a

    terms = {
        "potential_start": float(phi(q0)),
        "potential_end": -float(phi(qn)),
        "interior_cross": 2.0 * da * sum(
            whitened_dot(traj.states[i].v, traj.surrogate_values[i], spectrum)
            for i in range(1, n)
        ),
        "norm_correction": -(da ** 2 / 2.0) * (
            whitened_norm_sq(f0, spectrum) - whitened_norm_sq(fn, spectrum)
        ),
        "boundary_cross": da * (
            whitened_dot(v0, f0, spectrum) + whitened_dot(vn, fn, spectrum)
        ),
    }
    if psi is not None:
        terms["bias_start"] = float(psi(q0, v0))
        terms["bias_end"] = -float(psi(qn, -vn))

    total = 0.0
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericError(f"non-finite contribution in term '{name}'")
        total += value
    return total
