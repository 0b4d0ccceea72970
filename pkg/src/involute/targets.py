"""Reference targets for tests, checks, and the command-line runner."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError
from .hilbert import CovarianceSpectrum
from .samplers import GaussianReference, LebesgueReference, TargetModel


def standard_gaussian(dim: int) -> TargetModel:
    """Standard normal in ``dim`` dimensions, flat reference."""
    if dim < 1:
        raise ConfigurationError("dim must be at least 1")

    return TargetModel(
        log_density_ratio=lambda q: -0.5 * float(q @ q),
        reference=LebesgueReference(),
        gradient=lambda q: -q,
        log_density_ratio_batch=lambda rows: -0.5 * np.sum(rows * rows, axis=1),
    )


def correlated_gaussian(cov: np.ndarray) -> TargetModel:
    """Centered Gaussian with a dense covariance, flat reference."""
    cov = np.asarray(cov, dtype=float)
    precision = np.linalg.inv(cov)

    return TargetModel(
        log_density_ratio=lambda q: -0.5 * float(q @ precision @ q),
        reference=LebesgueReference(),
        gradient=lambda q: -(precision @ q),
        log_density_ratio_batch=lambda rows: -0.5 * np.sum(rows * (rows @ precision), axis=1),
    )


def gaussian_mixture_1d(centers, sd: float = 1.0, weights=None) -> TargetModel:
    """Equal-variance Gaussian mixture on the line, flat reference."""
    centers = np.asarray(centers, dtype=float)
    if weights is None:
        weights = np.full(centers.size, 1.0 / centers.size)
    weights = np.asarray(weights, dtype=float)
    log_w = np.log(weights)

    def component_logs(q):
        return log_w - 0.5 * ((q[0] - centers) / sd) ** 2

    def log_density_ratio(q):
        return float(logsumexp(component_logs(q)))

    def gradient(q):
        logs = component_logs(q)
        resp = np.exp(logs - logsumexp(logs))
        return np.array([float(np.sum(resp * (centers - q[0]))) / sd ** 2])

    def batch(rows):
        logs = log_w[None, :] - 0.5 * ((rows[:, :1] - centers[None, :]) / sd) ** 2
        return logsumexp(logs, axis=1)

    return TargetModel(log_density_ratio=log_density_ratio,
                       reference=LebesgueReference(),
                       gradient=gradient,
                       log_density_ratio_batch=batch)


def gaussian_likelihood_target(spectrum: CovarianceSpectrum, data: np.ndarray,
                               noise_precision) -> TargetModel:
    """Gaussian likelihood against a Gaussian prior: a conjugate test posterior.

    The potential is ``0.5 * sum(w_i * (q_i - y_i)^2)``; posterior mean and
    variance have closed forms (:func:`conjugate_posterior_moments`), which
    makes this the reference target for prior-reversible samplers.
    """
    data = np.asarray(data, dtype=float)
    w = np.broadcast_to(np.asarray(noise_precision, dtype=float), data.shape).copy()
    if data.shape != (spectrum.truncation,):
        raise ConfigurationError("data must match the spectrum truncation")

    def log_density_ratio(q):
        return -0.5 * float(np.sum(w * (q - data) ** 2))

    return TargetModel(
        log_density_ratio=log_density_ratio,
        reference=GaussianReference(spectrum),
        gradient=lambda q: -w * (q - data),
        log_density_ratio_batch=lambda rows: -0.5 * np.sum(w * (rows - data) ** 2, axis=1),
    )


def conjugate_posterior_moments(spectrum: CovarianceSpectrum, data: np.ndarray,
                                noise_precision) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode posterior mean and variance of :func:`gaussian_likelihood_target`."""
    data = np.asarray(data, dtype=float)
    w = np.broadcast_to(np.asarray(noise_precision, dtype=float), data.shape)
    post_prec = 1.0 / spectrum.eigenvalues + w
    return (w * data) / post_prec, 1.0 / post_prec


def flat_hilbert_target(spectrum: CovarianceSpectrum) -> TargetModel:
    """Zero potential: the Gaussian prior itself is the target."""
    return TargetModel(
        log_density_ratio=lambda q: 0.0,
        reference=GaussianReference(spectrum),
        gradient=lambda q: np.zeros_like(q),
        log_density_ratio_batch=lambda rows: np.zeros(rows.shape[0]),
    )
