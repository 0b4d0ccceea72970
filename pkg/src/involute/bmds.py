"""Bayesian multidimensional scaling with truncated-normal dissimilarities.

Observed dissimilarities are modeled as latent-distance draws truncated to
the positive axis.  The log likelihood couples every pair of items; the
gradient restricted to a band of near indices is the cheap surrogate, and
the full gradient is the band evaluated at maximal width, so both share one
code path.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import ConfigurationError
from .rng import rng_stream
from .samplers import LebesgueReference, TargetModel

DISTANCE_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DegenerateDistanceWarning(UserWarning):
    """Two latent points coincide; their distance was floored."""


@dataclass
class DissimilarityData:
    """Observed pairwise dissimilarities for ``n_items`` items.

    ``values[i, j]`` is used only for ``i < j``; the matrix must be square
    with positive upper-triangular entries.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.shape[0]
        if self.values.ndim != 2 or self.values.shape != (n, n):
            raise ConfigurationError("dissimilarity matrix must be square")
        iu = np.triu_indices(n, k=1)
        if np.any(self.values[iu] <= 0) or not np.all(np.isfinite(self.values[iu])):
            raise ConfigurationError("dissimilarities must be positive and finite")

    @property
    def n_items(self) -> int:
        return self.values.shape[0]

    @property
    def n_pairs(self) -> int:
        n = self.n_items
        return n * (n - 1) // 2


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    tiny = dist <= DISTANCE_FLOOR
    np.fill_diagonal(tiny, False)
    if np.any(tiny):
        warnings.warn("coincident latent points; distances floored",
                      DegenerateDistanceWarning, stacklevel=3)
        dist = np.where(tiny, DISTANCE_FLOOR, dist)
    return dist


def bmds_loglik(points: np.ndarray, data: DissimilarityData, sigma2: float) -> float:
    """Truncated-normal log likelihood over all item pairs.

    Each pair contributes a Gaussian residual term plus the log normalizer
    ``log Phi(distance / sigma)`` that keeps the truncation honest.
    """
    points = np.asarray(points, dtype=float)
    n = data.n_items
    if points.shape[0] != n:
        raise ConfigurationError("one latent point per item is required")
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")
    sigma = np.sqrt(sigma2)
    dist = _pairwise_distances(points)
    iu = np.triu_indices(n, k=1)
    delta = data.values[iu]
    dstar = dist[iu]
    m = delta.size
    resid = (delta - dstar) ** 2 / (2.0 * sigma2)
    normalizer = log_ndtr(dstar / sigma)
    return float(-0.5 * m * np.log(sigma2) - np.sum(resid) - np.sum(normalizer))


def _band_pairs(n: int, bandwidth: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular index pairs with ``j - i <= bandwidth``."""
    ii, jj = [], []
    for i in range(n - 1):
        hi = min(n, i + bandwidth + 1)
        ii.extend([i] * (hi - i - 1))
        jj.extend(range(i + 1, hi))
    return np.array(ii, dtype=int), np.array(jj, dtype=int)


def bmds_grad(points: np.ndarray, data: DissimilarityData, sigma2: float,
              bandwidth: int | None = None) -> np.ndarray:
    """Gradient of the log likelihood in the latent coordinates.

    ``bandwidth`` restricts the pair sum to indices within that distance of
    each other; ``None`` (or ``n_items - 1``) covers every pair.  The full
    gradient is literally the widest band, so restricted and unrestricted
    calls agree bitwise where they overlap.
    """
    points = np.asarray(points, dtype=float)
    n = data.n_items
    if points.shape[0] != n:
        raise ConfigurationError("one latent point per item is required")
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")
    if bandwidth is None:
        bandwidth = n - 1
    if not 1 <= bandwidth <= n - 1:
        raise ConfigurationError(f"bandwidth must lie in [1, {n - 1}]")
    sigma = np.sqrt(sigma2)

    ii, jj = _band_pairs(n, bandwidth)
    diff = points[ii] - points[jj]
    dstar = np.sqrt(np.sum(diff * diff, axis=-1))
    tiny = dstar <= DISTANCE_FLOOR
    if np.any(tiny):
        warnings.warn("coincident latent points; distances floored",
                      DegenerateDistanceWarning, stacklevel=2)
        dstar = np.where(tiny, DISTANCE_FLOOR, dstar)
    delta = data.values[ii, jj]
    z = dstar / sigma
    # Mills ratio phi(z)/Phi(z), stable for the z >= 0 seen here.
    mills = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / ndtr(z)
    pair_scale = ((delta - dstar) / sigma2 - mills / sigma) / dstar
    contrib = pair_scale[:, None] * diff
    grad = np.zeros_like(points)
    np.add.at(grad, ii, contrib)
    np.add.at(grad, jj, -contrib)
    return grad


def mills_ratio(z: float) -> float:
    """Normal hazard phi(z) / Phi(z), exposed for verification."""
    return float(_INV_SQRT_2PI * np.exp(-0.5 * z * z) / ndtr(z))


def posterior_target(data: DissimilarityData, n_dims: int, sigma2: float,
                     prior_var: float = 4.0,
                     bandwidth: int | None = None) -> TargetModel:
    """Posterior over the flattened latent configuration at fixed noise.

    Latent coordinates carry i.i.d. normal priors with variance
    ``prior_var``.  ``bandwidth`` only affects the gradient surrogate; the
    density itself always uses every pair.
    """
    n = data.n_items
    if n_dims < 1:
        raise ConfigurationError("n_dims must be positive")
    if not prior_var > 0:
        raise ConfigurationError("prior_var must be positive")

    def unflatten(theta):
        return np.asarray(theta, dtype=float).reshape(n, n_dims)

    def log_density_ratio(theta):
        theta = np.asarray(theta, dtype=float)
        return (bmds_loglik(unflatten(theta), data, sigma2)
                - 0.5 * float(theta @ theta) / prior_var)

    def gradient(theta):
        theta = np.asarray(theta, dtype=float)
        grad = bmds_grad(unflatten(theta), data, sigma2, bandwidth=None)
        return grad.reshape(-1) - theta / prior_var

    def surrogate_gradient(theta):
        theta = np.asarray(theta, dtype=float)
        grad = bmds_grad(unflatten(theta), data, sigma2, bandwidth=bandwidth)
        return grad.reshape(-1) - theta / prior_var

    return TargetModel(log_density_ratio=log_density_ratio,
                       reference=LebesgueReference(),
                       gradient=gradient,
                       surrogate_gradient=surrogate_gradient)


def sample_dissimilarities(points: np.ndarray, sigma2: float,
                           seed: int) -> DissimilarityData:
    """Draw truncated-normal dissimilarities around the latent distances."""
    points = np.asarray(points, dtype=float)
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")
    n = points.shape[0]
    sigma = np.sqrt(sigma2)
    rng = rng_stream(seed, "bmds-data")
    dist = _pairwise_distances(points)
    values = np.zeros((n, n))
    for i in range(n - 1):
        for j in range(i + 1, n):
            draw = -1.0
            while draw <= 0.0:
                draw = dist[i, j] + sigma * rng.standard_normal()
            values[i, j] = draw
            values[j, i] = draw
    return DissimilarityData(values=values)


def update_sigma2(points: np.ndarray, data: DissimilarityData, sigma2: float,
                  rng: np.random.Generator, walk_scale: float = 0.3,
                  shape: float = 1.0, rate: float = 1.0) -> tuple[float, bool]:
    """One random-walk update of the noise variance on the log scale.

    The prior is inverse-gamma with the given shape and rate; the move is a
    Gaussian step in ``log sigma2`` with the matching Jacobian folded into
    the ratio.
    """
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")

    def log_post(s2):
        prior = -(shape + 1.0) * np.log(s2) - rate / s2
        return bmds_loglik(points, data, s2) + prior + np.log(s2)

    proposal = float(sigma2 * np.exp(walk_scale * rng.standard_normal()))
    log_ratio = log_post(proposal) - log_post(sigma2)
    if np.log(rng.uniform()) < log_ratio:
        return proposal, True
    return sigma2, False


def write_dissimilarities_csv(data: DissimilarityData, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["i", "j", "value"])
        n = data.n_items
        for i in range(n - 1):
            for j in range(i + 1, n):
                writer.writerow([i + 1, j + 1, format(data.values[i, j], ".17g")])


def read_dissimilarities_csv(path) -> DissimilarityData:
    rows = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"i", "j", "value"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigurationError(
                f"expected columns {sorted(expected)}, got {reader.fieldnames}")
        for row in reader:
            rows.append((int(row["i"]), int(row["j"]), float(row["value"])))
    if not rows:
        raise ConfigurationError("no dissimilarity rows found")
    n = max(max(i, j) for i, j, _ in rows)
    values = np.zeros((n, n))
    for i, j, v in rows:
        values[i - 1, j - 1] = v
        values[j - 1, i - 1] = v
    return DissimilarityData(values=values)
