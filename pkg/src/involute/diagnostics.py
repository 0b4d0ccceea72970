"""Chain quality measures: autocorrelation, ESS, jump distances, occupancy.

The effective sample size uses the initial monotone positive sequence
truncation of the autocorrelation sum, so it is defensive against noisy
tails.  All per-second figures are normalized by the chain's recorded
sampling wall time, which excludes I/O.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .samplers import ChainRecord


class ConstantSeriesWarning(UserWarning):
    """The series has zero variance; correlation-based diagnostics degenerate."""


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags ``0..max_lag`` with ``1/n`` weighting.

    The biased normalization keeps the implied spectral estimate nonnegative
    definite.  A constant series is flagged with a warning and returns the
    indicator at lag zero.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if not 0 <= max_lag < n:
        raise ConfigurationError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    x = x - x.mean()
    c0 = float(np.dot(x, x))
    if c0 == 0.0:
        warnings.warn("autocorrelation of a constant series", ConstantSeriesWarning)
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(x, n=size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=size)[: max_lag + 1]
    return acov / c0


def ess(series: np.ndarray) -> float:
    """Effective sample size via the initial monotone positive sequence.

    Successive lag-pair sums of the autocorrelation are accumulated while
    they stay positive, then forced nonincreasing; the integrated time
    ``tau = 2 * sum(pairs) - 1`` gives ``ESS = n / tau``, clamped to
    ``[1, n]``.  For an AR(1) chain with coefficient ``a`` this approaches
    ``n * (1 - a) / (1 + a)``.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ConfigurationError(f"ess needs at least 10 samples, got {n}")
    rho = autocorrelation(x, n - 1)
    n_pairs = (rho.size) // 2
    pair_sums = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    positive = np.nonzero(pair_sums <= 0.0)[0]
    cutoff = int(positive[0]) if positive.size else n_pairs
    if cutoff == 0:
        return float(n)
    kept = np.minimum.accumulate(pair_sums[:cutoff])
    tau = 2.0 * float(kept.sum()) - 1.0
    if tau <= 0.0:
        return float(n)
    return float(np.clip(n / tau, 1.0, n))


def _states_of(chain) -> np.ndarray:
    if isinstance(chain, ChainRecord):
        return chain.states
    states = np.asarray(chain, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    return states


def msjd(chain) -> float:
    """Mean squared Euclidean jump distance between consecutive states."""
    states = _states_of(chain)
    if states.shape[0] < 2:
        raise ConfigurationError("msjd needs at least two states")
    jumps = np.diff(states, axis=0)
    return float(np.mean(np.sum(jumps * jumps, axis=1)))


@dataclass
class OccupancyReport:
    """Per-center visit fractions plus the share of unassigned states."""

    fractions: np.ndarray
    unassigned: float


def mode_occupancy(chain, centers: np.ndarray, radius: float) -> OccupancyReport:
    """Fraction of states within ``radius`` of each center.

    Balls may overlap; a state inside several is credited to the nearest
    center and a warning is emitted once.  States outside every ball are
    reported as unassigned.
    """
    states = _states_of(chain)
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    if radius < 0:
        raise ConfigurationError("radius must be nonnegative")
    if centers.shape[1] != states.shape[1]:
        raise ConfigurationError("centers and states must share a dimension")
    diffs = states[:, None, :] - centers[None, :, :]
    dists = np.sqrt(np.sum(diffs * diffs, axis=2))
    inside = dists <= radius
    multiple = inside.sum(axis=1) > 1
    if np.any(multiple):
        warnings.warn("occupancy balls overlap; crediting nearest center", UserWarning)
    nearest = np.argmin(dists, axis=1)
    any_inside = inside.any(axis=1)
    n = states.shape[0]
    fractions = np.array([
        float(np.sum(any_inside & (nearest == c) & inside[:, c])) / n
        for c in range(centers.shape[0])
    ])
    return OccupancyReport(fractions=fractions,
                           unassigned=float(np.sum(~any_inside)) / n)


@dataclass
class DiagnosticsReport:
    """Summary statistics of one recorded chain."""

    ess: np.ndarray
    min_ess: float
    median_ess: float
    acf: np.ndarray
    msjd: float
    acceptance_rate: float
    wall_seconds: float
    ess_per_second: np.ndarray
    msjd_per_second: float


def compute_report(chain: ChainRecord, max_lag: int | None = None) -> DiagnosticsReport:
    """Per-dimension ESS and ACF, jump distance, and rate normalizations."""
    states = chain.states
    n = states.shape[0]
    if max_lag is None:
        max_lag = min(1000, n - 1)
    ess_values = np.array([ess(states[:, d]) for d in range(states.shape[1])])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantSeriesWarning)
        acf = np.stack([autocorrelation(states[:, d], max_lag)
                        for d in range(states.shape[1])])
    wall = chain.wall_seconds
    mean_sq_jump = msjd(states)
    return DiagnosticsReport(
        ess=ess_values,
        min_ess=float(ess_values.min()),
        median_ess=float(np.median(ess_values)),
        acf=acf,
        msjd=mean_sq_jump,
        acceptance_rate=chain.acceptance_rate,
        wall_seconds=wall,
        ess_per_second=ess_values / wall if wall > 0 else np.full_like(ess_values, np.inf),
        msjd_per_second=mean_sq_jump / wall if wall > 0 else np.inf,
    )


def report_to_dict(report: DiagnosticsReport) -> dict:
    """JSON-ready view of a report with stable field names."""
    return {
        "ess": [float(v) for v in report.ess],
        "min_ess": report.min_ess,
        "msjd": report.msjd,
        "acceptance_rate": report.acceptance_rate,
        "wall_seconds": report.wall_seconds,
        "ess_per_second": [float(v) for v in report.ess_per_second],
        "msjd_per_second": report.msjd_per_second,
    }


def report_to_json(report: DiagnosticsReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)
