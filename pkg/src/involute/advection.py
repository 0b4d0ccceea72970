"""Advection-diffusion inversion on the periodic unit torus.

A passive scalar is advected by a divergence-free velocity field and
diffused; the inverse problem infers the velocity's Fourier coefficients
from noisy point observations of the scalar.  The forward solver is
pseudo-spectral with 2/3 dealiasing, an exact integrating factor for the
diffusion, and classical RK4 on the advection term.

Symmetry map: reflecting space through the origin sends the velocity field
to the one whose cosine (even-slot) coefficients are negated, and carries
solutions along.  With an even initial field, a reflection-closed
observation lattice, and reflection-symmetrized data, the misfit potential
is exactly invariant under :func:`flip_odd_coefficients`, so the posterior
is sign-symmetric in the cosine coefficients by construction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError
from .hilbert import CovarianceSpectrum
from .rng import rng_stream
from .samplers import GaussianReference, TargetModel

DEALIAS_FRACTION = 1.0 / 3.0
TIME_MATCH_TOL = 1e-12


def _half_plane(k1: int, k2: int) -> bool:
    return k1 > 0 or (k1 == 0 and k2 > 0)


@dataclass
class VelocityBasis:
    """Divergence-free Fourier basis fields, one (cos, sin) pair per wavevector.

    Wavevectors live in the half plane (k1 > 0, or k1 = 0 and k2 > 0) and are
    ordered by (|k|^2, k1, k2).  The coefficient vector interleaves the pairs
    as [a_1, b_1, a_2, b_2, ...] where a multiplies cosine and b sine; each
    pair multiplies the unit field k_perp / |k| with k_perp = (-k2, k1).
    """

    wavevectors: np.ndarray

    def __post_init__(self):
        self.wavevectors = np.asarray(self.wavevectors, dtype=int)
        if self.wavevectors.ndim != 2 or self.wavevectors.shape[1] != 2:
            raise ConfigurationError("wavevectors must be an (n, 2) integer array")
        seen = set()
        prev_key = None
        for k1, k2 in self.wavevectors:
            if not _half_plane(int(k1), int(k2)):
                raise ConfigurationError(f"wavevector ({k1}, {k2}) is outside the half plane")
            key = (int(k1 * k1 + k2 * k2), int(k1), int(k2))
            if key in seen:
                raise ConfigurationError(f"duplicate wavevector ({k1}, {k2})")
            if prev_key is not None and key < prev_key:
                raise ConfigurationError("wavevectors must be sorted by (|k|^2, k1, k2)")
            seen.add(key)
            prev_key = key

    @classmethod
    def within_sup_norm(cls, kmax: int) -> "VelocityBasis":
        """All half-plane wavevectors with max(|k1|, |k2|) <= kmax."""
        if kmax < 1:
            raise ConfigurationError("kmax must be at least 1")
        ks = [(k1, k2) for k1 in range(0, kmax + 1)
              for k2 in range(-kmax, kmax + 1) if _half_plane(k1, k2)]
        ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
        return cls(wavevectors=np.array(ks, dtype=int))

    @property
    def n_wavevectors(self) -> int:
        return self.wavevectors.shape[0]

    @property
    def n_coefficients(self) -> int:
        return 2 * self.n_wavevectors

    def coefficient_labels(self) -> list[str]:
        labels = []
        for k1, k2 in self.wavevectors:
            labels.append(f"a({k1},{k2})")
            labels.append(f"b({k1},{k2})")
        return labels

    def prior_spectrum(self, power: float = 4.0) -> CovarianceSpectrum:
        """Variance |k|^-power for both coefficients of each wavevector."""
        norms_sq = np.sum(self.wavevectors.astype(float) ** 2, axis=1)
        lam = norms_sq ** (-power / 2.0)
        return CovarianceSpectrum(eigenvalues=np.repeat(lam, 2))

    def _check_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n_coefficients:
            raise ConfigurationError(
                f"expected {self.n_coefficients} coefficients, got {coeffs.shape[-1]}")
        return coeffs

    def velocity_grid(self, coeffs: np.ndarray, resolution: int) -> np.ndarray:
        """Velocity vectors on the grid, shape (..., resolution, resolution, 2).

        Grid point (i, j) is x = (i, j) / resolution; the leading axes of
        ``coeffs`` batch independent velocity fields.
        """
        coeffs = self._check_coeffs(coeffs)
        x = np.arange(resolution) / resolution
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        out = np.zeros(coeffs.shape[:-1] + (resolution, resolution, 2))
        for idx, (k1, k2) in enumerate(self.wavevectors):
            phase = 2.0 * np.pi * (k1 * x1 + k2 * x2)
            norm = math.sqrt(float(k1 * k1 + k2 * k2))
            perp = np.array([-k2, k1], dtype=float) / norm
            a = coeffs[..., 2 * idx, None, None]
            b = coeffs[..., 2 * idx + 1, None, None]
            out += (a * np.cos(phase) + b * np.sin(phase))[..., None] * perp
        return out

    def max_speed(self, coeffs: np.ndarray, resolution: int) -> np.ndarray:
        """Largest velocity magnitude on the grid, per batched field."""
        vel = self.velocity_grid(coeffs, resolution)
        speed = np.sqrt(np.sum(vel * vel, axis=-1))
        return speed.max(axis=(-2, -1))


def flip_odd_coefficients(coeffs: np.ndarray) -> np.ndarray:
    """Negate the cosine (even-slot) coefficients; the posterior symmetry map.

    This realizes the reflection x -> -x on velocity fields: the reflected
    solution of the transport equation belongs to the flipped coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    out = coeffs.copy()
    out[..., 0::2] = -out[..., 0::2]
    return out


@dataclass
class ScalarFieldSpectral:
    """Real scalar field stored as normalized Fourier coefficients.

    ``coefficients[k1, k2]`` multiplies exp(2 pi i k.x) with numpy FFT index
    conventions, so the grid values are resolution^2 times the inverse FFT.
    """

    resolution: int
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        m = self.resolution
        if self.coefficients.shape != (m, m):
            raise ConfigurationError("coefficient array must be resolution x resolution")

    @classmethod
    def from_cos_modes(cls, resolution: int, modes) -> "ScalarFieldSpectral":
        """Field sum_j amp_j cos(2 pi k_j . x); even in x by construction."""
        coeff = np.zeros((resolution, resolution), dtype=complex)
        for k1, k2, amp in modes:
            k1, k2 = int(k1), int(k2)
            if max(abs(k1), abs(k2)) >= resolution // 2:
                raise ConfigurationError(f"mode ({k1}, {k2}) exceeds grid resolution")
            coeff[k1 % resolution, k2 % resolution] += 0.5 * amp
            coeff[-k1 % resolution, -k2 % resolution] += 0.5 * amp
        return cls(resolution=resolution, coefficients=coeff)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "ScalarFieldSpectral":
        values = np.asarray(values, dtype=float)
        m = values.shape[0]
        return cls(resolution=m, coefficients=np.fft.fft2(values) / (m * m))

    def values(self) -> np.ndarray:
        m = self.resolution
        return np.real(np.fft.ifft2(self.coefficients) * (m * m))

    def hermitian_deviation(self) -> float:
        m = self.resolution
        idx = np.arange(m)
        conj_flip = np.conj(self.coefficients[(-idx[:, None]) % m, (-idx[None, :]) % m])
        return float(np.max(np.abs(self.coefficients - conj_flip)))

    @property
    def mean_mode(self) -> complex:
        return complex(self.coefficients[0, 0])


def _wavenumber_grids(resolution: int):
    k = np.fft.fftfreq(resolution, d=1.0 / resolution)
    return np.meshgrid(k, k, indexing="ij")


def _dealias_mask(resolution: int) -> np.ndarray:
    k1, k2 = _wavenumber_grids(resolution)
    cutoff = DEALIAS_FRACTION * resolution
    return (np.abs(k1) <= cutoff) & (np.abs(k2) <= cutoff)


def step_bound(basis: VelocityBasis, coeffs: np.ndarray, resolution: int) -> np.ndarray:
    """Largest admissible RK4 step: min(0.25 h / max speed, 0.5 h), h = 1/M.

    The diffusion is integrated exactly, so only advection restricts the
    step; the 0.5 h cap keeps the bound finite for still fields.
    """
    h = 1.0 / resolution
    speed = np.atleast_1d(basis.max_speed(coeffs, resolution))
    with np.errstate(divide="ignore"):
        advective = np.where(speed > 0.0, 0.25 * h / speed, np.inf)
    return np.minimum(advective, 0.5 * h)


def _nonlinear_term(u, vel_grid, deriv, neg_mask, m):
    # Runs in the half-spectrum layout of real-input transforms; the
    # forward/inverse grid scalings are consistent between state and output.
    # deriv stacks (2 pi i k1, 2 pi i k2) on the half grid.
    grads = sfft.irfft2(deriv[:, None] * u, s=(m, m))
    advect = vel_grid[..., 0] * grads[0] + vel_grid[..., 1] * grads[1]
    out = sfft.rfft2(advect)
    out *= neg_mask
    out[..., 0, 0] = 0.0
    return out


def _expand_half_spectrum(half: np.ndarray, m: int) -> np.ndarray:
    """Rebuild full (M, M) coefficients from the real-transform half layout."""
    mh = half.shape[-1]
    full = np.empty(half.shape[:-2] + (m, m), dtype=complex)
    full[..., :, :mh] = half
    rows = (-np.arange(m)) % m
    cols = m - np.arange(mh, m)
    full[..., :, mh:] = np.conj(half[..., rows, :][..., :, cols])
    return full


def solve_forward_batch(theta0: ScalarFieldSpectral, basis: VelocityBasis,
                        coeffs: np.ndarray, kappa: float, t_grid,
                        dt_max: float | None = None) -> np.ndarray:
    """Spectral solutions at the requested times for a batch of velocities.

    Returns complex coefficients of shape (batch, n_times, M, M).  Each
    velocity integrates with its own step size chosen from its own bound, so
    results do not depend on how fields are batched together.
    """
    if not kappa > 0:
        raise ConfigurationError("kappa must be positive")
    m = theta0.resolution
    if m & (m - 1) != 0:
        raise ConfigurationError("grid resolution must be a power of two")
    coeffs = np.atleast_2d(basis._check_coeffs(coeffs))
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ConfigurationError("t_grid must be a nonempty 1-d sequence")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ConfigurationError("t_grid must be strictly increasing and nonnegative")

    bounds = step_bound(basis, coeffs, m)
    if dt_max is not None:
        if not dt_max > 0:
            raise ConfigurationError("dt_max must be positive")
        violated = dt_max > bounds * (1.0 + 1e-12)
        if np.any(violated):
            worst = float(bounds[violated].min())
            raise ConfigurationError(
                f"requested step {dt_max} exceeds the stability bound {worst:.6g}")
        bounds = np.full_like(bounds, dt_max)

    mh = m // 2 + 1
    k1f, k2f = _wavenumber_grids(m)
    k1, k2 = k1f[:, :mh], k2f[:, :mh]
    deriv = np.stack([2.0j * np.pi * k1, 2.0j * np.pi * k2])
    cutoff = DEALIAS_FRACTION * m
    neg_mask = np.where((np.abs(k1) <= cutoff) & (np.abs(k2) <= cutoff), -1.0, 0.0)
    lam = -kappa * (2.0 * np.pi) ** 2 * (k1 * k1 + k2 * k2)
    vel = basis.velocity_grid(coeffs, m)

    n_batch = coeffs.shape[0]
    u = np.broadcast_to(theta0.coefficients[:, :mh] * (m * m), (n_batch, m, mh)).copy()
    out = np.empty((n_batch, times.size, m, m), dtype=complex)

    prev_t = 0.0
    for t_idx, t in enumerate(times):
        span = float(t - prev_t)
        if span > 0.0:
            # Round step counts up to powers of two: batched fields then fall
            # into a few shared groups while each still honors its own bound.
            raw = np.maximum(1, np.ceil(span / bounds - 1e-12).astype(int))
            n_steps = 2 ** np.ceil(np.log2(raw)).astype(int)
            for n in np.unique(n_steps):
                sel = np.nonzero(n_steps == n)[0]
                dt = span / float(n)
                e_half = np.exp(lam * (dt / 2.0))
                e_full = e_half * e_half
                ub = u[sel]
                vb = vel[sel]
                for _ in range(int(n)):
                    ka = _nonlinear_term(ub, vb, deriv, neg_mask, m)
                    kb = _nonlinear_term(e_half * (ub + (dt / 2.0) * ka), vb, deriv, neg_mask, m)
                    kc = _nonlinear_term(e_half * ub + (dt / 2.0) * kb, vb, deriv, neg_mask, m)
                    kd = _nonlinear_term(e_full * ub + dt * (e_half * kc), vb, deriv, neg_mask, m)
                    ub = (e_full * ub
                          + (dt / 6.0) * (e_full * ka + 2.0 * e_half * (kb + kc) + kd))
                u[sel] = ub
        out[:, t_idx] = _expand_half_spectrum(u, m)
        prev_t = float(t)
    out /= float(m * m)
    return out


def solve_forward(theta0: ScalarFieldSpectral, basis: VelocityBasis,
                  coeffs: np.ndarray, kappa: float, t_grid,
                  dt_max: float | None = None) -> list[ScalarFieldSpectral]:
    """Single-velocity wrapper returning one spectral field per time."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1:
        raise ConfigurationError("solve_forward takes a single coefficient vector")
    solved = solve_forward_batch(theta0, basis, coeffs[None, :], kappa, t_grid, dt_max)
    return [ScalarFieldSpectral(resolution=theta0.resolution, coefficients=solved[0, i])
            for i in range(solved.shape[1])]


@dataclass
class ObservationSet:
    """Noisy point observations of the scalar field.

    ``points`` are torus coordinates in [0, 1)^2; observation times must lie
    on the solver's requested time grid.
    """

    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    sigma: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = self.times.size
        if self.points.shape != (n, 2) or self.values.shape != (n,):
            raise ConfigurationError("times, points, and values must align")
        if np.any(self.times <= 0):
            raise ConfigurationError("observation times must be positive")
        if np.any(self.points < 0) or np.any(self.points >= 1.0):
            raise ConfigurationError("observation points must lie in [0, 1)^2")
        if not self.sigma > 0:
            raise ConfigurationError("noise sigma must be positive")

    @property
    def n_observations(self) -> int:
        return self.times.size

    def time_grid(self) -> np.ndarray:
        return np.unique(self.times)


def _phase_matrix(resolution: int, points: np.ndarray) -> np.ndarray:
    k1, k2 = _wavenumber_grids(resolution)
    arg = k1[..., None] * points[:, 0] + k2[..., None] * points[:, 1]
    return np.exp(2.0j * np.pi * arg)


def observe_batch(solved: np.ndarray, t_grid, obs: ObservationSet) -> np.ndarray:
    """Predicted observation vectors, shape (batch, n_observations).

    ``solved`` is the output of :func:`solve_forward_batch` on ``t_grid``;
    each observation time must match a grid time exactly.
    """
    times = np.asarray(t_grid, dtype=float)
    m = solved.shape[-1]
    time_index = np.empty(obs.n_observations, dtype=int)
    for i, t in enumerate(obs.times):
        hits = np.nonzero(np.abs(times - t) <= TIME_MATCH_TOL)[0]
        if hits.size != 1:
            raise ConfigurationError(
                f"observation time {t} is not on the solve grid; refusing to interpolate")
        time_index[i] = hits[0]
    phases = _phase_matrix(m, obs.points)
    predicted = np.real(np.einsum("btij,ijn->btn", solved, phases))
    batch_idx = np.arange(solved.shape[0])[:, None]
    return predicted[batch_idx, time_index[None, :], np.arange(obs.n_observations)[None, :]]


def observe(fields: list[ScalarFieldSpectral], t_grid, obs: ObservationSet) -> np.ndarray:
    solved = np.stack([f.coefficients for f in fields])[None, ...]
    return observe_batch(solved, t_grid, obs)[0]


def potential_phi_batch(coeffs: np.ndarray, obs: ObservationSet,
                        theta0: ScalarFieldSpectral, basis: VelocityBasis,
                        kappa: float) -> np.ndarray:
    """Data misfit ||y - G(coeffs)||^2 / (2 sigma^2) per batched field."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    t_grid = np.unique(obs.times)
    solved = solve_forward_batch(theta0, basis, coeffs, kappa, t_grid)
    predicted = observe_batch(solved, t_grid, obs)
    resid = obs.values[None, :] - predicted
    return np.sum(resid * resid, axis=1) / (2.0 * obs.sigma ** 2)


def potential_phi(coeffs: np.ndarray, obs: ObservationSet,
                  theta0: ScalarFieldSpectral, basis: VelocityBasis,
                  kappa: float) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1:
        raise ConfigurationError("potential_phi takes a single coefficient vector")
    return float(potential_phi_batch(coeffs[None, :], obs, theta0, basis, kappa)[0])


def surrogate_grad_fd(coeffs: np.ndarray, obs: ObservationSet,
                      theta0: ScalarFieldSpectral, basis: VelocityBasis,
                      kappa: float, eps: float | None = None,
                      mode_subset=None) -> np.ndarray:
    """Central-difference gradient of the potential over selected slots.

    ``mode_subset`` lists coefficient indices to differentiate; entries
    outside the subset are exactly zero.  All perturbed potentials evaluate
    in one batched solve, costing two solves per selected slot.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = basis.n_coefficients
    if coeffs.shape != (n,):
        raise ConfigurationError(f"expected {n} coefficients")
    subset = (np.arange(n) if mode_subset is None
              else np.asarray(sorted(set(int(i) for i in mode_subset)), dtype=int))
    if subset.size == 0:
        return np.zeros(n)
    if np.any(subset < 0) or np.any(subset >= n):
        raise ConfigurationError("mode_subset indices out of range")
    if eps is None:
        eps = 1e-5 * (1.0 + float(np.max(np.abs(coeffs))))
    perturbed = np.repeat(coeffs[None, :], 2 * subset.size, axis=0)
    for row, idx in enumerate(subset):
        perturbed[2 * row, idx] += eps
        perturbed[2 * row + 1, idx] -= eps
    phis = potential_phi_batch(perturbed, obs, theta0, basis, kappa)
    grad = np.zeros(n)
    grad[subset] = (phis[0::2] - phis[1::2]) / (2.0 * eps)
    return grad


@dataclass
class AdvectionScenario:
    """Complete description of a synthetic inversion experiment."""

    resolution: int = 32
    kappa: float = 0.01
    theta0_modes: list = field(default_factory=lambda: [(1, 0, 1.0), (0, 1, 1.0)])
    lattice: int = 4
    times: list = field(default_factory=lambda: [0.25, 0.5])
    sigma: float = 0.05
    true_coefficients: list = field(default_factory=list)
    seed: int = 2026
    sup_norm: int = 1
    symmetrize: bool = True

    def __post_init__(self):
        if self.lattice < 1:
            raise ConfigurationError("lattice must be positive")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        basis = self.basis()
        if len(self.true_coefficients) != basis.n_coefficients:
            raise ConfigurationError(
                f"expected {basis.n_coefficients} true coefficients")

    def basis(self) -> VelocityBasis:
        return VelocityBasis.within_sup_norm(self.sup_norm)

    def theta0(self) -> ScalarFieldSpectral:
        return ScalarFieldSpectral.from_cos_modes(self.resolution, self.theta0_modes)

    def lattice_points(self) -> np.ndarray:
        ticks = np.arange(self.lattice) / self.lattice
        x1, x2 = np.meshgrid(ticks, ticks, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    def design(self) -> tuple[np.ndarray, np.ndarray]:
        """Observation (times, points): the lattice repeated at each time."""
        pts = self.lattice_points()
        times = np.repeat(np.asarray(self.times, dtype=float), pts.shape[0])
        points = np.tile(pts, (len(self.times), 1))
        return times, points

    def reflection_permutation(self) -> np.ndarray:
        """Index permutation pairing each observation with the one at -x."""
        times, points = self.design()
        lat = self.lattice
        n_pts = lat * lat
        perm = np.empty(times.size, dtype=int)
        for idx in range(times.size):
            block = idx // n_pts
            i, j = divmod(idx % n_pts, lat)
            ri, rj = (-i) % lat, (-j) % lat
            perm[idx] = block * n_pts + ri * lat + rj
        return perm


# True coefficients of the shipped scenario, order [a,b] per wavevector
# (0,1), (1,0), (1,-1), (1,1).  The first cosine amplitude sits just above
# the threshold where the symmetrized data splits the posterior into a sign
# pair of modes (profiled at +-0.18 with a barrier near 2.4 units of
# potential), keeping both modes distinct yet reachable within one chain.
DEFAULT_TRUE_COEFFICIENTS = [0.62, 0.30, 0.0, 0.20, 0.0, 0.0, 0.0, 0.0]


def default_scenario() -> AdvectionScenario:
    return AdvectionScenario(true_coefficients=list(DEFAULT_TRUE_COEFFICIENTS))


def generate_observations(scenario: AdvectionScenario) -> ObservationSet:
    """Synthesize (optionally reflection-symmetrized) noisy observations.

    Symmetrization averages each value with its partner at the reflected
    point, which makes the misfit exactly invariant under
    :func:`flip_odd_coefficients` while keeping the data informative.
    """
    basis = scenario.basis()
    truth = np.asarray(scenario.true_coefficients, dtype=float)
    times, points = scenario.design()
    t_grid = np.unique(times)
    solved = solve_forward_batch(scenario.theta0(), basis, truth[None, :],
                                 scenario.kappa, t_grid)
    probe = ObservationSet(times=times, points=points,
                           values=np.zeros(times.size), sigma=scenario.sigma)
    clean = observe_batch(solved, t_grid, probe)[0]
    rng = rng_stream(scenario.seed, "advection-noise")
    values = clean + scenario.sigma * rng.standard_normal(times.size)
    if scenario.symmetrize:
        perm = scenario.reflection_permutation()
        values = 0.5 * (values + values[perm])
    return ObservationSet(times=times, points=points, values=values,
                          sigma=scenario.sigma)


def posterior_target(scenario: AdvectionScenario,
                     obs: ObservationSet | None = None,
                     surrogate_subset=None) -> tuple[TargetModel, CovarianceSpectrum]:
    """Posterior over velocity coefficients under the trace-class prior.

    The returned target's gradient differentiates every slot by central
    differences; the surrogate gradient restricts to ``surrogate_subset``
    (the first wavevector pair of slots by default).
    """
    if obs is None:
        obs = generate_observations(scenario)
    basis = scenario.basis()
    theta0 = scenario.theta0()
    spectrum = basis.prior_spectrum()
    if surrogate_subset is None:
        surrogate_subset = list(range(min(4, basis.n_coefficients)))

    def log_density_ratio(q):
        return -float(potential_phi(np.asarray(q, dtype=float), obs, theta0,
                                    basis, scenario.kappa))

    def log_density_ratio_batch(rows):
        return -potential_phi_batch(np.asarray(rows, dtype=float), obs, theta0,
                                    basis, scenario.kappa)

    def gradient(q):
        return -surrogate_grad_fd(np.asarray(q, dtype=float), obs, theta0,
                                  basis, scenario.kappa)

    def surrogate_gradient(q):
        return -surrogate_grad_fd(np.asarray(q, dtype=float), obs, theta0,
                                  basis, scenario.kappa, mode_subset=surrogate_subset)

    target = TargetModel(log_density_ratio=log_density_ratio,
                         reference=GaussianReference(spectrum),
                         gradient=gradient,
                         surrogate_gradient=surrogate_gradient,
                         log_density_ratio_batch=log_density_ratio_batch)
    return target, spectrum


def sign_mode_centers(scenario: AdvectionScenario) -> tuple[np.ndarray, float]:
    """Occupancy centers (+|a1|, -|a1|) and radius for the first cosine slot."""
    a1 = abs(float(scenario.true_coefficients[0]))
    if a1 <= 0:
        raise ConfigurationError("scenario has no sign-symmetric first mode")
    centers = np.array([[a1], [-a1]])
    return centers, a1


_SCENARIO_KEYS = {"version", "resolution", "kappa", "theta0_modes", "lattice",
                  "times", "sigma", "true_coefficients", "seed", "sup_norm",
                  "symmetrize"}


def write_scenario_json(scenario: AdvectionScenario, path) -> None:
    payload = {
        "version": 1,
        "resolution": scenario.resolution,
        "kappa": scenario.kappa,
        "theta0_modes": [[int(k1), int(k2), float(a)] for k1, k2, a in scenario.theta0_modes],
        "lattice": scenario.lattice,
        "times": [float(t) for t in scenario.times],
        "sigma": scenario.sigma,
        "true_coefficients": [float(c) for c in scenario.true_coefficients],
        "seed": scenario.seed,
        "sup_norm": scenario.sup_norm,
        "symmetrize": scenario.symmetrize,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_scenario_json(path) -> AdvectionScenario:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ConfigurationError("scenario file must hold a JSON object")
    unknown = set(payload) - _SCENARIO_KEYS
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
    if payload.get("version") != 1:
        raise ConfigurationError("scenario version must be 1")
    kwargs = {k: v for k, v in payload.items() if k != "version"}
    if "theta0_modes" in kwargs:
        kwargs["theta0_modes"] = [tuple(m) for m in kwargs["theta0_modes"]]
    return AdvectionScenario(**kwargs)


def write_observations_csv(obs: ObservationSet, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "x1", "x2", "y"])
        for i in range(obs.n_observations):
            writer.writerow([format(obs.times[i], ".17g"),
                             format(obs.points[i, 0], ".17g"),
                             format(obs.points[i, 1], ".17g"),
                             format(obs.values[i], ".17g")])


def read_observations_csv(path, sigma: float) -> ObservationSet:
    times, points, values = [], [], []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"t", "x1", "x2", "y"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigurationError(
                f"expected columns {sorted(expected)}, got {reader.fieldnames}")
        for row in reader:
            times.append(float(row["t"]))
            points.append((float(row["x1"]), float(row["x2"])))
            values.append(float(row["y"]))
    return ObservationSet(times=np.array(times), points=np.array(points),
                          values=np.array(values), sigma=sigma)
