"""Named property-check suites behind the command-line ``check`` verb.

Each suite runs a handful of structural verifications at small scale and
returns one result per check.  The heavier statistical versions live in the
test suite; these are meant to finish in seconds and catch wiring mistakes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import advection, bmds, ctmc
from .core import check_detailed_balance_discrete, check_involution
from .discrete import (always_accept_kernel_matrix, barker_multiproposal_kernel_matrix,
                       mh_kernel_matrix)
from .hilbert import power_spectrum
from .integrators import (PhasePoint, SplitDynamics, jacobian_abs_det_fd,
                          leapfrog_involution)
from .rng import rng_stream
from .samplers import (build_inf_hmc, build_pcn, build_rwm, run_chain,
                       swap_involution)
from .targets import flat_hilbert_target, standard_gaussian


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name: str, measured: float, tol: float, larger_is_better: bool = False) -> CheckResult:
    if larger_is_better:
        passed = measured > tol
        relation = ">"
    else:
        passed = measured <= tol
        relation = "<="
    return CheckResult(name=name, passed=bool(passed),
                       detail=f"measured {measured:.3e} (required {relation} {tol:.0e})")


def _random_phase_points(dim: int, count: int, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(rng.standard_normal(dim), rng.standard_normal(dim)) for _ in range(count)]


def involution_suite(n_points: int = 100, tol: float = 1e-10) -> list[CheckResult]:
    rng = rng_stream(2026, "check-involution")
    results = []

    points = _random_phase_points(3, n_points, rng)
    report = check_involution(lambda q, v: swap_involution(q, v), points, tol=tol)
    results.append(_result("swap", report.max_deviation, tol))

    def scale_map(q, v):
        return q * v, 1.0 / v

    positive = [(rng.standard_normal(2), np.exp(rng.standard_normal(2)))
                for _ in range(n_points)]
    report = check_involution(scale_map, positive, tol=tol)
    results.append(_result("mhgj-scale", report.max_deviation, tol))

    for dim in (1, 2, 3):
        target = standard_gaussian(dim)
        dyn = SplitDynamics(force=target.gradient, flow=lambda v: v,
                            dt=0.05, n_steps=4)
        pts = _random_phase_points(dim, n_points, rng)
        report = check_involution(
            lambda q, v, d=dyn: leapfrog_involution(PhasePoint(q, v), d), pts, tol=tol)
        results.append(_result(f"leapfrog-dim{dim}", report.max_deviation, tol))

    rotate_dyn = SplitDynamics(force=lambda q: -q, flow=None, dt=0.05, n_steps=4)
    pts = _random_phase_points(2, n_points, rng)
    report = check_involution(
        lambda q, v: leapfrog_involution(PhasePoint(q, v), rotate_dyn), pts, tol=tol)
    results.append(_result("kick-rotate-kick", report.max_deviation, tol))

    spectrum = power_spectrum(4)
    target = flat_hilbert_target(spectrum)
    spec = build_inf_hmc(target, delta_a=0.05, delta_b=0.1, n_steps=3,
                         surrogate=lambda q: 0.3 * q)
    involution = spec.involutions[1]

    def surrogate_map(q, v):
        return involution(q, v)

    pts = _random_phase_points(4, n_points, rng)
    report = check_involution(surrogate_map, pts, tol=tol)
    results.append(_result("surrogate-hilbert", report.max_deviation, tol))
    return results


def volume_suite(tol: float = 1e-6) -> list[CheckResult]:
    rng = rng_stream(2026, "check-volume")
    results = []
    for state_dim in (1, 2, 3):
        target = standard_gaussian(state_dim)
        dyn = SplitDynamics(force=target.gradient, flow=lambda v: v,
                            dt=0.1, n_steps=3)

        def mapping(point, d=dyn):
            return leapfrog_involution(point, d)

        worst = 0.0
        for _ in range(10):
            point = PhasePoint(rng.standard_normal(state_dim),
                               rng.standard_normal(state_dim))
            det = jacobian_abs_det_fd(mapping, point)
            worst = max(worst, abs(det - 1.0))
        results.append(_result(f"leapfrog-phase-dim{2 * state_dim}", worst, tol))
    return results


def _walk_proposal(n: int) -> np.ndarray:
    prop = np.zeros((n, n))
    for i in range(n):
        prop[i, (i - 1) % n] = 0.5
        prop[i, (i + 1) % n] = 0.5
    return prop


def detailed_balance_suite() -> list[CheckResult]:
    rng = rng_stream(2026, "check-balance")
    results = []
    n = 6
    pmf = rng.uniform(0.5, 2.0, size=n)
    pmf /= pmf.sum()

    walk = _walk_proposal(n)
    results.append(_result("rwm-enumerated",
                           check_detailed_balance_discrete(pmf, mh_kernel_matrix(pmf, walk)),
                           1e-14))

    skew = rng.uniform(0.5, 2.0, size=(n, n))
    skew /= skew.sum(axis=1, keepdims=True)
    results.append(_result("mh-enumerated",
                           check_detailed_balance_discrete(pmf, mh_kernel_matrix(pmf, skew)),
                           1e-14))

    reference = np.full(n, 1.0 / n)
    sym = np.full((n, n), 1.0 / n)
    for p in (1, 2, 3):
        kernel = barker_multiproposal_kernel_matrix(pmf, reference, sym, sym, p)
        results.append(_result(f"multiproposal-p{p}",
                               check_detailed_balance_discrete(pmf, kernel), 1e-14))

    corrupted = always_accept_kernel_matrix(skew)
    results.append(_result("corrupted-control",
                           check_detailed_balance_discrete(pmf, corrupted),
                           1e-3, larger_is_better=True))
    return results


def _relative_gradient_error(value_fn, grad, theta) -> float:
    eps = 1e-5 * (1.0 + float(np.max(np.abs(theta))))
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += eps
        dn[i] -= eps
        fd[i] = (value_fn(up) - value_fn(dn)) / (2.0 * eps)
    scale = max(float(np.linalg.norm(fd)), 1e-12)
    return float(np.linalg.norm(grad - fd)) / scale


def gradient_suite(tol: float = 1e-5) -> list[CheckResult]:
    results = []

    rng = rng_stream(2026, "check-grad-ctmc")
    n_states = 3
    params = ctmc.MixedEffectsParams(
        n_states=n_states,
        random_effects=0.5 * rng.standard_normal(n_states * (n_states - 1)))
    obs = ctmc.sample_transitions(params, times=[0.4, 0.9], draws_per_time=40, seed=11)

    def ctmc_value(theta):
        return ctmc.ctmc_loglik(
            ctmc.MixedEffectsParams.from_vector(theta, n_states, []), obs)

    theta = params.as_vector()
    err = _relative_gradient_error(ctmc_value, ctmc.ctmc_loglik_grad(params, obs), theta)
    results.append(_result("ctmc-series-vs-fd", err, tol))

    rng = rng_stream(2026, "check-grad-bmds")
    n_items, n_dims, sigma2 = 6, 2, 0.04
    truth = rng.standard_normal((n_items, n_dims))
    data = bmds.sample_dissimilarities(truth, sigma2, seed=12)
    points = truth + 0.1 * rng.standard_normal(truth.shape)

    def bmds_value(theta):
        return bmds.bmds_loglik(theta.reshape(n_items, n_dims), data, sigma2)

    grad = bmds.bmds_grad(points, data, sigma2).reshape(-1)
    err = _relative_gradient_error(bmds_value, grad, points.reshape(-1).copy())
    results.append(_result("bmds-full-vs-fd", err, tol))
    return results


def invariance_suite() -> list[CheckResult]:
    results = []
    target = standard_gaussian(1)
    spec = build_rwm(target, proposal_scale=2.4)
    chain = run_chain(np.zeros(1), spec, 20000, rng=rng_stream(2026, "check-rwm"))
    states = chain.states[2000:, 0]
    mean_err = abs(float(states.mean()))
    results.append(_result("rwm-gaussian-mean", mean_err, 0.08))
    var_err = abs(float(states.var()) - 1.0)
    results.append(_result("rwm-gaussian-variance", var_err, 0.12))

    spectrum = power_spectrum(4)
    flat = flat_hilbert_target(spectrum)
    spec = build_pcn(flat, rho=0.5)
    initial = spectrum.std * rng_stream(2026, "check-pcn-init").standard_normal(4)
    chain = run_chain(initial, spec, 20000, rng=rng_stream(2026, "check-pcn"))
    sample_var = chain.states[2000:].var(axis=0)
    worst = float(np.max(np.abs(sample_var / spectrum.eigenvalues - 1.0)))
    results.append(_result("pcn-prior-variance", worst, 0.12))
    return results


def pde_suite() -> list[CheckResult]:
    results = []
    m = 32
    kappa = 0.01
    basis = advection.VelocityBasis.within_sup_norm(1)
    theta0 = advection.ScalarFieldSpectral.from_cos_modes(m, [(1, 0, 1.0)])

    still = np.zeros(basis.n_coefficients)
    fields = advection.solve_forward(theta0, basis, still, kappa, [1.0])
    got = fields[0].coefficients[1 % m, 0]
    expected = 0.5 * np.exp(-kappa * (2.0 * np.pi) ** 2)
    results.append(_result("heat-decay", float(abs(got - expected)), 1e-8))

    theta_full = advection.ScalarFieldSpectral.from_cos_modes(
        m, [(1, 0, 1.0), (0, 1, 1.0)])
    rng = rng_stream(2026, "check-pde")
    coeffs = 0.4 * rng.standard_normal(basis.n_coefficients)
    solved = advection.solve_forward(theta_full, basis, coeffs, kappa, [0.5])
    mass_drift = abs(solved[0].mean_mode - theta_full.mean_mode)
    results.append(_result("mass-conservation", float(mass_drift), 0.0))

    cos_only = coeffs.copy()
    cos_only[1::2] = 0.0
    forward = advection.solve_forward(theta_full, basis, cos_only, kappa, [0.5])[0].values()
    backward = advection.solve_forward(theta_full, basis, -cos_only, kappa, [0.5])[0].values()
    idx = np.arange(m)
    mirrored = backward[(-idx[:, None]) % m, (-idx[None, :]) % m]
    results.append(_result("mirror-symmetry", float(np.max(np.abs(forward - mirrored))), 1e-8))

    scenario = advection.default_scenario()
    obs = advection.generate_observations(scenario)
    worst = 0.0
    for _ in range(3):
        draw = 0.5 * rng.standard_normal(basis.n_coefficients)
        phi = advection.potential_phi(draw, obs, scenario.theta0(), basis, kappa)
        phi_flipped = advection.potential_phi(advection.flip_odd_coefficients(draw),
                                              obs, scenario.theta0(), basis, kappa)
        worst = max(worst, abs(phi - phi_flipped))
    results.append(_result("potential-flip-invariance", worst, 1e-8))

    # Convergence regime per the contract: field magnitude at most one,
    # matched time steps so only the grid resolution varies.
    mild = coeffs * min(1.0, 0.9 / float(basis.max_speed(coeffs, 64)))
    probe = advection.ObservationSet(
        times=np.array([0.25]), points=np.array([[0.125, 0.375]]),
        values=np.zeros(1), sigma=1.0)
    shared_dt = float(advection.step_bound(basis, mild[None, :], 64)[0])
    coarse_field = advection.ScalarFieldSpectral.from_cos_modes(32, [(1, 0, 1.0), (0, 1, 1.0)])
    fine_field = advection.ScalarFieldSpectral.from_cos_modes(64, [(1, 0, 1.0), (0, 1, 1.0)])
    coarse = advection.observe(
        advection.solve_forward(coarse_field, basis, mild, kappa, [0.25], dt_max=shared_dt),
        [0.25], probe)
    fine = advection.observe(
        advection.solve_forward(fine_field, basis, mild, kappa, [0.25], dt_max=shared_dt),
        [0.25], probe)
    results.append(_result("spectral-convergence", float(np.max(np.abs(coarse - fine))), 1e-6))
    return results


SUITES = {
    "involution": involution_suite,
    "volume": volume_suite,
    "detailed_balance": detailed_balance_suite,
    "gradients": gradient_suite,
    "invariance": invariance_suite,
    "pde": pde_suite,
}


def run_suite(name: str) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()
