"""Advection-diffusion forward solver, observations, and posterior setup."""

import math

import numpy as np
import pytest

from involute.advection import (
    DEFAULT_TRUE_COEFFICIENTS,
    AdvectionScenario,
    ObservationSet,
    ScalarFieldSpectral,
    VelocityBasis,
    default_scenario,
    flip_odd_coefficients,
    generate_observations,
    observe,
    observe_batch,
    posterior_target,
    potential_phi,
    potential_phi_batch,
    read_observations_csv,
    read_scenario_json,
    sign_mode_centers,
    solve_forward,
    solve_forward_batch,
    step_bound,
    surrogate_grad_fd,
    write_observations_csv,
    write_scenario_json,
)
from involute.errors import ConfigurationError
from involute.rng import rng_stream


def _single_mode_basis():
    return VelocityBasis(wavevectors=np.array([[1, 0]]))


def test_sup_norm_basis_enumeration():
    basis = VelocityBasis.within_sup_norm(1)
    np.testing.assert_array_equal(basis.wavevectors,
                                  [[0, 1], [1, 0], [1, -1], [1, 1]])
    assert basis.n_wavevectors == 4
    assert basis.n_coefficients == 8
    assert basis.coefficient_labels()[:4] == ["a(0,1)", "b(0,1)", "a(1,0)", "b(1,0)"]
    # Half-plane count for sup norm K is ((2K+1)^2 - 1) / 2.
    assert VelocityBasis.within_sup_norm(2).n_wavevectors == 12


def test_basis_validation():
    with pytest.raises(ConfigurationError):
        VelocityBasis(wavevectors=np.array([[-1, 0]]))
    with pytest.raises(ConfigurationError):
        VelocityBasis(wavevectors=np.array([[1, 0], [1, 0]]))
    with pytest.raises(ConfigurationError):
        VelocityBasis(wavevectors=np.array([[1, 1], [0, 1]]))
    with pytest.raises(ConfigurationError):
        VelocityBasis(wavevectors=np.array([1, 0]))
    with pytest.raises(ConfigurationError):
        VelocityBasis.within_sup_norm(0)


def test_prior_spectrum_decay():
    spectrum = VelocityBasis.within_sup_norm(1).prior_spectrum(power=4.0)
    np.testing.assert_allclose(spectrum.eigenvalues,
                               [1.0, 1.0, 1.0, 1.0, 0.25, 0.25, 0.25, 0.25],
                               rtol=0, atol=1e-15)


def test_velocity_grid_single_mode_formula():
    # Wavevector (1, 0) carries the unit field (0, 1), so the velocity is
    # (0, a cos 2 pi x1 + b sin 2 pi x1) independent of x2.
    basis = _single_mode_basis()
    vel = basis.velocity_grid(np.array([0.7, -0.4]), resolution=8)
    x1 = np.arange(8) / 8.0
    expected = 0.7 * np.cos(2 * np.pi * x1) - 0.4 * np.sin(2 * np.pi * x1)
    np.testing.assert_allclose(vel[..., 0], 0.0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(vel[..., 1], np.tile(expected[:, None], (1, 8)),
                               rtol=0, atol=1e-12)


def test_velocity_field_is_divergence_free():
    basis = VelocityBasis.within_sup_norm(2)
    rng = rng_stream(5, "divergence")
    coeffs = 0.5 * rng.standard_normal(basis.n_coefficients)
    m = 32
    vel = basis.velocity_grid(coeffs, m)
    k = np.fft.fftfreq(m, d=1.0 / m)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    div = (2.0j * np.pi * k1 * np.fft.fft2(vel[..., 0])
           + 2.0j * np.pi * k2 * np.fft.fft2(vel[..., 1])) / (m * m)
    assert float(np.abs(div).max()) <= 1e-12


def test_max_speed_single_mode():
    basis = _single_mode_basis()
    speed = float(basis.max_speed(np.array([3.0, 4.0]), resolution=64))
    assert 4.99 <= speed <= 5.0 + 1e-12


def test_coefficient_count_is_enforced():
    basis = _single_mode_basis()
    with pytest.raises(ConfigurationError):
        basis.velocity_grid(np.zeros(3), resolution=8)


def test_flip_odd_coefficients():
    coeffs = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(flip_odd_coefficients(coeffs), [-1.0, 2.0, -3.0, 4.0])
    np.testing.assert_array_equal(flip_odd_coefficients(flip_odd_coefficients(coeffs)),
                                  coeffs)
    batch = np.arange(8.0).reshape(2, 4)
    assert flip_odd_coefficients(batch).shape == (2, 4)


def test_scalar_field_cos_modes_and_round_trip():
    field = ScalarFieldSpectral.from_cos_modes(8, [(1, 0, 2.0)])
    x1 = np.arange(8) / 8.0
    expected = np.tile(2.0 * np.cos(2 * np.pi * x1)[:, None], (1, 8))
    np.testing.assert_allclose(field.values(), expected, rtol=0, atol=1e-12)
    assert field.hermitian_deviation() <= 1e-15
    assert field.mean_mode == 0.0

    rng = rng_stream(7, "field-round-trip")
    values = rng.standard_normal((8, 8))
    back = ScalarFieldSpectral.from_values(values)
    np.testing.assert_allclose(back.values(), values, rtol=0, atol=1e-12)
    assert back.hermitian_deviation() <= 1e-12


def test_scalar_field_validation():
    with pytest.raises(ConfigurationError):
        ScalarFieldSpectral(resolution=8, coefficients=np.zeros((4, 4)))
    with pytest.raises(ConfigurationError):
        ScalarFieldSpectral.from_cos_modes(8, [(4, 0, 1.0)])


def test_observation_set_validation():
    good = dict(times=[0.5, 0.5], points=[[0.1, 0.2], [0.3, 0.4]],
                values=[1.0, 2.0], sigma=0.1)
    obs = ObservationSet(**good)
    assert obs.n_observations == 2
    np.testing.assert_array_equal(obs.time_grid(), [0.5])
    with pytest.raises(ConfigurationError):
        ObservationSet(**{**good, "values": [1.0]})
    with pytest.raises(ConfigurationError):
        ObservationSet(**{**good, "times": [0.0, 0.5]})
    with pytest.raises(ConfigurationError):
        ObservationSet(**{**good, "points": [[0.1, 1.0], [0.3, 0.4]]})
    with pytest.raises(ConfigurationError):
        ObservationSet(**{**good, "sigma": 0.0})


def test_heat_decay_matches_integrating_factor():
    # Still velocity leaves pure diffusion, solved exactly by the
    # integrating factor: each mode decays by exp(-kappa (2 pi |k|)^2 t).
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 1.0)])
    kappa = 0.01
    times = [0.25, 1.0]
    fields = solve_forward(theta0, basis, np.zeros(8), kappa, times)
    for t, field in zip(times, fields):
        factor = math.exp(-kappa * (2.0 * np.pi) ** 2 * t)
        assert complex(field.coefficients[1, 0]) == pytest.approx(0.5 * factor,
                                                                  abs=1e-8)
        assert complex(field.coefficients[0, 1]) == pytest.approx(0.5 * factor,
                                                                  abs=1e-8)
    assert math.exp(-0.01 * (2.0 * np.pi) ** 2) == pytest.approx(
        0.6738254512314336, abs=1e-12)


def test_mass_is_conserved_exactly():
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(0, 0, 0.7), (1, 0, 1.0)])
    rng = rng_stream(9, "mass")
    coeffs = 0.4 * rng.standard_normal(8)
    fields = solve_forward(theta0, basis, coeffs, 0.02, [0.1, 0.3])
    for field in fields:
        assert field.mean_mode == theta0.mean_mode


def test_reflected_solution_of_cos_only_velocity():
    # With sine slots zero the reflection map is plain negation: the field
    # solved under -v is the x -> -x mirror of the field solved under v.
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 0.5)])
    coeffs = np.array([0.5, 0.0, -0.3, 0.0, 0.2, 0.0, 0.15, 0.0])
    ahead = solve_forward(theta0, basis, coeffs, 0.02, [0.3])[0].values()
    behind = solve_forward(theta0, basis, -coeffs, 0.02, [0.3])[0].values()
    idx = (-np.arange(16)) % 16
    np.testing.assert_allclose(behind, ahead[np.ix_(idx, idx)], rtol=0, atol=1e-8)


def test_reflected_solution_general_velocity():
    # General velocities mirror onto the cosine-negated coefficients.
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 0.5)])
    rng = rng_stream(11, "mirror")
    coeffs = 0.3 * rng.standard_normal(8)
    ahead = solve_forward(theta0, basis, coeffs, 0.02, [0.3])[0].values()
    flipped = solve_forward(theta0, basis, flip_odd_coefficients(coeffs),
                            0.02, [0.3])[0].values()
    idx = (-np.arange(16)) % 16
    np.testing.assert_allclose(flipped, ahead[np.ix_(idx, idx)], rtol=0, atol=1e-8)


def test_step_bound_and_dt_max():
    basis = _single_mode_basis()
    still = step_bound(basis, np.zeros(2), 16)
    np.testing.assert_allclose(still, [0.5 / 16.0], rtol=0, atol=1e-15)
    fast = step_bound(basis, np.array([4.0, 0.0]), 16)
    assert fast[0] < still[0]

    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0)])
    with pytest.raises(ConfigurationError, match="stability bound"):
        solve_forward(theta0, basis, np.array([4.0, 0.0]), 0.01, [0.2],
                      dt_max=float(still[0]))
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros(2), 0.01, [0.2], dt_max=0.0)
    # An admissible explicit step converges to the same solution.
    default = solve_forward(theta0, basis, np.array([0.4, 0.2]), 0.01, [0.2])
    explicit = solve_forward(theta0, basis, np.array([0.4, 0.2]), 0.01, [0.2],
                             dt_max=float(fast[0]) * 0.9)
    assert float(np.abs(default[0].coefficients
                        - explicit[0].coefficients).max()) <= 1e-7


def test_solver_validation():
    basis = _single_mode_basis()
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0)])
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros(2), 0.0, [0.2])
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros(2), 0.01, [])
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros(2), 0.01, [0.3, 0.2])
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros(2), 0.01, [-0.1, 0.2])
    odd_grid = ScalarFieldSpectral.from_values(np.zeros((12, 12)))
    with pytest.raises(ConfigurationError):
        solve_forward(odd_grid, basis, np.zeros(2), 0.01, [0.2])
    with pytest.raises(ConfigurationError):
        solve_forward(theta0, basis, np.zeros((2, 2)), 0.01, [0.2])


def test_batched_solve_matches_singles():
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 1.0)])
    rng = rng_stream(13, "batch")
    rows = 0.5 * rng.standard_normal((3, 8))
    batch = solve_forward_batch(theta0, basis, rows, 0.01, [0.25, 0.5])
    for b in range(3):
        singles = solve_forward(theta0, basis, rows[b], 0.01, [0.25, 0.5])
        for t_idx, field in enumerate(singles):
            np.testing.assert_allclose(batch[b, t_idx], field.coefficients,
                                       rtol=0, atol=1e-12)


def test_observe_reproduces_grid_values():
    rng = rng_stream(15, "observe-grid")
    values = rng.standard_normal((8, 8))
    field = ScalarFieldSpectral.from_values(values)
    pts = np.array([[i / 8.0, j / 8.0] for i in range(8) for j in range(3)])
    obs = ObservationSet(times=np.full(pts.shape[0], 0.5), points=pts,
                         values=np.zeros(pts.shape[0]), sigma=1.0)
    predicted = observe([field], [0.5], obs)
    expected = np.array([values[i, j] for i in range(8) for j in range(3)])
    np.testing.assert_allclose(predicted, expected, rtol=0, atol=1e-10)


def test_observe_single_mode_offgrid():
    field = ScalarFieldSpectral.from_cos_modes(16, [(2, 1, 0.8)])
    pts = np.array([[0.13, 0.41], [0.625, 0.0], [0.25, 0.5]])
    obs = ObservationSet(times=np.full(3, 1.0), points=pts,
                         values=np.zeros(3), sigma=1.0)
    predicted = observe([field], [1.0], obs)
    expected = 0.8 * np.cos(2 * np.pi * (2 * pts[:, 0] + pts[:, 1]))
    np.testing.assert_allclose(predicted, expected, rtol=0, atol=1e-12)


def test_observe_constant_field():
    field = ScalarFieldSpectral.from_cos_modes(8, [(0, 0, 3.2)])
    pts = np.array([[0.11, 0.93], [0.5, 0.5]])
    obs = ObservationSet(times=np.full(2, 0.25), points=pts,
                         values=np.zeros(2), sigma=1.0)
    np.testing.assert_allclose(observe([field], [0.25], obs), 3.2,
                               rtol=0, atol=1e-12)


def test_observe_refuses_offgrid_times():
    field = ScalarFieldSpectral.from_cos_modes(8, [(1, 0, 1.0)])
    obs = ObservationSet(times=[0.3], points=[[0.1, 0.1]], values=[0.0],
                         sigma=1.0)
    with pytest.raises(ConfigurationError, match="refusing to interpolate"):
        observe([field], [0.25], obs)


def test_potential_phi_values():
    basis = _single_mode_basis()
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0)])
    coeffs = np.array([0.3, -0.2])
    probe = ObservationSet(times=[0.25, 0.5], points=[[0.2, 0.7], [0.8, 0.1]],
                           values=np.zeros(2), sigma=1.0)
    fields = solve_forward(theta0, basis, coeffs, 0.01, [0.25, 0.5])
    clean = observe(fields, [0.25, 0.5], probe)

    exact = ObservationSet(times=probe.times, points=probe.points,
                           values=clean, sigma=0.5)
    assert potential_phi(coeffs, exact, theta0, basis, 0.01) <= 1e-20

    shifted = ObservationSet(times=[0.25], points=[[0.2, 0.7]],
                             values=[clean[0] + 0.6], sigma=1.0)
    phi_one = potential_phi(coeffs, shifted, theta0, basis, 0.01)
    assert phi_one == pytest.approx(0.18, abs=1e-9)
    doubled = ObservationSet(times=shifted.times, points=shifted.points,
                             values=shifted.values, sigma=2.0)
    assert potential_phi(coeffs, doubled, theta0, basis, 0.01) == \
        pytest.approx(phi_one / 4.0, rel=1e-12)
    with pytest.raises(ConfigurationError):
        potential_phi(np.zeros((2, 2)), shifted, theta0, basis, 0.01)


def test_surrogate_grad_subset_and_full():
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 1.0)])
    rng = rng_stream(17, "grad-subset")
    truth = 0.3 * rng.standard_normal(8)
    times, points = np.array([0.25, 0.25, 0.25]), np.array(
        [[0.1, 0.2], [0.6, 0.4], [0.3, 0.9]])
    probe = ObservationSet(times=times, points=points, values=np.zeros(3),
                           sigma=0.1)
    fields = solve_forward(theta0, basis, truth, 0.01, [0.25])
    clean = observe(fields, [0.25], probe)
    obs = ObservationSet(times=times, points=points, values=clean + 0.05,
                         sigma=0.1)

    coeffs = 0.2 * rng.standard_normal(8)
    full = surrogate_grad_fd(coeffs, obs, theta0, basis, 0.01)
    subset = surrogate_grad_fd(coeffs, obs, theta0, basis, 0.01,
                               mode_subset=[0, 1])
    np.testing.assert_array_equal(subset[2:], np.zeros(6))
    np.testing.assert_allclose(subset[:2], full[:2], rtol=0, atol=1e-10)
    np.testing.assert_array_equal(
        surrogate_grad_fd(coeffs, obs, theta0, basis, 0.01, mode_subset=[]),
        np.zeros(8))
    with pytest.raises(ConfigurationError):
        surrogate_grad_fd(coeffs, obs, theta0, basis, 0.01, mode_subset=[8])
    with pytest.raises(ConfigurationError):
        surrogate_grad_fd(np.zeros(5), obs, theta0, basis, 0.01)


def test_gradient_vanishes_at_noise_free_truth():
    # Data generated by the zero field itself puts the potential minimum,
    # and the symmetry fixed point, exactly at the origin.
    basis = VelocityBasis.within_sup_norm(1)
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0), (0, 1, 1.0)])
    scenario = AdvectionScenario(resolution=16, true_coefficients=[0.0] * 8)
    times, points = scenario.design()
    t_grid = np.unique(times)
    fields = solve_forward(theta0, basis, np.zeros(8), scenario.kappa, t_grid)
    probe = ObservationSet(times=times, points=points,
                           values=np.zeros(times.size), sigma=scenario.sigma)
    clean = observe(fields, t_grid, probe)
    obs = ObservationSet(times=times, points=points, values=clean,
                         sigma=scenario.sigma)
    grad = surrogate_grad_fd(np.zeros(8), obs, theta0, basis, scenario.kappa)
    assert float(np.linalg.norm(grad)) <= 1e-6


def test_scenario_design_and_reflection():
    scenario = default_scenario()
    times, points = scenario.design()
    assert times.size == 2 * 16
    perm = scenario.reflection_permutation()
    np.testing.assert_array_equal(perm[perm], np.arange(times.size))
    np.testing.assert_array_equal(points[perm], (-points) % 1.0)
    np.testing.assert_array_equal(times[perm], times)


def test_generate_observations_symmetrized():
    scenario = default_scenario()
    obs = generate_observations(scenario)
    perm = scenario.reflection_permutation()
    np.testing.assert_array_equal(obs.values[perm], obs.values)
    again = generate_observations(scenario)
    np.testing.assert_array_equal(obs.values, again.values)


def test_posterior_is_flip_invariant():
    scenario = default_scenario()
    target, spectrum = posterior_target(scenario)
    assert spectrum.truncation == 8
    rng = rng_stream(19, "flip-invariance")
    q = 0.4 * rng.standard_normal(8)
    rows = np.vstack([q, flip_odd_coefficients(q)])
    values = target.log_ratio_rows(rows)
    assert values[0] == pytest.approx(values[1], abs=1e-8)


def test_sign_mode_centers_default():
    centers, radius = sign_mode_centers(default_scenario())
    np.testing.assert_array_equal(centers, [[0.62], [-0.62]])
    assert radius == 0.62
    flat = AdvectionScenario(true_coefficients=[0.0] * 8)
    with pytest.raises(ConfigurationError):
        sign_mode_centers(flat)


def test_scenario_json_round_trip(tmp_path):
    scenario = default_scenario()
    path = tmp_path / "scenario.json"
    write_scenario_json(scenario, path)
    back = read_scenario_json(path)
    assert back == scenario

    payload = path.read_text()
    bad_version = tmp_path / "bad_version.json"
    bad_version.write_text(payload.replace('"version": 1', '"version": 2'))
    with pytest.raises(ConfigurationError):
        read_scenario_json(bad_version)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(payload.replace('"version": 1', '"version": 1, "extra": 3'))
    with pytest.raises(ConfigurationError):
        read_scenario_json(unknown)
    not_object = tmp_path / "list.json"
    not_object.write_text("[1, 2]\n")
    with pytest.raises(ConfigurationError):
        read_scenario_json(not_object)


def test_observations_csv_round_trip(tmp_path):
    scenario = default_scenario()
    obs = generate_observations(scenario)
    path = tmp_path / "obs.csv"
    write_observations_csv(obs, path)
    assert path.read_text().splitlines()[0] == "t,x1,x2,y"
    back = read_observations_csv(path, sigma=scenario.sigma)
    np.testing.assert_array_equal(back.times, obs.times)
    np.testing.assert_array_equal(back.points, obs.points)
    np.testing.assert_array_equal(back.values, obs.values)
    assert back.sigma == obs.sigma

    bad = tmp_path / "bad.csv"
    bad.write_text("t,x,y,z\n")
    with pytest.raises(ConfigurationError):
        read_observations_csv(bad, sigma=0.05)


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        AdvectionScenario(true_coefficients=[0.0] * 7)
    with pytest.raises(ConfigurationError):
        AdvectionScenario(true_coefficients=[0.0] * 8, lattice=0)
    with pytest.raises(ConfigurationError):
        AdvectionScenario(true_coefficients=[0.0] * 8, sigma=0.0)
    assert len(DEFAULT_TRUE_COEFFICIENTS) == 8


def test_potential_phi_batch_matches_scalar():
    basis = _single_mode_basis()
    theta0 = ScalarFieldSpectral.from_cos_modes(16, [(1, 0, 1.0)])
    obs = ObservationSet(times=[0.25], points=[[0.2, 0.7]], values=[0.4],
                         sigma=0.3)
    rows = np.array([[0.3, -0.2], [0.1, 0.5]])
    batch = potential_phi_batch(rows, obs, theta0, basis, 0.01)
    for i in range(2):
        assert batch[i] == pytest.approx(
            potential_phi(rows[i], obs, theta0, basis, 0.01), rel=1e-12)
