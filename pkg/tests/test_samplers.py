"""Sampler constructors: acceptance formulas, involutions, chain mechanics."""

import numpy as np
import pytest

from _oracles import kick_rotate_kick_log, total_energy
from involute.core import master_step, mh_probability_log
from involute.errors import ConfigurationError
from involute.hilbert import cameron_martin_log_alpha, power_spectrum, sample_prior
from involute.rng import rng_stream
from involute.samplers import (
    ChainRecord,
    GaussianReference,
    SamplerConfig,
    TargetModel,
    build_hmc,
    build_inf_hmc,
    build_mh,
    build_mhgj,
    build_mpcn,
    build_multiproposal,
    build_pcn,
    build_rwm,
    build_sampler,
    build_surrogate_hmc,
    run_chain,
    swap_involution,
    symmetric_walk_pair,
)
from involute.targets import (
    flat_hilbert_target,
    gaussian_likelihood_target,
    standard_gaussian,
)


def _forced_probs(spec, state, aux):
    """Evaluate a kernel's acceptance rule on a chosen auxiliary point."""
    mapped = [(state, aux)]
    for invol in spec.involutions[1:]:
        mapped.append(invol(state, aux))
    return spec.acceptance(state, aux, mapped)


def test_target_model_potential_and_rows():
    target = standard_gaussian(2)
    q = np.array([1.0, 2.0])
    assert target.potential(q) == pytest.approx(2.5, abs=1e-14)
    rows = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.allclose(target.log_ratio_rows(rows), [-0.5, -2.0], atol=1e-14)
    no_batch = TargetModel(log_density_ratio=lambda q: -float(q[0]))
    assert np.allclose(no_batch.log_ratio_rows(rows), [-1.0, 0.0], atol=1e-14)


def test_swap_involution_is_self_inverse():
    q, v = np.array([1.0]), np.array([2.0])
    q2, v2 = swap_involution(*swap_involution(q, v))
    assert np.array_equal(q2, q) and np.array_equal(v2, v)


def test_build_rwm_validation():
    with pytest.raises(ConfigurationError):
        build_rwm(standard_gaussian(2), 0.0)
    with pytest.raises(ConfigurationError):
        build_rwm(flat_hilbert_target(power_spectrum(2)), 0.5)


def test_rwm_acceptance_formula():
    target = standard_gaussian(1)
    spec = build_rwm(target, 0.5)
    state, aux = np.array([0.2]), np.array([1.1])
    probs = _forced_probs(spec, state, aux)
    expected = mh_probability_log(-0.5 * 1.1 ** 2 + 0.5 * 0.2 ** 2)
    assert probs[1] == pytest.approx(expected, abs=1e-14)
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)


def test_mh_asymmetric_proposal_formula():
    target = standard_gaussian(1)

    def sampler(state, rng):
        return state + 0.3 + rng.standard_normal(1)

    def log_density(origin, candidate):
        return -0.5 * float((candidate[0] - origin[0] - 0.3) ** 2)

    spec = build_mh(target, sampler, log_density)
    state, aux = np.array([-0.4]), np.array([0.9])
    probs = _forced_probs(spec, state, aux)
    log_ratio = (-0.5 * 0.9 ** 2 + log_density(aux, state)
                 + 0.5 * 0.4 ** 2 - log_density(state, aux))
    assert probs[1] == pytest.approx(mh_probability_log(log_ratio), abs=1e-14)


def test_mhgj_fd_jacobian_matches_analytic():
    target = standard_gaussian(1)

    def aux_sampler(state, rng):
        return rng.standard_normal(1)

    def aux_log_density(state, aux):
        return -0.5 * float(aux[0] ** 2)

    def stretch(state, aux):
        return 2.0 * aux, 0.5 * state

    analytic = build_mhgj(target, aux_sampler, aux_log_density, stretch,
                          log_abs_det_jacobian=lambda s, a: 0.0)
    fd = build_mhgj(target, aux_sampler, aux_log_density, stretch)
    rng = rng_stream(31, "mhgj")
    for _ in range(20):
        state, aux = rng.normal(size=1), rng.normal(size=1)
        pa = _forced_probs(analytic, state, aux)
        pf = _forced_probs(fd, state, aux)
        assert abs(pa[1] - pf[1]) <= 1e-6


def test_mhgj_example_acceptance_value():
    # S(q, v) = (2v, q/2) has unit Jacobian determinant, so the acceptance
    # is the bare joint density ratio.
    target = standard_gaussian(1)
    spec = build_mhgj(target, lambda s, r: r.standard_normal(1),
                      lambda s, a: -0.5 * float(a[0] ** 2),
                      lambda s, a: (2.0 * a, 0.5 * s),
                      log_abs_det_jacobian=lambda s, a: 0.0)
    state, aux = np.array([0.8]), np.array([0.1])
    probs = _forced_probs(spec, state, aux)
    log_ratio = (-0.5 * (2.0 * 0.1) ** 2 - 0.5 * (0.8 / 2.0) ** 2
                 + 0.5 * 0.8 ** 2 + 0.5 * 0.1 ** 2)
    assert probs[1] == pytest.approx(mh_probability_log(log_ratio), abs=1e-14)


def test_hmc_acceptance_is_energy_drop():
    target = standard_gaussian(2)
    spec = build_hmc(target, 0.15, 6)
    rng = rng_stream(32, "hmc-energy")
    state, aux = rng.normal(size=2), rng.normal(size=2)
    image = spec.involutions[1](state, aux)
    probs = _forced_probs(spec, state, aux)

    def ham(q, v):
        return 0.5 * float(q @ q) + 0.5 * float(v @ v)

    expected = mh_probability_log(ham(state, aux) - ham(image[0], image[1]))
    assert probs[1] == pytest.approx(expected, abs=1e-13)


def test_hmc_divergent_trajectory_rejects():
    target = TargetModel(log_density_ratio=lambda q: -0.25 * float(q @ q) ** 2,
                         gradient=lambda q: -float(q @ q) * q)
    spec = build_hmc(target, 40.0, 12)
    rec = master_step(np.array([1.0, -1.0]), spec, rng_stream(33, "hmc-div"))
    assert not rec.accepted
    assert np.allclose(rec.next_state, [1.0, -1.0])


def test_hmc_validation():
    with pytest.raises(ConfigurationError):
        build_hmc(standard_gaussian(2), 0.1, 0)
    with pytest.raises(ConfigurationError):
        build_hmc(standard_gaussian(2), 0.1, 4, mass=-1.0)
    with pytest.raises(ConfigurationError):
        build_hmc(TargetModel(log_density_ratio=lambda q: 0.0), 0.1, 4)


def test_surrogate_hmc_with_exact_gradient_matches_hmc():
    target = standard_gaussian(3)
    exact = build_hmc(target, 0.2, 5)
    surro = build_surrogate_hmc(target, 0.2, 5, surrogate=target.gradient)
    init = np.array([0.4, -1.0, 0.7])
    a = run_chain(init, exact, 200, seed=17)
    b = run_chain(init, surro, 200, seed=17)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.chosen_indices, b.chosen_indices)


def test_surrogate_hmc_rough_surrogate_keeps_exact_acceptance():
    target = standard_gaussian(2)
    spec = build_surrogate_hmc(target, 0.15, 4, surrogate=lambda q: -1.4 * q)
    rng = rng_stream(34, "surro")
    state, aux = rng.normal(size=2), rng.normal(size=2)
    image = spec.involutions[1](state, aux)
    probs = _forced_probs(spec, state, aux)
    delta = (0.5 * float(state @ state) + 0.5 * float(aux @ aux)
             - 0.5 * float(image[0] @ image[0]) - 0.5 * float(image[1] @ image[1]))
    assert probs[1] == pytest.approx(mh_probability_log(delta), abs=1e-13)


def test_pcn_flat_potential_always_accepts():
    spectrum = power_spectrum(4)
    spec = build_pcn(flat_hilbert_target(spectrum), rho=0.7)
    chain = run_chain(np.zeros(4), spec, 200, seed=5)
    assert chain.acceptance_rate == 1.0


def test_pcn_acceptance_is_likelihood_ratio():
    spectrum = power_spectrum(3)
    data = np.array([0.5, -0.2, 0.1])
    target = gaussian_likelihood_target(spectrum, data, 4.0)
    spec = build_pcn(target, rho=0.8)
    state, aux = np.array([0.1, 0.2, -0.3]), np.array([0.4, 0.0, 0.2])
    probs = _forced_probs(spec, state, aux)
    log_ratio = (-0.5 * 4.0 * np.sum((aux - data) ** 2)
                 + 0.5 * 4.0 * np.sum((state - data) ** 2))
    assert probs[1] == pytest.approx(mh_probability_log(log_ratio), abs=1e-13)


def test_pcn_validation():
    spectrum = power_spectrum(2)
    with pytest.raises(ConfigurationError):
        build_pcn(flat_hilbert_target(spectrum), rho=1.5)
    with pytest.raises(ConfigurationError):
        build_pcn(standard_gaussian(2), rho=0.5)


def test_inf_hmc_zero_steps_is_momentum_flip():
    spectrum = power_spectrum(3)
    spec = build_inf_hmc(flat_hilbert_target(spectrum), 0.1, 0.2, 0)
    state, aux = np.array([1.0, 2.0, 3.0]), np.array([0.1, -0.2, 0.3])
    probs = _forced_probs(spec, state, aux)
    assert np.array_equal(probs, [0.0, 1.0])
    q2, v2 = spec.involutions[1](state, aux)
    assert np.array_equal(q2, state) and np.array_equal(v2, -aux)


def test_inf_hmc_involution_round_trip():
    spectrum = power_spectrum(4)
    data = np.array([0.4, -0.1, 0.2, 0.0])
    target = gaussian_likelihood_target(spectrum, data, 2.0)
    spec = build_inf_hmc(target, 0.05, 0.3, 6)
    rng = rng_stream(35, "inf-round")
    for _ in range(10):
        state = sample_prior(spectrum, rng)
        aux = sample_prior(spectrum, rng)
        q1, v1 = spec.involutions[1](state, aux)
        q2, v2 = spec.involutions[1](q1, v1)
        assert np.max(np.abs(q2 - state)) <= 1e-10
        assert np.max(np.abs(v2 - aux)) <= 1e-10


def test_inf_hmc_acceptance_matches_closed_form():
    spectrum = power_spectrum(3)
    data = np.array([0.3, 0.1, -0.4])
    w = 5.0
    target = gaussian_likelihood_target(spectrum, data, w)
    da, db, n = 0.04, 0.25, 5
    spec = build_inf_hmc(target, da, db, n)
    lam = spectrum.eigenvalues

    def surrogate(q):
        # Default force: eigenvalues times the potential gradient.
        return lam * w * (q - data)

    def phi(q):
        return 0.5 * w * float(np.sum((q - data) ** 2))

    rng = rng_stream(36, "inf-accept")
    for _ in range(10):
        state = sample_prior(spectrum, rng)
        aux = sample_prior(spectrum, rng)
        probs = _forced_probs(spec, state, aux)
        log = kick_rotate_kick_log(state, aux, surrogate, da, db, n)
        expected = mh_probability_log(cameron_martin_log_alpha(log, phi, None, spectrum))
        assert probs[1] == pytest.approx(expected, abs=1e-12)
        # The acceptance equals the exact energy drop of the trajectory.
        qn, vn = log.states[-1]
        drop = (total_energy(phi, state, aux, spectrum)
                - total_energy(phi, qn, vn, spectrum))
        assert probs[1] == pytest.approx(mh_probability_log(drop), abs=1e-10)


def test_inf_hmc_validation():
    spectrum = power_spectrum(2)
    target = flat_hilbert_target(spectrum)
    with pytest.raises(ConfigurationError):
        build_inf_hmc(target, -0.1, 0.2, 3)
    with pytest.raises(ConfigurationError):
        build_inf_hmc(target, 0.1, 0.2, -1)
    with pytest.raises(ConfigurationError):
        build_inf_hmc(target, 0.1, 0.2, 3, psi=lambda q, v: 0.0)
    with pytest.raises(ConfigurationError):
        build_inf_hmc(standard_gaussian(2), 0.1, 0.2, 3)
    bare = TargetModel(log_density_ratio=lambda q: 0.0,
                       reference=GaussianReference(spectrum))
    with pytest.raises(ConfigurationError):
        build_inf_hmc(bare, 0.1, 0.2, 3)


def test_multiproposal_slot_swaps_are_involutions():
    target = standard_gaussian(2)
    cloud, pivot = symmetric_walk_pair(0.5)
    spec = build_multiproposal(target, cloud, pivot, 3)
    rng = rng_stream(37, "slots")
    state = rng.normal(size=2)
    aux = spec.propose(state, rng)
    assert aux.shape == (3, 2)
    for invol in spec.involutions[1:]:
        q1, v1 = invol(state, aux)
        q2, v2 = invol(q1, v1)
        assert np.array_equal(q2, state) and np.array_equal(v2, aux)


def test_multiproposal_acceptance_is_barker_weights():
    target = standard_gaussian(1)
    cloud, pivot = symmetric_walk_pair(0.8)
    spec = build_multiproposal(target, cloud, pivot, 2)
    state = np.array([0.3])
    aux = np.array([[1.0], [-0.5]])
    probs = _forced_probs(spec, state, aux)
    logs = np.array([-0.5 * 0.3 ** 2, -0.5 * 1.0 ** 2, -0.5 * 0.5 ** 2])
    expected = np.exp(logs) / np.exp(logs).sum()
    assert np.allclose(probs, expected, atol=1e-14)


def test_mpcn_flat_target_selects_uniformly():
    spectrum = power_spectrum(3)
    spec = build_mpcn(flat_hilbert_target(spectrum), rho=0.6, n_proposals=4)
    rng = rng_stream(38, "mpcn-flat")
    state = sample_prior(spectrum, rng)
    aux = spec.propose(state, rng)
    assert aux.shape == (4, 3)
    probs = _forced_probs(spec, state, aux)
    assert np.allclose(probs, 0.2, atol=1e-14)


def test_mpcn_validation():
    spectrum = power_spectrum(2)
    target = flat_hilbert_target(spectrum)
    with pytest.raises(ConfigurationError):
        build_mpcn(target, rho=-0.1, n_proposals=2)
    with pytest.raises(ConfigurationError):
        build_mpcn(target, rho=0.5, n_proposals=0)
    with pytest.raises(ConfigurationError):
        build_mpcn(standard_gaussian(2), rho=0.5, n_proposals=2)


def test_sampler_config_validation():
    with pytest.raises(ConfigurationError):
        SamplerConfig(kind="nope")
    with pytest.raises(ConfigurationError):
        SamplerConfig(kind="rwm", step_size=0.0)
    with pytest.raises(ConfigurationError):
        SamplerConfig(kind="pcn", rho=1.2)
    with pytest.raises(ConfigurationError):
        SamplerConfig(kind="mpcn", proposal_count=0)
    with pytest.raises(ConfigurationError):
        SamplerConfig(kind="hmc", target_accept=1.0)


def test_build_sampler_dispatch_and_overrides():
    target = standard_gaussian(2)
    spec = build_sampler(target, SamplerConfig(kind="rwm", step_size=0.5))
    assert spec.proposal_count == 1
    spec = build_sampler(target, SamplerConfig(kind="multiproposal", proposal_count=3))
    assert spec.proposal_count == 3
    for kind in ("mh", "mhgj"):
        with pytest.raises(ConfigurationError):
            build_sampler(target, SamplerConfig(kind=kind))


def test_build_sampler_inf_hmc_defaults():
    spectrum = power_spectrum(3)
    data = np.array([0.2, -0.1, 0.3])
    target = gaussian_likelihood_target(spectrum, data, 3.0)
    via_config = build_sampler(target, SamplerConfig(kind="inf_hmc", step_size=0.3,
                                                     n_steps=4))
    direct = build_inf_hmc(target, 0.15, 0.3, 4)
    init = sample_prior(spectrum, rng_stream(39, "inf-default"))
    a = run_chain(init, via_config, 50, seed=8)
    b = run_chain(init, direct, 50, seed=8)
    assert np.array_equal(a.states, b.states)


def test_run_chain_shapes_and_reproducibility():
    target = standard_gaussian(2)
    spec = build_rwm(target, 0.8)
    init = np.array([0.1, -0.2])
    a = run_chain(init, spec, 100, seed=3)
    assert a.states.shape == (101, 2)
    assert a.chosen_indices.shape == (100,)
    assert a.probabilities.shape == (100, 2)
    assert a.n_iterations == 100 and a.dim == 2
    assert np.array_equal(a.states[0], init)
    assert np.array_equal(a.final_state, a.states[-1])
    b = run_chain(init, spec, 100, seed=3)
    assert np.array_equal(a.states, b.states)
    c = run_chain(init, spec, 100, seed=4)
    assert not np.array_equal(a.states, c.states)


def test_run_chain_validation():
    spec = build_rwm(standard_gaussian(1), 0.5)
    with pytest.raises(ConfigurationError):
        run_chain(np.zeros(1), spec, 0)
    with pytest.raises(ConfigurationError):
        run_chain(np.zeros((2, 2)), spec, 10)


def test_chain_record_tail():
    states = np.arange(12.0).reshape(6, 2)
    chosen = np.array([0, 1, 1, 0, 1])
    probs = np.tile([0.5, 0.5], (5, 1))
    rec = ChainRecord(states=states, chosen_indices=chosen, probabilities=probs,
                      wall_seconds=10.0)
    assert rec.acceptance_rate == pytest.approx(0.6)
    cut = rec.tail(2)
    assert cut.n_iterations == 3
    assert np.array_equal(cut.states, states[2:])
    assert cut.wall_seconds == pytest.approx(6.0)
    with pytest.raises(ConfigurationError):
        rec.tail(5)
    with pytest.raises(ConfigurationError):
        rec.tail(-1)
