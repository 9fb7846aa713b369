import math

import numpy as np
import pytest

from opphase.direct import DataPolicy, NormalizationPolicy, averaged_distribution, uniform_theta_average
from opphase.fock import (
    FockRays,
    TwoModeFockState,
    build_network_unitary,
    detector_probabilities,
    london_relative_phase,
    psi_prime,
    rotation_overlap,
    tm_phase_distribution,
    vacuum_deplete,
    weak_coherent_state,
)
from opphase.kernels import CoherentPair, joint_count_probability
from opphase.numerics import TWO_PI, NoUsableDataError, PhaseGrid, fringe_fit

DISCARD = DataPolicy.DISCARD_ORIGIN
SPREAD = DataPolicy.UNIFORM_SPREAD


@pytest.mark.parametrize("theta", [0.0, 0.4, math.pi / 2, 3.0])
def test_unitary(theta):
    m = build_network_unitary(theta).matrix
    assert np.allclose(m @ m.conj().T, np.eye(4), atol=1e-12, rtol=0)
    e = np.exp(1j * theta)
    assert np.allclose(m[:, 0], [0.5, 0.5, -0.5j, -0.5j], atol=1e-15)
    assert np.allclose(m[:, 2], [-0.5 * e, 0.5 * e, 0.5 * e, -0.5 * e], atol=1e-15)


def test_unitary_examples():
    assert np.allclose(build_network_unitary(0.0).matrix @ [1, 0, 0, 0], [0.5, 0.5, -0.5j, -0.5j], atol=1e-15)
    out = build_network_unitary(math.pi / 2).matrix @ [0, 0, 1, 0]
    assert np.allclose(out, [-0.5j, 0.5j, 0.5j, -0.5j], atol=1e-15)


def test_unitary_rejects_non_unitary():
    from opphase.fock import NetworkUnitary

    with pytest.raises(ValueError):
        NetworkUnitary(np.ones((4, 4)))


def test_state_validation():
    with pytest.raises(ValueError):
        TwoModeFockState(np.ones((2, 2)))
    with pytest.raises(ValueError):
        TwoModeFockState(np.ones((2, 3)) / math.sqrt(6))
    with pytest.raises(ValueError):
        TwoModeFockState.from_coefficients(np.zeros((2, 2)))


def test_coherent_truncation_mass():
    n = np.arange(5)
    raw = np.exp(-0.04 / 2) * 0.2 ** n / np.sqrt([math.factorial(k) for k in n])
    assert 1 - np.sum(raw ** 2) < 1e-6
    state = TwoModeFockState.coherent_product(0.2, 0.2j, 4)
    assert state.coeffs[1, 1] == pytest.approx(0.2 * 0.2j * np.exp(-0.04) / np.sum(raw ** 2), rel=1e-12)


def test_vacuum_detection():
    dp = detector_probabilities(TwoModeFockState.number_state(0, 0, 3), 0.7)
    assert dp.table[0, 0, 0, 0] == 1.0
    assert dp.total == pytest.approx(1.0, abs=1e-12)


def test_single_photon_splits_evenly():
    dp = detector_probabilities(TwoModeFockState.number_state(1, 0), 0.0)
    for k in range(4):
        outcome = tuple(int(i == k) for i in range(4))
        assert dp.table[outcome] == pytest.approx(0.25, abs=1e-15)


def _two_photon_oracle(theta):
    """Amplitudes of |1,1> by the symmetrized product rule."""
    m = build_network_unitary(theta).matrix
    out = {}
    for j in range(4):
        for k in range(j, 4):
            counts = [0, 0, 0, 0]
            counts[j] += 1
            counts[k] += 1
            if j == k:
                amp = math.sqrt(2) * m[j, 0] * m[j, 2]
            else:
                amp = m[j, 0] * m[k, 2] + m[k, 0] * m[j, 2]
            out[tuple(counts)] = abs(amp) ** 2
    return out


@pytest.mark.parametrize("theta", [0.0, 1.1, 2.5])
def test_two_photon_against_oracle(theta):
    dp = detector_probabilities(TwoModeFockState.number_state(1, 1), theta)
    oracle = _two_photon_oracle(theta)
    for key, p in dp.table.items():
        assert p == pytest.approx(oracle.get(key, 0.0), abs=1e-14)


def test_vacuum_probability_equals_vacuum_weight():
    rng = np.random.default_rng(5)
    for _ in range(5):
        state = TwoModeFockState.random(3, rng)
        for theta in (0.0, 1.9):
            p = detector_probabilities(state, theta).table[0, 0, 0, 0]
            assert p == pytest.approx(abs(state.vacuum_amplitude) ** 2, abs=1e-12)


def test_normalization_and_number_conservation():
    c = np.zeros((4, 4), dtype=complex)
    c[2, 0], c[1, 2], c[0, 0] = 0.6, 0.6j, 0.5291502622129181
    state = TwoModeFockState.from_coefficients(c)
    dp = detector_probabilities(state, 0.9)
    assert dp.total == pytest.approx(1.0, abs=1e-12)
    sectors = state.total_number_sectors()
    for key, p in dp.table.items():
        if sum(key) not in sectors:
            assert p < 1e-30


def test_completion_does_not_matter():
    state = TwoModeFockState.random(3, np.random.default_rng(2))
    u = np.array([[np.cos(0.7), 1j * np.sin(0.7)], [1j * np.sin(0.7), np.cos(0.7)]]) * np.exp(0.3j)
    a = detector_probabilities(state, 1.2)
    b = detector_probabilities(state, 1.2, completion=u)
    assert max(abs(a.table[k] - b.table[k]) for k in a.table) < 1e-12
    assert not np.allclose(build_network_unitary(1.2).matrix, build_network_unitary(1.2, u).matrix)


def test_cutoff_envelope():
    with pytest.raises(ValueError):
        detector_probabilities(TwoModeFockState.number_state(9, 0), 0.0)
    with pytest.raises(ValueError):
        tm_phase_distribution(TwoModeFockState.number_state(7, 0))


@pytest.mark.parametrize("b1, b2", [(0.2, 0.2), (0.15 * np.exp(0.3j), 0.2 * np.exp(-1.1j)), (0.05j, -0.18)])
def test_coherent_consistency(b1, b2):
    state = TwoModeFockState.coherent_product(b1, b2, 4)
    for theta in (0.0, 0.8, 4.0):
        w = detector_probabilities(state, theta).count_differences()
        for (n43, n65), p in w.items():
            analytic = joint_count_probability(CoherentPair(b1, b2, theta), n43, n65)
            assert abs(p - analytic) < 1e-6


def test_ray_model_matches_detector_probabilities():
    state = TwoModeFockState.random(3, np.random.default_rng(9))
    rays = FockRays(state)
    for theta in (0.0, 2.3):
        direct = detector_probabilities(state, theta).count_differences()
        from_rays = rays.count_differences(theta)
        for key, p in direct.items():
            assert from_rays.get(key, 0.0) == pytest.approx(p, abs=1e-13)


def test_origin_average_is_exact():
    rays = FockRays(TwoModeFockState.random(4, np.random.default_rng(4)))
    assert rays.origin_average() == pytest.approx(uniform_theta_average(rays.origin_probability, nodes=256), abs=1e-14)


def test_tm_weak_coherent_fringe():
    dist = tm_phase_distribution(TwoModeFockState.coherent_product(0.1, 0.1, 2), DISCARD)
    assert fringe_fit(dist).amplitude == pytest.approx(1.0, abs=0.02)


def test_tm_first_order_state_equals_psi_prime():
    grid = PhaseGrid(128)
    a = tm_phase_distribution(weak_coherent_state(0.1, 0.1), DISCARD, grid=grid)
    b = tm_phase_distribution(psi_prime(0.1, 0.1), DISCARD, grid=grid)
    assert np.max(np.abs(a.density - b.density)) < 1e-6


def test_tm_truncated_product_differs_at_second_order():
    # the |1,1> component of the product state shifts the density by O(beta^2)
    grid = PhaseGrid(128)
    a = tm_phase_distribution(TwoModeFockState.coherent_product(0.1, 0.1, 2), DISCARD, grid=grid)
    b = tm_phase_distribution(psi_prime(0.1, 0.1), DISCARD, grid=grid)
    assert 1e-4 < np.max(np.abs(a.density - b.density)) < 0.1 * 0.1 * 0.5


def test_tm_vacuum():
    dist = tm_phase_distribution(TwoModeFockState.number_state(0, 0, 2), SPREAD)
    assert np.allclose(dist.density, 1 / TWO_PI, rtol=0, atol=1e-15)
    with pytest.raises(NoUsableDataError):
        tm_phase_distribution(TwoModeFockState.number_state(0, 0, 2), DISCARD)


@pytest.mark.parametrize("policy", [DISCARD, SPREAD])
def test_tm_matches_coherent_module(policy):
    grid = PhaseGrid(64)
    a = tm_phase_distribution(TwoModeFockState.coherent_product(0.3, 0.4j, 6), policy, grid=grid)
    b = averaged_distribution(CoherentPair(0.3, 0.4j), policy, grid=grid)
    assert np.max(np.abs(a.density - b.density)) < 1e-8


@pytest.mark.parametrize("norm", list(NormalizationPolicy))
def test_depletion_theorem_small(norm):
    rng = np.random.default_rng(21)
    grid = PhaseGrid(64)
    for _ in range(5):
        state = TwoModeFockState.random(2, rng)
        a = tm_phase_distribution(state, DISCARD, norm, grid)
        b = tm_phase_distribution(vacuum_deplete(state), DISCARD, norm, grid)
        assert np.max(np.abs(a.density - b.density)) < 1e-9


def test_depletion_proportionality():
    state = TwoModeFockState.random(3, np.random.default_rng(8))
    depleted = vacuum_deplete(state)
    rest = 1 - abs(state.vacuum_amplitude) ** 2
    p = detector_probabilities(state, 0.6).table
    q = detector_probabilities(depleted, 0.6).table
    for key in p:
        if sum(key) > 0:
            assert q[key] == pytest.approx(p[key] / rest, rel=1e-10, abs=1e-15)


def test_vacuum_deplete_examples():
    s = TwoModeFockState.number_state(1, 2)
    assert np.array_equal(vacuum_deplete(s).coeffs, s.coeffs)
    depleted = vacuum_deplete(weak_coherent_state(0.1, 0.1))
    assert np.allclose(depleted.coeffs, psi_prime(1, 1).coeffs, atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(10):
        d = vacuum_deplete(TwoModeFockState.random(3, rng))
        assert np.sum(np.abs(d.coeffs) ** 2) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        vacuum_deplete(TwoModeFockState.number_state(0, 0, 2))


def test_rotation_overlap_identity():
    state = TwoModeFockState.random(3, np.random.default_rng(1))
    assert rotation_overlap(state, 0.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("phi0", [0.0, math.pi / 4, math.pi / 2, math.pi, 5.0])
def test_rotation_overlap_balanced_single_photon(phi0):
    assert rotation_overlap(psi_prime(0.1, 0.1j), phi0) == pytest.approx(abs(math.cos(phi0 / 2)), abs=1e-12)


def test_rotation_overlap_scale_independent():
    for scale in (0.01, 0.1, 0.3):
        a = rotation_overlap(psi_prime(scale, 2 * scale), 1.3)
        assert a == pytest.approx(rotation_overlap(psi_prime(1, 2), 1.3), abs=1e-14)


def _rotation_formula(b1, b2, phi0):
    return math.exp(-(b1 ** 2 + b2 ** 2)) * abs(1 + b1 ** 2 * np.exp(0.5j * phi0) + b2 ** 2 * np.exp(-0.5j * phi0))


def test_rotation_overlap_weak_coherent():
    state = TwoModeFockState.coherent_product(0.1, 0.1, 8)
    assert rotation_overlap(state, math.pi) == pytest.approx(0.9802, abs=1e-4)
    for phi0 in np.linspace(0, 2 * math.pi, 9):
        # exact coherent overlap is exp(-sum |b|^2 (1 - cos(phi0/2)))
        assert rotation_overlap(state, phi0) == pytest.approx(math.exp(-0.02 * (1 - math.cos(phi0 / 2))), abs=1e-13)
        # the second-order formula misses only O(|beta|^4) terms
        assert abs(rotation_overlap(state, phi0) - _rotation_formula(0.1, 0.1, phi0)) <= 2 * 0.1 ** 4


def test_london_vacuum_and_single_mode():
    grid = PhaseGrid(32)
    for state in (TwoModeFockState.number_state(0, 0, 2), TwoModeFockState.number_state(1, 0), TwoModeFockState.number_state(3, 0)):
        assert np.allclose(london_relative_phase(state, grid).density, 1 / TWO_PI, rtol=0, atol=1e-15)


def test_london_closed_form():
    grid = PhaseGrid(128)
    b1, b2 = 0.2 * np.exp(0.5j), 0.3 * np.exp(2.0j)
    dist = london_relative_phase(psi_prime(b1, b2), grid)
    r = abs(b1) / abs(b2)
    expected = (1 + 2 * np.cos(grid.phi + 0.5 - 2.0) / (r + 1 / r)) / TWO_PI
    assert np.max(np.abs(dist.density - expected)) < 1e-12


def test_london_normalized_and_phase_invariant():
    grid = PhaseGrid(64)
    state = TwoModeFockState.random(4, np.random.default_rng(13))
    a = london_relative_phase(state, grid)
    b = london_relative_phase(TwoModeFockState(state.coeffs * np.exp(1.7j)), grid)
    assert a.integral() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(a.density - b.density)) < 1e-14


def test_london_number_state_sum():
    # (|2,0> + |0,2>)/sqrt2 has a second-harmonic London density
    grid = PhaseGrid(64)
    c = np.zeros((3, 3))
    c[2, 0] = c[0, 2] = 1
    dist = london_relative_phase(TwoModeFockState.from_coefficients(c), grid)
    assert np.allclose(dist.density, (1 + np.cos(2 * grid.phi)) / TWO_PI, atol=1e-14, rtol=0)
