import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from opphase.kernels import (
    CoherentEnsemble,
    CoherentPair,
    TailBoundError,
    build_joint_table,
    joint_count_probability,
    kernel_k43,
    kernel_k65,
    output_amplitudes,
    skellam_pmf,
)
from oracles import four_fold_poisson_table

amplitude = st.builds(
    lambda r, p: r * complex(math.cos(p), math.sin(p)),
    st.floats(0.0, 1.5),
    st.floats(0.0, 2 * math.pi),
)


def test_pair_validation():
    with pytest.raises(ValueError):
        CoherentPair(complex("nan"), 0)
    with pytest.raises(ValueError):
        CoherentPair(1001, 0)
    with pytest.raises(ValueError):
        CoherentPair(0, 0, float("inf"))


def test_ensemble_validation():
    p = CoherentPair(1, 0)
    with pytest.raises(ValueError):
        CoherentEnsemble(((0.5, p), (0.4, p)))
    with pytest.raises(ValueError):
        CoherentEnsemble(((1.5, p), (-0.5, p)))
    with pytest.raises(ValueError):
        CoherentEnsemble(((0.5, p), (0.5, p.with_theta(1.0))))


def test_output_amplitude_examples():
    z = output_amplitudes(CoherentPair(0, 0, 1.3))
    assert (z.a3, z.a4, z.a5, z.a6) == (0, 0, 0, 0)
    o = output_amplitudes(CoherentPair(1, 0))
    assert (o.a3, o.a4, o.a5, o.a6) == (0.5, 0.5, -0.5j, -0.5j)
    o = output_amplitudes(CoherentPair(1, 1))
    assert o.a3 == 0 and o.a4 == 1
    assert o.a5 == pytest.approx((1 - 1j) / 2) and o.a6 == pytest.approx((-1 - 1j) / 2)
    assert o.total_energy == pytest.approx(2.0, abs=1e-15)


def test_energy_conservation_random_pairs():
    rng = np.random.default_rng(11)
    b1 = rng.normal(size=10_000) + 1j * rng.normal(size=10_000)
    b2 = 5 * (rng.normal(size=10_000) + 1j * rng.normal(size=10_000))
    theta = rng.uniform(0, 2 * np.pi, 10_000)
    from opphase.kernels import detector_amplitudes

    energy = sum(np.abs(a) ** 2 for a in detector_amplitudes(b1, b2, theta))
    assert np.max(np.abs(energy - np.abs(b1) ** 2 - np.abs(b2) ** 2) / (1 + np.abs(b2) ** 2)) < 1e-12


def test_kernel_vacuum():
    vac = CoherentPair(0, 0, 0.4)
    assert kernel_k43(vac, 0) == 1.0 and kernel_k65(vac, 0) == 1.0
    assert kernel_k43(vac, 2) == 0.0 and kernel_k65(vac, -1) == 0.0


def test_kernel_k43_one_sided_poisson():
    pair = CoherentPair(1, 1)
    for k in range(8):
        assert kernel_k43(pair, k) == pytest.approx(math.exp(-1) / math.factorial(k), rel=1e-13)
        assert kernel_k43(pair, -k - 1) == 0.0


def test_kernel_k65_one_sided_poisson():
    pair = CoherentPair(1, -1j)
    o = output_amplitudes(pair)
    # one of a5, a6 vanishes; the other has mean 1
    assert min(abs(o.a5), abs(o.a6)) < 1e-15
    sign = 1 if abs(o.a6) > abs(o.a5) else -1
    for k in range(8):
        assert kernel_k65(pair, sign * k) == pytest.approx(math.exp(-1) / math.factorial(k), rel=1e-13)
        assert kernel_k65(pair, -sign * (k + 1)) == 0.0


def test_kernel_single_field_origin():
    double_poisson = sum(poisson.pmf(n, 0.25) ** 2 for n in range(41))
    pair = CoherentPair(1, 0)
    assert kernel_k43(pair, 0) == pytest.approx(double_poisson, rel=1e-13)
    assert kernel_k65(pair, 0) == pytest.approx(double_poisson, rel=1e-13)
    assert kernel_k43(pair, 0) == pytest.approx(0.64504, abs=1e-5)
    assert joint_count_probability(pair, 0, 0) == pytest.approx(double_poisson ** 2, rel=1e-13)
    assert joint_count_probability(pair, 0, 0) == pytest.approx(0.41608, abs=1e-5)


def test_kernel_closed_form_away_from_degeneracy():
    # the Bessel form with the ratio power, checked directly
    from opphase.numerics import bessel_i_scaled

    b1, b2, theta = 0.8 + 0.1j, 0.3 - 0.5j, 0.7
    pair = CoherentPair(b1, b2, theta)
    e = b2 * np.exp(1j * theta)
    for n in range(-6, 7):
        z = abs(b1 ** 2 - e ** 2) / 2
        expected = math.exp(-(abs(b1) ** 2 + abs(b2) ** 2) / 2 + z) * abs((b1 + e) / (b1 - e)) ** n * bessel_i_scaled(abs(n), z)
        assert kernel_k43(pair, n) == pytest.approx(expected, rel=1e-12)
        z = abs(b1 ** 2 + e ** 2) / 2
        expected = math.exp(-(abs(b1) ** 2 + abs(b2) ** 2) / 2 + z) * abs((1j * b1 + e) / (1j * b1 - e)) ** n * bessel_i_scaled(abs(n), z)
        assert kernel_k65(pair, n) == pytest.approx(expected, rel=1e-12)


def test_single_count_mass_weak_fields():
    pair = CoherentPair(0.1, 0.1)
    mass = sum(joint_count_probability(pair, *k) for k in [(1, 0), (-1, 0), (0, 1), (0, -1)])
    oracle = four_fold_poisson_table(0.1, 0.1, 0.0, n_cut=5)
    c = 5
    expected = oracle[c + 1, c] + oracle[c - 1, c] + oracle[c, c + 1] + oracle[c, c - 1]
    assert mass == pytest.approx(expected, abs=1e-12)
    # one detected photon in total, up to O(beta^4)
    assert mass == pytest.approx(0.02 * math.exp(-0.02), abs=1e-5)


def test_skellam_large_means_normalized():
    n = np.arange(-3000, 3001)
    p = skellam_pmf(n, 900.0, 400.0)
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(n * p) == pytest.approx(500.0, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(amplitude, amplitude, st.floats(0.0, 2 * math.pi))
def test_joint_matches_four_fold_oracle(b1, b2, theta):
    table = build_joint_table(CoherentPair(b1, b2, theta))
    oracle = four_fold_poisson_table(b1, b2, theta, n_cut=table.n_max)
    assert np.max(np.abs(oracle - table.probabilities)) < 1e-10


def test_phase_covariance():
    b1, b2, theta = 0.7 - 0.2j, 1.1 + 0.4j, 2.2
    d = np.arange(-8, 9)
    a = joint_count_probability(CoherentPair(b1, b2, theta), d[:, None], d[None, :])
    b = joint_count_probability(CoherentPair(b1, b2 * np.exp(1j * theta), 0.0), d[:, None], d[None, :])
    assert np.max(np.abs(a - b)) < 1e-15


def test_global_phase_invariance():
    chi = 1.234
    b1, b2 = 0.9 + 0.3j, -0.4 + 1.2j
    d = np.arange(-10, 11)
    a = joint_count_probability(CoherentPair(b1, b2, 0.5), d[:, None], d[None, :])
    b = joint_count_probability(CoherentPair(b1 * np.exp(1j * chi), b2 * np.exp(1j * chi), 0.5), d[:, None], d[None, :])
    assert np.max(np.abs(a - b)) < 1e-12


def test_ensemble_mixture():
    p1, p2 = CoherentPair(0.5, 0.2j), CoherentPair(-1.0, 0.3)
    ens = CoherentEnsemble(((0.3, p1), (0.7, p2)))
    for k in [(0, 0), (1, -2), (-3, 1)]:
        expected = 0.3 * joint_count_probability(p1, *k) + 0.7 * joint_count_probability(p2, *k)
        assert joint_count_probability(ens, *k) == pytest.approx(expected, rel=1e-14)


def test_table_vacuum():
    table = build_joint_table(CoherentPair(0, 0))
    assert table[0, 0] == 1.0
    assert table.tail_bound == 0.0
    assert table.total_mass == 1.0


def test_table_single_field():
    table = build_joint_table(CoherentPair(1, 0))
    assert table.n_max == 21
    assert table.total_mass >= 1 - 1e-9
    assert table.total_mass + table.tail_bound >= 1 - 1e-12
    assert table.total_mass <= 1 + 1e-12


def test_table_reflection_symmetry():
    table = build_joint_table(CoherentPair(0.5, 0.5))
    d = table.differences
    for n in d:
        for m in d:
            assert table[int(n), int(m)] == pytest.approx(table[int(n), -int(m)], rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("pair", [CoherentPair(3.0, -2.0, 0.3), CoherentPair(70.0, 10j)])
def test_table_normalized(pair):
    table = build_joint_table(pair, tail_tolerance=1e-10)
    assert abs(table.total_mass - 1.0) < 1e-10


def test_table_tail_failure():
    with pytest.raises(TailBoundError):
        build_joint_table(CoherentPair(3.0, 0.0), tail_tolerance=1e-300)
    with pytest.raises(ValueError):
        build_joint_table(CoherentPair(1.0, 0.0), tail_tolerance=0.1)
