"""Indirect scheme: each field is measured against a common strong local oscillator.

Each eight-port detector yields the radially integrated Q-function of its
field as a phase density relative to the oscillator.  The relative phase
distribution is the circular correlation of the two marginals, which for
coherent (or classically mixed coherent) input also has the closed form

    P(phi) = (2/pi) exp(-|b1|^2 - |b2|^2)
             int int r1 r2 exp(-r1^2 - r2^2) I0(2 |r1 b1 + r2 b2 exp(-i phi)|) dr1 dr2.

Both routes are implemented; they must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import CoherentPair, Source, as_ensemble
from .numerics import (
    TWO_PI,
    FringeSummary,
    PhaseDistribution,
    PhaseGrid,
    bessel_i_scaled,
    integrated_q_profile,
    radial_gauss_quadrature,
)

WEAK_FIELD_LIMIT = 0.3
_PHI_BLOCK = 16


@dataclass(frozen=True)
class IndirectConfig:
    """Local-oscillator phase, output grid and radial quadrature tolerance.

    The oscillator is taken in its infinitely strong limit, so it has no
    amplitude parameter.
    """

    lo_phase: float = 0.0
    grid: PhaseGrid = field(default_factory=PhaseGrid)
    quadrature_tolerance: float = 1e-9

    def __post_init__(self):
        if not 0 < self.quadrature_tolerance <= 1e-4:
            raise ValueError("quadrature_tolerance must lie in (0, 1e-4]")


def single_mode_phase_dist(beta: complex, lo_phase: float = 0.0, grid: PhaseGrid | None = None) -> PhaseDistribution:
    """Phase of one coherent field relative to the oscillator; peaks at ``lo_phase - arg beta``."""
    grid = grid or PhaseGrid()
    beta = complex(beta)
    peak = lo_phase - math.atan2(beta.imag, beta.real)
    return PhaseDistribution.from_values(grid, integrated_q_profile(grid.phi, abs(beta), peak))


def correlate_direct(p1: np.ndarray, p2: np.ndarray, step: float) -> np.ndarray:
    """``c[k] = step * sum_j p1[j] p2[(j - k) mod n]`` by the O(n^2) double loop."""
    n = len(p1)
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return step * (p2[idx] * p1[None, :]).sum(axis=1)


def correlate_fft(p1: np.ndarray, p2: np.ndarray, step: float) -> np.ndarray:
    """Same as ``correlate_direct`` through the real FFT."""
    n = len(p1)
    return step * np.fft.irfft(np.fft.rfft(p1) * np.conj(np.fft.rfft(p2)), n)


def convolve_relative_phase(p1: PhaseDistribution, p2: PhaseDistribution, method: str = "fft") -> PhaseDistribution:
    """Relative-phase density ``P(phi) = int p1(x) p2(x - phi) dx``.

    With ``p1`` peaked at ``a`` and ``p2`` at ``b`` the result peaks at
    ``a - b``.  ``method`` is ``"fft"`` or ``"direct"``.
    """
    if p1.grid != p2.grid:
        raise ValueError("distributions live on different grids")
    if method == "fft":
        values = correlate_fft(p1.density, p2.density, p1.grid.step)
    elif method == "direct":
        values = correlate_direct(p1.density, p2.density, p1.grid.step)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    # FFT round-off can leave -1e-20 style values in empty regions.
    return PhaseDistribution.from_values(p1.grid, np.clip(values, 0.0, None))


def indirect_convolution(source: Source, config: IndirectConfig | None = None, method: str = "fft") -> PhaseDistribution:
    """Relative phase through the two single-mode marginals (mixed over the ensemble)."""
    config = config or IndirectConfig()
    values = np.zeros(config.grid.n_points)
    for weight, pair in as_ensemble(source):
        p1 = single_mode_phase_dist(pair.beta1, config.lo_phase, config.grid)
        p2 = single_mode_phase_dist(pair.beta2, config.lo_phase, config.grid)
        values += weight * convolve_relative_phase(p1, p2, method).density
    return PhaseDistribution.from_values(config.grid, values)


def _radial_integrand(a: float, b: float, offset: np.ndarray):
    # exp(-r1^2 - r2^2 - a^2 - b^2) I0(2|w|) with exponents merged; the merged
    # exponent is <= 0 because 2|w| <= 2 r1 a + 2 r2 b.
    cos_off = np.cos(offset)[:, None, None]

    def integrand(r1, r2):
        w2 = (r1 * a) ** 2 + (r2 * b) ** 2 + 2.0 * r1 * r2 * a * b * cos_off
        two_w = 2.0 * np.sqrt(np.clip(w2, 0.0, None))
        return np.exp(two_w - r1 * r1 - r2 * r2 - a * a - b * b) * bessel_i_scaled(0, two_w)

    return integrand


def _indirect_pure(pair: CoherentPair, config: IndirectConfig) -> np.ndarray:
    a, b = abs(pair.beta1), abs(pair.beta2)
    offset = config.grid.phi - pair.phase_difference
    # quadrature tolerance refers to the density, which is (2/pi) x integral
    tol = config.quadrature_tolerance * math.pi / 2.0
    out = np.empty(config.grid.n_points)
    for start in range(0, config.grid.n_points, _PHI_BLOCK):
        block = offset[start:start + _PHI_BLOCK]
        out[start:start + _PHI_BLOCK] = radial_gauss_quadrature(
            _radial_integrand(a, b, block), tol, centers=(a, b)
        )
    return (2.0 / math.pi) * out


def indirect_general(source: Source, config: IndirectConfig | None = None) -> PhaseDistribution:
    """Indirect relative-phase density from the double radial integral.

    Raises
    ------
    QuadratureError
        If the radial quadrature fails to converge.
    """
    config = config or IndirectConfig()
    values = np.zeros(config.grid.n_points)
    for weight, pair in as_ensemble(source):
        values += weight * _indirect_pure(pair, config)
    return PhaseDistribution.from_values(config.grid, values)


def indirect_weak_limit(pair: CoherentPair) -> FringeSummary:
    """Leading-order indirect fringe: visibility ``(pi/2) |b1| |b2|`` at ``phi2 - phi1``."""
    a, b = abs(pair.beta1), abs(pair.beta2)
    if a > WEAK_FIELD_LIMIT or b > WEAK_FIELD_LIMIT:
        raise ValueError(f"weak-field formula needs |beta| <= {WEAK_FIELD_LIMIT}")
    amplitude = 0.5 * math.pi * a * b
    return FringeSummary(1.0 / TWO_PI, amplitude, pair.phase_difference if amplitude > 0 else 0.0)
