"""Photon-count-difference kernels of the eight-port homodyne detector.

With coherent light in ports 1 and 2 (vacuum in 10 and 20) every detector
mode leaves in a coherent state, so the four counts are independent Poisson
variates and each count difference is Skellam distributed.  ``kernel_k43``
and ``kernel_k65`` evaluate the modified-Bessel closed forms of those
Skellam laws; ``joint_count_probability`` multiplies them and mixes over a
finite classical ensemble of coherent inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np
from scipy.special import gammaln

from .numerics import SERIES_LIMIT, ascending_bessel_sum, log_bessel_i_scaled

AMPLITUDE_LIMIT = 1e3
DEFAULT_TAIL_TOLERANCE = 1e-10


class TailBoundError(RuntimeError):
    """The truncated count table misses more probability than allowed."""


@dataclass(frozen=True)
class CoherentPair:
    """Coherent amplitudes entering ports 1 and 2, and the port-2 phase shift."""

    beta1: complex
    beta2: complex
    theta: float = 0.0

    def __post_init__(self):
        b1, b2 = complex(self.beta1), complex(self.beta2)
        for b in (b1, b2):
            if not (math.isfinite(b.real) and math.isfinite(b.imag)):
                raise ValueError("coherent amplitudes must be finite")
            if abs(b) > AMPLITUDE_LIMIT:
                raise ValueError(f"|beta| = {abs(b):g} exceeds the supported {AMPLITUDE_LIMIT:g}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def phase_difference(self) -> float:
        """``arg(beta2) - arg(beta1)``, where the phase distributions peak."""
        return (np.angle(self.beta2) - np.angle(self.beta1)) % (2 * math.pi)

    @property
    def mean_photons(self) -> float:
        return abs(self.beta1) ** 2 + abs(self.beta2) ** 2

    def with_theta(self, theta: float) -> "CoherentPair":
        return CoherentPair(self.beta1, self.beta2, theta)


@dataclass(frozen=True)
class CoherentEnsemble:
    """Finite convex mixture of coherent pairs, a discrete P-function.

    All components share the apparatus phase shift ``theta``.
    """

    components: tuple[tuple[float, CoherentPair], ...]

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps:
            raise ValueError("ensemble needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0):
            raise ValueError("ensemble weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights sum to {weights.sum():.15g}, not 1")
        if len({p.theta for _, p in comps}) > 1:
            raise ValueError("ensemble components must share one theta")
        object.__setattr__(self, "components", comps)

    @classmethod
    def pure(cls, pair: CoherentPair) -> "CoherentEnsemble":
        return cls(((1.0, pair),))

    @property
    def theta(self) -> float:
        return self.components[0][1].theta

    @property
    def max_mean_photons(self) -> float:
        return max(p.mean_photons for _, p in self.components)

    def with_theta(self, theta: float) -> "CoherentEnsemble":
        return CoherentEnsemble(tuple((w, p.with_theta(theta)) for w, p in self.components))

    def __iter__(self) -> Iterator[tuple[float, CoherentPair]]:
        return iter(self.components)


Source = Union[CoherentPair, CoherentEnsemble]


def as_ensemble(source: Source) -> CoherentEnsemble:
    if isinstance(source, CoherentEnsemble):
        return source
    if isinstance(source, CoherentPair):
        return CoherentEnsemble.pure(source)
    raise TypeError(f"expected CoherentPair or CoherentEnsemble, got {type(source).__name__}")


@dataclass(frozen=True)
class OutputAmplitudes:
    a3: complex
    a4: complex
    a5: complex
    a6: complex

    @property
    def means(self) -> tuple[float, float, float, float]:
        """Mean photon numbers at detectors 3, 4, 5, 6."""
        return tuple(abs(a) ** 2 for a in (self.a3, self.a4, self.a5, self.a6))

    @property
    def total_energy(self) -> float:
        return sum(self.means)


def detector_amplitudes(beta1, beta2, theta):
    """Vectorized output amplitudes ``(a3, a4, a5, a6)``."""
    b2 = np.asarray(beta2) * np.exp(1j * np.asarray(theta))
    b1 = np.asarray(beta1)
    return (b1 - b2) / 2, (b1 + b2) / 2, (-1j * b1 + b2) / 2, (-1j * b1 - b2) / 2


def output_amplitudes(pair: CoherentPair) -> OutputAmplitudes:
    a3, a4, a5, a6 = detector_amplitudes(pair.beta1, pair.beta2, pair.theta)
    return OutputAmplitudes(complex(a3), complex(a4), complex(a5), complex(a6))


def skellam_pmf(n, mean_plus, mean_minus) -> np.ndarray:
    """P(N+ - N- = n) for independent Poissons with the given means.

    Written as the modified-Bessel closed form
    ``exp(-(m+ + m-)) (m+/m-)**(n/2) I_|n|(2 sqrt(m+ m-))``.  For
    ``2 sqrt(m+ m-) < 15`` the ascending series of ``I_|n|`` is folded into
    the prefactor, which turns the ratio power into a plain Poisson factor
    and makes the one-sided limits (a vanishing mean) exact rather than 0/0.
    """
    n, mp, mm = np.broadcast_arrays(
        np.asarray(n), np.asarray(mean_plus, dtype=float), np.asarray(mean_minus, dtype=float)
    )
    if np.any(mp < 0) or np.any(mm < 0):
        raise ValueError("Poisson means must be nonnegative")
    absn = np.abs(n).astype(float)
    q = mp * mm
    z = 2.0 * np.sqrt(q)
    out = np.empty(n.shape)

    series = z < SERIES_LIMIT
    if series.any():
        k = absn[series]
        big = np.where(n[series] >= 0, mp[series], mm[series])
        with np.errstate(divide="ignore", invalid="ignore"):
            head = np.where(k == 0, 0.0, k * np.log(big))
        log_val = (
            -mp[series] - mm[series] + head - gammaln(k + 1.0)
            + np.log(ascending_bessel_sum(k, q[series]))
        )
        out[series] = np.exp(log_val)

    rec = ~series
    if rec.any():
        sp, sm = np.sqrt(mp[rec]), np.sqrt(mm[rec])
        log_val = (
            -((sp - sm) ** 2)
            + n[rec] * (np.log(sp) - np.log(sm))
            + log_bessel_i_scaled(absn[rec], z[rec])
        )
        out[rec] = np.exp(log_val)
    return out


def _kernel_means(beta1, beta2, theta):
    a3, a4, a5, a6 = detector_amplitudes(beta1, beta2, theta)
    return np.abs(a3) ** 2, np.abs(a4) ** 2, np.abs(a5) ** 2, np.abs(a6) ** 2


def kernel_k43(pair: CoherentPair, n43):
    """Probability of the count difference ``n4 - n3``.

    Equals ``exp(-(|b1|^2+|b2|^2)/2) |(b1+b2 e^{it})/(b1-b2 e^{it})|^n
    I_|n|(|b1^2 - b2^2 e^{2it}|/2)``, evaluated in scaled form.
    """
    m3, m4, _, _ = _kernel_means(pair.beta1, pair.beta2, pair.theta)
    return _scalar_or_array(skellam_pmf(n43, m4, m3))


def kernel_k65(pair: CoherentPair, n65):
    """Probability of the count difference ``n6 - n5`` (see ``kernel_k43``)."""
    _, _, m5, m6 = _kernel_means(pair.beta1, pair.beta2, pair.theta)
    return _scalar_or_array(skellam_pmf(n65, m6, m5))


def _scalar_or_array(values: np.ndarray):
    return float(values) if np.ndim(values) == 0 else values


def joint_probability_at(source: Source, n43, n65, theta) -> np.ndarray:
    """``W(n43, n65 | e^{i theta})`` with broadcasting over all three arguments.

    The ``theta`` stored on the pairs is ignored; ``theta`` here is the
    phase shift actually applied.
    """
    total = 0.0
    for weight, pair in as_ensemble(source):
        if weight == 0.0:
            continue
        m3, m4, m5, m6 = _kernel_means(pair.beta1, pair.beta2, theta)
        total = total + weight * skellam_pmf(n43, m4, m3) * skellam_pmf(n65, m6, m5)
    return np.asarray(total)


def joint_count_probability(source: Source, n43, n65):
    """Joint probability ``W(n43, n65 | e^{i theta})`` of the two count differences."""
    ens = as_ensemble(source)
    return _scalar_or_array(joint_probability_at(ens, n43, n65, ens.theta))


def truncation_bound(mean_photons: float) -> int:
    """Largest |count difference| kept in a table, ``ceil(mu + 10 sqrt(mu) + 10)``."""
    return int(math.ceil(mean_photons + 10.0 * math.sqrt(mean_photons) + 10.0))


@dataclass(frozen=True)
class JointCountTable:
    """``W(n43, n65 | e^{i theta})`` for ``|n43|, |n65| <= n_max``.

    ``probabilities[n43 + n_max, n65 + n_max]`` holds the entry.
    """

    theta: float
    n_max: int
    probabilities: np.ndarray = field(repr=False)
    tail_bound: float

    def __post_init__(self):
        shape = (2 * self.n_max + 1,) * 2
        if self.probabilities.shape != shape:
            raise ValueError("probability array does not match n_max")
        if np.any(self.probabilities < 0):
            raise ValueError("probabilities must be nonnegative")
        self.probabilities.setflags(write=False)

    def __getitem__(self, key: tuple[int, int]) -> float:
        n43, n65 = key
        if abs(n43) > self.n_max or abs(n65) > self.n_max:
            return 0.0
        return float(self.probabilities[n43 + self.n_max, n65 + self.n_max])

    @property
    def differences(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def total_mass(self) -> float:
        return float(self.probabilities.sum())

    def items(self) -> Iterator[tuple[tuple[int, int], float]]:
        d = self.differences
        for i, n43 in enumerate(d):
            for j, n65 in enumerate(d):
                yield (int(n43), int(n65)), float(self.probabilities[i, j])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(self.items())


def build_joint_table(source: Source, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> JointCountTable:
    """Tabulate ``W`` on the square ``|n43|, |n65| <= n_max``.

    ``n_max`` follows the Poisson tail of the total photon number (mean
    ``|b1|^2 + |b2|^2``, the largest over ensemble components); a count
    difference cannot exceed the total count, so the omitted mass
    ``1 - sum(entries)`` is certified by that tail.

    Raises
    ------
    TailBoundError
        If the omitted mass is not below ``tail_tolerance``.
    """
    if not 0 < tail_tolerance <= 1e-3:
        raise ValueError("tail_tolerance must lie in (0, 1e-3]")
    ens = as_ensemble(source)
    n_max = truncation_bound(ens.max_mean_photons)
    d = np.arange(-n_max, n_max + 1)
    table = np.zeros((d.size, d.size))
    for weight, pair in ens:
        m3, m4, m5, m6 = _kernel_means(pair.beta1, pair.beta2, pair.theta)
        table += weight * np.outer(skellam_pmf(d, m4, m3), skellam_pmf(d, m6, m5))
    mass = float(table.sum())
    tail = max(0.0, 1.0 - mass)
    if tail >= tail_tolerance:
        raise TailBoundError(f"count table misses {tail:.3e} of the probability (allowed {tail_tolerance:.1e})")
    if mass > 1.0 + 1e-12:
        raise TailBoundError(f"count table mass {mass:.15g} exceeds one")
    return JointCountTable(ens.theta, n_max, table, tail)
