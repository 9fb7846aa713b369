"""Truncated two-mode Fock-space model of the eight-port detector.

Input modes are ordered ``(1, 10, 2, 20)`` and output (detector) modes
``(3, 4, 5, 6)``.  Each creation operator of an input mode maps onto a
linear combination of output creation operators, so a number state
``|n, m>`` in modes 1 and 2 expands into a polynomial in the output
creation operators.  Total photon number is conserved, which makes the
truncation at ``cutoff`` photons per input mode exact on the output side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .direct import DataPolicy, NormalizationPolicy, average_rays, count_angles
from .numerics import TWO_PI, PhaseDistribution, PhaseGrid

MAX_CUTOFF = 8
MAX_TM_CUTOFF = 6


@dataclass(frozen=True)
class TwoModeFockState:
    """Pure state ``sum c[n, m] |n>_1 |m>_2`` with ``n, m <= cutoff``."""

    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] == 0:
            raise ValueError("coefficients must form a square (cutoff+1)x(cutoff+1) array")
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm^2 is {norm:.15g}, not 1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_coefficients(cls, coeffs) -> "TwoModeFockState":
        """Build a state from unnormalized coefficients."""
        c = np.asarray(coeffs, dtype=complex)
        norm = math.sqrt(float(np.sum(np.abs(c) ** 2)))
        if norm == 0:
            raise ValueError("zero vector is not a state")
        return cls(c / norm)

    @classmethod
    def number_state(cls, n: int, m: int, cutoff: int | None = None) -> "TwoModeFockState":
        cutoff = max(n, m) if cutoff is None else cutoff
        c = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        c[n, m] = 1.0
        return cls(c)

    @classmethod
    def coherent_product(cls, beta1: complex, beta2: complex, cutoff: int) -> "TwoModeFockState":
        """``|beta1> x |beta2>`` truncated at ``cutoff`` photons per mode and renormalized."""
        n = np.arange(cutoff + 1)
        log_fact = np.array([math.lgamma(k + 1) for k in n])

        def amplitudes(beta):
            beta = complex(beta)
            if beta == 0:
                return (n == 0).astype(complex)
            return np.exp(-abs(beta) ** 2 / 2 + n * np.log(abs(beta)) - 0.5 * log_fact) * np.exp(
                1j * n * np.angle(beta)
            )

        return cls.from_coefficients(np.outer(amplitudes(beta1), amplitudes(beta2)))

    @classmethod
    def random(cls, cutoff: int, rng: np.random.Generator) -> "TwoModeFockState":
        """Haar-like random state (complex Gaussian coefficients)."""
        shape = (cutoff + 1, cutoff + 1)
        return cls.from_coefficients(rng.normal(size=shape) + 1j * rng.normal(size=shape))

    @property
    def cutoff(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def vacuum_amplitude(self) -> complex:
        return complex(self.coeffs[0, 0])

    def total_number_sectors(self) -> set[int]:
        n, m = np.nonzero(np.abs(self.coeffs) > 0)
        return set((n + m).tolist())


@dataclass(frozen=True)
class NetworkUnitary:
    """Mode map of the whole apparatus; column j is the image of input mode j."""

    matrix: np.ndarray = field(repr=False)
    theta: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError("network matrix must be 4x4")
        if not np.allclose(m @ m.conj().T, np.eye(4), atol=1e-12, rtol=0):
            raise ValueError("network matrix is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def _signal_columns(theta: float) -> tuple[np.ndarray, np.ndarray]:
    col1 = np.array([0.5, 0.5, -0.5j, -0.5j])
    col2 = np.exp(1j * theta) * np.array([-0.5, 0.5, 0.5, -0.5])
    return col1, col2


def build_network_unitary(theta: float = 0.0, completion: np.ndarray | None = None) -> NetworkUnitary:
    """Unitary of the eight-port detector with phase ``theta`` on port 2.

    The columns for ports 1 and 2 are fixed by the beam splitters and the
    quarter-wave plate.  The vacuum ports 10 and 20 get a Gram-Schmidt
    completion seeded with the output basis vectors; an optional 2x2
    unitary ``completion`` remixes those two columns.  Detector statistics
    do not depend on that choice while ports 10 and 20 carry vacuum.
    """
    col1, col2 = _signal_columns(theta)
    basis = [col1, col2]
    for seed in np.eye(4, dtype=complex):
        v = seed - sum(np.vdot(b, seed) * b for b in basis)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
        if len(basis) == 4:
            break
    extra = np.column_stack(basis[2:])
    if completion is not None:
        extra = extra @ np.asarray(completion, dtype=complex)
    matrix = np.column_stack([col1, extra[:, 0], col2, extra[:, 1]])
    return NetworkUnitary(matrix, float(theta))


@dataclass(frozen=True)
class _Expansion:
    """Output amplitudes of every input number state ``|n, m>``, grouped by total."""

    outcomes: dict[int, np.ndarray]  # total -> (K, 4) detector counts
    amplitudes: dict[int, np.ndarray]  # total -> (total + 1, K), row m <-> |total - m, m>


def _compositions(total: int) -> list[tuple[int, int, int, int]]:
    return [
        (a, b, c, total - a - b - c)
        for a in range(total + 1)
        for b in range(total + 1 - a)
        for c in range(total + 1 - a - b)
    ]


def _expand(matrix: np.ndarray, cutoff: int) -> _Expansion:
    # Repeatedly multiply by the image of a_1^dagger / a_2^dagger; a monomial
    # prod_k (b_k^dagger)^{n_k} contributes sqrt(prod n_k!) to |n3 n4 n5 n6>.
    lin1, lin2 = matrix[:, 0], matrix[:, 2]

    def times(poly, lin):
        out: dict[tuple, complex] = {}
        for key, coef in poly.items():
            for k in range(4):
                if lin[k] == 0:
                    continue
                new = key[:k] + (key[k] + 1,) + key[k + 1:]
                out[new] = out.get(new, 0.0) + coef * lin[k]
        return out

    polys: dict[tuple[int, int], dict] = {(0, 0): {(0, 0, 0, 0): 1.0 + 0j}}
    for n in range(cutoff + 1):
        if n > 0:
            polys[n, 0] = times(polys[n - 1, 0], lin1)
        for m in range(1, cutoff + 1):
            polys[n, m] = times(polys[n, m - 1], lin2)

    outcomes, amplitudes = {}, {}
    for total in range(2 * cutoff + 1):
        keys = _compositions(total)
        index = {k: i for i, k in enumerate(keys)}
        norms = np.array([math.sqrt(math.prod(math.factorial(x) for x in k)) for k in keys])
        amp = np.zeros((total + 1, len(keys)), dtype=complex)
        for m in range(total + 1):
            n = total - m
            if n > cutoff or m > cutoff:
                continue
            scale = 1.0 / math.sqrt(math.factorial(n) * math.factorial(m))
            for key, coef in polys[n, m].items():
                amp[m, index[key]] = coef * scale
        outcomes[total] = np.array(keys, dtype=int).reshape(-1, 4)
        amplitudes[total] = amp * norms[None, :]
    return _Expansion(outcomes, amplitudes)


def _sector_coefficients(state: TwoModeFockState, total: int) -> np.ndarray:
    c = np.zeros(total + 1, dtype=complex)
    for m in range(total + 1):
        n = total - m
        if n <= state.cutoff and m <= state.cutoff:
            c[m] = state.coeffs[n, m]
    return c


@dataclass(frozen=True)
class DetectorProbabilities:
    """``p(n3, n4, n5, n6 | theta)`` over all outcomes reachable from the input."""

    theta: float
    table: dict[tuple[int, int, int, int], float]

    @property
    def total(self) -> float:
        return sum(self.table.values())

    def count_differences(self) -> dict[tuple[int, int], float]:
        """Marginal ``W(n43, n65 | theta)`` obtained by summing at fixed differences."""
        out: dict[tuple[int, int], float] = {}
        for (n3, n4, n5, n6), p in self.table.items():
            key = (n4 - n3, n6 - n5)
            out[key] = out.get(key, 0.0) + p
        return out


def detector_probabilities(
    state: TwoModeFockState, theta: float = 0.0, completion: np.ndarray | None = None
) -> DetectorProbabilities:
    """Photon-count probabilities at the four detectors for input ``state``.

    Raises
    ------
    ValueError
        If the cutoff exceeds ``MAX_CUTOFF``.
    """
    if state.cutoff > MAX_CUTOFF:
        raise ValueError(f"cutoff {state.cutoff} exceeds the supported {MAX_CUTOFF}")
    expansion = _expand(build_network_unitary(theta, completion).matrix, state.cutoff)
    table = {}
    for total, outs in expansion.outcomes.items():
        c = _sector_coefficients(state, total)
        probs = np.abs(c @ expansion.amplitudes[total]) ** 2
        for key, p in zip(map(tuple, outs.tolist()), probs):
            table[key] = float(p)
    return DetectorProbabilities(float(theta), table)


class FockRays:
    """Ray model of a Fock input for the theta-averaging in ``direct``.

    The phase shift only multiplies the ``|n, m>`` component by
    ``exp(i m theta)``, so the network is expanded once at ``theta = 0``
    and every outcome amplitude becomes a trigonometric polynomial
    ``sum_m B[o, m] exp(i m theta)`` of degree ``cutoff``.
    """

    def __init__(self, state: TwoModeFockState):
        self.state = state
        n = state.cutoff
        expansion = _expand(build_network_unitary(0.0).matrix, n)
        outs, rows = [], []
        for total, o in expansion.outcomes.items():
            coef = _sector_coefficients(state, total)
            b = np.zeros((o.shape[0], n + 1), dtype=complex)
            # B[o, m] = c[total - m, m] * A_total[m, o]
            width = min(total, n) + 1
            b[:, :width] = (coef[:width, None] * expansion.amplitudes[total][:width]).T
            outs.append(o)
            rows.append(b)
        outcomes = np.concatenate(outs)
        coeff = np.concatenate(rows)
        alive = np.any(np.abs(coeff) > 0, axis=1)
        outcomes, coeff = outcomes[alive], coeff[alive]
        n43 = outcomes[:, 1] - outcomes[:, 0]
        n65 = outcomes[:, 3] - outcomes[:, 2]
        origin = (n43 == 0) & (n65 == 0)
        self._orders = np.arange(n + 1)
        self._origin_coeff = coeff[origin]
        keys, inverse = np.unique(np.stack([n43[~origin], n65[~origin]], axis=1), axis=0, return_inverse=True)
        self.n43, self.n65 = keys[:, 0], keys[:, 1]
        self.angles = count_angles(self.n43, self.n65)
        self._ray_of_outcome = inverse.ravel()
        # fold exp(i m angle) into the coefficients of every outcome
        self._ray_coeff = coeff[~origin] * np.exp(
            1j * self._orders[None, :] * self.angles[self._ray_of_outcome][:, None]
        )

    def ray_probabilities(self, phi):
        phi = np.asarray(phi)
        amps = self._ray_coeff @ np.exp(-1j * self._orders[:, None] * phi[None, :])
        out = np.zeros((len(self.angles), len(phi)))
        np.add.at(out, self._ray_of_outcome, np.abs(amps) ** 2)
        return out

    def origin_probability(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not len(self._origin_coeff):
            return np.zeros(theta.shape)
        phases = np.exp(1j * self._orders[:, None] * theta.ravel()[None, :])
        probs = np.sum(np.abs(self._origin_coeff @ phases) ** 2, axis=0)
        return probs.reshape(theta.shape)

    def origin_average(self) -> float:
        # exact: the probability is a trigonometric polynomial of degree cutoff
        nodes = 4 * (self.state.cutoff + 1)
        return float(np.mean(self.origin_probability(np.arange(nodes) * (TWO_PI / nodes))))

    def count_differences(self, theta: float) -> dict[tuple[int, int], float]:
        """``W(n43, n65 | theta)`` including the origin."""
        phases = np.exp(1j * self._orders * theta)
        raw = self._ray_coeff * np.exp(-1j * self._orders[None, :] * self.angles[self._ray_of_outcome][:, None])
        probs = np.abs(raw @ phases) ** 2
        out = np.zeros(len(self.angles))
        np.add.at(out, self._ray_of_outcome, probs)
        table = {(int(a), int(b)): float(p) for a, b, p in zip(self.n43, self.n65, out)}
        table[0, 0] = float(self.origin_probability(np.array(theta)))
        return table


def tm_phase_distribution(
    state: TwoModeFockState,
    policy: DataPolicy = DataPolicy.DISCARD_ORIGIN,
    norm: NormalizationPolicy = NormalizationPolicy.AVERAGE_THEN_NORMALIZE,
    grid: PhaseGrid | None = None,
) -> PhaseDistribution:
    """Theta-averaged direct-scheme phase distribution of an arbitrary pure state."""
    if state.cutoff > MAX_TM_CUTOFF:
        raise ValueError(f"cutoff {state.cutoff} exceeds the supported {MAX_TM_CUTOFF}")
    return average_rays(FockRays(state), policy, norm, grid or PhaseGrid())


def vacuum_deplete(state: TwoModeFockState) -> TwoModeFockState:
    """Drop the ``|0, 0>`` component and renormalize."""
    c = np.array(state.coeffs)
    c[0, 0] = 0.0
    if np.sqrt(np.sum(np.abs(c) ** 2)) < 1e-12:
        raise ValueError("pure vacuum cannot be depleted")
    return TwoModeFockState.from_coefficients(c)


def rotation_overlap(state: TwoModeFockState, phi0: float) -> float:
    """``|<psi| exp(i phi0 (n1 - n2) / 2) |psi>|``."""
    n, m = np.indices(state.coeffs.shape)
    return float(abs(np.sum(np.abs(state.coeffs) ** 2 * np.exp(0.5j * phi0 * (n - m)))))


def london_relative_phase(state: TwoModeFockState, grid: PhaseGrid | None = None) -> PhaseDistribution:
    """London (canonical) distribution of the phase of mode 2 relative to mode 1.

    The joint density ``(2 pi)^-2 |sum c[n, m] exp(-i n phi1 - i m phi2)|^2``
    is marginalized onto ``phi = phi2 - phi1``; only coefficients with equal
    total photon number interfere.
    """
    grid = grid or PhaseGrid()
    n = state.cutoff
    phases = np.exp(-1j * np.arange(n + 1)[:, None] * grid.phi[None, :])
    values = np.zeros(grid.n_points)
    for total in range(2 * n + 1):
        lo, hi = max(0, total - n), min(total, n) + 1
        values += np.abs(_sector_coefficients(state, total)[lo:hi] @ phases[lo:hi]) ** 2
    return PhaseDistribution.from_values(grid, values / TWO_PI)


def psi_prime(beta1: complex, beta2: complex) -> TwoModeFockState:
    """``(beta1 |1,0> + beta2 |0,1>) / sqrt(|beta1|^2 + |beta2|^2)``."""
    c = np.zeros((2, 2), dtype=complex)
    c[1, 0], c[0, 1] = beta1, beta2
    return TwoModeFockState.from_coefficients(c)


def weak_coherent_state(beta1: complex, beta2: complex) -> TwoModeFockState:
    """Coherent product kept to first order: ``|0,0> + beta1 |1,0> + beta2 |0,1>``, normalized."""
    c = np.zeros((2, 2), dtype=complex)
    c[0, 0], c[1, 0], c[0, 1] = 1.0, beta1, beta2
    return TwoModeFockState.from_coefficients(c)
