"""Direct scheme: both fields beat against each other in one eight-port detector.

A measured pair of count differences ``(n43, n65)`` is read as the phase
angle of the lattice point; with a phase shift ``theta`` on port 2 the
point votes for ``angle - theta``.  Averaging over ``theta`` turns the comb
of lattice spikes into a smooth density,

    P(phi) ~ sum_{(n43, n65) != 0} W(n43, n65 | exp(i (angle - phi))),

and the ambiguous outcome ``(0, 0)`` is either discarded or spread evenly
over all angles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.stats import poisson

from .kernels import (
    DEFAULT_TAIL_TOLERANCE,
    CoherentEnsemble,
    CoherentPair,
    JointCountTable,
    Source,
    TailBoundError,
    as_ensemble,
    joint_probability_at,
    truncation_bound,
)
from .numerics import (
    TWO_PI,
    FringeSummary,
    PhaseDistribution,
    PhaseGrid,
    integrated_q_profile,
)

WEAK_FIELD_LIMIT = 0.3
# Lattice points x grid points evaluated per vectorized block.
_BLOCK = 1_500_000


class DataPolicy(enum.Enum):
    """What happens to the ambiguous ``n43 = n65 = 0`` events."""

    DISCARD_ORIGIN = "discard"
    UNIFORM_SPREAD = "spread"


class NormalizationPolicy(enum.Enum):
    """Order of theta-averaging and renormalization for discarded data."""

    AVERAGE_THEN_NORMALIZE = "average-then-normalize"
    NORMALIZE_THEN_AVERAGE = "normalize-then-average"


def count_angle(n43: int, n65: int) -> float:
    """Quadrant-correct angle of the lattice point ``(n43, n65)`` in ``[0, 2 pi)``."""
    if n43 == 0 and n65 == 0:
        raise ValueError("the origin (0, 0) has no phase angle")
    return math.atan2(n65, n43) % TWO_PI


def count_angles(n43, n65) -> np.ndarray:
    """Vectorized ``count_angle``; the origin maps to NaN."""
    n43 = np.asarray(n43)
    n65 = np.asarray(n65)
    angles = np.mod(np.arctan2(n65, n43), TWO_PI)
    return np.where((n43 == 0) & (n65 == 0), np.nan, angles)


@dataclass(frozen=True)
class SpikeDistribution:
    """Probability carried by each lattice ray, plus the ambiguous origin."""

    spikes: dict[float, float]
    origin_mass: float

    @property
    def total_mass(self) -> float:
        return sum(self.spikes.values()) + self.origin_mass


def spike_distribution(table: JointCountTable) -> SpikeDistribution:
    """Aggregate a count table over the rays through the lattice points."""
    spikes: dict[float, float] = {}
    for (n43, n65), p in table.items():
        if n43 == 0 and n65 == 0:
            continue
        g = math.gcd(n43, n65)
        key = count_angle(n43 // g, n65 // g)
        spikes[key] = spikes.get(key, 0.0) + p
    return SpikeDistribution(spikes, table[0, 0])


class RayModel(Protocol):
    """Count statistics as seen by the theta-averaging procedure.

    ``angles`` lists the phase angle of every non-origin lattice point that
    can carry probability.  ``ray_probabilities(phi)`` returns the array
    ``W(point | exp(i (angle - phi)))`` of shape ``(len(angles), len(phi))``.
    """

    angles: np.ndarray

    def ray_probabilities(self, phi: np.ndarray) -> np.ndarray: ...

    def origin_probability(self, theta: np.ndarray) -> np.ndarray: ...

    def origin_average(self) -> float: ...


class CoherentRays:
    """Ray model backed by the analytic Skellam kernels.

    The lattice is the diamond ``|n43| + |n65| <= n_max``: reaching outside
    it needs more than ``n_max`` photons in total, which is a Poisson tail
    independent of ``theta``.
    """

    def __init__(self, source: Source, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE):
        self.ensemble = as_ensemble(source)
        mu = self.ensemble.max_mean_photons
        n_max = truncation_bound(mu)
        self.tail_bound = float(poisson.sf(n_max, mu)) if mu > 0 else 0.0
        if self.tail_bound >= tail_tolerance:
            raise TailBoundError(f"lattice tail {self.tail_bound:.3e} exceeds {tail_tolerance:.1e}")
        d = np.arange(-n_max, n_max + 1)
        n43, n65 = np.meshgrid(d, d, indexing="ij")
        keep = (np.abs(n43) + np.abs(n65) <= n_max) & ((n43 != 0) | (n65 != 0))
        self.n43 = n43[keep]
        self.n65 = n65[keep]
        self.angles = count_angles(self.n43, self.n65)

    def ray_probabilities(self, phi):
        theta = self.angles[:, None] - np.asarray(phi)[None, :]
        return joint_probability_at(self.ensemble, self.n43[:, None], self.n65[:, None], theta)

    def origin_probability(self, theta):
        return joint_probability_at(self.ensemble, 0, 0, theta)

    def origin_average(self) -> float:
        return uniform_theta_average(self.origin_probability)


def uniform_theta_average(func, nodes: int = 64, tol: float = 1e-13, max_nodes: int = 1 << 14) -> float:
    """Mean of a smooth 2 pi-periodic function by the uniform rule.

    Starts from ``nodes`` points and doubles until the estimate moves by
    less than ``tol``.
    """
    def rule(n):
        return float(np.mean(func(np.arange(n) * (TWO_PI / n))))

    previous = rule(nodes)
    while nodes < max_nodes:
        nodes *= 2
        current = rule(nodes)
        if abs(current - previous) < tol:
            return current
        previous = current
    return previous


def average_rays(
    model: RayModel,
    policy: DataPolicy,
    norm: NormalizationPolicy,
    grid: PhaseGrid,
) -> PhaseDistribution:
    """Theta-averaged phase density of any ray model.

    Under ``UNIFORM_SPREAD`` every per-theta distribution already has unit
    mass, so the two normalization orders coincide.

    Raises
    ------
    NoUsableDataError
        If nothing is left to normalize (e.g. vacuum input with discarding).
    """
    phi = grid.phi
    lattice = np.zeros(grid.n_points)
    n_rays = max(len(model.angles), 1)
    step = max(1, _BLOCK // n_rays)
    renormalize = policy is DataPolicy.DISCARD_ORIGIN and norm is NormalizationPolicy.NORMALIZE_THEN_AVERAGE
    if len(model.angles):
        for start in range(0, grid.n_points, step):
            block = phi[start:start + step]
            w = model.ray_probabilities(block)
            if renormalize:
                kept = 1.0 - model.origin_probability(model.angles[:, None] - block[None, :])
                w = np.divide(w, kept, out=np.zeros_like(w), where=kept > 1e-300)
            lattice[start:start + step] = w.sum(axis=0)
    origin = model.origin_average() if policy is DataPolicy.UNIFORM_SPREAD else 0.0
    return PhaseDistribution.from_values(grid, (lattice + origin) / TWO_PI)


def averaged_distribution(
    source: Source,
    policy: DataPolicy = DataPolicy.DISCARD_ORIGIN,
    norm: NormalizationPolicy = NormalizationPolicy.AVERAGE_THEN_NORMALIZE,
    grid: PhaseGrid | None = None,
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE,
) -> PhaseDistribution:
    """Theta-averaged direct-scheme phase distribution of coherent input."""
    return average_rays(CoherentRays(source, tail_tolerance), policy, norm, grid or PhaseGrid())


def discarded_fraction(source: Source) -> float:
    """Theta-averaged probability of the ambiguous ``(0, 0)`` outcome."""
    return CoherentRays(source).origin_average()


def direct_strong_limit(source: Source, grid: PhaseGrid | None = None) -> PhaseDistribution:
    """Direct distribution when field 2 acts as a strong local oscillator.

    Only ``|beta1|`` and the phase difference enter; each ensemble component
    contributes the radially integrated Q profile peaked at ``phi2 - phi1``.
    """
    grid = grid or PhaseGrid()
    values = np.zeros(grid.n_points)
    for weight, pair in as_ensemble(source):
        values += weight * integrated_q_profile(grid.phi, abs(pair.beta1), pair.phase_difference)
    return PhaseDistribution.from_values(grid, values)


def direct_weak_limit(pair: CoherentPair, policy: DataPolicy = DataPolicy.DISCARD_ORIGIN) -> FringeSummary:
    """Leading-order fringe of the direct scheme for two weak coherent fields.

    Discarding the origin gives visibility ``2 / (r + 1/r)`` with
    ``r = |beta1| / |beta2|``, independent of intensity; keeping it gives
    ``2 |beta1| |beta2|``.  Either way the peak sits at ``phi2 - phi1``.
    """
    a, b = abs(pair.beta1), abs(pair.beta2)
    if a > WEAK_FIELD_LIMIT or b > WEAK_FIELD_LIMIT:
        raise ValueError(f"weak-field formula needs |beta| <= {WEAK_FIELD_LIMIT}")
    if policy is DataPolicy.DISCARD_ORIGIN:
        if a == 0 and b == 0:
            raise ValueError("both fields are vacuum; nothing survives discarding")
        amplitude = 0.0 if a == 0 or b == 0 else 2.0 / (a / b + b / a)
    else:
        amplitude = 2.0 * a * b
    peak = pair.phase_difference if amplitude > 0 else 0.0
    return FringeSummary(1.0 / TWO_PI, amplitude, peak)


__all__ = [
    "CoherentEnsemble",
    "CoherentPair",
    "CoherentRays",
    "DataPolicy",
    "NormalizationPolicy",
    "RayModel",
    "SpikeDistribution",
    "average_rays",
    "averaged_distribution",
    "count_angle",
    "count_angles",
    "direct_strong_limit",
    "direct_weak_limit",
    "discarded_fraction",
    "spike_distribution",
    "uniform_theta_average",
]
