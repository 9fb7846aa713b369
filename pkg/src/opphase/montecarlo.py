"""Monte Carlo photon counting for cross-checking the analytic modules.

Every detector mode leaves in a coherent state, so one shot is four
independent Poisson draws with means ``|a3|^2 .. |a6|^2``.

Random streams: shot block ``b`` of stream ``s`` (the theta-node index in a
sweep, 0 for a single setting) uses
``Generator(Philox(SeedSequence(seed, spawn_key=(s, b))))`` with blocks of
``BLOCK_SHOTS`` shots.  Results therefore depend only on ``seed`` and never
on how the work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2

from .direct import DataPolicy, count_angles
from .kernels import CoherentPair, JointCountTable, output_amplitudes
from .numerics import NoUsableDataError, PhaseDistribution, PhaseGrid

BLOCK_SHOTS = 1 << 18
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class ShotRecord:
    """Raw counts ``(n3, n4, n5, n6)`` of one shot at phase shift ``theta``."""

    counts: tuple[int, int, int, int]
    theta: float

    def __post_init__(self):
        if len(self.counts) != 4 or any(c < 0 for c in self.counts):
            raise ValueError("counts must be four nonnegative integers")

    @property
    def differences(self) -> tuple[int, int]:
        n3, n4, n5, n6 = self.counts
        return n4 - n3, n6 - n5


@dataclass(frozen=True)
class EmpiricalTable:
    """Observed frequencies of ``(n43, n65)``."""

    entries: dict[tuple[int, int], int]
    shots: int
    seed: int
    theta: float = 0.0

    def __post_init__(self):
        if sum(self.entries.values()) != self.shots:
            raise ValueError("table counts do not add up to the number of shots")

    @property
    def origin_count(self) -> int:
        return self.entries.get((0, 0), 0)

    def frequency(self, n43: int, n65: int) -> float:
        return self.entries.get((n43, n65), 0) / self.shots


def _generator(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def _check_run(shots: int, seed: int) -> None:
    if isinstance(shots, bool) or not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ValueError("shots must be a positive integer")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a nonnegative integer")


def _draw_blocks(pair: CoherentPair, shots: int, seed: int, stream: int):
    means = np.array(output_amplitudes(pair).means)
    for block, start in enumerate(range(0, shots, BLOCK_SHOTS)):
        n = min(BLOCK_SHOTS, shots - start)
        yield _generator(seed, stream, block).poisson(means, size=(n, 4))


def _difference_counts(pair: CoherentPair, shots: int, seed: int, stream: int):
    keys, counts = [], []
    for draws in _draw_blocks(pair, shots, seed, stream):
        diffs = np.stack([draws[:, 1] - draws[:, 0], draws[:, 3] - draws[:, 2]], axis=1)
        k, c = np.unique(diffs, axis=0, return_counts=True)
        keys.append(k)
        counts.append(c)
    k, inverse = np.unique(np.concatenate(keys), axis=0, return_inverse=True)
    c = np.zeros(len(k), dtype=np.int64)
    np.add.at(c, inverse.ravel(), np.concatenate(counts))
    return k, c


def draw_shots(pair: CoherentPair, shots: int, seed: int) -> list[ShotRecord]:
    """Individual shot records; same stream as ``sample_counts``."""
    _check_run(shots, seed)
    out = []
    for draws in _draw_blocks(pair, shots, seed, 0):
        out.extend(ShotRecord(tuple(int(x) for x in row), pair.theta) for row in draws)
    return out


def sample_counts(pair: CoherentPair, shots: int, seed: int) -> EmpiricalTable:
    """Sample ``shots`` outcomes at the pair's ``theta`` and tabulate the count differences."""
    _check_run(shots, seed)
    keys, counts = _difference_counts(pair, shots, seed, 0)
    entries = {(int(a), int(b)): int(c) for (a, b), c in zip(keys, counts)}
    return EmpiricalTable(entries, int(shots), int(seed), pair.theta)


@dataclass(frozen=True)
class EmpiricalPhaseResult:
    distribution: PhaseDistribution
    counts: np.ndarray
    discarded_fraction: float
    shots: int


def empirical_phase_distribution(
    pair: CoherentPair,
    policy: DataPolicy = DataPolicy.DISCARD_ORIGIN,
    shots_per_theta: int = 10_000,
    seed: int = 0,
    grid: PhaseGrid | None = None,
) -> EmpiricalPhaseResult:
    """Histogram estimate of the theta-averaged direct phase distribution.

    The phase shift is swept over the grid nodes; every non-origin outcome
    votes for ``angle(n43, n65) - theta`` rounded to the nearest node.
    Origin outcomes are dropped or spread evenly over all bins.  Counts
    from all settings are pooled before normalizing.

    Raises
    ------
    NoUsableDataError
        If every shot landed on the origin under ``DISCARD_ORIGIN``.
    """
    grid = grid or PhaseGrid()
    _check_run(shots_per_theta, seed)
    hist = np.zeros(grid.n_points)
    origin = 0
    for j, theta in enumerate(grid.phi):
        keys, counts = _difference_counts(pair.with_theta(theta), shots_per_theta, seed, j)
        at_origin = (keys[:, 0] == 0) & (keys[:, 1] == 0)
        origin += int(counts[at_origin].sum())
        angles = count_angles(keys[~at_origin, 0], keys[~at_origin, 1]) - theta
        np.add.at(hist, grid.nearest_index(angles), counts[~at_origin])
    total = shots_per_theta * grid.n_points
    if policy is DataPolicy.UNIFORM_SPREAD:
        hist = hist + origin / grid.n_points
    elif hist.sum() == 0:
        raise NoUsableDataError("no non-origin events were recorded")
    dist = PhaseDistribution.from_values(grid, hist / (hist.sum() * grid.step))
    return EmpiricalPhaseResult(dist, hist, origin / total, total)


class ChiSquareResult(NamedTuple):
    statistic: float
    dof: int
    p_value: float


def pooled_chi_square(observed, expected) -> ChiSquareResult:
    """Pearson test after pooling cells in ascending order of expected count.

    Cells are merged until every pool expects at least ``MIN_EXPECTED``
    events; a short remainder joins the last full pool.
    """
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if observed.shape != expected.shape or observed.sum() == 0:
        raise ValueError("need matching, nonempty observed and expected counts")
    order = np.argsort(expected, kind="stable")
    pools_o, pools_e = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += observed[i]
        acc_e += expected[i]
        if acc_e >= MIN_EXPECTED:
            pools_o.append(acc_o)
            pools_e.append(acc_e)
            acc_o = acc_e = 0.0
    if pools_e:
        pools_o[-1] += acc_o
        pools_e[-1] += acc_e
    else:
        pools_o, pools_e = [acc_o], [acc_e]
    o, e = np.array(pools_o), np.array(pools_e)
    if np.any((e == 0) & (o > 0)):
        return ChiSquareResult(math.inf, len(e) - 1, 0.0)
    statistic = float(np.sum((o - e) ** 2 / e))
    dof = len(e) - 1
    p_value = float(chi2.sf(statistic, dof)) if dof > 0 else 1.0
    return ChiSquareResult(statistic, dof, p_value)


def chi_square_compare(empirical: EmpiricalTable, analytic: JointCountTable) -> ChiSquareResult:
    """Goodness of fit of sampled count differences to an analytic table.

    Events outside the analytic table form one extra cell whose expected
    mass is the table's missing probability.
    """
    if empirical.shots == 0 or not empirical.entries:
        raise ValueError("empirical table is empty")
    keys = list(analytic.as_dict())
    expected = [empirical.shots * analytic[k] for k in keys]
    observed = [empirical.entries.get(k, 0) for k in keys]
    inside = set(keys)
    outside = sum(c for k, c in empirical.entries.items() if k not in inside)
    expected.append(empirical.shots * max(0.0, 1.0 - analytic.total_mass))
    observed.append(outside)
    return pooled_chi_square(observed, expected)


def compare_histogram(result: EmpiricalPhaseResult, analytic: PhaseDistribution) -> ChiSquareResult:
    """Pearson test of a phase histogram against a density on the same grid.

    Bin probabilities are taken as ``density * step``, renormalized.
    """
    if result.distribution.grid != analytic.grid:
        raise ValueError("histogram and density live on different grids")
    probs = analytic.density / analytic.density.sum()
    return pooled_chi_square(result.counts, probs * result.counts.sum())
