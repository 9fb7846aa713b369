"""Special functions, periodic phase grids and radial quadrature.

Everything in here is a pure function of its inputs.  The modified Bessel
function is only ever exposed in exponentially scaled form, ``exp(-z) I_n(z)``,
because the count kernels multiply it by ``exp(-|beta|^2/2)``-sized factors
that overflow separately for strong fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc, erfcx, gammaln

TWO_PI = 2.0 * math.pi

# Argument at which the ascending series hands over to the recurrence.
SERIES_LIMIT = 15.0
# Below this (and above ``order**2``) the Hankel expansion is used.
ASYMPTOTIC_LIMIT = 30.0

_RESCALE = 1e200
_LOG_RESCALE = math.log(_RESCALE)


class QuadratureError(RuntimeError):
    """Adaptive quadrature exhausted its panel budget."""


class NoUsableDataError(ValueError):
    """A distribution has (numerically) zero mass before normalization."""


# ---------------------------------------------------------------------------
# Modified Bessel functions of integer order
# ---------------------------------------------------------------------------

def ascending_bessel_sum(order, q, rtol: float = 1e-17) -> np.ndarray:
    """Sum ``sum_k q**k / (k! (order+1)_k)``.

    This is ``I_order(z) * order! / (z/2)**order`` with ``q = z**2/4``.  All
    terms are positive, so there is no cancellation.
    """
    order = np.asarray(order, dtype=float)
    q = np.asarray(q, dtype=float)
    order, q = np.broadcast_arrays(order, q)
    term = np.ones(order.shape)
    total = np.ones(order.shape)
    k = 0
    while True:
        k += 1
        term = term * q / (k * (order + k))
        total = total + term
        if not np.any(term > rtol * total):
            return total
        if k > 10_000:  # pragma: no cover - unreachable for q < 1e6
            raise RuntimeError("ascending Bessel series did not converge")


def _series_log_ive(nu: np.ndarray, z: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.where(nu == 0, 0.0, nu * np.log(z / 2.0))
    return -z + head - gammaln(nu + 1.0) + np.log(ascending_bessel_sum(nu, z * z / 4.0))


def _asymptotic_log_ive(nu: np.ndarray, z: np.ndarray) -> np.ndarray:
    # Hankel expansion; terms shrink monotonically for z >= 30 + nu**2 until
    # far beyond double precision, so truncation is by magnitude only.
    mu = 4.0 * nu * nu
    term = np.ones(z.shape)
    total = np.ones(z.shape)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 80):
        new = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        grew = np.abs(new) > np.abs(term)
        active &= ~grew
        total = np.where(active, total + new, total)
        term = new
        active &= np.abs(term) > 1e-17 * np.abs(total)
        if not active.any():
            break
    return -0.5 * np.log(TWO_PI * z) + np.log(total)


def _miller_log_ive(nu: np.ndarray, z: np.ndarray) -> np.ndarray:
    # Downward recurrence normalized by I_0 + 2 sum_k I_k = exp(z).
    start = int(np.max(nu + np.ceil(np.sqrt(100.0 * z)))) + 60
    f_up = np.zeros(z.shape)
    f = np.ones(z.shape)
    total = 2.0 * f
    log_scale = np.zeros(z.shape)
    log_f_nu = np.full(z.shape, -np.inf)
    for k in range(start, 0, -1):
        f_down = (2.0 * k / z) * f + f_up
        f_up, f = f, f_down
        if k - 1 > 0:
            total = total + 2.0 * f
        else:
            total = total + f
        hit = nu == k - 1
        if hit.any():
            log_f_nu = np.where(hit, np.log(f) + log_scale, log_f_nu)
        big = f > _RESCALE
        if big.any():
            f = np.where(big, f / _RESCALE, f)
            f_up = np.where(big, f_up / _RESCALE, f_up)
            total = np.where(big, total / _RESCALE, total)
            log_scale = log_scale + np.where(big, _LOG_RESCALE, 0.0)
    return log_f_nu - (np.log(total) + log_scale)


def log_bessel_i_scaled(order, argument) -> np.ndarray:
    """Natural log of ``exp(-z) I_order(z)``, elementwise, for arrays.

    ``-inf`` is returned where the function vanishes (``z = 0`` with
    ``order > 0``) or where ``z`` is infinite.
    """
    nu, z = np.broadcast_arrays(np.asarray(order), np.asarray(argument, dtype=float))
    _check_bessel_args(nu, z)
    nu = nu.astype(float)
    out = np.full(z.shape, -np.inf)
    finite = np.isfinite(z)
    series = finite & (z < SERIES_LIMIT)
    asym = finite & ~series & (z >= ASYMPTOTIC_LIMIT + nu * nu)
    miller = finite & ~series & ~asym
    if series.any():
        out[series] = _series_log_ive(nu[series], z[series])
    if asym.any():
        out[asym] = _asymptotic_log_ive(nu[asym], z[asym])
    if miller.any():
        out[miller] = _miller_log_ive(nu[miller], z[miller])
    return out


def bessel_i_scaled(order, argument):
    """Exponentially scaled modified Bessel function ``exp(-z) I_n(z)``.

    Parameters
    ----------
    order : int or array of int
        Nonnegative integer order ``n``.
    argument : float or array
        Nonnegative argument ``z``.

    Returns
    -------
    float or ndarray
        Same shape as the broadcast inputs.  Relative accuracy is about
        1e-13 for ``z <= 1e4`` and ``n <= 200``; values below the smallest
        normal double underflow to zero.

    Notes
    -----
    Three regimes: the ascending power series for ``z < 15``, Hankel's
    asymptotic expansion once ``z >= 30 + n**2``, and Miller's downward
    recurrence (normalized with ``I_0 + 2 sum I_k = exp(z)``) in between.
    """
    values = np.exp(log_bessel_i_scaled(order, argument))
    if values.ndim == 0:
        return float(values)
    return values


def _check_bessel_args(nu: np.ndarray, z: np.ndarray) -> None:
    if nu.size and (np.any(nu < 0) or np.any(np.asarray(nu) != np.round(nu))):
        raise ValueError("Bessel order must be a nonnegative integer")
    if z.size and (np.any(np.isnan(z)) or np.any(z < 0)):
        raise ValueError("Bessel argument must be nonnegative")


# ---------------------------------------------------------------------------
# Periodic phase grids and distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseGrid:
    """Uniform periodic grid ``phi_k = 2 pi k / n_points`` on ``[0, 2 pi)``."""

    n_points: int = 256

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8 or self.n_points % 2:
            raise ValueError(f"grid needs an even number of points >= 8, got {self.n_points}")

    @property
    def step(self) -> float:
        return TWO_PI / self.n_points

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_points) * self.step

    def nearest_index(self, angle):
        """Index of the grid node closest to ``angle`` (mod 2 pi)."""
        k = np.rint(np.mod(angle, TWO_PI) / self.step).astype(int)
        return np.mod(k, self.n_points)


@dataclass(frozen=True)
class PhaseDistribution:
    """Nonnegative probability density (per radian) sampled on a PhaseGrid."""

    grid: PhaseGrid
    density: np.ndarray = field(repr=False)

    def __post_init__(self):
        density = np.asarray(self.density, dtype=float)
        if density.shape != (self.grid.n_points,):
            raise ValueError("density does not match the grid")
        if np.any(~np.isfinite(density)) or np.any(density < 0):
            raise ValueError("density must be finite and nonnegative")
        density.setflags(write=False)
        object.__setattr__(self, "density", density)

    @classmethod
    def uniform(cls, grid: PhaseGrid) -> "PhaseDistribution":
        return cls(grid, np.full(grid.n_points, 1.0 / TWO_PI))

    @classmethod
    def from_values(cls, grid: PhaseGrid, values) -> "PhaseDistribution":
        """Normalize raw nonnegative samples by their periodic rectangle integral.

        Round-off negatives no larger than 1e-14 of the maximum are clipped.
        """
        values = np.asarray(values, dtype=float)
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        if np.any(values < -1e-14 * scale):
            raise ValueError("distribution has significantly negative values")
        values = np.clip(values, 0.0, None)
        mass = float(np.sum(values)) * grid.step
        if not mass > 1e-12:
            raise NoUsableDataError(f"distribution mass {mass:.3e} is too small to normalize")
        return cls(grid, values / mass)

    @property
    def phi(self) -> np.ndarray:
        return self.grid.phi

    def integral(self) -> float:
        return float(np.sum(self.density)) * self.grid.step

    def argmax_phase(self) -> float:
        return float(self.grid.phi[int(np.argmax(self.density))])

    def shifted(self, steps: int) -> "PhaseDistribution":
        """Distribution translated by ``steps`` grid nodes towards larger phase."""
        return PhaseDistribution(self.grid, np.roll(self.density, steps))


@dataclass(frozen=True)
class FringeSummary:
    """First-harmonic content of a density ``(1/2pi)(1 + V cos(phi - peak))``."""

    mean_offset: float
    amplitude: float
    peak_phase: float


def fringe_fit(dist: PhaseDistribution) -> FringeSummary:
    """Extract the constant and first circular Fourier components of ``dist``."""
    phi = dist.phi
    w = dist.grid.step
    a0 = float(np.sum(dist.density)) * w / TWO_PI
    a1 = float(np.sum(dist.density * np.cos(phi))) * w
    b1 = float(np.sum(dist.density * np.sin(phi))) * w
    amplitude = 2.0 * math.hypot(a1, b1)
    if amplitude < 1e-14:
        return FringeSummary(a0, 0.0, 0.0)
    peak = math.atan2(b1, a1) % TWO_PI
    if peak >= TWO_PI:  # -0.0 and tiny negatives wrap onto 2 pi
        peak = 0.0
    return FringeSummary(a0, amplitude, peak)


def fringe_density(grid: PhaseGrid, amplitude: float, peak_phase: float) -> PhaseDistribution:
    """Pure first-harmonic density with the given visibility and peak."""
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("fringe amplitude must lie in [0, 1]")
    values = (1.0 + amplitude * np.cos(grid.phi - peak_phase)) / TWO_PI
    return PhaseDistribution(grid, np.clip(values, 0.0, None))


def distribution_distances(p: PhaseDistribution, q: PhaseDistribution) -> tuple[float, float]:
    """L1 (grid integral of |p - q|) and L-infinity distances between densities."""
    if p.grid != q.grid:
        raise ValueError("distributions live on different grids")
    diff = np.abs(p.density - q.density)
    return float(np.sum(diff)) * p.grid.step, float(np.max(diff))


def circular_angle_distance(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


# ---------------------------------------------------------------------------
# Radial quadrature
# ---------------------------------------------------------------------------

def _panel_rule(radius: float, panels: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, radius, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return r, weights


def truncation_radius(centers: Sequence[float], tolerance: float) -> float:
    """Radius beyond which a unit-width Gaussian tail is below ``tolerance / 10``."""
    c = max(0.0, *[float(abs(x)) for x in centers])
    width = 8.0
    # tail of r exp(-(r-c)^2) beyond c + t is below (c + t) exp(-t^2) / (2t)
    while (c + width) * math.exp(-width * width) / (2 * width) >= tolerance / 10.0:
        width += 1.0
    return c + width


def radial_gauss_quadrature(
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    tolerance: float = 1e-9,
    centers: Sequence[float] = (0.0, 0.0),
    nodes_per_panel: int = 16,
    initial_panels: int = 4,
    max_panels: int = 512,
):
    """Integrate ``r1 r2 f(r1, r2)`` over the positive quadrant.

    ``f`` is called with ``r1`` of shape ``(n, 1)`` and ``r2`` of shape
    ``(1, n)`` and may return extra leading batch axes; the result then has
    that batch shape.  The quadrant is cut at ``max(centers) + 8`` (further
    if the tolerance demands it) and covered by a tensor product of
    Gauss-Legendre panels, doubled until two successive estimates agree to
    ``tolerance`` in every batch entry.

    Raises
    ------
    QuadratureError
        If more than ``max_panels`` panels per axis would be needed.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    radius = truncation_radius(centers, tolerance)

    def estimate(panels):
        r, w = _panel_rule(radius, panels, nodes_per_panel)
        rw = r * w
        values = np.asarray(integrand(r[:, None], r[None, :]))
        return np.einsum("...ij,i,j->...", values, rw, rw)

    panels = initial_panels
    previous = estimate(panels)
    while True:
        panels *= 2
        if panels > max_panels:
            raise QuadratureError(
                f"radial quadrature did not reach tolerance {tolerance:g} "
                f"with {max_panels} panels per axis"
            )
        current = estimate(panels)
        if np.max(np.abs(current - previous)) <= tolerance:
            return float(current) if np.ndim(current) == 0 else current
        previous = current


# ---------------------------------------------------------------------------
# Radially integrated Q-function of a coherent state
# ---------------------------------------------------------------------------

def integrated_q_profile(phi, amplitude: float, peak: float) -> np.ndarray:
    """Phase density ``(1/pi) int_0^inf r exp(-|r e^{i phi} - a e^{i peak}|^2) dr``.

    Closed form ``(1/2pi) exp(-a^2) [1 + sqrt(pi) u exp(u^2) (1 + erf u)]``
    with ``u = a cos(phi - peak)``; ``exp(u^2)`` is merged with ``exp(-a^2)``
    for ``u >= 0`` and replaced by ``erfcx`` for ``u < 0`` so nothing
    overflows for large ``a``.
    """
    a = float(amplitude)
    if a < 0:
        raise ValueError("amplitude must be nonnegative")
    u = a * np.cos(np.asarray(phi, dtype=float) - peak)
    pos = u >= 0
    tail = np.where(
        pos,
        np.exp(np.where(pos, u * u, 0.0) - a * a) * erfc(-np.where(pos, u, 0.0)),
        math.exp(-a * a) * erfcx(-np.where(pos, 0.0, u)),
    )
    return (math.exp(-a * a) + math.sqrt(math.pi) * u * tail) / TWO_PI
