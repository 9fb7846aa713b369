"""Operational phase-difference distributions from eight-port homodyne counting."""

__version__ = "0.1.0"

from .direct import (
    DataPolicy,
    NormalizationPolicy,
    averaged_distribution,
    count_angle,
    direct_strong_limit,
    direct_weak_limit,
    discarded_fraction,
    spike_distribution,
)
from .fock import (
    TwoModeFockState,
    build_network_unitary,
    detector_probabilities,
    london_relative_phase,
    rotation_overlap,
    tm_phase_distribution,
    vacuum_deplete,
)
from .indirect import (
    IndirectConfig,
    convolve_relative_phase,
    indirect_convolution,
    indirect_general,
    indirect_weak_limit,
    single_mode_phase_dist,
)
from .kernels import (
    CoherentEnsemble,
    CoherentPair,
    TailBoundError,
    build_joint_table,
    joint_count_probability,
    kernel_k43,
    kernel_k65,
    output_amplitudes,
)
from .montecarlo import chi_square_compare, empirical_phase_distribution, sample_counts
from .numerics import (
    FringeSummary,
    NoUsableDataError,
    PhaseDistribution,
    PhaseGrid,
    QuadratureError,
    bessel_i_scaled,
    fringe_fit,
    radial_gauss_quadrature,
)

__all__ = [name for name in dir() if not name.startswith("_")]
