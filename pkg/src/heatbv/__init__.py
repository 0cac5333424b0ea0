"""Numerical lab for heat-kernel nonlocal Sobolev and BV functionals."""

from .calculus import EnergyReport, JumpData, cheeger_energy, jump_data, perimeter, total_variation
from .functionals import (
    FunctionalSample,
    blowup_profile,
    bv_functional,
    jump_functional,
    ks_functional,
    polarization_g,
    set_functional,
    sobolev_functional,
)
from .heat import (
    ClosedFormGaussian,
    HeatKernelEngine,
    ImageSum,
    Spectral,
    validate_axioms,
    validate_gaussian_bounds,
)
from .limits import ConvergenceCurve, extrapolate, sweep, target_constant
from .oracle import OracleValue, halfline_bv_exact, pair_enumeration, quadrature_energy
from .space import (
    CircleGrid,
    EuclideanGrid,
    IndicatorSet,
    LineGrid,
    MetricMeasureSpace,
    ScalarField,
    TorusGrid,
    WeightedGraph,
    build_space,
    halfline_set,
    interval_set,
    piecewise_field,
    sample_field,
    sine_field,
)

__version__ = "0.1.0"
