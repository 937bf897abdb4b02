"""Upper-bound constructions and verification tools for the energy scaling
law of strained epitaxial films with misfit dislocations."""

from .balls import BallFamily, evolve, merge_to_disjoint, verify_properties
from .dislocations import (CoreConstant, DislocationMeasure, MollifierSpec, core_constant_CJ1,
                           dislocation_count, mollifier_value, nucleation_energy,
                           place_equidistant)
from .energy import (EnergyBreakdown, circulation, curl_residual, elastic_energy,
                     total_energy)
from .exceptions import ConfigError, DomainError, NumericalError
from .fields import (ConstantMatrix, ConstantMisfit, DislocationFree, Mollified,
                     PeriodicDislocation, RegionLabel, StrainField, ZeroField, classify_region,
                     calibrate_pointwise_constant, gz_field, hat_H, mollified_H,
                     verify_pointwise_bound)
from .geometry import (BoxFamily, Profile, build_trapezoid_profile, check_admissible_profile,
                       isoperimetric_bound, largest_square, surface_energy)
from .lowerbound import (Annulus, Rectangle, SkewParam, annulus_circulation_bound,
                         decompose_local_scales, min_over_skew, strip_lower_bound_check)
from .params import ModelParams
from .quadrature import QuadratureSpec
from .scaling import (ScalingReport, SweepGrid, SweepRow, best_construction, fit_exponent,
                      flat_film_favorability, optimal_L_dislocation, optimal_L_elastic,
                      scaling_function_s, sweep)

__all__ = [name for name in dir() if not name.startswith("_")]
