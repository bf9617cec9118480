"""Finite-dimensional laboratory for Aronszajn-Donoghue type questions on
matrix-valued perturbations ``A + B alpha B*``."""

__version__ = "0.1.0"

from .carriers import (CarrierPoint, CarrierReport, carrier_points, density_limit,
                       dyadic_heights, harmonic_heights, in_extended_exceptional,
                       mutually_singular, poisson_divergence)
from .cartography import (DimensionEstimate, LineSpec, SliceResult, SliceSpec,
                          box_counting_dimension, exceptional_flags, line_exceptional_ts,
                          slice_sweep)
from .errors import *  # noqa: F401,F403
from .invariants import (A2Scan, SeparationReport, a2_condition_scan, a2_probe_grid,
                         check_alpha_orthogonality, common_carrier_points, phi_selection,
                         separated_family_check, selection_vectors)
from .linalg import (DEFAULT_TOL, Tolerances, hermitian, is_positive_definite,
                     ort_distance_constant, ort_distance_constant_exact, psd_sqrt,
                     random_hermitian, ranges_alpha_orthogonal)
from .measures import (DensityPiece, MatrixMeasure, atom_at, atomic_measure,
                       cauchy_transform, poisson_extension, scalar_measure, trace_measure)
from .model import (ControlCase, PerturbationModel, block_swap_model, check_cyclic,
                    direct_sum_model, krylov_rank, noncyclic_control, operator_matrix_measure,
                    perturbed_cauchy, random_model, rank_one_model, spectral_matrix_measure,
                    verify_resolvent_relation)
