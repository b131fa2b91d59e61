"""Numerical toolkit for non-self-adjoint periodic differential operators.

Computes Bloch eigenvalues and eigenfunctions of arbitrary-order periodic
differential expressions with matrix coefficients, cross-validates them
against the Floquet monodromy determinant, locates and classifies spectral
singularities (including the essential ones that force principal-value
treatment), and evaluates the spectral expansion of square-integrable vector
functions with shrinking-window ("huddled") integration over the singular
branches.
"""

from .bands import (AsymptoticsReport, BandCollection, BandFunction,
                    kj_from_p, p_from_kj, track_bands,
                    verify_eigenfunction_asymptotics,
                    verify_eigenvalue_asymptotics)
from .errors import (AmbiguousContinuation, BlochspecError, ConfigInvalid,
                     DefectiveEigenvalueWarning, DegenerateMeanMatrix,
                     EigensolverFailure, FlaggedPair, HuddleDiverged,
                     InsufficientRange, IntegratorStall, NoZerosFound,
                     NonIntegrableBranch, PoorFit, RefinementDiverged,
                     TruncationTooSmall)
from .expansion import (ExpansionParams, ExpansionResult, HuddleResult,
                        TestFunction, build_expansion_grid, coefficient_a,
                        gelfand_coefficients, gelfand_inverse,
                        gelfand_transform, huddled_integral, integrate_branch,
                        ladder_integrate, random_smooth_test_function,
                        reconstruct, tail_bound_check)
from .floquet import (CharPoly, DegeneracyCatalog, MonodromyResult,
                      MultipleEigenvalue, char_det, char_det_raw,
                      char_poly_coeffs, default_scan_region,
                      floquet_multipliers, monodromy, resultant_scan)
from .fourier import TrigPoly
from .galerkin import (BlochEigenpair, GalerkinMatrix, assemble_matrix,
                       compute_alpha, e_norm, evaluate_eigenfunction,
                       l2_inner, reference_eigenpair, solve_eigen, synthesize)
from .operator import (ConditionReport, MeanMatrixData, OperatorSpec,
                       ReducedSpec, classify_conditions, compute_mean_matrix,
                       reduce_p1)
from .singularities import (BranchProbe, PointClassification,
                            SingularityReport, bounded_projection_scan,
                            classify_point, classify_singularities,
                            empirical_rank1_norm, fit_blowup_exponent,
                            projection_norm, projector_apply, projector_norm,
                            rank1_projection_apply)

__version__ = "0.1.0"
