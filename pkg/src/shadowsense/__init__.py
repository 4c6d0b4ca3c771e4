"""Shadowing-based sensitivity analysis for discrete-time chaotic maps.

Given a uniformly hyperbolic map u -> f(u, s) and an objective J, the
toolkit estimates d<J>/ds by least-squares shadowing (the bounded tangent
solution picked out over the unstable directions), adds the correction
term accounting for the unstable component of the forcing, and validates
both against independent oracles: truncated explicit transport sums,
direct response sums, and finite differences.
"""

from .errors import (ShadowSenseError, InvalidStateError, ConsistencyError,
                     DivergenceError, DegenerateBasisError,
                     SegmentOverflowError, SplittingDegenerateError,
                     InsufficientDataError, NeedsLongerOrbitError,
                     ConfigError)
from .model import (SystemModel, ExpandingCircle, PerturbedCatMap, Solenoid,
                    BlockHyperbolicLinear, BUILTIN_SYSTEMS, make_system,
                    model_derivatives)
from .orbit import Orbit, generate_orbit, time_average, objective_mean
from .tangent import (TangentSeq, BasisSeq, jacobian_sequence,
                      forcing_sequence, propagate_homogeneous,
                      propagate_inhomogeneous, propagate_adjoint,
                      lyapunov_exponents)
from .subspace import FrameSeq, SplittingFrame, build_frames
from .nilss import (ShadowingSolution, solve_nilss, solve_nilss_global,
                    shadowing_contribution, make_segments)
from .response import (CorrectionResult, RuelleResult, FDResult,
                       ErrorProfile, SensitivityReport,
                       explicit_shadowing_direction, correction_term,
                       direct_ruelle, finite_difference, error_profile,
                       assemble_report)
from .statmodel import (BoundCheckResult, ScalingStudy, ConvergenceStudy,
                        DecorrelationResult, draw_random_fields,
                        block_system, check_projection_bound,
                        shadowing_error_scaling, nilss_convergence_study,
                        empirical_decorrelation)
from ._kernels import NUMBA_ACTIVE

__version__ = "0.1.0"
