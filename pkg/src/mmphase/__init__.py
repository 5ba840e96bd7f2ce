"""Phase-plane analysis of the planar Michaelis-Menten mechanism.

Covers the scaled two-variable system, its isoclines, power series at the
origin and at infinity, adaptive integration in time and phase form, the slow
manifold, and concavity / entry / functional-iteration analyses built on them.
"""

from .concavity import (AuditReport, Branch, ConcavityReport, ConcavityRow, Expected, InflectionLoci,
                        concavity_classify, cubic_real_roots, h_aux, inflection_locus, p_aux,
                        table1_audit)
from .entry import EntryResult, entry_threshold, gamma1_entry, scan_non_entering
from .errors import (ConstructionError, DomainError, FitError, InadmissibleParameters,
                     InsufficientPrecision, IntegrationError, MMPhaseError, PoleError,
                     SingularSlope, StiffnessFailure, UnsupportedResonance)
from .fraser import FraserIterates, fraser_iterate, h_curve
from .integrate import (Curve, Event, Trajectory, integrate_phase, integrate_time,
                        simulate_mass_action)
from .isoclines import (F, H, K, V, Isocline, Region, RegionLabel, Slope, alpha, classify_region,
                        isocline_eval, isocline_residual, isocline_slope, u)
from .kinetics import (Parameters, RateConstants, Scales, Spectrum, eigenvalues, eta_from_kappa,
                       linear_solution, linearization, nondimensionalize, rhs_time, slope_field,
                       spectrum)
from .manifold import (FenceReport, SlowManifold, antifunnel_bisect, compute_manifold, origin_tail,
                       second_derivative_limit, slope_and_curvature, uniqueness_probe,
                       verify_fences)
from .series import (InfinitySeries, OriginSeries, TailFit, eval_infinity, eval_origin, fit_tail,
                     infinity_coefficients, origin_coefficients)

__version__ = "0.1.0"
