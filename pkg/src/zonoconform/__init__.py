"""Conformal prediction sets built from calibrated nested zonotope families."""
from zonoconform.baselines import (
    EllipsoidSet,
    EllipticalModel,
    IntervalBand,
    ModulationModel,
    elliptical_calibrate,
    elliptical_contains,
    elliptical_output_set,
    modulation_band,
    modulation_calibrate,
    modulation_contains,
)
from zonoconform.calibration import (
    AlphaGrid,
    CalibratedFamily,
    DensityCalibration,
    calibrate,
    calibrate_from_density,
    level_alpha,
    level_set,
    membership_score,
    membership_scores,
)
from zonoconform.depth import DepthResult, euclidean_depth, mahalanobis_depth, tukey_depth_approx, tukey_depth_exact
from zonoconform.errors import (
    DegeneracyError,
    DegenerateErrorsError,
    DomainError,
    InfeasibleProgramError,
    SingularCovarianceError,
    UnsupportedDimensionError,
    ZonoconformError,
)
from zonoconform.eval import CoverageReport, EfficiencyReport, compare_report, efficiency, empirical_coverage
from zonoconform.fitting import FitConfig, FitResult, fit, fit_convex_hull, fit_rotated_box
from zonoconform.functional import (
    ErrorSVD,
    FunctionalConformalModel,
    FunctionalModelBuilder,
    FunctionalPredictionSet,
    build_model,
    compute_errors,
    contains_function,
    error_svd,
    load_model,
    predict,
    save_model,
)
from zonoconform.polytope import HPolytope, VPolytope, convex_hull, overapprox_zonotope, vrep_to_hrep
from zonoconform.sets import (
    HalfSpace,
    Hyperrectangle,
    NestedZonotopeFamily,
    Zonotope,
    cartesian_product,
    linear_map,
    member,
    nested_at,
    projected_area_2d,
)
