from .algorithm1 import ScenarioResult, UncertaintyReport, run_algorithm1
from .chi2 import chi2_cdf, chi2_quantile, chi2_sf
from .ellipsoid import alpha_min, ellipsoid_contains, mahalanobis_sq
from .samples import (NormalityResult, build_error_sample, combine_sigma, normality_screen,
                      sigma_from_differences)
from .shapiro import shapiro_wilk
from .splits import Split, SplitScheme, split, standard_schemes

__all__ = [
    "NormalityResult", "ScenarioResult", "Split", "SplitScheme", "UncertaintyReport",
    "alpha_min", "build_error_sample", "chi2_cdf", "chi2_quantile", "chi2_sf",
    "combine_sigma", "ellipsoid_contains", "mahalanobis_sq", "normality_screen",
    "run_algorithm1", "shapiro_wilk", "sigma_from_differences", "split", "standard_schemes",
]
