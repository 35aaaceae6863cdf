"""Dependent wild bootstrap inference for panel data.

Inference for statistics of N x T panels whose errors carry cross-sectional
dependence, serial correlation, and heteroskedasticity, with support for
missing observations.  The toolkit covers the bootstrap itself (kernel-driven
multiplier series, the panel HAC variance, confidence intervals), MSE-optimal
bandwidth selection, an interactive-effects estimator with half-panel
jackknife plus analytic bias correction, classical comparison variance
estimators, residual diagnostics, and a Monte Carlo size-study harness.
"""

from .bandwidth import BandwidthEstimate, delta1_hat, delta2_hat, optimal_bandwidth
from .bootstrap import (
    BootstrapResult,
    DwbConfig,
    bootstrap_statistic,
    confidence_interval,
    draw_xi,
    draw_xi_matrix,
    dwb_mean_inference,
    hac_variance,
    regression_dwb,
)
from .diagnostics import (
    DiagnosticsReport,
    LjungBoxResult,
    cd_test,
    diagnose_panel,
    edgeworth_cdf,
    ljung_box_test,
    traditional_variances,
)
from .interactive import (
    BiasCorrectedEstimate,
    InteractiveEffectsFit,
    bias_corrected_estimate,
    fit_interactive,
    half_panel_jackknife,
    ie_bootstrap_infer,
    mu_c_hat,
)
from .kernels import KernelSpec, estimate_cq, make_kernel, xi_covariance
from .panel import (
    Panel,
    RegressionData,
    aggregate_statistic,
    cross_section_averages,
    load_panel_csv,
    pooled_ols,
    within_transform,
)
from .simulate import (
    DgpSpec,
    SimulationReport,
    run_size_experiment,
    simulate_error_panel,
    simulate_interactive_panel,
)

__version__ = "0.1.0"

__all__ = [
    "BandwidthEstimate",
    "BiasCorrectedEstimate",
    "BootstrapResult",
    "DgpSpec",
    "DiagnosticsReport",
    "DwbConfig",
    "InteractiveEffectsFit",
    "KernelSpec",
    "LjungBoxResult",
    "Panel",
    "RegressionData",
    "SimulationReport",
    "aggregate_statistic",
    "bias_corrected_estimate",
    "bootstrap_statistic",
    "cd_test",
    "confidence_interval",
    "cross_section_averages",
    "delta1_hat",
    "delta2_hat",
    "diagnose_panel",
    "draw_xi",
    "draw_xi_matrix",
    "dwb_mean_inference",
    "edgeworth_cdf",
    "estimate_cq",
    "fit_interactive",
    "hac_variance",
    "half_panel_jackknife",
    "ie_bootstrap_infer",
    "ljung_box_test",
    "load_panel_csv",
    "make_kernel",
    "mu_c_hat",
    "optimal_bandwidth",
    "pooled_ols",
    "regression_dwb",
    "run_size_experiment",
    "simulate_error_panel",
    "simulate_interactive_panel",
    "traditional_variances",
    "within_transform",
    "xi_covariance",
]
