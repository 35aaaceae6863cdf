"""Multiplier generation, the bootstrap statistic, and the panel HAC variance.

The bootstrap replaces each period-t cross-section of residuals by the same
cross-section scaled with a single multiplier ``xi_t``; the multiplier series
is Gaussian with Toeplitz covariance ``a((t - s) / bandwidth)``, so the
dependence structure of the data enters only through the kernel and the
bandwidth.  The conditional second moment of the bootstrap statistic is the
kernel-weighted double sum of the per-period aggregates -- the panel HAC
long-run variance estimator -- which the banded implementation here computes
in O(T * bandwidth).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import KernelSpec, as_kernel
from .panel import (
    Panel,
    RegressionData,
    _stacked_design,
    aggregate_statistic,
    cross_section_averages,
    pooled_ols,
    within_transform,
)

__all__ = [
    "DwbConfig",
    "BootstrapResult",
    "draw_xi",
    "draw_xi_matrix",
    "bootstrap_statistic",
    "hac_variance",
    "confidence_interval",
    "weighted_aggregates",
    "dwb_mean_inference",
    "regression_dwb",
]

CI_METHODS = ("symmetric_abs", "equal_tailed")


@dataclass(frozen=True, kw_only=True)
class DwbConfig:
    """Settings for one bootstrap run.

    ``bandwidth=None`` selects the data-driven rule on whatever per-period
    aggregate series the pipeline uses.  ``seed`` is mandatory: every draw is
    a deterministic function of it.
    """

    seed: int
    kernel: KernelSpec | str = "bartlett"
    bandwidth: float | None = None
    n_draws: int = 399
    level: float = 0.95
    ci_method: str = "symmetric_abs"
    bandwidth_floor: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_kernel(self.kernel))
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer (reproducibility contract)")
        if self.n_draws < 99:
            raise ValueError("n_draws must be at least 99")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.ci_method not in CI_METHODS:
            raise ValueError(f"ci_method must be one of {CI_METHODS}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive when given")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Point estimate, bootstrap draws, variance estimate, and interval.

    ``draws`` are on the root-NN-scaled statistic scale; for regression
    results the interval is mapped back to the coefficient scale.
    """

    point: float
    draws: np.ndarray
    variance: float
    ci_lower: float
    ci_upper: float
    n_draws: int
    bandwidth: float
    kernel: str
    seed: int
    ci_method: str
    level: float
    label: str | None = None

    def to_json_dict(self) -> dict:
        out = {
            "point": self.point,
            "variance_hat": self.variance,
            "ci": [self.ci_lower, self.ci_upper],
            "n_draws": self.n_draws,
            "bandwidth": self.bandwidth,
            "kernel": self.kernel,
            "seed": self.seed,
            "method": self.ci_method,
            "level": self.level,
        }
        if self.label is not None:
            out["label"] = self.label
        return out


@lru_cache(maxsize=128)
def _xi_factor(family: str, n_periods: int, bandwidth: float) -> np.ndarray:
    """Lower-triangular factor of the multiplier covariance, jittered if needed.

    The covariance is PSD in exact arithmetic; jitter only papers over
    floating-point edge cases, escalating tenfold from 1e-12 to 1e-8 before
    giving up.
    """
    from .kernels import xi_covariance

    sigma = xi_covariance(family, n_periods, bandwidth)
    jitter = 0.0
    while True:
        try:
            shifted = sigma if jitter == 0.0 else sigma + jitter * np.eye(n_periods)
            factor = np.linalg.cholesky(shifted)
            factor.setflags(write=False)
            return factor
        except np.linalg.LinAlgError:
            jitter = 1e-12 if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-8:
                eigmin = float(np.linalg.eigvalsh(sigma).min())
                raise RuntimeError(
                    "multiplier covariance factorization failed after maximal "
                    f"jitter 1e-8 (min eigenvalue {eigmin:.3e})"
                ) from None


def draw_xi(kernel: KernelSpec | str, n_periods: int, bandwidth: float,
            rng: np.random.Generator) -> np.ndarray:
    """One multiplier series: L z with z standard normal, L L' the kernel covariance."""
    return draw_xi_matrix(kernel, n_periods, bandwidth, 1, rng)[:, 0]


def draw_xi_matrix(kernel: KernelSpec | str, n_periods: int, bandwidth: float,
                   n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """A (T, n_draws) matrix of independent multiplier series."""
    spec = as_kernel(kernel)
    factor = _xi_factor(spec.family, int(n_periods), float(bandwidth))
    return factor @ rng.standard_normal((n_periods, n_draws))


def bootstrap_statistic(ubar: np.ndarray, nt_counts: np.ndarray, xi: np.ndarray) -> float:
    """Bootstrap version of the aggregate statistic for one multiplier series.

    ``sum_t sqrt(N_t / NN) * ubar_t * xi_t``; equals the cell-level sum
    ``sum_{i,t} u_it xi_t / sqrt(NN)`` on the originating panel.
    """
    ubar = np.asarray(ubar, dtype=np.float64)
    nt = np.asarray(nt_counts, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if not (ubar.shape == nt.shape == xi.shape):
        raise ValueError("ubar, nt_counts and xi must have equal length")
    weights = np.sqrt(nt / nt.sum())
    return float(np.sum(weights * ubar * xi))


def hac_variance(ubar: np.ndarray, kernel: KernelSpec | str, bandwidth: float) -> float:
    """Kernel-weighted double sum (1/T) sum_{t,s} ubar_t ubar_s a((t-s)/bandwidth).

    Computed banded in O(T * bandwidth) using the kernel's compact support;
    agrees with the brute-force O(T^2) sum to machine precision.
    """
    spec = as_kernel(kernel)
    u = np.asarray(ubar, dtype=np.float64)
    if u.ndim != 1 or u.size < 2:
        raise ValueError("ubar must be a 1-d series with at least 2 periods")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    n = u.size
    total = float(u @ u)
    max_lag = min(int(np.ceil(bandwidth)), n - 1)
    if max_lag >= 1:
        weights = spec.evaluate(np.arange(1, max_lag + 1) / float(bandwidth))
        for k in range(1, max_lag + 1):
            w = weights[k - 1]
            if w != 0.0:
                total += 2.0 * w * float(u[:-k] @ u[k:])
    return total / n


def confidence_interval(point: float, draws: np.ndarray, level: float,
                        method: str = "symmetric_abs") -> tuple[float, float]:
    """Interval around ``point`` from centered bootstrap draws.

    symmetric_abs takes the level-quantile of |draws - mean(draws)| and
    returns ``point +- q``; equal_tailed shifts the two tail quantiles of the
    centered draws onto ``point``.  Quantiles interpolate order statistics
    linearly.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.size < 20:
        raise ValueError("need at least 20 draws for a stable quantile")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    centered = draws - draws.mean()
    if method == "symmetric_abs":
        q = float(np.quantile(np.abs(centered), level))
        return point - q, point + q
    if method == "equal_tailed":
        lo = float(np.quantile(centered, (1.0 - level) / 2.0))
        hi = float(np.quantile(centered, (1.0 + level) / 2.0))
        return point + lo, point + hi
    raise ValueError(f"method must be one of {CI_METHODS}")


def weighted_aggregates(panel: Panel) -> np.ndarray:
    """Per-period series v_t = sqrt(T N_t / NN) * ubar_t.

    Feeding v into :func:`hac_variance` reproduces the conditional variance of
    the bootstrap statistic for unbalanced panels; on balanced panels v is
    exactly ubar.
    """
    ubar = cross_section_averages(panel)
    nt = panel.nt_counts
    return np.sqrt(panel.n_periods * nt / nt.sum()) * ubar


def _resolve_bandwidth(series: np.ndarray, config: DwbConfig) -> float:
    if config.bandwidth is not None:
        return float(config.bandwidth)
    from .bandwidth import optimal_bandwidth

    est = optimal_bandwidth(series, config.kernel, floor=config.bandwidth_floor)
    return est.bandwidth


def dwb_mean_inference(panel: Panel, config: DwbConfig) -> BootstrapResult:
    """Bootstrap inference for the panel mean via the aggregate statistic.

    Demeans the panel by its grand mean over observed cells, draws the
    bootstrap statistic from the residual aggregates, and reports the HAC
    variance plus the interval for the aggregate statistic of the demeaned
    panel.
    """
    grand_mean = panel.values.sum() / panel.n_observed
    demeaned = panel.with_values(
        np.where(panel.observed, panel.values - grand_mean, 0.0)
    )
    point = aggregate_statistic(demeaned)
    series = weighted_aggregates(demeaned)
    bandwidth = _resolve_bandwidth(series, config)
    variance = hac_variance(series, config.kernel, bandwidth)
    xi = draw_xi_matrix(config.kernel, panel.n_periods, bandwidth, config.n_draws, config.rng())
    draws = (series / np.sqrt(panel.n_periods)) @ xi
    lo, hi = confidence_interval(point, draws, config.level, config.ci_method)
    return BootstrapResult(
        point=point, draws=draws, variance=variance, ci_lower=lo, ci_upper=hi,
        n_draws=config.n_draws, bandwidth=bandwidth, kernel=config.kernel.family,
        seed=config.seed, ci_method=config.ci_method, level=config.level,
    )


def _period_scores(data: RegressionData, residuals: Panel) -> np.ndarray:
    """Per-period design-weighted residual sums, shaped (k, T).

    The bootstrap refit has the closed form
    ``theta* - theta = (X'X)^{-1} sum_t scores_t xi_t`` because a draw scales
    the whole period-t residual cross-section by one multiplier.
    """
    resid = residuals.values  # masked cells are zero
    cells = data.regressor_cell()
    scores = np.einsum("ntd,nt->dt", cells, resid)
    if data.intercept:
        scores = np.vstack([resid.sum(axis=0)[None, :], scores])
    return scores


def _banded_score_covariance(scores: np.ndarray, kernel: KernelSpec, bandwidth: float) -> np.ndarray:
    """sum_{t,s} scores_t scores_s' a((t - s)/bandwidth), banded."""
    k, n = scores.shape
    total = scores @ scores.T
    max_lag = min(int(np.ceil(bandwidth)), n - 1)
    for lag in range(1, max_lag + 1):
        w = kernel.evaluate(lag / bandwidth)
        if w != 0.0:
            cross = scores[:, :-lag] @ scores[:, lag:].T
            total += w * (cross + cross.T)
    return total


def regression_dwb(data: RegressionData, model: str, config: DwbConfig) -> list[BootstrapResult]:
    """Bootstrap inference for pooled or fixed-effects panel regressions.

    Fits the base model, then for each draw scales every period-t residual
    cross-section by one multiplier (preserving cross-sectional dependence)
    and refits in closed form.  Draws are recorded on the
    ``sqrt(NN) (theta* - theta)`` scale; intervals are centered at the fitted
    coefficients.
    """
    if model == "pooled":
        fit_data = data
    elif model == "fixed_effects":
        fit_data = within_transform(data)
    else:
        raise ValueError("model must be 'pooled' or 'fixed_effects'")

    coef, resid = pooled_ols(fit_data)
    x, _ = _stacked_design(fit_data)
    xtx = x.T @ x
    scores = _period_scores(fit_data, resid)
    n_obs = fit_data.y.n_observed
    root_n = np.sqrt(n_obs)

    series = weighted_aggregates(resid)
    bandwidth = _resolve_bandwidth(series, config)
    xi = draw_xi_matrix(config.kernel, fit_data.y.n_periods, bandwidth,
                        config.n_draws, config.rng())
    shift = np.linalg.solve(xtx, scores)          # (k, T)
    draws = root_n * (shift @ xi)                 # (k, R)
    cov = n_obs * np.linalg.solve(
        xtx, np.linalg.solve(xtx, _banded_score_covariance(scores, config.kernel, bandwidth)).T
    )

    names = fit_data.coefficient_names()
    results = []
    for j, name in enumerate(names):
        lo, hi = confidence_interval(0.0, draws[j], config.level, config.ci_method)
        results.append(BootstrapResult(
            point=float(coef[j]), draws=draws[j],
            variance=float(cov[j, j]),
            ci_lower=float(coef[j] + lo / root_n), ci_upper=float(coef[j] + hi / root_n),
            n_draws=config.n_draws, bandwidth=bandwidth, kernel=config.kernel.family,
            seed=config.seed, ci_method=config.ci_method, level=config.level, label=name,
        ))
    return results
