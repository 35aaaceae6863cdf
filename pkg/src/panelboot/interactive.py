"""Interactive-effects panel regression with bias correction and bootstrap inference.

The model stacks a low-rank unit-by-period structure (unit loadings times
common time factors) on top of the regression part; loadings and factors may
be correlated with the regressors.  Estimation alternates an exact GLS step
for the slope with a principal-components step for the loadings under the
normalization loadings'loadings / N = I_p, so the least-squares objective is
nonincreasing across sweeps.  The slope estimate carries two O(1) biases; the
half-panel jackknife removes the time-direction one and an analytic plug-in
removes the cross-section one.  Inference multiplies period residual
cross-sections by the dependent-multiplier series and refits in closed form
with the loadings held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import (
    BootstrapResult,
    DwbConfig,
    _banded_score_covariance,
    confidence_interval,
    draw_xi_matrix,
)
from .panel import Panel, RegressionData, cross_section_averages

__all__ = [
    "InteractiveEffectsFit",
    "BiasCorrectedEstimate",
    "fit_interactive",
    "half_panel_jackknife",
    "jackknife_combine",
    "mu_c_hat",
    "bias_corrected_estimate",
    "ie_bootstrap_infer",
]


@dataclass(frozen=True, eq=False)
class InteractiveEffectsFit:
    """Converged state of the alternating estimator.

    ``loadings`` satisfy loadings'loadings / N = I_p; ``eigenvalues`` is the
    diagonal (descending) matrix of the top-p eigenvalues of the scaled outer
    product of slope-adjusted data, which equals factors'factors / T.
    """

    theta: np.ndarray           # (d,)
    loadings: np.ndarray        # (N, p)
    factors: np.ndarray         # (T, p)
    eigenvalues: np.ndarray     # (p, p) diagonal, descending
    residuals: Panel
    objective: float
    n_iter: int
    converged: bool
    objective_path: np.ndarray

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]


@dataclass(frozen=True, eq=False)
class BiasCorrectedEstimate:
    """Raw, jackknifed, and fully corrected slope estimates.

    ``theta_jackknife = 2 theta - (theta_first_half + theta_second_half) / 2``
    and ``theta_corrected = theta_jackknife - mu_c / N`` hold exactly.
    """

    theta: np.ndarray
    theta_jackknife: np.ndarray
    mu_c: np.ndarray | None
    theta_corrected: np.ndarray | None
    split: tuple
    converged: bool
    fit: InteractiveEffectsFit


def _extract_arrays(data: RegressionData):
    if data.x_panel is None:
        raise ValueError("interactive-effects model requires unit-specific regressors (x_panel)")
    if data.intercept:
        raise ValueError("interactive-effects model has no intercept; use intercept=False")
    if not data.y.is_balanced:
        raise ValueError("interactive-effects estimation requires a balanced panel")
    return data.y.values, data.x_panel


def _pca_step(z: np.ndarray, p: int):
    """Top-p eigenpairs of z z' / (N T); loadings scaled to sqrt(N), signs fixed."""
    n_units, n_periods = z.shape
    w = z @ z.T / (n_units * n_periods)
    vals, vecs = np.linalg.eigh(w)
    vals = vals[::-1][:p]
    vecs = vecs[:, ::-1][:, :p].copy()
    for j in range(p):
        col = vecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, j] = -col
    return np.sqrt(n_units) * vecs, vals


def _gls_step(x: np.ndarray, y: np.ndarray, loadings: np.ndarray,
              sxx: np.ndarray, sxy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact minimizer of the objective in the slope given the loadings."""
    n_units = x.shape[0]
    gx = np.einsum("np,ntd->ptd", loadings, x)
    gy = loadings.T @ y
    a = sxx - np.einsum("ptd,pte->de", gx, gx) / n_units
    b = sxy - np.einsum("ptd,pt->d", gx, gy) / n_units
    try:
        return np.linalg.solve(a, b), a
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("slope system is singular given the current loadings") from exc


def _objective(z: np.ndarray, loadings: np.ndarray) -> float:
    n_units = z.shape[0]
    if loadings.shape[1] == 0:
        return float(np.sum(z * z))
    return float(np.sum(z * z) - np.sum((loadings.T @ z) ** 2) / n_units)


def fit_interactive(data: RegressionData, n_factors: int, *,
                    tol: float = 1e-8, max_iter: int = 1000,
                    theta_init: np.ndarray | None = None) -> InteractiveEffectsFit:
    """Alternating least-squares / principal-components fit.

    Parameters
    ----------
    data : RegressionData
        Balanced panel with unit-specific regressors, no intercept.
    n_factors : int
        Number of common factors p (fixed and known; 0 reduces the fit to
        pooled OLS on the regressors).
    tol : float
        Stop when the sup-norm change of the slope falls below this.
    max_iter : int
        Iteration cap; hitting it returns a fit flagged ``converged=False``.

    Returns a fit whose objective path is nonincreasing across sweeps.
    """
    y, x = _extract_arrays(data)
    n_units, n_periods, n_reg = x.shape
    if not 0 <= n_factors < min(n_units, n_periods):
        raise ValueError("need 0 <= n_factors < min(N, T)")

    sxx = np.einsum("ntd,nte->de", x, x)
    sxy = np.einsum("ntd,nt->d", x, y)

    if theta_init is None:
        try:
            theta = np.linalg.solve(sxx, sxy)
        except np.linalg.LinAlgError as exc:
            raise ValueError("regressors are rank deficient (singular X'X)") from exc
    else:
        theta = np.asarray(theta_init, dtype=np.float64).reshape(n_reg)

    if n_factors == 0:
        z = y - np.einsum("ntd,d->nt", x, theta)
        empty_load = np.zeros((n_units, 0))
        return InteractiveEffectsFit(
            theta=theta, loadings=empty_load, factors=np.zeros((n_periods, 0)),
            eigenvalues=np.zeros((0, 0)),
            residuals=data.y.with_values(z),
            objective=_objective(z, empty_load), n_iter=0, converged=True,
            objective_path=np.array([_objective(z, empty_load)]),
        )

    path = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        z = y - np.einsum("ntd,d->nt", x, theta)
        loadings, _ = _pca_step(z, n_factors)
        theta_new, _ = _gls_step(x, y, loadings, sxx, sxy)
        path.append(_objective(y - np.einsum("ntd,d->nt", x, theta_new), loadings))
        delta = float(np.max(np.abs(theta_new - theta)))
        theta = theta_new
        if delta <= tol:
            converged = True
            break

    # Re-extract the principal components at the final slope so the loadings
    # are exactly the eigenvectors of the final slope-adjusted data (another
    # descent step, so the objective path stays nonincreasing).
    z = y - np.einsum("ntd,d->nt", x, theta)
    loadings, eigvals = _pca_step(z, n_factors)
    path.append(_objective(z, loadings))

    factors = z.T @ loadings / n_units
    residuals = z - loadings @ factors.T
    return InteractiveEffectsFit(
        theta=theta,
        loadings=loadings,
        factors=factors,
        eigenvalues=np.diag(eigvals),
        residuals=data.y.with_values(residuals),
        objective=path[-1],
        n_iter=n_iter,
        converged=converged,
        objective_path=np.asarray(path),
    )


def jackknife_combine(theta_full: np.ndarray, theta_first: np.ndarray,
                      theta_second: np.ndarray) -> np.ndarray:
    """Half-panel combination 2 theta - (theta_first + theta_second) / 2."""
    return 2.0 * np.asarray(theta_full) - 0.5 * (np.asarray(theta_first) + np.asarray(theta_second))


def half_panel_jackknife(data: RegressionData, n_factors: int, *,
                         tol: float = 1e-8, max_iter: int = 1000) -> BiasCorrectedEstimate:
    """Jackknife over the two time halves of the sample.

    The first block takes the first floor(T/2) periods, the second block the
    remaining ceil(T/2) (an odd middle period joins the second block only).
    Non-convergence of any sub-fit flags the result rather than raising.
    """
    n_periods = data.y.n_periods
    p = n_factors
    if n_periods < 2 * p + 4:
        raise ValueError("need T >= 2 * n_factors + 4 for half-panel fits")
    half = n_periods // 2
    fit = fit_interactive(data, p, tol=tol, max_iter=max_iter)
    fit_first = fit_interactive(data.slice_periods(0, half), p, tol=tol, max_iter=max_iter)
    fit_second = fit_interactive(data.slice_periods(half, n_periods), p, tol=tol, max_iter=max_iter)
    return BiasCorrectedEstimate(
        theta=fit.theta,
        theta_jackknife=jackknife_combine(fit.theta, fit_first.theta, fit_second.theta),
        mu_c=None,
        theta_corrected=None,
        split=((0, half), (half, n_periods)),
        converged=fit.converged and fit_first.converged and fit_second.converged,
        fit=fit,
    )


def mu_c_hat(fit: InteractiveEffectsFit, data: RegressionData) -> np.ndarray:
    """Plug-in estimate of the cross-section bias component.

    Uses the outer product of slope-adjusted data (not of the residuals) as
    the error second-moment proxy, the estimated factors throughout, and the
    factor-projected regressors in the Hessian-like normalizer.
    """
    y, x = _extract_arrays(data)
    n_units, n_periods, _ = x.shape
    nn = n_units * n_periods
    p = fit.n_factors
    if p == 0:
        return np.zeros(x.shape[2])

    loadings, factors = fit.loadings, fit.factors
    z = y - np.einsum("ntd,d->nt", x, fit.theta)
    omega = z @ z.T / n_periods
    v = factors.T @ factors / n_periods

    # Project the factors out of each regressor's time series.
    proj = factors @ np.linalg.solve(v, factors.T) / n_periods      # (T, T)
    x_tilde = x - np.einsum("nsd,st->ntd", x, proj)

    gx = np.einsum("np,ntd->ptd", loadings, x_tilde)
    d_mat = (np.einsum("ntd,nte->de", x_tilde, x_tilde)
             - np.einsum("ptd,pte->de", gx, gx) / n_units) / nn

    core = omega @ loadings - loadings @ (loadings.T @ omega @ loadings) / n_units
    core = core @ np.linalg.inv(v)                                   # (N, p)
    s = np.einsum("ntd,np,tp->d", x, core, factors) / nn
    try:
        return -np.linalg.solve(d_mat, s)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("bias normalizer D(loadings) is singular") from exc


def bias_corrected_estimate(data: RegressionData, n_factors: int, *,
                            tol: float = 1e-8, max_iter: int = 1000) -> BiasCorrectedEstimate:
    """Jackknife plus analytic correction: theta_jackknife - mu_c / N."""
    est = half_panel_jackknife(data, n_factors, tol=tol, max_iter=max_iter)
    mu_c = mu_c_hat(est.fit, data)
    n_units = data.y.n_units
    return BiasCorrectedEstimate(
        theta=est.theta,
        theta_jackknife=est.theta_jackknife,
        mu_c=mu_c,
        theta_corrected=est.theta_jackknife - mu_c / n_units,
        split=est.split,
        converged=est.converged,
        fit=est.fit,
    )


def ie_bootstrap_infer(data: RegressionData, n_factors: int, config: DwbConfig, *,
                       estimate: BiasCorrectedEstimate | None = None) -> list[BootstrapResult]:
    """Bootstrap intervals for the slope of the interactive-effects model.

    Holds the fitted loadings fixed across draws and refits in closed form:
    each draw perturbs the fitted values by the residual cross-sections scaled
    with the multiplier series.  Draws are ``sqrt(NN) (theta* - theta)``;
    intervals are centered at the fully bias-corrected estimate.  The
    bandwidth defaults to the data-driven rule on the residual aggregates.
    """
    if estimate is None:
        estimate = bias_corrected_estimate(data, n_factors)
    fit = estimate.fit
    y, x = _extract_arrays(data)
    n_units, n_periods, n_reg = x.shape
    nn = n_units * n_periods
    root_n = np.sqrt(nn)

    loadings = fit.loadings
    gx = np.einsum("np,ntd->ptd", loadings, x)
    a = np.einsum("ntd,nte->de", x, x) - np.einsum("ptd,pte->de", gx, gx) / n_units
    scores = np.einsum("ntd,nt->dt", x, fit.residuals.values)

    if config.bandwidth is not None:
        bandwidth = float(config.bandwidth)
    else:
        from .bandwidth import optimal_bandwidth

        ubar_hat = cross_section_averages(fit.residuals)
        bandwidth = optimal_bandwidth(ubar_hat, config.kernel,
                                      floor=config.bandwidth_floor).bandwidth

    xi = draw_xi_matrix(config.kernel, n_periods, bandwidth, config.n_draws, config.rng())
    shift = np.linalg.solve(a, scores)
    draws = root_n * (shift @ xi)
    cov = nn * np.linalg.solve(
        a, np.linalg.solve(a, _banded_score_covariance(scores, config.kernel, bandwidth)).T
    )

    names = data.regressor_names or tuple(f"x{j + 1}" for j in range(n_reg))
    center = estimate.theta_corrected if estimate.theta_corrected is not None else estimate.theta_jackknife
    results = []
    for j in range(n_reg):
        lo, hi = confidence_interval(0.0, draws[j], config.level, config.ci_method)
        results.append(BootstrapResult(
            point=float(center[j]), draws=draws[j], variance=float(cov[j, j]),
            ci_lower=float(center[j] + lo / root_n),
            ci_upper=float(center[j] + hi / root_n),
            n_draws=config.n_draws, bandwidth=bandwidth, kernel=config.kernel.family,
            seed=config.seed, ci_method=config.ci_method, level=config.level,
            label=str(names[j]),
        ))
    return results
