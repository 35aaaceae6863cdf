"""Data generators and the Monte Carlo size-experiment harness.

The error DGP is a cross-sectionally mixed AR(1): innovations carry
geometric spatial correlation across units, the recursion carries serial
correlation within units, and an optional row scaling makes the variance grow
across units.  Heavy-tail (t5), multivariate-GARCH-type and MA(infinity)
variants are available for property checks.  The harness records, per
replication, whether the target quantity falls outside the bootstrap interval
and aggregates rejection rates with Monte Carlo standard errors.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from io import StringIO

import numpy as np
from scipy import stats
from scipy.signal import lfilter

from .bandwidth import optimal_bandwidth
from .bootstrap import confidence_interval, draw_xi_matrix, weighted_aggregates
from .diagnostics import traditional_variances
from .interactive import bias_corrected_estimate
from .kernels import as_kernel
from .panel import Panel, RegressionData, aggregate_statistic, cross_section_averages

__all__ = [
    "DgpSpec",
    "SizeRow",
    "SimulationReport",
    "simulate_error_panel",
    "simulate_interactive_panel",
    "run_size_experiment",
    "KNOWN_METHODS",
]

ERROR_CASES = ("case1_gaussian", "case2_t5", "garch", "ma_infty")

# Fixed ids keep per-method seed streams independent of caller ordering.
KNOWN_METHODS = {
    "dwb_bartlett": 1,
    "dwb_trapezoidal": 2,
    "traditional_s1": 3,
    "traditional_s2": 4,
    "traditional_s3": 5,
    "ie_dwb": 6,
    "ie_dwb_trapezoidal": 7,
}


@dataclass(frozen=True, kw_only=True, eq=False)
class DgpSpec:
    """One simulation configuration.

    ``case`` names the error DGP; the interactive-effects generator layers the
    factor structure and regressors on top of it.  ``heteroskedastic`` applies
    the row scaling sqrt(1 + i/N) for units i = 1..N.
    """

    case: str = "case1_gaussian"
    n_units: int
    n_periods: int
    rho_u: float = 0.25
    delta_eps: float = 0.5
    heteroskedastic: bool = True
    burn_in: int = 200
    standardize_t5: bool = False
    theta0: float = 1.0
    n_factors: int = 2
    loading_low: float = 0.2
    loading_high: float = 2.2
    ma_coeffs: tuple | None = None
    garch_const: np.ndarray | None = None
    garch_arch: np.ndarray | None = None
    garch_garch: np.ndarray | None = None

    def __post_init__(self):
        if self.case not in ERROR_CASES:
            raise ValueError(f"case must be one of {ERROR_CASES}")
        if not abs(self.rho_u) < 1:
            raise ValueError("|rho_u| must be < 1")
        if not abs(self.delta_eps) < 1:
            raise ValueError("|delta_eps| must be < 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.n_units < 1 or self.n_periods < 2:
            raise ValueError("need n_units >= 1 and n_periods >= 2")


@lru_cache(maxsize=32)
def _spatial_sqrt(n_units: int, delta: float) -> np.ndarray:
    """Symmetric square root of the geometric cross-sectional correlation."""
    if delta == 0.0:
        root = np.eye(n_units)
    else:
        idx = np.arange(n_units)
        corr = delta ** np.abs(idx[:, None] - idx[None, :])
        vals, vecs = np.linalg.eigh(corr)
        root = (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T
    root.setflags(write=False)
    return root


def _hetero_scale(n_units: int) -> np.ndarray:
    return np.sqrt(1.0 + np.arange(1, n_units + 1) / n_units)


def _ar1_panel(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    n, t_total = spec.n_units, spec.n_periods + spec.burn_in
    if spec.case == "case2_t5":
        z = rng.standard_t(5, size=(n, t_total))
        if spec.standardize_t5:
            z = z / np.sqrt(5.0 / 3.0)
    else:
        z = rng.standard_normal((n, t_total))
    eps = _spatial_sqrt(n, float(spec.delta_eps)) @ z
    u = lfilter([1.0], [1.0, -spec.rho_u], eps, axis=1)
    return u[:, spec.burn_in:]


def _garch_stationarity_margin(arch: np.ndarray, garch: np.ndarray) -> np.ndarray:
    """Per-unit sum over lags of || C + D eps^2 ||_2 under standard-normal eps."""
    r = max(arch.shape[1], garch.shape[1])
    c = np.zeros((arch.shape[0], r))
    d = np.zeros((garch.shape[0], r))
    c[:, : arch.shape[1]] = arch
    d[:, : garch.shape[1]] = garch
    return np.sqrt(c**2 + 2.0 * c * d + 3.0 * d**2).sum(axis=1)


def _garch_panel(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_units
    const = np.full(n, 0.6) if spec.garch_const is None else np.asarray(spec.garch_const, dtype=float)
    arch = np.full((n, 1), 0.1) if spec.garch_arch is None else np.atleast_2d(np.asarray(spec.garch_arch, dtype=float))
    garch = np.full((n, 1), 0.3) if spec.garch_garch is None else np.atleast_2d(np.asarray(spec.garch_garch, dtype=float))
    if np.any(const <= 0) or np.any(arch < 0) or np.any(garch < 0):
        raise ValueError("conditional-variance coefficients must be positive/nonnegative")
    margin = _garch_stationarity_margin(arch, garch)
    if np.any(margin >= 1.0):
        worst = int(np.argmax(margin))
        raise ValueError(
            f"conditional-variance recursion is explosive for unit {worst} "
            f"(stationarity margin {margin[worst]:.3f} >= 1)"
        )
    t_total = spec.n_periods + spec.burn_in
    p_lags, q_lags = arch.shape[1], garch.shape[1]
    uncond = const / np.maximum(1.0 - arch.sum(axis=1) - garch.sum(axis=1), 1e-6)
    v = np.zeros((n, t_total))
    h = np.zeros((n, t_total))
    eps = rng.standard_normal((n, t_total))
    v2_init = uncond.copy()
    for t in range(t_total):
        h_t = const.copy()
        for j in range(1, p_lags + 1):
            h_t += arch[:, j - 1] * (v[:, t - j] ** 2 if t - j >= 0 else v2_init)
        for j in range(1, q_lags + 1):
            h_t += garch[:, j - 1] * (h[:, t - j] if t - j >= 0 else uncond)
        h[:, t] = h_t
        v[:, t] = np.sqrt(h_t) * eps[:, t]
    mixed = _spatial_sqrt(n, float(spec.delta_eps)) @ v
    return mixed[:, spec.burn_in:]


def _ma_panel(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    n, t = spec.n_units, spec.n_periods
    if spec.ma_coeffs is not None:
        coeffs = [np.asarray(b, dtype=float) for b in spec.ma_coeffs]
        lead = len(coeffs) - 1
        eps = rng.standard_normal((n, t + lead))
        u = np.zeros((n, t))
        for j, b in enumerate(coeffs):
            u += b @ eps[:, lead - j: lead - j + t]
        return u
    # Geometric default: B_j = rho^j B0 with a diagonally-dominant banded B0,
    # which collapses to B0 applied to an AR(1)-filtered innovation stream.
    idx = np.arange(n)
    band = np.abs(idx[:, None] - idx[None, :]) == 1
    b0 = np.eye(n) + spec.delta_eps * band
    eps = rng.standard_normal((n, t + spec.burn_in))
    filtered = lfilter([1.0], [1.0, -spec.rho_u], eps, axis=1)[:, spec.burn_in:]
    return b0 @ filtered


def simulate_error_panel(spec: DgpSpec, rng: np.random.Generator) -> Panel:
    """Generate one balanced error panel according to the spec's case."""
    if spec.case in ("case1_gaussian", "case2_t5"):
        u = _ar1_panel(spec, rng)
    elif spec.case == "garch":
        u = _garch_panel(spec, rng)
    else:
        u = _ma_panel(spec, rng)
    if spec.heteroskedastic:
        u = u * _hetero_scale(spec.n_units)[:, None]
    return Panel(u, np.ones_like(u, dtype=bool))


def simulate_interactive_panel(spec: DgpSpec, rng: np.random.Generator):
    """Interactive-effects data: regressors tied to the factor structure.

    Loadings are uniform on [loading_low, loading_high], factors standard
    normal, and each regressor cell is |loading_i . factor_t| plus unit noise,
    so the regressors correlate with both the loadings and the factors.

    Returns (RegressionData, truth) with truth holding theta0, loadings, factors.
    """
    n, t, p = spec.n_units, spec.n_periods, spec.n_factors
    errors = simulate_error_panel(spec, rng)
    loadings = rng.uniform(spec.loading_low, spec.loading_high, size=(n, p))
    factors = rng.standard_normal((t, p))
    noise = rng.standard_normal((n, t))
    x = np.abs(loadings @ factors.T) + noise
    y = spec.theta0 * x + loadings @ factors.T + errors.values
    data = RegressionData(
        y=Panel(y, np.ones_like(y, dtype=bool)),
        x_panel=x[:, :, None],
        intercept=False,
    )
    truth = {"theta": np.array([spec.theta0]), "loadings": loadings, "factors": factors}
    return data, truth


@dataclass(frozen=True)
class SizeRow:
    """Rejection rate of one (configuration, method, bandwidth multiplier) cell."""

    case: str
    n_units: int
    n_periods: int
    rho_u: float
    delta_eps: float
    method: str
    kernel: str | None
    bandwidth_multiplier: float | None
    size: float
    mc_se: float
    n_reps: int
    n_boot: int
    mean_bandwidth: float | None
    n_failures: int
    flagged: bool
    wall_time_s: float

    def mc_bracket(self, width: float = 4.0) -> tuple[float, float]:
        """Monte Carlo bracket size +- width * mc_se (acceptance checks use 4)."""
        return self.size - width * self.mc_se, self.size + width * self.mc_se


_ROW_FIELDS = [
    "case", "n_units", "n_periods", "rho_u", "delta_eps", "method", "kernel",
    "bandwidth_multiplier", "size", "mc_se", "n_reps", "n_boot",
    "mean_bandwidth", "n_failures", "flagged", "wall_time_s",
]


@dataclass(frozen=True, eq=False)
class SimulationReport:
    """All size rows of one experiment plus the run settings."""

    rows: tuple
    seed: int
    level: float
    ci_method: str

    def row(self, method: str, multiplier: float | None = None, **match) -> SizeRow:
        """First row matching the method (and optional multiplier / cell keys)."""
        for r in self.rows:
            if r.method != method:
                continue
            if multiplier is not None and r.bandwidth_multiplier != multiplier:
                continue
            if any(getattr(r, k) != v for k, v in match.items()):
                continue
            return r
        raise KeyError(f"no row for method={method!r}, multiplier={multiplier!r}, {match!r}")

    def to_json_dict(self, include_timing: bool = True) -> dict:
        fields = [f for f in _ROW_FIELDS if include_timing or f != "wall_time_s"]
        return {
            "seed": self.seed,
            "level": self.level,
            "ci_method": self.ci_method,
            "rows": [{f: getattr(r, f) for f in fields} for r in self.rows],
        }

    def to_csv(self, include_timing: bool = True, provenance: dict | None = None) -> str:
        fields = [f for f in _ROW_FIELDS if include_timing or f != "wall_time_s"]
        buf = StringIO()
        if provenance:
            items = ",".join(f"{k}={v}" for k, v in sorted(provenance.items()))
            buf.write(f"# {items}\n")
        buf.write(",".join(fields) + "\n")
        for r in self.rows:
            cells = []
            for f in fields:
                v = getattr(r, f)
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(format(v, ".10g"))
                else:
                    cells.append(str(v))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _mean_method_rejections(spec, methods, multipliers, n_boot, level, ci_method,
                            floor, seed, cell, rep):
    """One replication of the aggregate-statistic methods on a fresh panel."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, rep, 0)))
    panel = simulate_error_panel(spec, rng)
    stat = aggregate_statistic(panel)
    out = {}
    for name in methods:
        if name.startswith("traditional"):
            variances = traditional_variances(panel)
            s_sq = {"traditional_s1": variances.s1_sq,
                    "traditional_s2": variances.s2_sq,
                    "traditional_s3": variances.s3_sq}[name]
            z = stats.norm.ppf((1.0 + level) / 2.0)
            reject = abs(stat) > z * np.sqrt(max(s_sq, 0.0))
            out[name, None] = (bool(reject), None)
        else:
            kernel = as_kernel("trapezoidal" if name.endswith("trapezoidal") else "bartlett")
            series = weighted_aggregates(panel)
            est = optimal_bandwidth(series, kernel, floor=floor)
            for ki, mult in enumerate(multipliers):
                bandwidth = mult * est.bandwidth
                draw_rng = np.random.default_rng(np.random.SeedSequence(
                    seed, spawn_key=(cell, rep, KNOWN_METHODS[name], ki)))
                xi = draw_xi_matrix(kernel, spec.n_periods, bandwidth, n_boot, draw_rng)
                draws = (series / np.sqrt(spec.n_periods)) @ xi
                lo, hi = confidence_interval(stat, draws, level, ci_method)
                out[name, mult] = (not lo <= 0.0 <= hi, bandwidth)
    return out


def _ie_method_rejections(spec, methods, multipliers, n_boot, level, ci_method,
                          floor, seed, cell, rep):
    """One replication of the interactive-effects size experiment."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, rep, 1)))
    data, truth = simulate_interactive_panel(spec, rng)
    est = bias_corrected_estimate(data, spec.n_factors)
    if not est.converged:
        raise RuntimeError("interactive-effects fit did not converge")
    ubar_hat = cross_section_averages(est.fit.residuals)
    out = {}
    for name in methods:
        kernel = as_kernel("trapezoidal" if name.endswith("trapezoidal") else "bartlett")
        base = optimal_bandwidth(ubar_hat, kernel, floor=floor).bandwidth
        for ki, mult in enumerate(multipliers):
            bandwidth = mult * base
            draw_rng = np.random.default_rng(np.random.SeedSequence(
                seed, spawn_key=(cell, rep, KNOWN_METHODS[name], ki)))
            lo, hi = _ie_draws(data, est, kernel, bandwidth, n_boot, level,
                               ci_method, draw_rng)
            reject = not lo <= truth["theta"][0] <= hi
            out[name, mult] = (bool(reject), bandwidth)
    return out


def _ie_draws(data, est, kernel, bandwidth, n_boot, level, ci_method, rng):
    """Closed-form bootstrap interval for the first slope coefficient."""
    fit = est.fit
    x = data.x_panel
    n_units, n_periods, _ = x.shape
    nn = n_units * n_periods
    loadings = fit.loadings
    gx = np.einsum("np,ntd->ptd", loadings, x)
    a = np.einsum("ntd,nte->de", x, x) - np.einsum("ptd,pte->de", gx, gx) / n_units
    scores = np.einsum("ntd,nt->dt", x, fit.residuals.values)
    xi = draw_xi_matrix(kernel, n_periods, bandwidth, n_boot, rng)
    draws = np.sqrt(nn) * (np.linalg.solve(a, scores) @ xi)[0]
    lo, hi = confidence_interval(0.0, draws, level, ci_method)
    center = float(est.theta_corrected[0])
    return center + lo / np.sqrt(nn), center + hi / np.sqrt(nn)


def run_size_experiment(grid, methods, n_reps: int, n_boot: int, seed: int, *,
                        level: float = 0.95,
                        bandwidth_multipliers=(1.0,),
                        ci_method: str = "symmetric_abs",
                        bandwidth_floor: float = 10.0,
                        threads: int | None = None) -> SimulationReport:
    """Empirical rejection rates of nominal-level intervals over a config grid.

    Parameters
    ----------
    grid : sequence of DgpSpec
        One entry per table cell.
    methods : sequence of str
        Subset of ``KNOWN_METHODS``: bootstrap methods on the aggregate
        statistic, traditional variance baselines, and the interactive-effects
        pipeline.
    n_reps, n_boot : int
        Monte Carlo replications (>= 100) and bootstrap draws per replication.
    seed : int
        Master seed; every replication stream is derived from
        (seed, cell, replication, method, multiplier), so reports are
        identical for any thread count.

    Replications whose estimator fails are recorded, excluded from the
    rejection rate, and flag the row when they exceed 2%.
    """
    if n_reps < 100:
        raise ValueError("need at least 100 replications")
    methods = list(methods)
    unknown = [m for m in methods if m not in KNOWN_METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {sorted(KNOWN_METHODS)}")
    multipliers = tuple(float(m) for m in bandwidth_multipliers)
    mean_methods = [m for m in methods if not m.startswith("ie_")]
    ie_methods = [m for m in methods if m.startswith("ie_")]

    rows = []
    for cell, spec in enumerate(grid):
        start = time.perf_counter()
        results = {}

        def one_rep(rep, _spec=spec, _cell=cell):
            out = {}
            if mean_methods:
                try:
                    out.update(_mean_method_rejections(
                        _spec, mean_methods, multipliers, n_boot, level, ci_method,
                        bandwidth_floor, seed, _cell, rep))
                except (RuntimeError, np.linalg.LinAlgError):
                    for name in mean_methods:
                        slots = [None] if name.startswith("traditional") else multipliers
                        for mult in slots:
                            out[name, mult] = None
            if ie_methods:
                try:
                    out.update(_ie_method_rejections(
                        _spec, ie_methods, multipliers, n_boot, level, ci_method,
                        bandwidth_floor, seed, _cell, rep))
                except (RuntimeError, np.linalg.LinAlgError):
                    for name in ie_methods:
                        for mult in multipliers:
                            out[name, mult] = None
            return out

        if threads is not None and threads <= 1:
            per_rep = [one_rep(r) for r in range(n_reps)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_rep = list(pool.map(one_rep, range(n_reps)))
        elapsed = time.perf_counter() - start

        keys = []
        for name in methods:
            if name.startswith("traditional"):
                keys.append((name, None))
            else:
                keys.extend((name, mult) for mult in multipliers)
        for key in keys:
            rejections = []
            bandwidths = []
            n_failures = 0
            for rep_out in per_rep:
                entry = rep_out.get(key)
                if entry is None:
                    n_failures += 1
                    continue
                reject, bandwidth = entry
                rejections.append(reject)
                if bandwidth is not None:
                    bandwidths.append(bandwidth)
            n_eff = len(rejections)
            size = float(np.mean(rejections)) if n_eff else float("nan")
            name, mult = key
            rows.append(SizeRow(
                case=spec.case, n_units=spec.n_units, n_periods=spec.n_periods,
                rho_u=spec.rho_u, delta_eps=spec.delta_eps, method=name,
                kernel=None if name.startswith("traditional")
                else ("trapezoidal" if name.endswith("trapezoidal") else "bartlett"),
                bandwidth_multiplier=mult,
                size=size,
                mc_se=float(np.sqrt(size * (1.0 - size) / n_eff)) if n_eff else float("nan"),
                n_reps=n_eff, n_boot=n_boot,
                mean_bandwidth=float(np.mean(bandwidths)) if bandwidths else None,
                n_failures=n_failures,
                flagged=n_failures > 0.02 * n_reps,
                wall_time_s=elapsed,
            ))
    return SimulationReport(rows=tuple(rows), seed=seed, level=level, ci_method=ci_method)
