"""Classical comparison variances, the second-order CDF refinement, and residual tests.

The three traditional variance estimators are each consistent only under
independence along one or both panel dimensions, which is exactly what the
bootstrap does not assume; they serve as the over-rejection baselines in the
size studies.  The diagnostics mirror the empirical workflow: a portmanteau
autocorrelation test per unit and a pairwise-correlation statistic across
units that is standard normal under cross-sectional independence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .panel import Panel

__all__ = [
    "TraditionalVariances",
    "LjungBoxResult",
    "CdResult",
    "DiagnosticsReport",
    "traditional_variances",
    "edgeworth_cdf",
    "ljung_box_test",
    "cd_test",
    "diagnose_panel",
]


class TraditionalVariances(NamedTuple):
    s1_sq: float  # consistent under independence over (i, t)
    s2_sq: float  # consistent when independent across units
    s3_sq: float  # consistent when independent across periods


def traditional_variances(panel: Panel) -> TraditionalVariances:
    """The three classical variance estimates over observed cells.

    s1 sums squared cells; s2 sums per-unit squared period-sums; s3 sums
    per-period squared unit-sums; all normalized by the observed cell count.
    """
    values = panel.values  # masked cells are zero
    nn = panel.n_observed
    s1 = float(np.sum(values**2)) / nn
    s2 = float(np.sum(values.sum(axis=1) ** 2)) / nn
    s3 = float(np.sum(values.sum(axis=0) ** 2)) / nn
    return TraditionalVariances(s1, s2, s3)


def edgeworth_cdf(w, s: float, kappa3: float):
    """Second-order refinement of the normal CDF for the aggregate statistic.

    ``Phi(w/s) + (1/6) kappa3 (1 - w^2/s^2) phi(w/s)`` with s the statistic's
    standard deviation and kappa3 its third moment.  The value may leave [0, 1]
    slightly for large |kappa3|; it is reported unclipped because clipping
    would mask exactly the deviation the refinement is meant to show.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    w = np.asarray(w, dtype=np.float64)
    z = w / s
    out = stats.norm.cdf(z) + kappa3 / 6.0 * (1.0 - z**2) * stats.norm.pdf(z)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LjungBoxResult:
    statistic: float
    df: int
    p_value: float


def ljung_box_test(series: np.ndarray, n_lags: int) -> LjungBoxResult:
    """Portmanteau autocorrelation test Q = T (T+2) sum_k rho_k^2 / (T - k).

    Upper-tail chi-square p-value with ``n_lags`` degrees of freedom.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if not 1 <= n_lags < n:
        raise ValueError(f"need 1 <= n_lags < T (got {n_lags}, T={n})")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise ValueError("series is constant; autocorrelation undefined")
    q = 0.0
    for k in range(1, n_lags + 1):
        rho = float(centered[: n - k] @ centered[k:]) / denom
        q += rho**2 / (n - k)
    q *= n * (n + 2.0)
    return LjungBoxResult(statistic=q, df=n_lags, p_value=float(stats.chi2.sf(q, n_lags)))


@dataclass(frozen=True)
class CdResult:
    statistic: float
    pairs_used: int
    pairs_skipped: int


def cd_test(panel: Panel, min_overlap: int = 3) -> CdResult:
    """Pairwise-correlation statistic for cross-sectional dependence.

    ``sqrt(2 / (N (N-1))) sum_{i<j} sqrt(T_ij) rho_ij`` over pairs whose
    overlap T_ij reaches ``min_overlap``; standard normal under independence.
    Pairs with shorter overlap (or a degenerate overlap sample) are skipped
    and counted.
    """
    n_units = panel.n_units
    if n_units < 2:
        raise ValueError("need at least 2 units")
    values, observed = panel.values, panel.observed
    total = 0.0
    used = skipped = 0
    for i in range(n_units - 1):
        for j in range(i + 1, n_units):
            overlap = observed[i] & observed[j]
            t_ij = int(overlap.sum())
            if t_ij < min_overlap:
                skipped += 1
                continue
            xi = values[i, overlap]
            xj = values[j, overlap]
            xi = xi - xi.mean()
            xj = xj - xj.mean()
            denom = np.sqrt(float(xi @ xi) * float(xj @ xj))
            if denom == 0.0:
                skipped += 1
                continue
            rho = float(xi @ xj) / denom
            total += np.sqrt(t_ij) * rho
            used += 1
    if used == 0:
        raise ValueError(f"no unit pair has overlap >= {min_overlap}")
    stat = np.sqrt(2.0 / (n_units * (n_units - 1.0))) * total
    return CdResult(statistic=float(stat), pairs_used=used, pairs_skipped=skipped)


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    """Per-unit autocorrelation tests plus the cross-sectional dependence statistic."""

    ljung_box: list
    rejection_fraction: float
    alpha: float
    n_units_tested: int
    n_units_skipped: int
    cd: CdResult

    def to_json_dict(self) -> dict:
        return {
            "ljung_box": {
                "alpha": self.alpha,
                "rejection_fraction": self.rejection_fraction,
                "n_units_tested": self.n_units_tested,
                "n_units_skipped": self.n_units_skipped,
                "per_unit": [
                    {"statistic": r.statistic, "df": r.df, "p_value": r.p_value}
                    for r in self.ljung_box
                ],
            },
            "cd_test": {
                "statistic": self.cd.statistic,
                "pairs_used": self.cd.pairs_used,
                "pairs_skipped": self.cd.pairs_skipped,
            },
        }


def diagnose_panel(panel: Panel, n_lags: int | None = None, alpha: float = 0.05) -> DiagnosticsReport:
    """Run the per-unit portmanteau test and the pairwise CD test on a residual panel.

    Each unit is tested on its observed values in period order; the default
    lag count is min(10, floor(T_i / 5)) per unit.  Units too short or
    constant are skipped and counted.
    """
    results = []
    rejected = 0
    skipped = 0
    for i in range(panel.n_units):
        series = panel.values[i, panel.observed[i]]
        lags = n_lags if n_lags is not None else min(10, series.size // 5)
        if lags < 1 or series.size <= lags:
            skipped += 1
            continue
        try:
            res = ljung_box_test(series, lags)
        except ValueError:
            skipped += 1
            continue
        results.append(res)
        rejected += res.p_value < alpha
    if not results:
        raise ValueError("no unit has enough observations for the autocorrelation test")
    return DiagnosticsReport(
        ljung_box=results,
        rejection_fraction=rejected / len(results),
        alpha=alpha,
        n_units_tested=len(results),
        n_units_skipped=skipped,
        cd=cd_test(panel),
    )
