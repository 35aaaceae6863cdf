"""MSE-optimal bandwidth for the multiplier dependence, with its data-driven plug-in.

The optimum balances the kernel-order bias of the HAC variance against its
O(bandwidth / T) variance:

    l_opt = (q c_q^2 D1^2 / D2)^(1/(2q+1)) T^(1/(2q+1)),

estimated by a truncated weighted autocovariance sum (D1) and a pilot HAC
variance squared times the kernel's squared integral (D2), then floored at a
fixed minimum so small samples never get an unreasonably short bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import hac_variance
from .kernels import KernelSpec, as_kernel

__all__ = [
    "BandwidthEstimate",
    "truncation_lag_count",
    "pilot_bandwidth",
    "delta1_hat",
    "delta2_hat",
    "optimal_bandwidth",
]

DEFAULT_FLOOR = 10.0


@dataclass(frozen=True)
class BandwidthEstimate:
    """Selected bandwidth plus every intermediate of the plug-in rule."""

    bandwidth: float        # floored selection, max(raw, floor)
    raw_bandwidth: float
    delta1: float
    delta2: float
    q: int
    c_q: float
    truncation_lags: int
    pilot_bandwidth: float
    floor: float
    n_periods: int
    kernel: str

    def to_json_dict(self) -> dict:
        return {
            "bandwidth": self.bandwidth,
            "raw_bandwidth": self.raw_bandwidth,
            "delta1_hat": self.delta1,
            "delta2_hat": self.delta2,
            "q": self.q,
            "c_q": self.c_q,
            "truncation_lags": self.truncation_lags,
            "pilot_bandwidth": self.pilot_bandwidth,
            "floor": self.floor,
            "n_periods": self.n_periods,
            "kernel": self.kernel,
        }


def truncation_lag_count(n_periods: int, q: int) -> int:
    """Autocovariance truncation Q_T = floor(T^(2/(4q+5))), at least 1."""
    return max(int(np.floor(n_periods ** (2.0 / (4.0 * q + 5.0)))), 1)


def pilot_bandwidth(n_periods: int, q: int) -> float:
    """Pilot rate T^(1/3) for q=1 and T^(1/5) for q=2, floored at 2."""
    nu = 1.0 / 3.0 if q == 1 else 1.0 / 5.0
    return max(float(n_periods) ** nu, 2.0)


def delta1_hat(ubar: np.ndarray, q: int, n_lags: int) -> float:
    """Weighted autocovariance sum 2 sum_{k=1..Q} (k^q / T) sum_t ubar_t ubar_{t+k}."""
    u = np.asarray(ubar, dtype=np.float64)
    n = u.size
    if not 1 <= n_lags < n:
        raise ValueError(f"n_lags must satisfy 1 <= n_lags < T (got {n_lags}, T={n})")
    total = 0.0
    for k in range(1, n_lags + 1):
        total += (float(k) ** q / n) * float(u[: n - k] @ u[k:])
    return 2.0 * total


def delta2_hat(ubar: np.ndarray, kernel: KernelSpec | str, q: int | None = None) -> float:
    """Pilot HAC variance squared times the kernel's squared integral."""
    spec = as_kernel(kernel)
    u = np.asarray(ubar, dtype=np.float64)
    if u.size < 8:
        raise ValueError("need at least 8 periods for the pilot bandwidth")
    pilot = pilot_bandwidth(u.size, q if q is not None else spec.q)
    return hac_variance(u, spec, pilot) ** 2 * spec.sq_integral


def optimal_bandwidth(ubar: np.ndarray, kernel: KernelSpec | str,
                      floor: float = DEFAULT_FLOOR,
                      n_lags: int | None = None) -> BandwidthEstimate:
    """Data-driven MSE-optimal bandwidth for the given aggregate series.

    Parameters
    ----------
    ubar : ndarray
        Per-period aggregate series (residual aggregates for fitted models).
    kernel : KernelSpec or str
        Kernel whose q, c_q and squared integral drive the rule.
    floor : float
        Lower bound on the selection (default 10).
    n_lags : int, optional
        Override of the truncation count Q_T.
    """
    spec = as_kernel(kernel)
    u = np.asarray(ubar, dtype=np.float64)
    n = u.size
    if n < 16:
        raise ValueError("need at least 16 periods to select a bandwidth")
    q = spec.q
    lags = truncation_lag_count(n, q) if n_lags is None else int(n_lags)
    d1 = delta1_hat(u, q, lags)
    d2 = delta2_hat(u, spec, q)
    if not np.isfinite(d2) or d2 <= 0.0:
        raise RuntimeError(f"pilot variance estimate is degenerate (delta2={d2!r})")
    raw = (q * spec.c_q**2 * d1**2 / d2) ** (1.0 / (2.0 * q + 1.0)) * n ** (1.0 / (2.0 * q + 1.0))
    return BandwidthEstimate(
        bandwidth=float(max(raw, floor)),
        raw_bandwidth=float(raw),
        delta1=float(d1),
        delta2=float(d2),
        q=q,
        c_q=spec.c_q,
        truncation_lags=lags,
        pilot_bandwidth=pilot_bandwidth(n, q),
        floor=float(floor),
        n_periods=n,
        kernel=spec.family,
    )
