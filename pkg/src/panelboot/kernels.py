"""Kernel functions driving the bootstrap multiplier covariance.

Each kernel is a symmetric taper ``a(.)`` supported on [-1, 1] with
``a(0) = 1`` whose Toeplitz extension ``{a((t - s) / bandwidth)}`` is positive
semidefinite.  The derived constants exposed on :class:`KernelSpec` (the
characteristic exponent ``q``, the curvature constant ``c_q`` and the squared
integral of the kernel) feed the MSE-optimal bandwidth rule.

Supported families: ``bartlett`` (q=1), ``parzen`` (q=2), and the flat-top
``trapezoidal`` taper (q=2) defined through the self-correlation of a
piecewise-linear weight with knots at 0.43 and 0.57.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz

__all__ = [
    "KERNEL_FAMILIES",
    "KernelSpec",
    "make_kernel",
    "xi_covariance",
    "estimate_cq",
    "cq_limit_sequence",
]

KERNEL_FAMILIES = ("bartlett", "parzen", "trapezoidal")

# Bartlett: 2 * int_0^1 (1-x)^2 dx; Parzen: closed form of the piecewise cubic.
_BARTLETT_SQ_INTEGRAL = 2.0 / 3.0
_PARZEN_SQ_INTEGRAL = 151.0 / 280.0

# Knots of the trapezoidal weight and grid step of its evaluation cache.
_TRAP_LO = 0.43
_TRAP_HI = 0.57
_TRAP_GRID_STEP = 1e-3
# int w(u)^2 du = 2 * lo/3 + (hi - lo), exact for the piecewise-linear weight.
_TRAP_WEIGHT_SQ = 2.0 * _TRAP_LO / 3.0 + (_TRAP_HI - _TRAP_LO)


def _trap_weight(u: np.ndarray) -> np.ndarray:
    """Piecewise-linear weight: ramp up on [0, lo), flat on [lo, hi], ramp down."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    up = (u >= 0.0) & (u < _TRAP_LO)
    flat = (u >= _TRAP_LO) & (u <= _TRAP_HI)
    down = (u > _TRAP_HI) & (u <= 1.0)
    out[up] = u[up] / _TRAP_LO
    out[flat] = 1.0
    out[down] = (1.0 - u[down]) / _TRAP_LO
    return out


def _w_scalar(u: float) -> float:
    if u < 0.0 or u > 1.0:
        return 0.0
    if u < _TRAP_LO:
        return u / _TRAP_LO
    if u <= _TRAP_HI:
        return 1.0
    return (1.0 - u) / _TRAP_LO


def _trap_numerator(x: float) -> float:
    """Adaptive quadrature of int_0^{1-x} w(u) w(u + x) du for x in [0, 1]."""
    x = float(abs(x))
    if x >= 1.0:
        return 0.0
    hi = 1.0 - x
    breaks = sorted(
        b
        for b in (_TRAP_LO, _TRAP_HI, _TRAP_LO - x, _TRAP_HI - x)
        if 0.0 < b < hi
    )
    val, _ = integrate.quad(
        lambda u: _w_scalar(u) * _w_scalar(u + x),
        0.0,
        hi,
        points=breaks or None,
        limit=200,
        epsabs=1e-13,
        epsrel=1e-11,
    )
    return val


def _trap_exact(x: float) -> float:
    return _trap_numerator(x) / _TRAP_WEIGHT_SQ


def _bartlett(x: np.ndarray) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=np.float64))
    return np.maximum(0.0, 1.0 - ax)


def _parzen(x: np.ndarray) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(
        ax <= 0.5,
        1.0 - 6.0 * ax**2 + 6.0 * ax**3,
        np.where(ax <= 1.0, 2.0 * (1.0 - ax) ** 3, 0.0),
    )


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel family with its derived bandwidth constants.

    Attributes
    ----------
    family : str
        One of ``bartlett``, ``parzen``, ``trapezoidal``.
    q : int
        Characteristic exponent: the order of the kernel's curvature at 0.
    c_q : float
        Limit of ``(1 - a(x)) / |x|^q`` as ``x -> 0``.
    sq_integral : float
        ``int_{-1}^{1} a(x)^2 dx``.
    """

    family: str
    q: int
    c_q: float
    sq_integral: float
    _grid_x: np.ndarray | None = field(default=None, repr=False)
    _grid_y: np.ndarray | None = field(default=None, repr=False)

    def evaluate(self, x):
        """Evaluate a(x) elementwise; scalars in, scalar out.

        The trapezoidal family interpolates linearly on a cached grid with
        step 1e-3; use :meth:`evaluate_exact` when machine-precision values at
        arbitrary points are needed.
        """
        arr = np.asarray(x, dtype=np.float64)
        if self.family == "bartlett":
            out = _bartlett(arr)
        elif self.family == "parzen":
            out = _parzen(arr)
        else:
            ax = np.abs(arr)
            out = np.where(ax >= 1.0, 0.0, np.interp(ax, self._grid_x, self._grid_y))
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    def evaluate_exact(self, x: float) -> float:
        """Evaluate a single point without the interpolation cache."""
        if self.family == "bartlett":
            return float(_bartlett(np.asarray(x)))
        if self.family == "parzen":
            return float(_parzen(np.asarray(x)))
        return _trap_exact(float(x))

    def __call__(self, x):
        return self.evaluate(x)


def _trap_sq_integral(grid_x: np.ndarray, grid_y: np.ndarray) -> float:
    # 2 * int_0^1 a(x)^2 dx on the cached grid; Simpson on the uniform grid is
    # accurate to ~1e-8, well beyond what the bandwidth rule needs.
    return 2.0 * float(integrate.simpson(grid_y**2, x=grid_x))


@lru_cache(maxsize=None)
def make_kernel(family: str) -> KernelSpec:
    """Build the :class:`KernelSpec` for a supported family name.

    The trapezoidal spec precomputes its evaluation grid by adaptive
    quadrature at construction (cached per process); its ``c_q`` and
    ``sq_integral`` are computed numerically from that exact evaluation.
    """
    name = family.strip().lower()
    if name == "bartlett":
        return KernelSpec("bartlett", q=1, c_q=1.0, sq_integral=_BARTLETT_SQ_INTEGRAL)
    if name == "parzen":
        return KernelSpec("parzen", q=2, c_q=6.0, sq_integral=_PARZEN_SQ_INTEGRAL)
    if name == "trapezoidal":
        grid_x = np.arange(0.0, 1.0 + 0.5 * _TRAP_GRID_STEP, _TRAP_GRID_STEP)
        grid_y = np.array([_trap_exact(x) for x in grid_x])
        grid_y[-1] = 0.0
        c2 = _limit_ratio(_trap_exact, q=2)
        spec = KernelSpec(
            "trapezoidal",
            q=2,
            c_q=c2,
            sq_integral=_trap_sq_integral(grid_x, grid_y),
            _grid_x=grid_x,
            _grid_y=grid_y,
        )
        return spec
    raise ValueError(f"unsupported kernel family: {family!r}; choose from {KERNEL_FAMILIES}")


def as_kernel(kernel: KernelSpec | str) -> KernelSpec:
    """Coerce a family name or spec to a :class:`KernelSpec`."""
    if isinstance(kernel, KernelSpec):
        return kernel
    return make_kernel(kernel)


def xi_covariance(kernel: KernelSpec | str, n_periods: int, bandwidth: float) -> np.ndarray:
    """Multiplier covariance: the Toeplitz matrix ``a((t - s) / bandwidth)``.

    Unit diagonal, banded with half-bandwidth ``ceil(bandwidth)`` because the
    kernel vanishes outside [-1, 1].
    """
    spec = as_kernel(kernel)
    if n_periods < 1:
        raise ValueError("n_periods must be positive")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    col = spec.evaluate(np.arange(n_periods, dtype=np.float64) / float(bandwidth))
    return toeplitz(col)


def _limit_ratio(evaluate, q: int, k_min: int = 4, k_max: int = 20, tol: float = 1e-3):
    """Limit of (1 - a(x)) / |x|^q along x = 2^-k with a convergence check."""
    seq = []
    for k in range(k_min, k_max + 1):
        x = 2.0**-k
        seq.append((1.0 - evaluate(x)) / x**q)
        if len(seq) >= 3 and abs(seq[-1] - seq[-2]) <= tol and abs(seq[-2] - seq[-3]) <= tol:
            return float(seq[-1])
    raise ValueError(
        f"(1 - a(x)) / |x|^{q} did not converge along x = 2^-k "
        f"(last values {seq[-3:]}); kernel inconsistent with q={q}"
    )


def cq_limit_sequence(kernel: KernelSpec | str, q: int, k_min: int = 4, k_max: int = 14) -> np.ndarray:
    """The sequence (1 - a(2^-k)) / 2^-kq for k = k_min..k_max, exact evaluation."""
    spec = as_kernel(kernel)
    ks = np.arange(k_min, k_max + 1)
    return np.array([(1.0 - spec.evaluate_exact(2.0 ** -int(k))) / (2.0 ** -int(k)) ** q for k in ks])


def estimate_cq(kernel: KernelSpec | str, q: int) -> float:
    """Numeric limit defining c_q; raises if the sequence does not settle.

    Serves as the oracle validating the cached ``c_q`` of each spec: a kernel
    whose exponent is not ``q`` (e.g. Bartlett probed with q=2) diverges and is
    rejected.
    """
    if q not in (1, 2):
        raise ValueError("q must be 1 or 2")
    spec = as_kernel(kernel)
    return _limit_ratio(spec.evaluate_exact, q=q)
