"""Kernel families, their constants, and the multiplier covariance."""

import numpy as np
import pytest

from panelboot.kernels import (
    KERNEL_FAMILIES,
    cq_limit_sequence,
    estimate_cq,
    make_kernel,
    xi_covariance,
)


class TestMakeKernel:
    def test_bartlett_constants(self):
        k = make_kernel("bartlett")
        assert k.q == 1
        assert k.c_q == 1.0
        assert k.sq_integral == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_parzen_constants(self):
        k = make_kernel("parzen")
        assert k.q == 2
        assert k.c_q == 6.0
        # independent quadrature oracle for the squared integral
        from scipy.integrate import quad

        oracle, _ = quad(lambda x: k.evaluate(x) ** 2, -1, 1, points=[-0.5, 0.0, 0.5], limit=200)
        assert k.sq_integral == pytest.approx(oracle, rel=1e-9)

    def test_trapezoidal_constants(self):
        k = make_kernel("trapezoidal")
        assert k.q == 2
        assert 0 < k.c_q < np.inf
        assert 0 < k.sq_integral < 2.0

    def test_unsupported_family(self):
        with pytest.raises(ValueError, match="unsupported kernel family"):
            make_kernel("tukey")

    def test_specs_cached(self):
        assert make_kernel("bartlett") is make_kernel("bartlett")


class TestEvaluate:
    def test_bartlett_formula(self):
        k = make_kernel("bartlett")
        assert k.evaluate(0.5) == 0.5
        assert k.evaluate(-0.25) == 0.75

    @pytest.mark.parametrize("family", KERNEL_FAMILIES)
    def test_endpoints(self, family):
        k = make_kernel(family)
        assert k.evaluate(0.0) == pytest.approx(1.0, abs=1e-12)
        assert k.evaluate(1.5) == 0.0
        assert k.evaluate(-1.5) == 0.0

    @pytest.mark.parametrize("family", KERNEL_FAMILIES)
    def test_symmetry_and_bounds(self, family):
        k = make_kernel(family)
        x = np.linspace(-1.5, 1.5, 601)
        vals = k.evaluate(x)
        np.testing.assert_array_equal(vals, k.evaluate(-x))
        assert np.all(np.abs(vals) <= 1.0 + 1e-12)

    @pytest.mark.parametrize("family", KERNEL_FAMILIES)
    def test_lipschitz_bound(self, family):
        # generous constant 2 on a fine grid
        k = make_kernel(family)
        x = np.linspace(-1.2, 1.2, 2401)
        vals = k.evaluate(x)
        assert np.max(np.abs(np.diff(vals))) <= 2.0 * (x[1] - x[0]) + 1e-12

    def test_trapezoidal_against_quadrature_oracle(self):
        # independent route: fixed-grid trapezoid integration of the defining
        # self-correlation of the piecewise-linear weight
        def weight(u):
            out = np.zeros_like(u)
            out = np.where((u >= 0) & (u < 0.43), u / 0.43, out)
            out = np.where((u >= 0.43) & (u <= 0.57), 1.0, out)
            out = np.where((u > 0.57) & (u <= 1.0), (1.0 - u) / 0.43, out)
            return out

        u = np.linspace(0.0, 1.0, 200_001)
        denom = np.trapezoid(weight(u) ** 2, u)
        k = make_kernel("trapezoidal")
        for x in (0.25, 0.1, 0.6, 0.9):
            num = np.trapezoid(weight(u) * weight(u + x), u)
            assert k.evaluate(x) == pytest.approx(num / denom, abs=1e-4)
            assert k.evaluate_exact(x) == pytest.approx(num / denom, abs=1e-6)


class TestXiCovariance:
    def test_unit_bandwidth_gives_identity(self):
        sigma = xi_covariance("bartlett", 6, 1.0)
        np.testing.assert_allclose(sigma, np.eye(6))

    def test_bartlett_small_case(self):
        sigma = xi_covariance("bartlett", 3, 2.0)
        np.testing.assert_allclose(sigma[0], [1.0, 0.5, 0.0])
        np.testing.assert_allclose(np.diag(sigma), 1.0)

    @pytest.mark.parametrize("family", KERNEL_FAMILIES)
    @pytest.mark.parametrize("n_periods", [50, 200, 500])
    @pytest.mark.parametrize("bandwidth", [5.0, 10.0, 25.0])
    def test_positive_semidefinite_grid(self, family, n_periods, bandwidth):
        sigma = xi_covariance(family, n_periods, bandwidth)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-8

    def test_banded_support(self):
        sigma = xi_covariance("bartlett", 30, 4.0)
        assert np.all(sigma[0, 5:] == 0.0)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            xi_covariance("bartlett", 0, 2.0)
        with pytest.raises(ValueError):
            xi_covariance("bartlett", 5, 0.0)


class TestEstimateCq:
    def test_bartlett_q1(self):
        assert estimate_cq("bartlett", 1) == pytest.approx(1.0, abs=1e-6)

    def test_bartlett_q2_diverges(self):
        with pytest.raises(ValueError, match="did not converge"):
            estimate_cq("bartlett", 2)

    def test_parzen_q2(self):
        assert estimate_cq("parzen", 2) == pytest.approx(6.0, abs=1e-3)

    def test_trapezoidal_q2_stable(self):
        value = estimate_cq("trapezoidal", 2)
        assert 0 < value < np.inf
        seq = cq_limit_sequence("trapezoidal", 2)
        tail = seq[-3:]
        assert np.max(np.abs(tail - tail[-1])) <= 0.01 * abs(tail[-1])

    @pytest.mark.parametrize("family", KERNEL_FAMILIES)
    def test_cached_cq_matches_limit(self, family):
        k = make_kernel(family)
        assert estimate_cq(k, k.q) == pytest.approx(k.c_q, abs=1e-3)

    def test_rejects_bad_q(self):
        with pytest.raises(ValueError):
            estimate_cq("bartlett", 3)
