"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are pinned here and nowhere else.
"""

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from panelboot.bandwidth import optimal_bandwidth
from panelboot.bootstrap import DwbConfig, draw_xi_matrix, dwb_mean_inference, hac_variance
from panelboot.cli import main as cli_main
from panelboot.diagnostics import cd_test, edgeworth_cdf, ljung_box_test
from panelboot.interactive import bias_corrected_estimate, fit_interactive, ie_bootstrap_infer
from panelboot.kernels import (
    KERNEL_FAMILIES,
    cq_limit_sequence,
    estimate_cq,
    make_kernel,
    xi_covariance,
)
from panelboot.panel import Panel, RegressionData
from panelboot.simulate import DgpSpec, run_size_experiment, simulate_interactive_panel

SEED = 20_240_817


def check(criterion: int, description: str, ok: bool):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {description}")
    assert ok, f"criterion {criterion}: {description}"


@pytest.fixture(scope="module")
def table1_cell_report():
    spec = DgpSpec(case="case1_gaussian", n_units=100, n_periods=100,
                   rho_u=0.25, delta_eps=0.5)
    return run_size_experiment(
        [spec], ["dwb_bartlett", "traditional_s1", "traditional_s2"],
        n_reps=500, n_boot=199, seed=SEED,
    )


def test_criterion_01_dwb_size_replication(table1_cell_report):
    size = table1_cell_report.row("dwb_bartlett", 1.0).size
    check(1, f"Case-1 DWB Bartlett size {size:.3f} in [0.010, 0.085] "
             "(N=T=100, R=500, R_boot=199)",
          0.010 <= size <= 0.085)


def test_criterion_02_traditional_over_rejection(table1_cell_report):
    s1 = table1_cell_report.row("traditional_s1").size
    s2 = table1_cell_report.row("traditional_s2").size
    check(2, f"traditional sizes s1 {s1:.3f} >= 0.25 and s2 {s2:.3f} >= 0.15",
          s1 >= 0.25 and s2 >= 0.15)


def test_criterion_03_interactive_effects_size():
    spec = DgpSpec(case="case1_gaussian", n_units=200, n_periods=200,
                   rho_u=0.25, delta_eps=0.5)
    report = run_size_experiment([spec], ["ie_dwb"], n_reps=300, n_boot=199, seed=SEED)
    row = report.row("ie_dwb", 1.0)
    check(3, f"interactive-effects size {row.size:.3f} in [0.03, 0.14] "
             f"(N=T=200, R=300, failures {row.n_failures})",
          0.03 <= row.size <= 0.14 and row.n_failures == 0)


def test_criterion_04_bias_correction_effect():
    def one(r):
        spec = DgpSpec(case="case1_gaussian", n_units=100, n_periods=100,
                       rho_u=0.25, delta_eps=0.5)
        data, truth = simulate_interactive_panel(
            spec, np.random.default_rng(np.random.SeedSequence(SEED, spawn_key=(4, r))))
        est = bias_corrected_estimate(data, 2)
        return est.theta[0], est.theta_corrected[0]

    with ThreadPoolExecutor(4) as pool:
        out = list(pool.map(one, range(300)))
    raw = np.array([o[0] for o in out])
    corrected = np.array([o[1] for o in out])
    raw_gap = abs(raw.mean() - 1.0)
    corrected_gap = abs(corrected.mean() - 1.0)
    raw_se = raw.std(ddof=1) / np.sqrt(len(raw))
    # Second clause is expected to fail: in this design the first-order bias
    # functionals vanish by symmetry (E[|z| z] = 0), so the raw estimator is
    # already unbiased to within Monte Carlo noise.  See the decisions ledger;
    # the criterion is asserted as stated rather than weakened.
    check(4, f"bias correction: |mean(corrected)-1| {corrected_gap:.5f} < "
             f"|mean(raw)-1| {raw_gap:.5f} and raw gap > 2*se ({2 * raw_se:.5f})",
          corrected_gap < raw_gap and raw_gap > 2.0 * raw_se)


def test_criterion_05_hac_bootstrap_identity():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for k in range(20):
        n_periods = int(rng.integers(60, 200))
        bandwidth = float(rng.uniform(4.0, 18.0))
        kernel = make_kernel(KERNEL_FAMILIES[k % 3])
        series = rng.standard_normal(n_periods) * rng.uniform(0.5, 2.0)
        xi = draw_xi_matrix(kernel, n_periods, bandwidth, 20_000, rng)
        draws = (series / np.sqrt(n_periods)) @ xi
        target = hac_variance(series, kernel, bandwidth)
        worst = max(worst, abs(float(draws.var()) - target) / abs(target))
    check(5, f"bootstrap draw variance vs HAC on 20 fixtures, worst rel err {worst:.4f} <= 0.05",
          worst <= 0.05)


def test_criterion_06_banded_equals_brute_force():
    rng = np.random.default_rng(SEED + 6)
    worst = 0.0
    for k in range(50):
        n_periods = int(rng.integers(40, 300))
        bandwidth = float(rng.uniform(1.5, 30.0))
        kernel = make_kernel(KERNEL_FAMILIES[k % 3])
        series = rng.standard_normal(n_periods) * np.exp(rng.uniform(-1, 1))
        lags = np.arange(n_periods)
        weights = kernel.evaluate((lags[:, None] - lags[None, :]) / bandwidth)
        brute = float(series @ weights @ series) / n_periods
        banded = hac_variance(series, kernel, bandwidth)
        worst = max(worst, abs(banded - brute) / max(abs(brute), 1e-300))
    check(6, f"banded HAC vs brute force on 50 fixtures, worst rel err {worst:.2e} <= 1e-12",
          worst <= 1e-12)


def test_criterion_07_multiplier_law():
    xi = draw_xi_matrix("bartlett", 100, 10.0, 20_000, np.random.default_rng(SEED + 7))
    moment = float(np.mean(xi[30] * xi[35]))
    min_eig = np.inf
    for family in KERNEL_FAMILIES:
        for n_periods in (50, 200, 500):
            for bandwidth in (5.0, 10.0, 25.0):
                sigma = xi_covariance(family, n_periods, bandwidth)
                min_eig = min(min_eig, float(np.linalg.eigvalsh(sigma).min()))
    check(7, f"lag-5 multiplier moment {moment:.3f} = 0.5 +- 0.02; "
             f"min covariance eigenvalue {min_eig:.2e} >= -1e-8",
          abs(moment - 0.5) <= 0.02 and min_eig >= -1e-8)


def test_criterion_08_kernel_constants():
    bartlett = make_kernel("bartlett")
    c1 = estimate_cq(bartlett, 1)
    sq_err = abs(bartlett.sq_integral - 2.0 / 3.0)
    seq = cq_limit_sequence("trapezoidal", 2)
    tail = seq[-3:]
    stable = np.max(np.abs(tail - tail[-1])) <= 0.01 * abs(tail[-1])
    check(8, f"Bartlett c_1 {c1:.6f} = 1 +- 1e-3; sq integral err {sq_err:.1e} <= 1e-9; "
             f"trapezoidal c_2 limit tail {np.round(tail, 4).tolist()} stable to 1%",
          abs(c1 - 1.0) <= 1e-3 and sq_err <= 1e-9 and stable)


def test_criterion_09_bandwidth_rate():
    ratios = []
    for r in range(100):
        rng = np.random.default_rng(np.random.SeedSequence(SEED, spawn_key=(9, r)))
        eps = rng.standard_normal(3400)
        series = np.empty(3400)
        series[0] = eps[0]
        for t in range(1, 3400):
            series[t] = 0.5 * series[t - 1] + eps[t]
        series = series[200:]
        small = optimal_bandwidth(series[:400], "bartlett").raw_bandwidth
        big = optimal_bandwidth(series, "bartlett").raw_bandwidth
        ratios.append(big / small)
    ratio = float(np.median(ratios))
    check(9, f"median raw-bandwidth ratio T=3200/T=400 is {ratio:.2f} in [1.5, 2.9]",
          1.5 <= ratio <= 2.9)


def test_criterion_10_interactive_effects_exactness():
    rng = np.random.default_rng(SEED + 10)
    n = t = 40
    loadings = rng.uniform(0.2, 2.2, (n, 2))
    factors = rng.standard_normal((t, 2))
    x = np.abs(loadings @ factors.T) + rng.standard_normal((n, t))
    theta0 = 1.0
    data = RegressionData(
        y=Panel(theta0 * x + loadings @ factors.T, np.ones((n, t), dtype=bool)),
        x_panel=x[:, :, None], intercept=False,
    )
    fit = fit_interactive(data, 2)
    recovery_err = abs(fit.theta[0] - theta0)

    # objective nonincreasing on every recorded iteration of every fit here
    fits = [fit]
    for r in range(10):
        spec = DgpSpec(case="case1_gaussian", n_units=35, n_periods=45)
        noisy_data, _ = simulate_interactive_panel(
            spec, np.random.default_rng(np.random.SeedSequence(SEED, spawn_key=(10, r))))
        fits.append(fit_interactive(noisy_data, 2))
    monotone = all(
        np.all(np.diff(f.objective_path) <= 1e-8 * np.maximum(1.0, np.abs(f.objective_path[:-1])))
        for f in fits
    )

    spec = DgpSpec(case="case1_gaussian", n_units=30, n_periods=40)
    jk_data, _ = simulate_interactive_panel(spec, np.random.default_rng(SEED + 11))
    est = bias_corrected_estimate(jk_data, 2)
    half = jk_data.y.n_periods // 2
    theta_s1 = fit_interactive(jk_data.slice_periods(0, half), 2).theta
    theta_s2 = fit_interactive(jk_data.slice_periods(half, jk_data.y.n_periods), 2).theta
    jackknife_exact = np.array_equal(
        est.theta_jackknife, 2.0 * est.theta - 0.5 * (theta_s1 + theta_s2)
    )
    corrected_exact = np.array_equal(
        est.theta_corrected, est.theta_jackknife - est.mu_c / jk_data.y.n_units
    )
    check(10, f"noiseless recovery err {recovery_err:.2e} <= 1e-6; objective paths "
              f"nonincreasing ({len(fits)} fits); jackknife/correction identities exact",
          recovery_err <= 1e-6 and monotone and jackknife_exact and corrected_exact)


def test_criterion_11_diagnostics_calibration():
    cd_stats = []
    for r in range(500):
        values = np.random.default_rng(
            np.random.SeedSequence(SEED, spawn_key=(11, r))).standard_normal((50, 50))
        cd_stats.append(cd_test(Panel(values, np.ones((50, 50), dtype=bool))).statistic)
    cd_stats = np.asarray(cd_stats)
    cd_mean, cd_var = float(cd_stats.mean()), float(cd_stats.var())

    rejections = 0
    for r in range(1000):
        series = np.random.default_rng(
            np.random.SeedSequence(SEED, spawn_key=(11, 10_000 + r))).standard_normal(500)
        rejections += ljung_box_test(series, 10).p_value < 0.05
    lb_rate = rejections / 1000.0
    check(11, f"CD mean {cd_mean:+.3f} (|.|<0.15), var {cd_var:.3f} in [0.75,1.35]; "
              f"LB rejection {lb_rate:.3f} in [0.02, 0.09]",
          abs(cd_mean) < 0.15 and 0.75 <= cd_var <= 1.35 and 0.02 <= lb_rate <= 0.09)


def test_criterion_12_edgeworth_identities():
    w = np.linspace(-4.0, 4.0, 161)
    reduces = np.array_equal(edgeworth_cdf(w, 1.7, 0.0), stats.norm.cdf(w / 1.7))
    s, kappa3 = 1.2, 0.45
    lhs = edgeworth_cdf(w, s, kappa3) + edgeworth_cdf(-w, s, kappa3)
    rhs = 1.0 + kappa3 / 3.0 * (1.0 - w**2 / s**2) * stats.norm.pdf(w / s)
    asym_err = float(np.max(np.abs(lhs - rhs)))
    check(12, f"kappa3=0 reduces to normal CDF exactly; asymmetry identity err "
              f"{asym_err:.2e} <= 1e-12",
          reduces and asym_err <= 1e-12)


def test_criterion_13_determinism(tmp_path):
    # library pipelines, identical seeds
    panel = Panel(np.random.default_rng(SEED).standard_normal((20, 60)),
                  np.ones((20, 60), dtype=bool))
    mean_a = dwb_mean_inference(panel, DwbConfig(seed=SEED))
    mean_b = dwb_mean_inference(panel, DwbConfig(seed=SEED))
    pipelines_ok = bool(np.array_equal(mean_a.draws, mean_b.draws))

    spec = DgpSpec(case="case1_gaussian", n_units=25, n_periods=60)
    ie_data, _ = simulate_interactive_panel(spec, np.random.default_rng(SEED))
    ie_a = ie_bootstrap_infer(ie_data, 2, DwbConfig(seed=SEED, n_draws=99))[0]
    ie_b = ie_bootstrap_infer(ie_data, 2, DwbConfig(seed=SEED, n_draws=99))[0]
    pipelines_ok = pipelines_ok and bool(np.array_equal(ie_a.draws, ie_b.draws))

    # report-level determinism under different thread counts
    grid = [DgpSpec(case="case1_gaussian", n_units=15, n_periods=40)]
    kwargs = dict(n_reps=100, n_boot=99, seed=SEED, bandwidth_multipliers=(0.8, 1.0))
    serial = run_size_experiment(grid, ["dwb_bartlett", "traditional_s3"], threads=1, **kwargs)
    threaded = run_size_experiment(grid, ["dwb_bartlett", "traditional_s3"], threads=6, **kwargs)
    reports_ok = serial.to_csv(include_timing=False) == threaded.to_csv(include_timing=False)

    # CLI artifacts byte-for-byte across reruns and thread counts
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "grid": [{"case": "case1_gaussian", "N": 12, "T": 40}],
        "methods": ["dwb_bartlett"], "R": 100, "R_boot": 99,
    }))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cli_main(["simulate", "--config", str(config), "--out", str(out1),
              "--seed", str(SEED), "--threads", "1"])
    cli_main(["simulate", "--config", str(config), "--out", str(out2),
              "--seed", str(SEED), "--threads", "4"])
    artifacts_ok = (
        (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        and (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    )
    check(13, "same-seed reruns bit-identical (pipelines, reports across thread "
              "counts, CLI artifacts)",
          pipelines_ok and reports_ok and artifacts_ok)
