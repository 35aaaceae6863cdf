"""Command-line front end: simulation runs, bandwidth selection, model inference, diagnostics.

Subcommands
-----------
simulate   run a size-experiment grid from a JSON config, emit CSV + JSON reports
bandwidth  data-driven bandwidth for a residual panel CSV, as JSON
analyze    pooled regression of a panel on period-level factors with bootstrap CIs
ie-fit     interactive-effects fit, bias correction, and bootstrap CIs
diagnose   per-unit autocorrelation tests and the cross-sectional dependence test

All randomness flows from ``--seed``; stochastic commands refuse to run
without it, and rerunning an invocation reproduces its artifacts byte for
byte.  Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import optimal_bandwidth
from .bootstrap import DwbConfig, regression_dwb, weighted_aggregates
from .diagnostics import diagnose_panel
from .interactive import bias_corrected_estimate, ie_bootstrap_infer
from .panel import (
    RegressionData,
    load_common_regressors_csv,
    load_panel_csv,
    load_regression_long_csv,
)
from .simulate import DgpSpec, run_size_experiment

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _schema_from_args(args) -> dict:
    schema = {}
    if getattr(args, "unit_col", None):
        schema["unit"] = args.unit_col
    if getattr(args, "period_col", None):
        schema["period"] = args.period_col
    if getattr(args, "value_col", None):
        schema["value"] = args.value_col
    return schema


def _dwb_config(args) -> DwbConfig:
    return DwbConfig(
        seed=args.seed,
        kernel=args.kernel,
        bandwidth=args.bandwidth,
        n_draws=args.draws,
        level=args.level,
        ci_method=args.ci_method,
        bandwidth_floor=args.lmin,
    )


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _spec_from_cell(cell: dict, defaults: dict) -> DgpSpec:
    merged = {**defaults, **cell}
    short_n, long_n = merged.pop("N", None), merged.pop("n_units", None)
    short_t, long_t = merged.pop("T", None), merged.pop("n_periods", None)
    n_units = short_n if short_n is not None else long_n
    n_periods = short_t if short_t is not None else long_t
    if n_units is None or n_periods is None:
        raise ValueError("each grid cell needs N and T (or n_units / n_periods)")
    allowed = {"case", "rho_u", "delta_eps", "heteroskedastic", "burn_in",
               "standardize_t5", "theta0", "n_factors", "loading_low", "loading_high"}
    unknown = set(merged) - allowed
    if unknown:
        raise ValueError(f"unknown grid cell keys: {sorted(unknown)}")
    return DgpSpec(n_units=int(n_units), n_periods=int(n_periods), **merged)


def _cmd_simulate(args) -> int:
    config = json.loads(Path(args.config).read_text())
    grid_cells = config.get("grid")
    if not grid_cells:
        raise ValueError("config must contain a non-empty 'grid' list")
    cell_defaults = {k: v for k, v in config.items()
                     if k in ("case", "rho_u", "delta_eps", "heteroskedastic", "burn_in",
                              "standardize_t5", "theta0", "n_factors")}
    grid = [_spec_from_cell(dict(cell), cell_defaults) for cell in grid_cells]
    methods = config.get("methods", ["dwb_bartlett"])
    report = run_size_experiment(
        grid,
        methods,
        n_reps=int(config.get("R", 500)),
        n_boot=int(config.get("R_boot", 399)),
        seed=args.seed,
        level=float(config.get("level", 0.95)),
        bandwidth_multipliers=config.get("bandwidth_multipliers", [1.0]),
        ci_method=config.get("ci_method", "symmetric_abs"),
        bandwidth_floor=float(config.get("bandwidth_floor", 10.0)),
        threads=args.threads,
    )
    provenance = {
        "config_hash": _config_hash(config),
        "seed": args.seed,
        "version": __version__,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    # Timing is excluded from artifacts so reruns are byte-identical.
    (out_dir / "report.csv").write_text(report.to_csv(include_timing=False, provenance=provenance))
    payload = report.to_json_dict(include_timing=False)
    payload["provenance"] = provenance
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    total = sum({r.wall_time_s for r in report.rows})
    sys.stdout.write(f"wrote {out_dir / 'report.csv'} and report.json "
                     f"({len(report.rows)} rows, {total:.1f}s simulated)\n")
    return EXIT_OK


def _cmd_bandwidth(args) -> int:
    panel = load_panel_csv(args.input, _schema_from_args(args))
    series = weighted_aggregates(panel)
    est = optimal_bandwidth(series, args.kernel, floor=args.lmin)
    _emit(est.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    panel = load_panel_csv(args.panel, _schema_from_args(args))
    periods, names, x = load_common_regressors_csv(args.factors, args.period_col or "period")
    index = {p: i for i, p in enumerate(periods)}
    missing = [p for p in panel.period_labels if p not in index]
    if missing:
        raise ValueError(f"factor CSV is missing period(s) {missing[:5]} present in the panel")
    aligned = x[[index[p] for p in panel.period_labels]]
    data = RegressionData(y=panel, x_common=aligned, intercept=True,
                          regressor_names=tuple(names))
    results = regression_dwb(data, "pooled", _dwb_config(args))
    coefficients = []
    for res in results:
        entry = res.to_json_dict()
        if res.label == "intercept":
            entry["annualized_point"] = res.point * 12.0
            entry["annualized_ci"] = [res.ci_lower * 12.0, res.ci_upper * 12.0]
        coefficients.append(entry)
    _emit({"model": "pooled", "n_units": panel.n_units, "n_periods": panel.n_periods,
           "n_observed": panel.n_observed, "coefficients": coefficients}, args.out)
    return EXIT_OK


def _cmd_ie_fit(args) -> int:
    data = load_regression_long_csv(args.input, y_col=args.y_col,
                                    schema=_schema_from_args(args))
    estimate = bias_corrected_estimate(data, args.factors)
    results = ie_bootstrap_infer(data, args.factors, _dwb_config(args), estimate=estimate)
    payload = {
        "n_factors": args.factors,
        "n_units": data.y.n_units,
        "n_periods": data.y.n_periods,
        "converged": estimate.converged,
        "n_iter": estimate.fit.n_iter,
        "objective": estimate.fit.objective,
        "theta": estimate.theta.tolist(),
        "theta_jackknife": estimate.theta_jackknife.tolist(),
        "mu_c": estimate.mu_c.tolist(),
        "theta_corrected": estimate.theta_corrected.tolist(),
        "coefficients": [res.to_json_dict() for res in results],
    }
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    panel = load_panel_csv(args.input, _schema_from_args(args))
    report = diagnose_panel(panel, n_lags=args.lags, alpha=args.alpha)
    sys.stdout.write(
        f"units tested          {report.n_units_tested}\n"
        f"autocorrelation rej.  {report.rejection_fraction:.1%} at alpha={report.alpha}\n"
        f"CD statistic          {report.cd.statistic:.4f} "
        f"({report.cd.pairs_used} pairs, {report.cd.pairs_skipped} skipped)\n"
    )
    _emit(report.to_json_dict(), args.out)
    return EXIT_OK


def _add_schema_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--unit-col", help="CSV column holding unit ids (default: unit)")
    parser.add_argument("--period-col", help="CSV column holding period ids (default: period)")
    parser.add_argument("--value-col", help="CSV column holding values (default: value)")


def _add_bootstrap_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True,
                        help="master seed (required: all randomness flows from it)")
    parser.add_argument("--kernel", default="bartlett",
                        choices=["bartlett", "parzen", "trapezoidal"])
    parser.add_argument("--bandwidth", type=float, default=None,
                        help="multiplier bandwidth; default: data-driven rule")
    parser.add_argument("--draws", type=int, default=399, help="bootstrap draws (default 399)")
    parser.add_argument("--level", type=float, default=0.95, help="confidence level")
    parser.add_argument("--ci-method", default="symmetric_abs",
                        choices=["symmetric_abs", "equal_tailed"])
    parser.add_argument("--lmin", type=float, default=10.0,
                        help="lower bound for the data-driven bandwidth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelboot",
        description="Dependent wild bootstrap inference for panel data",
    )
    parser.add_argument("--version", action="version", version=f"panelboot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a size-experiment grid from a JSON config")
    p.add_argument("--config", required=True, help="JSON config with grid/methods/R/R_boot")
    p.add_argument("--out", required=True, help="output directory for report.csv / report.json")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: all cores); results do not depend on it")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bandwidth", help="data-driven bandwidth for a residual panel CSV")
    p.add_argument("--input", required=True, help="long-format residual CSV")
    p.add_argument("--kernel", default="bartlett",
                   choices=["bartlett", "parzen", "trapezoidal"])
    p.add_argument("--lmin", type=float, default=10.0)
    p.add_argument("--out")
    _add_schema_flags(p)
    p.set_defaults(func=_cmd_bandwidth)

    p = sub.add_parser("analyze", help="pooled regression on period factors with bootstrap CIs")
    p.add_argument("--panel", required=True, help="long-format response CSV")
    p.add_argument("--factors", required=True, help="period-indexed regressor CSV")
    p.add_argument("--out")
    _add_schema_flags(p)
    _add_bootstrap_flags(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("ie-fit", help="interactive-effects fit with bias correction and CIs")
    p.add_argument("--input", required=True, help="long CSV with unit,period,y,x1..xd")
    p.add_argument("--factors", type=int, required=True, help="number of common factors")
    p.add_argument("--y-col", default="y")
    p.add_argument("--out")
    _add_schema_flags(p)
    _add_bootstrap_flags(p)
    p.set_defaults(func=_cmd_ie_fit)

    p = sub.add_parser("diagnose", help="autocorrelation and cross-sectional dependence tests")
    p.add_argument("--input", required=True, help="long-format residual CSV")
    p.add_argument("--lags", type=int, default=None,
                   help="portmanteau lag count (default min(10, T/5) per unit)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    _add_schema_flags(p)
    p.set_defaults(func=_cmd_diagnose)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    # LinAlgError subclasses ValueError, so the numerical clause comes first
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
