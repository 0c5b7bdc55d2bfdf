#!/usr/bin/env python
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigError, DomainError, ShrinkageError
from .pipeline import (
    run_break_even,
    run_curves,
    run_gof,
    run_scan,
    run_simulation,
    run_study,
    summary_frame,
)
from .settings import LOG_LEVEL_ENV, RunConfig, resolve_config, write_manifest
from .tools.report import (
    break_even_frame,
    render_break_even,
    render_cohort_means,
    render_table,
    write_csv,
    write_text,
)
from .tools.gof import FdrResult
from .tools.sim import GENERATOR
from .tools.validate import report_frame

logger = logging.getLogger("batting_shrinkage")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def curves(config: RunConfig) -> None:
    """
    Bias and variance-ratio curves of the arcsine transform.
    """
    out = Path(config.output_dir)
    try:
        write_csv(run_curves(config), out / "curves.csv")
    except OSError as e:
        raise DomainError(f"could not write curves: {e}") from e


def fit(config: RunConfig) -> None:
    """
    Fit the selected estimators on the first period of each cohort.
    """
    out = Path(config.output_dir)
    try:
        result = run_study(config, validate=False)
        write_csv(result.estimates_frame(), out / "estimates.csv")
        write_csv(summary_frame(result.summaries), out / "first_period_summary.csv")
    except OSError as e:
        raise DomainError(f"could not read or write fit files: {e}") from e


def validate(config: RunConfig) -> None:
    """
    Fit on period 1, score on period 2, and render the criterion tables.
    """
    out = Path(config.output_dir)
    try:
        result = run_study(config)
        write_csv(report_frame(result.reports, result.criteria), out / "validation_report.csv")
        write_csv(result.estimates_frame(), out / "estimates.csv")
        table = render_table(result.reports, result.criteria, result.labels)
        write_text(table + "\n" + render_cohort_means(result.cohort_means), out / "validation_table.txt")
    except OSError as e:
        raise DomainError(f"could not read or write validation files: {e}") from e


def breakeven(config: RunConfig) -> None:
    """
    Naive-versus-mean break-even statistics per cohort.
    """
    out = Path(config.output_dir)
    try:
        rows = run_break_even(config)
        write_csv(break_even_frame(rows), out / "breakeven.csv")
        write_text(render_break_even(rows), out / "breakeven.txt")
    except OSError as e:
        raise DomainError(f"could not read or write break-even files: {e}") from e


def _cutoff(fdr: FdrResult) -> str:
    return "none" if fdr.threshold is None else f"{fdr.threshold:.4g}"


def gof(config: RunConfig) -> None:
    """
    Two-period and monthly goodness-of-fit tests with multiple-testing output.
    """
    out = Path(config.output_dir)
    try:
        result = run_gof(config)
        write_csv(result.two_period, out / "gof_two_period.csv")
        write_csv(result.monthly, out / "gof_monthly.csv")
        write_csv(result.levels, out / "gof_monthly_levels.csv")
        write_csv(result.two_period_levels, out / "gof_two_period_levels.csv")
        write_csv(result.quantiles_two_period, out / "quantiles_two_period.csv")
        write_csv(result.quantiles_monthly, out / "quantiles_monthly.csv")
        lines = [
            f"two-period players: {len(result.two_period)}",
            f"KS vs N(0,1): D={result.ks.statistic:.4f} P={result.ks.p_value:.4f}",
            f"two-period discoveries at q*={config.q_star:g}: {result.two_period_fdr.k_star}",
            f"monthly players: {len(result.monthly)}",
            f"family-wise P*: {result.pstar:.4f}",
            f"monthly discoveries at q*={config.q_star:g} ({config.sided}-sided): {result.monthly_fdr.k_star}",
            f"monthly B-H p-value cutoff: {_cutoff(result.monthly_fdr)}",
        ]
        write_text("\n".join(lines) + "\n", out / "gof_summary.txt")
    except OSError as e:
        raise DomainError(f"could not read or write goodness-of-fit files: {e}") from e


def scan(config: RunConfig) -> None:
    """
    Ten-day streakiness scan.
    """
    out = Path(config.output_dir)
    try:
        result = run_scan(config)
        write_csv(result.table, out / "scan.csv")
        write_csv(result.series, out / "scan_series.csv")
        write_csv(result.diagnostics, out / "scan_discoveries.csv")
        lines = [
            f"players meeting the season threshold: {result.n_season_eligible}",
            f"players tested (two or more qualifying segments): {result.n_tested}",
            f"discoveries at q*={config.q_star:g}: {result.fdr.k_star}",
            f"B-H p-value cutoff: {_cutoff(result.fdr)}",
        ]
        write_text("\n".join(lines) + "\n", out / "scan_summary.txt")
    except OSError as e:
        raise DomainError(f"could not read or write scan files: {e}") from e


def simulate(config: RunConfig) -> None:
    """
    Monte Carlo benchmark of the estimators under the two-level model.
    """
    out = Path(config.output_dir)
    try:
        result = run_simulation(config)
        header = {"generator": GENERATOR, "seed": config.seed, "config_hash": result.config_hash, "failures": result.failures}
        write_csv(result.summary, out / "sim_summary.csv", header)
    except OSError as e:
        raise DomainError(f"could not write simulation files: {e}") from e


COMMANDS = {
    "curves": curves,
    "fit": fit,
    "validate": validate,
    "breakeven": breakeven,
    "gof": gof,
    "scan": scan,
    "simulate": simulate,
}


# Argument parsing
def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", help="Period scheme from schemes.yaml")
    p.add_argument("--cohort", help="Comma list of all, nonpitchers, pitchers")
    p.add_argument("--min-ab", type=int, dest="min_ab", help="Per-period threshold (N >= value)")
    p.add_argument("--min-ab-train", type=int, dest="min_ab_train", help="Period-1 threshold override")
    p.add_argument("--min-season-ab", type=int, dest="min_season_ab", help="Season attempt threshold")


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c", type=float, help="Arcsine offset constant")
    p.add_argument("--h", type=float, help="NPEB bandwidth constant (default by P)")
    p.add_argument("--hb-nodes-mu", type=int, dest="hb_nodes_mu")
    p.add_argument("--hb-nodes-omega", type=int, dest="hb_nodes_omega")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--estimators", help="Comma list or 'all'")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--study", help="Preset from studies.yaml (table2 .. table6)")
    common.add_argument("--data", dest="data_path", help="Monthly or segment CSV")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--manifest", help="Re-run from a manifest written by an earlier run")
    common.add_argument("--log-level", dest="log_level", default=None)

    parser = argparse.ArgumentParser(prog="batting_shrinkage", description="Empirical Bayes batting-average prediction")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("curves", parents=[common], help="Transform bias and variance curves")
    p.add_argument("--c", dest="curve_c", help="Comma list of offset constants")
    p.add_argument("--N", dest="curve_n", help="Comma list of attempt counts")
    p.add_argument("--p", dest="curve_p", help="Comma list of probabilities (default grid)")

    for name, text in (("fit", "Fit estimators on period 1"), ("validate", "Fit and score on period 2")):
        p = sub.add_parser(name, parents=[common], help=text)
        _add_data_flags(p)
        _add_estimator_flags(p)
        if name == "validate":
            p.add_argument("--criteria", help="Comma list or 'all'")

    p = sub.add_parser("breakeven", parents=[common], help="Naive-versus-mean break-even table")
    _add_data_flags(p)
    p.add_argument("--c", type=float)

    for name, text in (("gof", "Binomial goodness-of-fit tests"), ("scan", "Ten-day streakiness scan")):
        p = sub.add_parser(name, parents=[common], help=text)
        _add_data_flags(p)
        p.add_argument("--c", type=float)
        p.add_argument("--gof-min-ab", type=int, dest="gof_min_ab")
        p.add_argument("--q-star", type=float, dest="q_star")
        if name == "gof":
            p.add_argument("--sided", choices=["one", "two"])

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimator benchmark")
    _add_data_flags(p)
    _add_estimator_flags(p)
    p.add_argument("--criteria", help="Comma list or 'all'")
    p.add_argument("--replications", type=int)
    p.add_argument("--tau2", type=float, dest="sim_tau2")
    p.add_argument("--theta", dest="sim_theta", choices=["normal", "mixture", "n-correlated"])
    p.add_argument("--noise", dest="sim_noise", choices=["gaussian", "binomial"])
    return parser


def configure(args: argparse.Namespace) -> RunConfig:
    values: Dict[str, Any] = {k: v for k, v in vars(args).items() if k not in ("manifest", "log_level")}
    if args.manifest:
        config = RunConfig.from_manifest(args.manifest)
        if config.subcommand != args.subcommand:
            raise ConfigError(f"subcommand: manifest is for '{config.subcommand}', not '{args.subcommand}'")
        if args.output_dir:
            config = config.model_copy(update={"output_dir": args.output_dir})
        return config
    return resolve_config(values)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse flags, resolve the configuration, run one subcommand. Returns the exit status.
    """
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        config = configure(args)
        write_manifest(config, Path(config.output_dir) / "manifest.txt")
        COMMANDS[config.subcommand](config)
    except ShrinkageError as e:
        logger.error("%s", e)
        return e.exit_code
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
