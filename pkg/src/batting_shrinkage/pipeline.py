from __future__ import annotations
import logging
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .errors import ConfigError
from .settings import RunConfig, load_yaml_section
from .tools.estimators import (
    ESTIMATOR_TYPES,
    EstimateVector,
    Estimator,
    FirstPeriodSummary,
    first_period_summary,
)
from .tools.gof import (
    FdrResult,
    PeriodMatrix,
    ScanResult,
    bh_fdr,
    discoveries_by_level,
    familywise_pstar,
    gof_frame,
    multi_period_chisq,
    p_values_from_u,
    quantile_plot_data,
    streakiness_scan,
    two_period_z,
)
from .tools.ingest import (
    EligibilityRule,
    PeriodScheme,
    PlayerRecord,
    SplitTables,
    aggregate,
    build_split,
    cohort_means,
    load_dataset,
)
from .tools.numerics import KsResult, ks_test, normal_cdf
from .tools.sim import AttemptProfile, BenchmarkResult, SimSpec, benchmark
from .tools.transform import TransformConfig, TransformedSample, diagnostic_curves
from .tools.validate import BreakEven, CriterionReport, break_even, score

"""
Study orchestration: estimators and presets come from config/*.yaml, data flows
ingest -> transform -> estimators -> validate for each (cohort x estimator) cell.
"""

logger = logging.getLogger(__name__)

DEFAULT_CRITERIA = ["tse-star", "tse-r-star", "twse-star"]
KNOWN_CRITERIA = ["sspe", "tse-hat", "tse-star", "tse-r-star", "twse-star"]
FDR_LEVELS = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]

# RunConfig field -> estimator parameter, for the estimators that take it
_OVERRIDES = {
    "tolerance": "tolerance",
    "max_iter": "max_iter",
    "h": "h",
    "hb_nodes_mu": "nodes_mu",
    "hb_nodes_omega": "nodes_omega",
    "workers": "workers",
}


# Estimators
def estimator_catalog() -> Dict[str, Dict[str, Any]]:
    return load_yaml_section("estimators")


def resolve_estimator_names(names: List[str]) -> List[str]:
    catalog = estimator_catalog()
    if names == ["all"]:
        return [n for n in catalog if n != "weighted_mean"]
    unknown = [n for n in names if n not in catalog or n not in ESTIMATOR_TYPES]
    if unknown:
        raise ConfigError(f"estimators: unknown estimator(s) {', '.join(unknown)} (known: {', '.join(catalog)})")
    return list(dict.fromkeys(names))


def resolve_criteria(names: List[str]) -> List[str]:
    if names == ["all"]:
        return list(DEFAULT_CRITERIA)
    unknown = [n for n in names if n not in KNOWN_CRITERIA]
    if unknown:
        raise ConfigError(f"criteria: unknown criterion {', '.join(unknown)} (known: {', '.join(KNOWN_CRITERIA)})")
    return list(dict.fromkeys(names))


def build_estimators(names: List[str], overrides: Optional[Dict[str, Any]] = None) -> List[Estimator]:
    """Estimator objects from estimators.yaml, with non-None ``overrides`` applied where they fit."""
    catalog = estimator_catalog()
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    built = []
    for name in resolve_estimator_names(names):
        entry = catalog[name]
        cls = ESTIMATOR_TYPES[name]
        params = {k: v for k, v in (entry.get("params") or {}).items() if k in cls.model_fields}
        params.update({k: v for k, v in overrides.items() if k in cls.model_fields})
        built.append(cls(name=name, label=entry.get("label", name), description=(entry.get("description") or "").strip(), **params))
    return built


def estimator_overrides(config: RunConfig) -> Dict[str, Any]:
    return {param: getattr(config, field) for field, param in _OVERRIDES.items()}


# Data
def require_data(config: RunConfig) -> List[PlayerRecord]:
    if not config.data_path:
        raise ConfigError(f"data_path: '{config.subcommand}' needs a data file (--data or BATTING_SHRINKAGE_DATA)")
    return load_dataset(config.data_path)


def eligibility(config: RunConfig) -> EligibilityRule:
    return EligibilityRule(
        min_attempts_per_period=config.min_ab,
        min_train_attempts=config.min_ab_train,
        min_season_attempts=config.min_season_ab,
    )


# Validation study
class StudyResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    reports: List[CriterionReport] = Field(default_factory=list)
    estimates: Dict[str, List[EstimateVector]] = Field(default_factory=dict)
    summaries: List[FirstPeriodSummary] = Field(default_factory=list)
    break_even: List[BreakEven] = Field(default_factory=list)
    cohort_means: Optional[pd.DataFrame] = None
    criteria: List[str] = Field(default_factory=list)
    labels: Dict[str, str] = Field(default_factory=dict)

    @property
    def clamped(self) -> int:
        return sum(e.clamped for vectors in self.estimates.values() for e in vectors)

    def estimates_frame(self) -> pd.DataFrame:
        frames = []
        for cohort, vectors in self.estimates.items():
            for vector in vectors:
                frame = vector.to_frame()
                frame.insert(0, "cohort", cohort)
                frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=["cohort", "player_id", "estimator", "delta", "delta_prop"])
        return pd.concat(frames, ignore_index=True)


def run_split(
    split: SplitTables,
    estimators: List[Estimator],
    cfg: TransformConfig,
    validate: bool = True,
) -> Tuple[List[CriterionReport], List[EstimateVector]]:
    """Fit every estimator on the estimation set; score each against the validation set."""
    sample = TransformedSample.from_frame(split.estimation, cfg)
    estimates = [est.run(sample) for est in estimators]
    if not validate:
        return [], estimates
    baseline = next((e for e in estimates if e.estimator == "naive"), None)
    reports = [score(e, split, cfg, baseline) for e in estimates]
    return reports, estimates


def _splits(config: RunConfig, records: List[PlayerRecord]) -> Tuple[Any, List[SplitTables]]:
    table = aggregate(records, PeriodScheme.named(config.scheme))
    rule = eligibility(config)
    return table, [build_split(table, rule, cohort) for cohort in config.cohort]


def run_study(config: RunConfig, validate: bool = True) -> StudyResult:
    """Fit (and optionally validate) the configured estimators for every configured cohort."""
    records = require_data(config)
    cfg = TransformConfig(c=config.c)
    criteria = resolve_criteria(config.criteria)
    names = resolve_estimator_names(config.estimators)
    if validate and "twse-star" in criteria and "mean" in names and "weighted_mean" not in names:
        names.append("weighted_mean")
    if validate and "naive" not in names:
        names.insert(0, "naive")
    estimators = build_estimators(names, estimator_overrides(config))

    table, splits = _splits(config, records)
    result = StudyResult(criteria=criteria, labels={e.name: e.label or e.name for e in estimators})
    for split in splits:
        reports, estimates = run_split(split, estimators, cfg, validate)
        result.reports.extend(reports)
        result.estimates[split.cohort] = estimates
        result.summaries.append(first_period_summary(TransformedSample.from_frame(split.estimation, cfg), split.cohort))
        if validate:
            result.break_even.append(break_even(split, cfg))
    result.cohort_means = cohort_means(table, config.min_ab)
    if result.clamped:
        logger.warning("%d predictions were clamped into [0, pi/2]", result.clamped)
    return result


def run_break_even(config: RunConfig) -> List[BreakEven]:
    records = require_data(config)
    cfg = TransformConfig(c=config.c)
    _, splits = _splits(config, records)
    return [break_even(split, cfg) for split in splits]


# Goodness of fit
class GofResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    two_period: pd.DataFrame  # player_id, z, p_value, discovery
    ks: KsResult
    two_period_fdr: FdrResult
    monthly: pd.DataFrame  # GOF_COLUMNS
    monthly_fdr: FdrResult
    pstar: float
    levels: pd.DataFrame
    two_period_levels: pd.DataFrame
    quantiles_two_period: pd.DataFrame
    quantiles_monthly: pd.DataFrame


def run_gof(config: RunConfig) -> GofResult:
    """Half-season Z analysis (two-sided) and the monthly chi-square analysis (``config.sided``)."""
    records = require_data(config)
    cfg = TransformConfig(c=config.c)
    cohort_ids = None
    halves = aggregate(records, PeriodScheme.named("halves"))
    if config.cohort != ["all"]:
        cohort_ids = set().union(*(halves.cohort(c).player_ids for c in config.cohort))

    z = two_period_z(PeriodMatrix.from_table(halves, config.gof_min_ab, cfg, players=cohort_ids))
    ks = ks_test(z.to_numpy(), "std_normal", "two")
    z_p = p_values_from_u(pd.Series(normal_cdf(z.to_numpy()), index=z.index), "two")
    z_fdr = bh_fdr(z_p, config.q_star)
    two = pd.DataFrame({"player_id": z.index, "z": z.to_numpy(), "p_value": z_p.to_numpy()})
    two["discovery"] = two["player_id"].isin(set(z_fdr.discoveries)).astype(int)
    logger.info("Two-period test: %d players, KS D=%.4f p=%.4f", len(z), ks.statistic, ks.p_value)

    months = aggregate(records, PeriodScheme.named("months"))
    chisq = multi_period_chisq(PeriodMatrix.from_table(months, config.gof_min_ab, cfg, players=cohort_ids))
    p = p_values_from_u(chisq.set_index("player_id")["u"], config.sided)
    fdr = bh_fdr(p, config.q_star)
    pstar = familywise_pstar(chisq["u"])
    logger.info("Monthly test: P=%d, P*=%.4f, %d discoveries at q*=%g", len(chisq), pstar, fdr.k_star, config.q_star)

    return GofResult(
        two_period=two,
        ks=ks,
        two_period_fdr=z_fdr,
        monthly=gof_frame(chisq, fdr, config.sided),
        monthly_fdr=fdr,
        pstar=pstar,
        levels=discoveries_by_level(p, FDR_LEVELS),
        two_period_levels=discoveries_by_level(z_p, FDR_LEVELS),
        quantiles_two_period=quantile_plot_data(z.to_numpy()),
        quantiles_monthly=quantile_plot_data(chisq["phi_inv_u"].to_numpy()),
    )


def run_scan(config: RunConfig) -> ScanResult:
    records = require_data(config)
    scheme = PeriodScheme.named(config.scheme)
    if scheme.granularity != "segment":
        scheme = PeriodScheme.named("ten-day")
    return streakiness_scan(
        records,
        scheme,
        min_season_ab=config.min_season_ab or 100,
        threshold=config.gof_min_ab,
        q_star=config.q_star,
        cfg=TransformConfig(c=config.c),
    )


# Simulation and curves
def sim_spec(config: RunConfig) -> SimSpec:
    """Real at-bat profile when a data file is configured, else the packaged linear profile."""
    profile = AttemptProfile()
    if config.data_path:
        _, splits = _splits(config, load_dataset(config.data_path))
        profile = AttemptProfile.from_split(splits[0])
    return SimSpec(
        profile=profile,
        theta=config.sim_theta,
        noise=config.sim_noise,
        tau2=config.sim_tau2,
        replications=config.replications,
        seed=config.seed,
        c=config.c,
    )


def run_simulation(config: RunConfig) -> BenchmarkResult:
    spec = sim_spec(config)
    criteria = ["tse-star", "twse-star"] if config.criteria == ["all"] else resolve_criteria(config.criteria)
    if spec.noise == "binomial" and config.criteria == ["all"]:
        criteria.append("tse-r-star")
    names = resolve_estimator_names(config.estimators)
    estimators = build_estimators(names, estimator_overrides(config))
    return benchmark(spec, estimators, criteria, workers=config.workers)


def run_curves(config: RunConfig) -> pd.DataFrame:
    return diagnostic_curves(config.curve_c, config.curve_n, config.curve_p or None)


def summary_frame(summaries: List[FirstPeriodSummary]) -> pd.DataFrame:
    return pd.DataFrame([s.model_dump() for s in summaries], columns=list(FirstPeriodSummary.model_fields))

