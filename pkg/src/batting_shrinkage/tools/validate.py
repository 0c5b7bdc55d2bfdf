from __future__ import annotations
import logging
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DomainError, NumericError
from .estimators import EstimateVector
from .ingest import SplitTables
from .transform import DEFAULT_TRANSFORM, TransformConfig, TransformedSample

"""
Scoring of predictions against held-out periods and the naive-versus-mean
break-even analytics.
"""

logger = logging.getLogger(__name__)

CRITERIA = ("sspe", "tse-hat", "tse-star", "tse-r-star", "twse-star")
REPORT_COLUMNS = ["cohort", "split", "estimator", "criterion", "value", "n_est", "n_val"]
NEVER_OVERTAKEN = "mean never overtaken"
RESIDUAL_NOTE = "E(mean_1 - E X_2)^2 residual term omitted (numerically negligible)"


class Score(NamedTuple):
    hat: float
    star: float


def _aligned(delta: EstimateVector, holdout: TransformedSample) -> np.ndarray:
    if holdout.size == 0:
        raise DomainError("empty validation set: no player qualifies in both periods")
    predictions = delta.as_series()
    missing = [p for p in holdout.player_ids if p not in predictions.index]
    if missing:
        raise DomainError(f"{len(missing)} validation players have no {delta.estimator} prediction (e.g. {missing[0]})")
    return predictions.loc[holdout.player_ids].to_numpy()


def _normalized(hat: float, base: float, what: str) -> float:
    if not base > 0.0:
        raise NumericError(f"{what} of the naive predictor is {base:.6g}; the normalizer must be positive")
    return hat / base


# Transformed-scale criteria
def sspe(delta: EstimateVector, holdout: TransformedSample) -> float:
    """Sum over the validation players of (X_2i - delta_i)^2."""
    return float(np.sum((holdout.x - _aligned(delta, holdout)) ** 2))


def _tse_hat(delta: EstimateVector, holdout: TransformedSample) -> float:
    return sspe(delta, holdout) - float(holdout.sigma2.sum())


def tse(delta: EstimateVector, holdout: TransformedSample, baseline: EstimateVector) -> Score:
    """SSPE minus sum 1/(4 N_2i), and its ratio to the same for ``baseline`` (naive)."""
    hat = _tse_hat(delta, holdout)
    return Score(hat, _normalized(hat, _tse_hat(baseline, holdout), "TSE"))


def _twse_hat(delta: EstimateVector, holdout: TransformedSample, weights: np.ndarray) -> float:
    resid = (holdout.x - _aligned(delta, holdout)) ** 2
    return float(np.sum(weights * resid) - np.sum(weights * holdout.sigma2))


def twse(delta: EstimateVector, holdout: TransformedSample, weights: pd.Series, baseline: EstimateVector) -> Score:
    """TSE with each player weighted by first-period attempts."""
    w = weights.loc[holdout.player_ids].to_numpy(dtype=float)
    hat = _twse_hat(delta, holdout, w)
    return Score(hat, _normalized(hat, _twse_hat(baseline, holdout, w), "TWSE"))


# Proportion-scale criterion
def _tse_r_hat(predicted: np.ndarray, r2: np.ndarray, n2: np.ndarray) -> float:
    return float(np.sum((r2 - predicted) ** 2) - np.sum(r2 * (1.0 - r2) / n2))


def tse_r(r_tilde: pd.Series, holdout: pd.DataFrame, baseline: pd.Series) -> Score:
    """
    Squared error of predicted batting averages.

    ``holdout`` has columns N, H indexed by player_id; ``baseline`` holds the first-period
    raw averages R_1i that normalize the criterion.
    """
    if holdout.empty:
        raise DomainError("empty validation set: no player qualifies in both periods")
    ids = holdout.index
    if np.any(r_tilde.loc[ids] < 0) or np.any(r_tilde.loc[ids] > 1):
        raise DomainError("predicted averages must lie in [0, 1]")
    n2 = holdout["N"].to_numpy(dtype=float)
    r2 = holdout["H"].to_numpy(dtype=float) / n2
    hat = _tse_r_hat(r_tilde.loc[ids].to_numpy(dtype=float), r2, n2)
    base = _tse_r_hat(baseline.loc[ids].to_numpy(dtype=float), r2, n2)
    return Score(hat, _normalized(hat, base, "TSE_R"))


# Reports
class CriterionReport(BaseModel):
    """Every criterion for one (cohort, split, estimator) cell."""

    estimator: str
    cohort: str
    split: str
    sspe: float
    tse_hat: float
    tse_star: float
    tse_r_star: Optional[float] = None
    twse_star: Optional[float] = None
    n_estimation: int
    n_validation: int
    config: Dict[str, object] = Field(default_factory=dict)

    def value(self, criterion: str) -> Optional[float]:
        return {
            "sspe": self.sspe,
            "tse-hat": self.tse_hat,
            "tse-star": self.tse_star,
            "tse-r-star": self.tse_r_star,
            "twse-star": self.twse_star,
        }[criterion]

    def rows(self, criteria: List[str]) -> List[Dict[str, object]]:
        out = []
        for criterion in criteria:
            value = self.value(criterion)
            if value is None:
                continue
            out.append(
                {
                    "cohort": self.cohort,
                    "split": self.split,
                    "estimator": self.estimator,
                    "criterion": criterion,
                    "value": value,
                    "n_est": self.n_estimation,
                    "n_val": self.n_validation,
                }
            )
        return out


def score(
    delta: EstimateVector,
    split: SplitTables,
    cfg: TransformConfig = DEFAULT_TRANSFORM,
    baseline: Optional[EstimateVector] = None,
) -> CriterionReport:
    """All criteria for one estimator on one split; ``baseline`` defaults to naive on the same split."""
    estimation = TransformedSample.from_frame(split.estimation, cfg)
    holdout = TransformedSample.from_frame(split.validation, cfg)
    if baseline is None:
        baseline = EstimateVector.build("naive", estimation, estimation.x)
    t = tse(delta, holdout, baseline)

    first = split.matched_estimation()
    r1 = first["H"] / first["N"]
    if delta.estimator == "naive":
        r_tilde = r1
    else:
        r_tilde = pd.Series(delta.delta_prop, index=pd.Index(delta.player_ids, name="player_id"))
    r = tse_r(r_tilde, split.validation, r1)
    w = twse(delta, holdout, split.estimation["N"], baseline)

    return CriterionReport(
        estimator=delta.estimator,
        cohort=split.cohort,
        split=split.scheme,
        sspe=sspe(delta, holdout),
        tse_hat=t.hat,
        tse_star=t.star,
        tse_r_star=r.star,
        twse_star=w.star,
        n_estimation=split.n_estimation,
        n_validation=split.n_validation,
        config={**delta.config, **split.rule.model_dump(exclude_none=True), "c": cfg.c},
    )


def report_frame(reports: List[CriterionReport], criteria: List[str]) -> pd.DataFrame:
    rows = [row for report in reports for row in report.rows(criteria)]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


# Break-even analytics
class BreakEven(BaseModel):
    """Naive-versus-mean comparison statistics for one cohort."""

    model_config = ConfigDict(frozen=True)

    cohort: str
    split: str
    n_validation: int
    sum_inv_4n1: float
    sum_inv_4n2: float
    expected_sspe_naive: float
    sse_to_mean: float
    c_factor: Optional[float] = Field(None, description="None when the mean is never overtaken")
    note: str = RESIDUAL_NOTE

    @property
    def overtaken(self) -> bool:
        return self.c_factor is not None

    def c_label(self) -> str:
        return f"{self.c_factor:.2f}" if self.c_factor is not None else NEVER_OVERTAKEN


def break_even(split: SplitTables, cfg: TransformConfig = DEFAULT_TRANSFORM) -> BreakEven:
    """
    Over the validation players: sum 1/(4 N_1i), sum 1/(4 N_2i), their total (the expected
    naive SSPE), the sum of squares of X_2 about its own mean, and the factor c by which
    every N_1i must grow for the naive predictor to match the mean.
    """
    if split.n_validation == 0:
        raise DomainError(f"empty validation set for cohort '{split.cohort}'")
    first = split.matched_estimation()
    x2 = TransformedSample.from_frame(split.validation, cfg).x
    s1 = float(np.sum(1.0 / (4.0 * first["N"].to_numpy(dtype=float))))
    s2 = float(np.sum(1.0 / (4.0 * split.validation["N"].to_numpy(dtype=float))))
    sse = float(np.sum((x2 - x2.mean()) ** 2))
    gap = sse - s2
    c_factor = s1 / gap if gap > 0 else None
    if c_factor is None:
        logger.info("Break-even %s: %s", split.cohort, NEVER_OVERTAKEN)
    return BreakEven(
        cohort=split.cohort,
        split=split.scheme,
        n_validation=split.n_validation,
        sum_inv_4n1=s1,
        sum_inv_4n2=s2,
        expected_sspe_naive=s1 + s2,
        sse_to_mean=sse,
        c_factor=c_factor,
    )
