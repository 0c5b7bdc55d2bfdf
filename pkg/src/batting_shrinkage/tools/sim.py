from __future__ import annotations
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from itertools import combinations
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from ..errors import DomainError, ShrinkageError
from .estimators import EstimateVector, Estimator
from .ingest import PlayerRecord, SplitTables
from .transform import HALF_PI, TransformConfig, TransformedSample
from .validate import tse, tse_r, twse

"""
Synthetic seasons under the two-level normal model (or binomial counts) for
calibration, power checks and the estimator stability study.
"""

logger = logging.getLogger(__name__)

GENERATOR = "PCG64"
SUMMARY_COLUMNS = ["config_hash", "estimator", "criterion", "mean", "sd", "q05", "q50", "q95", "reps"]
BENCH_CRITERIA = ("sspe", "tse-hat", "tse-star", "twse-star", "tse-r-star")


# Attempt counts
class AttemptProfile(BaseModel):
    """Source of the (N_1i, N_2i) arrays."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["real", "linear", "uniform"] = "linear"
    players: PositiveInt = 486
    low: PositiveInt = 11
    high: PositiveInt = 340
    stride: PositiveInt = 7
    n1: Tuple[int, ...] = ()
    n2: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def consistent(self) -> "AttemptProfile":
        if self.high < self.low:
            raise ValueError("high must be >= low")
        if self.kind == "real" and (not self.n1 or len(self.n1) != len(self.n2)):
            raise ValueError("a real profile needs equal-length nonempty n1 and n2")
        return self

    @classmethod
    def from_split(cls, split: SplitTables) -> "AttemptProfile":
        """Counts of the validation players of a real split."""
        first = split.matched_estimation()
        return cls(
            kind="real",
            players=len(first),
            n1=tuple(int(v) for v in first["N"]),
            n2=tuple(int(v) for v in split.validation["N"]),
        )

    def arrays(self, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        if self.kind == "real":
            return np.array(self.n1, dtype=float), np.array(self.n2, dtype=float)
        P = self.players
        if self.kind == "linear":
            j = np.arange(P)
            step = (self.high - self.low) / max(P - 1, 1)
            n1 = np.floor(self.low + step * j + 0.5)
            n2 = n1[((j + 1) * self.stride) % P]
            return n1, n2
        counts = rng.integers(self.low, self.high + 1, size=(2, P))
        return counts[0].astype(float), counts[1].astype(float)


# Simulation settings
class SimSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile: AttemptProfile = Field(default_factory=AttemptProfile)
    theta: Literal["normal", "mixture", "n-correlated"] = "normal"
    noise: Literal["gaussian", "binomial"] = "gaussian"
    mu: float = 0.53
    tau2: float = Field(0.0011, ge=0.0)
    mixture_weights: Tuple[float, float] = (0.8, 0.2)
    mixture_means: Tuple[float, float] = (0.54, 0.40)
    r_squared: float = Field(0.18, ge=0.0, lt=1.0, description="Target R^2 of theta on log N (n-correlated)")
    replications: PositiveInt = 500
    seed: int = 20050403
    c: float = Field(0.25, ge=0.0, le=0.5)

    @model_validator(mode="after")
    def weights_sum_to_one(self) -> "SimSpec":
        if any(w < 0 for w in self.mixture_weights) or not np.isclose(sum(self.mixture_weights), 1.0):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        return self

    def config_hash(self) -> str:
        payload = self.model_dump_json().encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:12]


class SimDraw(BaseModel):
    """One synthetic season split: first-period sample, holdout sample and the truth."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    theta: np.ndarray
    estimation: TransformedSample
    holdout: TransformedSample
    h1: Optional[np.ndarray] = None
    h2: Optional[np.ndarray] = None


def _theta(spec: SimSpec, n1: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    P = n1.size
    sd = np.sqrt(spec.tau2)
    if spec.theta == "normal":
        return spec.mu + sd * rng.standard_normal(P)
    if spec.theta == "mixture":
        group = rng.random(P) < spec.mixture_weights[1]
        centre = np.where(group, spec.mixture_means[1], spec.mixture_means[0])
        return centre + sd * rng.standard_normal(P)
    # theta = a + b log N + noise, b set so log N explains r_squared of the variance
    log_n = np.log(n1)
    spread = float(log_n.var())
    b = np.sqrt(spec.r_squared / (1.0 - spec.r_squared) * spec.tau2 / spread) if spread > 0 else 0.0
    a = spec.mu - b * float(log_n.mean())
    return a + b * log_n + sd * rng.standard_normal(P)


def _gaussian_sample(ids: List[str], x: np.ndarray, n: np.ndarray) -> TransformedSample:
    # Gaussian noise can leave [0, pi/2]; predictions are clamped downstream.
    return TransformedSample.model_construct(player_ids=ids, x=x, n=n)


def draw(spec: SimSpec, index: int) -> SimDraw:
    """Replication ``index``; its stream is the ``index``-th child of the master seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed, spawn_key=(index,))))
    n1, n2 = spec.profile.arrays(rng)
    theta = _theta(spec, n1, rng)
    ids = [f"p{i:04d}" for i in range(n1.size)]
    if spec.noise == "gaussian":
        x1 = theta + rng.standard_normal(n1.size) / np.sqrt(4.0 * n1)
        x2 = theta + rng.standard_normal(n2.size) / np.sqrt(4.0 * n2)
        return SimDraw.model_construct(
            index=index,
            theta=theta,
            estimation=_gaussian_sample(ids, x1, n1),
            holdout=_gaussian_sample(ids, x2, n2),
            h1=None,
            h2=None,
        )
    if np.any(theta <= 0) or np.any(theta >= HALF_PI):
        raise DomainError("binomial noise needs sin^2(theta) strictly inside (0, 1)")
    p = np.sin(theta) ** 2
    h1 = rng.binomial(n1.astype(np.int64), p)
    h2 = rng.binomial(n2.astype(np.int64), p)
    cfg = TransformConfig(c=spec.c)
    return SimDraw(
        index=index,
        theta=theta,
        estimation=TransformedSample.from_counts(ids, h1, n1, cfg),
        holdout=TransformedSample.from_counts(ids, h2, n2, cfg),
        h1=h1,
        h2=h2,
    )


def simulate(spec: SimSpec) -> Iterator[SimDraw]:
    """Replications 0..R-1 in order; identical spec and seed give identical draws."""
    for index in range(spec.replications):
        yield draw(spec, index)


def synthetic_segments(
    rng: np.random.Generator,
    players: int = 419,
    segments: int = 18,
    n_low: int = 35,
    n_high: int = 55,
    p_low: float = 0.20,
    p_high: float = 0.34,
    streaky: int = 0,
    swing: float = 0.08,
) -> List[PlayerRecord]:
    """
    Segment-level season with constant ability per player; the first ``streaky``
    players alternate p +- swing between odd and even segments.
    """
    records = []
    for i in range(players):
        p = rng.uniform(p_low, p_high)
        periods: Dict[int, Tuple[int, int]] = {}
        for j in range(1, segments + 1):
            n = int(rng.integers(n_low, n_high + 1))
            pj = p + (swing if j % 2 else -swing) if i < streaky else p
            periods[j] = (n, int(rng.binomial(n, pj)))
        records.append(
            PlayerRecord(
                player_id=f"s{i:04d}", name=f"Synthetic {i}", is_pitcher=False, granularity="segment", periods=periods
            )
        )
    return records


# Benchmark
class BenchmarkResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config_hash: str
    values: pd.DataFrame  # replication, estimator, criterion, value
    summary: pd.DataFrame  # SUMMARY_COLUMNS, estimators and "a-b" differences
    failures: int
    replications: int


def _criteria_for(d: SimDraw, estimate: EstimateVector, baseline: EstimateVector, criteria: List[str]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    t = tse(estimate, d.holdout, baseline)
    ids = d.estimation.player_ids
    for criterion in criteria:
        if criterion == "sspe":
            out[criterion] = t.hat + float(d.holdout.sigma2.sum())
        elif criterion == "tse-hat":
            out[criterion] = t.hat
        elif criterion == "tse-star":
            out[criterion] = t.star
        elif criterion == "twse-star":
            out[criterion] = twse(estimate, d.holdout, pd.Series(d.estimation.n, index=ids), baseline).star
        elif criterion == "tse-r-star" and d.h1 is not None:
            r1 = pd.Series(d.h1 / d.estimation.n, index=ids)
            r_tilde = r1 if estimate.estimator == "naive" else pd.Series(estimate.delta_prop, index=ids)
            holdout = pd.DataFrame({"N": d.holdout.n, "H": d.h2}, index=pd.Index(ids, name="player_id"))
            out[criterion] = tse_r(r_tilde, holdout, r1).star
    return out


def replicate(spec: SimSpec, estimators: List[Estimator], criteria: List[str], index: int) -> Optional[List[dict]]:
    """Fit-and-score one replication; None when the draw or any estimator fails."""
    rows = []
    try:
        d = draw(spec, index)
        baseline = EstimateVector.build("naive", d.estimation, d.estimation.x)
        for est in estimators:
            estimate = est.run(d.estimation, log=False)
            for criterion, value in _criteria_for(d, estimate, baseline, criteria).items():
                rows.append({"replication": index, "estimator": est.name, "criterion": criterion, "value": value})
    except (ShrinkageError, ValueError, ArithmeticError) as exc:
        logger.warning("Replication %d failed: %s", index, exc)
        return None
    return rows


def _summarize(values: pd.DataFrame, config_hash: str) -> pd.DataFrame:
    if values.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    grouped = values.groupby(["estimator", "criterion"], sort=False)["value"]
    out = grouped.agg(
        mean="mean",
        sd="std",
        q05=lambda v: v.quantile(0.05),
        q50="median",
        q95=lambda v: v.quantile(0.95),
        reps="size",
    ).reset_index()
    out.insert(0, "config_hash", config_hash)
    return out[SUMMARY_COLUMNS]


def _differences(values: pd.DataFrame, names: List[str]) -> pd.DataFrame:
    if values.empty:
        return values
    wide = values.pivot_table(index=["replication", "criterion"], columns="estimator", values="value")
    rows = []
    for a, b in combinations(names, 2):
        diff = (wide[a] - wide[b]).rename("value").reset_index()
        diff["estimator"] = f"{a}-{b}"
        rows.append(diff)
    return pd.concat(rows, ignore_index=True) if rows else values.iloc[0:0]


def benchmark(
    spec: SimSpec,
    estimators: List[Estimator],
    criteria: List[str] = ("tse-star",),
    workers: int = 1,
) -> BenchmarkResult:
    """
    Run every estimator on every replication; summarize each criterion and each
    pairwise difference (first listed minus second). A replication in which any
    estimator fails is excluded and counted.
    """
    unknown = [c for c in criteria if c not in BENCH_CRITERIA]
    if unknown:
        raise DomainError(f"unknown benchmark criteria {unknown}")
    criteria = list(criteria)
    indices = range(spec.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(partial(replicate, spec, estimators, criteria), indices, chunksize=8))
    else:
        results = [replicate(spec, estimators, criteria, i) for i in indices]

    failures = sum(r is None for r in results)
    rows = [row for r in results if r is not None for row in r]
    values = pd.DataFrame(rows, columns=["replication", "estimator", "criterion", "value"])
    diffs = _differences(values, [e.name for e in estimators])
    digest = spec.config_hash()
    summary = pd.concat([_summarize(values, digest), _summarize(diffs, digest)], ignore_index=True)
    logger.info(
        "Benchmark %s: %d replications, %d failed, %d estimators",
        digest, spec.replications, failures, len(estimators),
    )
    return BenchmarkResult(
        config_hash=digest,
        values=values,
        summary=summary,
        failures=failures,
        replications=spec.replications,
    )
