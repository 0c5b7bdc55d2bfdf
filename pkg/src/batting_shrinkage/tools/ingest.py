from __future__ import annotations
import io
import logging
from pathlib import Path
from typing import BinaryIO, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from ..errors import DomainError
from ..settings import load_yaml_section

"""
Monthly (or ten-day segment) at-bat records: loading, period aggregation and
estimation/validation splits.
"""

logger = logging.getLogger(__name__)

Cohort = Literal["all", "pitchers", "nonpitchers"]
Granularity = Literal["month", "segment"]
SchemeName = Literal["months", "halves", "month-one", "five-one", "ten-day", "custom"]

COHORTS: Tuple[str, ...] = ("all", "nonpitchers", "pitchers")
MONTHS: Tuple[int, ...] = (4, 5, 6, 7, 8, 9)
_KEY_COLUMNS = ["player_id", "name", "is_pitcher"]
_COUNT_COLUMNS = ["ab", "h"]


# Player record
class PlayerRecord(BaseModel):
    """One batter's per-period (attempts, successes) counts."""

    model_config = ConfigDict(frozen=True)

    player_id: str = Field(..., min_length=1, description="Opaque key, unique within a dataset")
    name: str = Field(..., description="Display name")
    is_pitcher: bool = Field(..., description="Pitcher/nonpitcher cohort flag")
    granularity: Granularity = Field("month", description="Resolution of the base periods")
    periods: Dict[int, Tuple[int, int]] = Field(
        default_factory=dict, description="base period id -> (attempts N, successes H)"
    )

    @model_validator(mode="after")
    def successes_within_attempts(self) -> "PlayerRecord":
        for period, (n, h) in self.periods.items():
            if n < 0 or h < 0 or h > n:
                raise ValueError(f"{self.player_id}: period {period} has H={h}, N={n}")
        return self

    @property
    def season_attempts(self) -> int:
        return sum(n for n, _ in self.periods.values())


# Period scheme
class SegmentWindow(BaseModel):
    """Calendar span of one ten-day segment."""

    segment: PositiveInt
    start: str
    end: str

    @property
    def label(self) -> str:
        return f"{self.start}..{self.end}"


class PeriodScheme(BaseModel):
    """Ordered grouping of base periods into analysis periods 1..J."""

    model_config = ConfigDict(frozen=True)

    name: SchemeName
    groups: List[List[int]] = Field(..., min_length=1)
    granularity: Granularity = "month"
    windows: List[SegmentWindow] = Field(default_factory=list)

    @field_validator("groups")
    @classmethod
    def groups_disjoint(cls, v: List[List[int]]) -> List[List[int]]:
        seen: set[int] = set()
        for group in v:
            if not group:
                raise ValueError("period groups must be nonempty")
            overlap = seen.intersection(group)
            if overlap:
                raise ValueError(f"base periods {sorted(overlap)} appear in more than one group")
            seen.update(group)
        return v

    @property
    def n_periods(self) -> int:
        return len(self.groups)

    @property
    def base_periods(self) -> List[int]:
        return sorted(p for group in self.groups for p in group)

    def labels(self) -> List[str]:
        """Human-readable label per analysis period."""
        if self.windows:
            by_segment = {w.segment: w for w in self.windows}
            return [
                by_segment[g[0]].label if len(g) == 1 and g[0] in by_segment else "+".join(map(str, g))
                for g in self.groups
            ]
        return ["+".join(str(p) for p in group) for group in self.groups]

    @classmethod
    def named(cls, name: str) -> "PeriodScheme":
        """Scheme from the packaged ``schemes.yaml``."""
        schemes = load_yaml_section("schemes")
        if name not in schemes:
            raise DomainError(f"unknown period scheme '{name}' (known: {', '.join(sorted(schemes))})")
        return cls(name=name, **schemes[name])


# Eligibility
class EligibilityRule(BaseModel):
    """Attempt thresholds; comparisons are N >= threshold."""

    min_attempts_per_period: PositiveInt = Field(11, description="Threshold for every period")
    min_train_attempts: Optional[PositiveInt] = Field(
        None, description="Override for the estimation period only"
    )
    min_season_attempts: Optional[PositiveInt] = Field(
        None, description="Season-total threshold over all periods of the table"
    )

    def threshold(self, period: int) -> int:
        if period == 1 and self.min_train_attempts is not None:
            return self.min_train_attempts
        return self.min_attempts_per_period


# Period table
class PeriodTable(BaseModel):
    """Per-player, per-analysis-period attempts and successes."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scheme: PeriodScheme
    roster: pd.DataFrame  # index player_id; columns name, is_pitcher
    attempts: pd.DataFrame  # index player_id; columns 1..J
    successes: pd.DataFrame

    @property
    def n_periods(self) -> int:
        return self.attempts.shape[1]

    @property
    def player_ids(self) -> List[str]:
        return list(self.roster.index)

    def period(self, j: int) -> pd.DataFrame:
        """Columns N, H, name, is_pitcher for analysis period ``j`` (1-based)."""
        if not 1 <= j <= self.n_periods:
            raise DomainError(f"period {j} outside 1..{self.n_periods} for scheme '{self.scheme.name}'")
        frame = self.roster.copy()
        frame["N"] = self.attempts[j].astype(int)
        frame["H"] = self.successes[j].astype(int)
        return frame

    def season_attempts(self) -> pd.Series:
        return self.attempts.sum(axis=1)

    def cohort(self, cohort: Cohort) -> "PeriodTable":
        if cohort == "all":
            return self
        keep = self.roster["is_pitcher"] if cohort == "pitchers" else ~self.roster["is_pitcher"]
        ids = self.roster.index[keep.astype(bool)]
        return PeriodTable(
            scheme=self.scheme,
            roster=self.roster.loc[ids],
            attempts=self.attempts.loc[ids],
            successes=self.successes.loc[ids],
        )


# Split tables
class SplitTables(BaseModel):
    """Estimation set S1 and validation set S1 ∩ S2 for one cohort."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cohort: Cohort
    scheme: str
    rule: EligibilityRule
    estimation: pd.DataFrame  # index player_id; N, H, name, is_pitcher
    validation: pd.DataFrame  # index player_id (subset of estimation); N, H

    @property
    def n_estimation(self) -> int:
        return len(self.estimation)

    @property
    def n_validation(self) -> int:
        return len(self.validation)

    def matched_estimation(self) -> pd.DataFrame:
        """Estimation rows for the validation players, in validation order."""
        return self.estimation.loc[self.validation.index]


def _open_source(source: Union[str, Path, bytes, BinaryIO]) -> BinaryIO:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise DomainError(f"data file not found: {path}")
        return io.BytesIO(path.read_bytes())
    if isinstance(source, bytes):
        return io.BytesIO(source)
    return source


def _integer_column(frame: pd.DataFrame, column: str) -> pd.Series:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() | (values != values.round())
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DomainError(
            f"line {row + 2}: field '{column}' is not an integer ({frame[column].iloc[row]!r})"
        )
    return values.astype(int)


def load_dataset(source: Union[str, Path, bytes, BinaryIO]) -> List[PlayerRecord]:
    """
    Parse the ``player_id,name,is_pitcher,month,ab,h`` CSV (or its ``segment``
    variant) into one PlayerRecord per player, sorted by player_id.
    """
    handle = _open_source(source)
    try:
        frame = pd.read_csv(
            handle, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError as exc:
        raise DomainError("line 1: missing header row") from exc
    except pd.errors.ParserError as exc:
        raise DomainError(f"malformed CSV: {exc}") from exc

    columns = [c.strip() for c in frame.columns]
    period_column = columns[3] if len(columns) == 6 else None
    expected = _KEY_COLUMNS + [period_column or "month"] + _COUNT_COLUMNS
    if period_column not in ("month", "segment") or columns != expected:
        raise DomainError(
            f"line 1: header must be '{','.join(_KEY_COLUMNS + ['month'] + _COUNT_COLUMNS)}' "
            f"(or with 'segment'), got '{','.join(columns)}'"
        )
    frame.columns = columns
    granularity: Granularity = "month" if period_column == "month" else "segment"
    if frame.empty:
        logger.info("Loaded 0 players (header only)")
        return []

    blank = frame["player_id"].fillna("").str.strip() == ""
    if blank.any():
        row = int(np.flatnonzero(blank.to_numpy())[0])
        raise DomainError(f"line {row + 2}: empty player_id")

    flag = _integer_column(frame, "is_pitcher")
    period = _integer_column(frame, period_column)
    ab = _integer_column(frame, "ab")
    h = _integer_column(frame, "h")

    checks = [
        (~flag.isin([0, 1]), "is_pitcher must be 0 or 1"),
        ((ab < 0) | (h < 0), "ab and h must be nonnegative"),
        (~period.isin(MONTHS) if granularity == "month" else period < 1, f"invalid {period_column}"),
    ]
    for mask, message in checks:
        if mask.any():
            row = int(np.flatnonzero(mask.to_numpy())[0])
            raise DomainError(f"line {row + 2}: {message}")

    over = h > ab
    if over.any():
        row = int(np.flatnonzero(over.to_numpy())[0])
        raise DomainError(
            f"player {frame['player_id'].iloc[row]} {period_column} {period.iloc[row]}: "
            f"h={h.iloc[row]} exceeds ab={ab.iloc[row]}"
        )

    tidy = pd.DataFrame(
        {
            "player_id": frame["player_id"].str.strip(),
            "name": frame["name"].str.strip(),
            "is_pitcher": flag.astype(bool),
            "period": period,
            "ab": ab,
            "h": h,
        }
    )
    dup = tidy.duplicated(["player_id", "period"])
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0])
        raise DomainError(
            f"line {row + 2}: duplicate record for player {tidy['player_id'].iloc[row]} "
            f"{period_column} {tidy['period'].iloc[row]}"
        )

    records: List[PlayerRecord] = []
    for player_id, rows in tidy.groupby("player_id", sort=True):
        if rows["is_pitcher"].nunique() > 1:
            logger.warning("Player %s has inconsistent is_pitcher flags; using the first", player_id)
        records.append(
            PlayerRecord(
                player_id=str(player_id),
                name=rows["name"].iloc[0],
                is_pitcher=bool(rows["is_pitcher"].iloc[0]),
                granularity=granularity,
                periods={int(p): (int(n), int(k)) for p, n, k in zip(rows["period"], rows["ab"], rows["h"])},
            )
        )
    logger.info(
        "Loaded %d players (%d %s rows, %d attempts)",
        len(records), len(tidy), period_column, sum(r.season_attempts for r in records),
    )
    return records


def aggregate(records: List[PlayerRecord], scheme: PeriodScheme) -> PeriodTable:
    """Sum each player's base periods into the scheme's analysis periods."""
    resolutions = {r.granularity for r in records}
    if resolutions and resolutions != {scheme.granularity}:
        raise DomainError(
            f"scheme '{scheme.name}' needs {scheme.granularity}-level records; "
            f"dataset has {', '.join(sorted(resolutions))} resolution"
        )
    if scheme.granularity == "month":
        unknown = set(scheme.base_periods) - set(MONTHS)
        if unknown:
            raise DomainError(f"scheme '{scheme.name}' references unknown months {sorted(unknown)}")

    group_of = {base: j for j, group in enumerate(scheme.groups, start=1) for base in group}
    rows = [
        (r.player_id, group_of[p], n, h)
        for r in records
        for p, (n, h) in r.periods.items()
        if p in group_of
    ]
    roster = pd.DataFrame(
        {
            "name": [r.name for r in records],
            "is_pitcher": [r.is_pitcher for r in records],
        },
        index=pd.Index([r.player_id for r in records], name="player_id"),
    ).sort_index()
    columns = list(range(1, scheme.n_periods + 1))
    long = pd.DataFrame(rows, columns=["player_id", "period", "N", "H"])
    if long.empty:
        attempts = pd.DataFrame(0, index=roster.index, columns=columns)
        successes = attempts.copy()
    else:
        sums = long.groupby(["player_id", "period"])[["N", "H"]].sum()
        attempts = sums["N"].unstack("period").reindex(index=roster.index, columns=columns).fillna(0).astype(int)
        successes = sums["H"].unstack("period").reindex(index=roster.index, columns=columns).fillna(0).astype(int)
    attempts.columns.name = successes.columns.name = "period"
    return PeriodTable(scheme=scheme, roster=roster, attempts=attempts, successes=successes)


def build_split(table: PeriodTable, rule: EligibilityRule, cohort: Cohort = "all") -> SplitTables:
    """S1 = eligible in period 1 within ``cohort``; validation = S1 ∩ S2."""
    if table.n_periods < 2:
        raise DomainError(f"scheme '{table.scheme.name}' has a single period; a split needs two")
    sub = table.cohort(cohort)
    first, second = sub.period(1), sub.period(2)
    eligible = first["N"] >= rule.threshold(1)
    if rule.min_season_attempts is not None:
        eligible &= sub.season_attempts() >= rule.min_season_attempts
    estimation = first.loc[eligible, ["N", "H", "name", "is_pitcher"]]
    if estimation.empty:
        raise DomainError(
            f"empty estimation set for cohort '{cohort}' at threshold N >= {rule.threshold(1)}"
        )
    keep = second.loc[estimation.index, "N"] >= rule.threshold(2)
    validation = second.loc[estimation.index[keep.to_numpy()], ["N", "H"]]
    logger.info(
        "Split %s/%s: %d for estimation, %d for validation",
        table.scheme.name, cohort, len(estimation), len(validation),
    )
    return SplitTables(
        cohort=cohort, scheme=table.scheme.name, rule=rule, estimation=estimation, validation=validation
    )


def cohort_means(table: PeriodTable, threshold: int = 11) -> pd.DataFrame:
    """Mean batting average per cohort and period among players with N >= threshold."""
    out = {}
    for cohort in COHORTS:
        sub = table.cohort(cohort)  # type: ignore[arg-type]
        row = {}
        for j in (1, 2):
            frame = sub.period(j)
            frame = frame[frame["N"] >= threshold]
            row[f"period_{j}"] = float((frame["H"] / frame["N"]).mean()) if len(frame) else float("nan")
        out[cohort] = row
    return pd.DataFrame.from_dict(out, orient="index")
