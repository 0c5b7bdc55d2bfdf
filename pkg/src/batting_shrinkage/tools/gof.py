from __future__ import annotations
import logging
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DomainError
from .ingest import PeriodScheme, PeriodTable, PlayerRecord, aggregate
from .numerics import chisq_cdf, normal_quantile
from .transform import DEFAULT_TRANSFORM, TransformConfig, stabilize

"""
Goodness of fit of the constant-ability binomial model: two-period Z, the
multi-period chi-square, family-wise and Benjamini-Hochberg multiple testing,
and the ten-day streakiness scan.
"""

logger = logging.getLogger(__name__)

Sided = Literal["one", "two"]
GOF_COLUMNS = ["player_id", "m_i", "z2", "u", "phi_inv_u", "p_value", "discovery"]
_U_FLOOR = np.finfo(float).tiny
_U_CEIL = np.nextafter(1.0, 0.0)


# Qualifying periods
class PeriodMatrix(BaseModel):
    """Per-player qualifying periods (N >= threshold); players with fewer than two are dropped."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    threshold: int
    entries: pd.DataFrame  # player_id, period, N, H, X

    @classmethod
    def from_table(
        cls,
        table: PeriodTable,
        threshold: int = 12,
        cfg: TransformConfig = DEFAULT_TRANSFORM,
        players: Optional[Iterable[str]] = None,
    ) -> "PeriodMatrix":
        n = table.attempts.stack().rename("N")
        h = table.successes.stack().rename("H")
        long = pd.concat([n, h], axis=1).reset_index()
        long.columns = ["player_id", "period", "N", "H"]
        if players is not None:
            long = long[long["player_id"].isin(set(players))]
        long = long[long["N"] >= threshold].copy()
        return cls._finish(threshold, long, cfg)

    @classmethod
    def _finish(cls, threshold: int, long: pd.DataFrame, cfg: TransformConfig = DEFAULT_TRANSFORM) -> "PeriodMatrix":
        long = long.copy()
        if len(long):
            m = long.groupby("player_id")["period"].transform("size")
            long = long[m >= 2].copy()
        if "X" not in long.columns:
            long["X"] = np.atleast_1d(stabilize(long["H"].to_numpy(), long["N"].to_numpy(), cfg)) if len(long) else []
        long = long.sort_values(["player_id", "period"], kind="mergesort").reset_index(drop=True)
        return cls(threshold=threshold, entries=long)

    @property
    def m(self) -> pd.Series:
        return self.entries.groupby("player_id")["period"].size().rename("m_i")

    @property
    def n_players(self) -> int:
        return int(self.entries["player_id"].nunique())

    def restrict(self, periods: Sequence[int]) -> "PeriodMatrix":
        keep = self.entries[self.entries["period"].isin(list(periods))]
        return self._finish(self.threshold, keep)


# Test statistics
def two_period_z(matrix: PeriodMatrix, periods: Tuple[int, int] = (1, 2)) -> pd.Series:
    """(X_1i - X_2i) / sqrt(1/(4 N_1i) + 1/(4 N_2i)) for players qualifying in both periods."""
    first, second = periods
    both = matrix.restrict(periods).entries
    x = both.pivot(index="player_id", columns="period", values="X")
    n = both.pivot(index="player_id", columns="period", values="N").astype(float)
    if x.empty:
        return pd.Series(dtype=float, name="z")
    z = (x[first] - x[second]) / np.sqrt(1.0 / (4.0 * n[first]) + 1.0 / (4.0 * n[second]))
    return z.rename("z")


def multi_period_chisq(matrix: PeriodMatrix) -> pd.DataFrame:
    """
    Z^2_i = sum 4 N_ji (X_ji - Xhat_i)^2 over qualifying periods, Xhat_i the N-weighted mean;
    U_i = chi-square(m_i - 1) CDF at Z^2_i. Columns player_id, m_i, z2, u, phi_inv_u.
    """
    e = matrix.entries
    if e.empty:
        return pd.DataFrame(columns=["player_id", "m_i", "z2", "u", "phi_inv_u"])
    nx = (e["N"] * e["X"]).groupby(e["player_id"]).sum()
    centre = nx / e.groupby("player_id")["N"].sum()
    resid = e["X"] - e["player_id"].map(centre)
    z2 = (4.0 * e["N"] * resid**2).groupby(e["player_id"]).sum()
    m = matrix.m.loc[z2.index]
    u = np.array([chisq_cdf(float(v), int(k) - 1) for v, k in zip(z2, m)])
    out = pd.DataFrame(
        {
            "player_id": z2.index,
            "m_i": m.to_numpy(dtype=int),
            "z2": z2.to_numpy(),
            "u": u,
            "phi_inv_u": normal_quantile(np.clip(u, _U_FLOOR, _U_CEIL)),
        }
    )
    return out.reset_index(drop=True)


def p_values_from_u(u: pd.Series, sided: Sided = "one") -> pd.Series:
    """One-sided 1 - U (large Z^2), two-sided 2 min(U, 1 - U)."""
    if sided == "one":
        return (1.0 - u).rename("p_value")
    if sided == "two":
        return (2.0 * np.minimum(u, 1.0 - u)).rename("p_value")
    raise DomainError(f"unknown sidedness '{sided}'")


def familywise_pstar(u_values: Iterable[float]) -> float:
    """1 - (max U)^P over the P tested players."""
    u = np.asarray(list(u_values), dtype=float)
    if u.size == 0:
        raise DomainError("familywise_pstar needs at least one U value")
    if np.any(u < 0) or np.any(u > 1):
        raise DomainError("U values must lie in [0, 1]")
    return float(1.0 - u.max() ** u.size)


# False discovery rate
class FdrResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ordered: pd.DataFrame  # player_id, p_value in step-up order
    q_star: float
    k_star: int
    discoveries: List[str] = Field(default_factory=list)

    @property
    def threshold(self) -> Optional[float]:
        return float(self.ordered["p_value"].iloc[self.k_star - 1]) if self.k_star else None


def bh_fdr(p_values: pd.Series, q_star: float) -> FdrResult:
    """Benjamini-Hochberg step-up: k* = max{i : P_(i) <= (i/m) q*}, ties ordered by player_id."""
    if not 0.0 < q_star < 1.0:
        raise DomainError(f"q* must lie in (0, 1), got {q_star}")
    p = np.asarray(p_values, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p)):
        raise DomainError("p-values must lie in [0, 1]")
    ordered = pd.DataFrame({"player_id": [str(i) for i in p_values.index], "p_value": p})
    ordered = ordered.sort_values(["p_value", "player_id"], kind="mergesort").reset_index(drop=True)
    m = len(ordered)
    passing = np.flatnonzero(ordered["p_value"].to_numpy() <= np.arange(1, m + 1) / m * q_star)
    k_star = int(passing[-1] + 1) if passing.size else 0
    return FdrResult(
        ordered=ordered,
        q_star=q_star,
        k_star=k_star,
        discoveries=list(ordered["player_id"].iloc[:k_star]),
    )


def discoveries_by_level(p_values: pd.Series, levels: Iterable[float]) -> pd.DataFrame:
    """Number of B-H discoveries as q* is raised."""
    rows = [{"q_star": q, "discoveries": bh_fdr(p_values, q).k_star} for q in levels]
    return pd.DataFrame(rows, columns=["q_star", "discoveries"])


def quantile_plot_data(values: Iterable[float]) -> pd.DataFrame:
    """Sorted values against standard normal quantiles at (i - 0.5)/n."""
    v = np.sort(np.asarray(list(values), dtype=float))
    n = v.size
    if n == 0:
        return pd.DataFrame(columns=["theoretical_q", "empirical_q"])
    theoretical = normal_quantile((np.arange(1, n + 1) - 0.5) / n)
    return pd.DataFrame({"theoretical_q": np.atleast_1d(theoretical), "empirical_q": v})


def gof_frame(chisq: pd.DataFrame, fdr: FdrResult, sided: Sided = "one") -> pd.DataFrame:
    out = chisq.copy()
    out["p_value"] = p_values_from_u(out["u"], sided).to_numpy()
    out["discovery"] = out["player_id"].isin(set(fdr.discoveries)).astype(int)
    return out[GOF_COLUMNS]


# Streakiness scan
class ScanResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    fdr: FdrResult
    table: pd.DataFrame  # GOF_COLUMNS
    n_season_eligible: int
    n_tested: int
    series: pd.DataFrame  # player_id, period, label, N, H, average
    diagnostics: pd.DataFrame  # player_id, season_ab, season_avg, phi_inv_u, rank


def streakiness_scan(
    records: List[PlayerRecord],
    scheme: Optional[PeriodScheme] = None,
    min_season_ab: int = 100,
    threshold: int = 12,
    q_star: float = 0.05,
    cfg: TransformConfig = DEFAULT_TRANSFORM,
) -> ScanResult:
    """
    Segment-level chi-square scan: season-AB eligibility, at least two qualifying
    segments, one-sided B-H at ``q_star``, then per-discovery average series.
    """
    scheme = scheme or PeriodScheme.named("ten-day")
    table = aggregate(records, scheme)
    season = table.season_attempts()
    eligible = season.index[season >= min_season_ab]
    matrix = PeriodMatrix.from_table(table, threshold, cfg, players=eligible)
    chisq = multi_period_chisq(matrix)
    logger.info(
        "Scan %s: %d players with >= %d AB, %d with at least two qualifying segments",
        scheme.name, len(eligible), min_season_ab, len(chisq),
    )
    if chisq.empty:
        raise DomainError(f"no player qualifies for the {scheme.name} scan")

    p = p_values_from_u(chisq.set_index("player_id")["u"], "one")
    fdr = bh_fdr(p, q_star)
    frame = gof_frame(chisq, fdr, "one")

    labels = dict(zip(range(1, scheme.n_periods + 1), scheme.labels()))
    found = matrix.entries[matrix.entries["player_id"].isin(set(fdr.discoveries))].copy()
    found["label"] = found["period"].map(labels)
    found["average"] = found["H"] / found["N"]
    series = found[["player_id", "period", "label", "N", "H", "average"]].reset_index(drop=True)

    ranks = chisq.set_index("player_id")["phi_inv_u"].rank(ascending=False, method="min").astype(int)
    q = matrix.entries.groupby("player_id")[["N", "H"]].sum()
    diagnostics = pd.DataFrame(
        {
            "player_id": fdr.discoveries,
            "season_ab": [int(season.loc[pid]) for pid in fdr.discoveries],
            "season_avg": [float(q.loc[pid, "H"] / q.loc[pid, "N"]) for pid in fdr.discoveries],
            "phi_inv_u": [float(chisq.set_index("player_id").loc[pid, "phi_inv_u"]) for pid in fdr.discoveries],
            "rank": [int(ranks.loc[pid]) for pid in fdr.discoveries],
        },
        columns=["player_id", "season_ab", "season_avg", "phi_inv_u", "rank"],
    )
    logger.info("Scan %s: %d discoveries at q*=%g (p cutoff %s)", scheme.name, fdr.k_star, q_star, fdr.threshold)
    return ScanResult(
        fdr=fdr,
        table=frame,
        n_season_eligible=len(eligible),
        n_tested=len(chisq),
        series=series,
        diagnostics=diagnostics,
    )
