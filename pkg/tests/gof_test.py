import numpy as np
import pandas as pd
import pytest

from batting_shrinkage.errors import DomainError
from batting_shrinkage.tools.gof import (
    GOF_COLUMNS,
    PeriodMatrix,
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
from batting_shrinkage.tools.ingest import PeriodScheme, PlayerRecord, aggregate, load_dataset
from batting_shrinkage.tools.numerics import ks_test
from batting_shrinkage.tools.sim import synthetic_segments

from conftest import TABLE7

IZTURIS_U = 0.99988923
CREDE_U = 0.9986813334


def table7_matrix(scheme="months", threshold=12):
    return PeriodMatrix.from_table(aggregate(load_dataset(TABLE7), PeriodScheme.named(scheme)), threshold)


def null_season(rng, players, low=40, high=100):
    """Monthly records with constant ability per player."""
    records = []
    for i in range(players):
        p = rng.uniform(0.22, 0.31)
        periods = {}
        for month in range(4, 10):
            n = int(rng.integers(low, high + 1))
            periods[month] = (n, int(rng.binomial(n, p)))
        records.append(PlayerRecord(player_id=f"n{i:04d}", name=f"Null {i}", is_pitcher=False, periods=periods))
    return records


def fixture_p_values():
    fillers = pd.Series(np.linspace(0.01, 1.0, 512), index=[f"f{i:03d}" for i in range(512)])
    named = pd.Series([1.0 - IZTURIS_U, 1.0 - CREDE_U], index=["izturis", "crede"])
    return pd.concat([fillers, named])


# Chi-square on the monthly fixture
def test_z2_ignores_a_per_player_shift():
    matrix = table7_matrix()
    entries = matrix.entries.copy()
    entries.loc[entries["player_id"] == "izturis", "X"] += 0.05
    entries.loc[entries["player_id"] == "crede", "X"] -= 0.2
    moved = multi_period_chisq(PeriodMatrix(threshold=matrix.threshold, entries=entries)).set_index("player_id")
    base = multi_period_chisq(matrix).set_index("player_id")
    assert moved["z2"].loc[base.index].to_numpy() == pytest.approx(base["z2"].to_numpy(), rel=1e-10)


def test_monthly_chisq_on_table7():
    frame = multi_period_chisq(table7_matrix()).set_index("player_id")
    assert frame.loc["izturis", "m_i"] == 5
    assert frame.loc["crede", "m_i"] == 6
    assert frame.loc["izturis", "z2"] == pytest.approx(23.290478, abs=1e-5)
    assert frame.loc["crede", "z2"] == pytest.approx(19.875670, abs=1e-5)
    assert frame.loc["izturis", "u"] == pytest.approx(IZTURIS_U, abs=1e-7)
    assert frame.loc["crede", "u"] == pytest.approx(CREDE_U, abs=1e-7)
    assert frame.loc["izturis", "phi_inv_u"] > frame.loc["crede", "phi_inv_u"] > 2.5


def test_two_period_z_on_halves():
    z = two_period_z(table7_matrix("halves"))
    assert z.name == "z"
    assert z["izturis"] == pytest.approx(1.3386575, abs=1e-6)
    assert z["crede"] == pytest.approx(-0.5173770, abs=1e-6)


def test_players_with_one_qualifying_period_are_dropped():
    records = [
        PlayerRecord(player_id="a", name="A", is_pitcher=False, periods={4: (50, 12), 5: (60, 20), 6: (8, 1)}),
        PlayerRecord(player_id="b", name="B", is_pitcher=False, periods={4: (50, 12), 5: (5, 2), 6: (9, 3)}),
    ]
    matrix = PeriodMatrix.from_table(aggregate(records, PeriodScheme.named("months")), threshold=12)
    assert matrix.n_players == 1
    assert matrix.m.to_dict() == {"a": 2}
    assert list(multi_period_chisq(matrix)["player_id"]) == ["a"]


def test_threshold_is_inclusive():
    records = [PlayerRecord(player_id="a", name="A", is_pitcher=False, periods={4: (12, 3), 5: (12, 4)})]
    matrix = PeriodMatrix.from_table(aggregate(records, PeriodScheme.named("months")), threshold=12)
    assert matrix.n_players == 1


# p-values and multiple testing
def test_p_values_from_u():
    u = pd.Series([0.2, 0.99])
    assert p_values_from_u(u, "one").tolist() == pytest.approx([0.8, 0.01])
    assert p_values_from_u(u, "two").tolist() == pytest.approx([0.4, 0.02])
    with pytest.raises(DomainError):
        p_values_from_u(u, "three")


def test_familywise_pstar():
    assert familywise_pstar(np.r_[np.full(513, 0.5), 0.99988922]) == pytest.approx(0.05535, abs=1e-5)
    with pytest.raises(DomainError):
        familywise_pstar([])


def test_bh_on_the_two_fixture_players():
    p = fixture_p_values()
    strict = bh_fdr(p, 0.05)
    assert strict.k_star == 0
    assert strict.threshold is None
    assert bh_fdr(p, 0.1).discoveries == ["izturis"]
    loose = bh_fdr(p, 0.5)
    assert loose.k_star == 2
    assert loose.discoveries == ["izturis", "crede"]
    assert loose.threshold == pytest.approx(1.0 - CREDE_U)


def test_bh_textbook_example():
    p = pd.Series([0.042, 0.001, 0.06, 0.039, 0.008, 0.041], index=list("abcdef"))
    result = bh_fdr(p, 0.05)
    assert result.k_star == 2
    assert result.discoveries == ["b", "e"]
    assert list(result.ordered["p_value"]) == sorted(p)


def test_bh_breaks_ties_by_player_id():
    p = pd.Series([0.01, 0.01, 0.5], index=["z", "a", "m"])
    assert bh_fdr(p, 0.05).discoveries == ["a", "z"]


def test_bh_rejects_bad_inputs():
    with pytest.raises(DomainError):
        bh_fdr(pd.Series([0.1, 1.2]), 0.05)
    with pytest.raises(DomainError):
        bh_fdr(pd.Series([0.1]), 1.0)


def test_discoveries_grow_with_q():
    levels = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    frame = discoveries_by_level(fixture_p_values(), levels)
    assert list(frame["q_star"]) == levels
    assert list(frame["discoveries"]) == [0, 1, 1, 1, 2, 2]
    assert frame["discoveries"].is_monotonic_increasing


def test_gof_frame_columns():
    chisq = multi_period_chisq(table7_matrix())
    p = p_values_from_u(chisq.set_index("player_id")["u"], "one")
    frame = gof_frame(chisq, bh_fdr(p, 0.05), "one")
    assert list(frame.columns) == GOF_COLUMNS
    assert frame.set_index("player_id").loc["izturis", "p_value"] == pytest.approx(1.0 - IZTURIS_U, abs=1e-7)


def test_quantile_plot_data():
    frame = quantile_plot_data([3.0, 1.0, 2.0])
    assert list(frame["empirical_q"]) == [1.0, 2.0, 3.0]
    assert frame["theoretical_q"].iloc[1] == pytest.approx(0.0)
    assert frame["theoretical_q"].iloc[0] == pytest.approx(-frame["theoretical_q"].iloc[2])
    assert quantile_plot_data([]).empty


# Null calibration
def test_two_period_z_is_standard_normal_under_the_null():
    records = null_season(np.random.default_rng(11), 500)
    z = two_period_z(PeriodMatrix.from_table(aggregate(records, PeriodScheme.named("halves")), 12))
    assert len(z) == 500
    assert ks_test(z.to_numpy(), "std_normal").p_value > 0.01


def test_monthly_u_is_uniform_under_the_null():
    records = null_season(np.random.default_rng(12), 800)
    frame = multi_period_chisq(PeriodMatrix.from_table(aggregate(records, PeriodScheme.named("months")), 12))
    assert ks_test(frame["u"].to_numpy(), "uniform01").p_value > 0.01
    q = quantile_plot_data(frame["phi_inv_u"])
    slope = np.polyfit(q["theoretical_q"], q["empirical_q"], 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


@pytest.mark.slow
def test_scan_false_discovery_rate_under_the_null():
    rng = np.random.default_rng(2005)
    reps, q_star = 400, 0.05
    false_rate = []
    for _ in range(reps):
        result = streakiness_scan(synthetic_segments(rng, streaky=0), q_star=q_star)
        assert result.n_tested == 419
        # every discovery is false, so the realized proportion is 0 or 1
        false_rate.append(1.0 if result.fdr.k_star else 0.0)
    assert np.mean(false_rate) <= q_star + 0.025


# Streakiness scan
def test_scan_needs_segment_records():
    with pytest.raises(DomainError, match="segment-level"):
        streakiness_scan(load_dataset(TABLE7))


def test_scan_counts_eligible_and_tested_players():
    regular = {j: (40, 11) for j in range(1, 19)}
    one_segment = {1: (95, 30), **{j: (2, 1) for j in range(2, 19)}}
    records = [
        PlayerRecord(player_id="regular", name="R", is_pitcher=False, granularity="segment", periods=regular),
        PlayerRecord(player_id="lumpy", name="L", is_pitcher=False, granularity="segment", periods=one_segment),
        PlayerRecord(player_id="bench", name="B", is_pitcher=False, granularity="segment", periods={1: (30, 9), 2: (20, 5)}),
    ]
    result = streakiness_scan(records)
    assert result.n_season_eligible == 2
    assert result.n_tested == 1
    assert result.fdr.k_star == 0
    assert result.series.empty
    assert list(result.table["player_id"]) == ["regular"]


@pytest.mark.slow
def test_scan_finds_planted_streaks():
    records = synthetic_segments(np.random.default_rng(419), streaky=30)
    result = streakiness_scan(records)
    streaky = {f"s{i:04d}" for i in range(30)}
    found = set(result.fdr.discoveries)
    assert result.n_tested == 419
    assert len(found & streaky) > 15
    assert len(found - streaky) <= 5
    assert set(result.series["player_id"]) == found
    assert list(result.diagnostics["player_id"]) == result.fdr.discoveries
    assert result.series.groupby("player_id").size().max() == 18
