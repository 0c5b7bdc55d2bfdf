import pandas as pd
import pytest

from batting_shrinkage.main import build_parser, main
from batting_shrinkage.settings import DATA_PATH_ENV, OUTPUT_DIR_ENV

from conftest import TABLE7


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(DATA_PATH_ENV, raising=False)
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def test_curves_without_data(tmp_path):
    assert main(["curves", "--output-dir", str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / "curves.csv")
    assert list(frame.columns) == ["c", "N", "p", "bias", "var_ratio"]
    assert len(frame) == 111
    assert (tmp_path / "manifest.txt").is_file()


def test_curves_flags(tmp_path):
    assert main(["curves", "--output-dir", str(tmp_path), "--c", "0.25", "--N", "12,48", "--p", "0.2,0.3"]) == 0
    frame = pd.read_csv(tmp_path / "curves.csv")
    assert len(frame) == 4
    assert set(frame["N"]) == {12, 48}


def test_validate_on_a_season(tmp_path, season_csv):
    out = tmp_path / "out"
    assert main(["validate", "--data", str(season_csv), "--output-dir", str(out), "--cohort", "nonpitchers"]) == 0
    report = pd.read_csv(out / "validation_report.csv")
    assert set(report["estimator"]) >= {"naive", "mean", "eb_mm", "eb_ml", "npeb", "harmonic", "james_stein"}
    naive = report[(report["estimator"] == "naive") & (report["criterion"] == "tse-star")]
    assert naive["value"].iloc[0] == pytest.approx(1.0)
    table = (out / "validation_table.txt").read_text(encoding="utf-8")
    assert "nonpitchers" in table
    assert "TSE*" in table


def test_manifest_reproduces_outputs(tmp_path, season_csv):
    first, second = tmp_path / "first", tmp_path / "second"
    args = ["validate", "--data", str(season_csv), "--estimators", "naive,mean,eb_mm,james_stein"]
    assert main(args + ["--output-dir", str(first)]) == 0
    assert main(["validate", "--manifest", str(first / "manifest.txt"), "--output-dir", str(second)]) == 0
    for name in ("validation_report.csv", "estimates.csv", "validation_table.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_manifest_for_another_subcommand(tmp_path):
    assert main(["curves", "--output-dir", str(tmp_path)]) == 0
    assert main(["validate", "--manifest", str(tmp_path / "manifest.txt")]) == 2


def test_fit_and_breakeven(tmp_path, season_csv):
    assert main(["fit", "--data", str(season_csv), "--output-dir", str(tmp_path), "--estimators", "eb_mm,npeb"]) == 0
    estimates = pd.read_csv(tmp_path / "estimates.csv")
    assert list(estimates.columns) == ["cohort", "player_id", "estimator", "delta", "delta_prop"]
    assert set(estimates["estimator"]) == {"eb_mm", "npeb"}
    assert (tmp_path / "first_period_summary.csv").is_file()

    assert main(["breakeven", "--study", "table6", "--data", str(season_csv), "--output-dir", str(tmp_path)]) == 0
    rows = pd.read_csv(tmp_path / "breakeven.csv")
    assert list(rows["cohort"]) == ["all", "nonpitchers", "pitchers"]
    assert "omitted" in (tmp_path / "breakeven.txt").read_text(encoding="utf-8")


def test_gof_on_the_fixture(tmp_path):
    assert main(["gof", "--data", str(TABLE7), "--output-dir", str(tmp_path), "--q-star", "0.5"]) == 0
    monthly = pd.read_csv(tmp_path / "gof_monthly.csv")
    assert set(monthly["player_id"]) == {"izturis", "crede"}
    summary = (tmp_path / "gof_summary.txt").read_text(encoding="utf-8")
    assert "family-wise P*" in summary
    assert "monthly B-H p-value cutoff: 0.001319" in summary


def test_simulate_writes_the_seed_header(tmp_path):
    args = ["simulate", "--replications", "3", "--estimators", "naive,mean,james_stein", "--output-dir", str(tmp_path)]
    assert main(args) == 0
    header = (tmp_path / "sim_summary.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("# generator=PCG64 seed=20050403 config_hash=")
    assert header.endswith("failures=0")
    summary = pd.read_csv(tmp_path / "sim_summary.csv", comment="#")
    assert "mean-james_stein" in set(summary["estimator"])


def test_missing_data_is_a_config_error(tmp_path):
    assert main(["validate", "--output-dir", str(tmp_path)]) == 2


def test_bad_data_is_a_domain_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("player_id,name,is_pitcher,month,ab,h\na,A,0,4,10,12\n", encoding="utf-8")
    assert main(["validate", "--data", str(bad), "--output-dir", str(tmp_path)]) == 3


def test_bad_flag_value_is_a_config_error(tmp_path):
    assert main(["validate", "--data", str(TABLE7), "--c", "0.9", "--output-dir", str(tmp_path)]) == 2


def test_unknown_flag_exits_through_argparse():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["validate", "--bogus"])
    assert info.value.code == 2
