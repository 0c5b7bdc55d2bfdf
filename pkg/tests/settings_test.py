import pytest

from batting_shrinkage.errors import ConfigError, DomainError, NumericError, ShrinkageError
from batting_shrinkage.settings import (
    DATA_PATH_ENV,
    OUTPUT_DIR_ENV,
    RunConfig,
    build_config,
    load_yaml_section,
    resolve_config,
    write_manifest,
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(DATA_PATH_ENV, raising=False)
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def test_packaged_defaults():
    config = resolve_config({"subcommand": "validate"})
    assert config.scheme == "halves"
    assert config.cohort == ["all"]
    assert config.min_ab == 11
    assert config.c == 0.25
    assert config.seed == 20050403
    assert config.data_path is None


def test_study_preset_then_flags():
    config = resolve_config({"subcommand": "validate", "study": "table5"})
    assert config.scheme == "five-one"
    assert config.cohort == ["nonpitchers"]
    assert config.min_ab_train == 26
    overridden = resolve_config({"subcommand": "validate", "study": "table5", "scheme": "halves", "min_ab_train": None})
    assert overridden.scheme == "halves"
    assert overridden.min_ab_train == 26


def test_environment_sits_below_flags(monkeypatch):
    monkeypatch.setenv(DATA_PATH_ENV, "from_env.csv")
    monkeypatch.setenv(OUTPUT_DIR_ENV, "env_out")
    config = resolve_config({"subcommand": "fit"})
    assert config.data_path == "from_env.csv"
    assert config.output_dir == "env_out"
    assert resolve_config({"subcommand": "fit", "data_path": "flag.csv"}).data_path == "flag.csv"


def test_comma_lists():
    config = resolve_config({"subcommand": "curves", "curve_c": "0,0.25", "curve_n": "12,48", "cohort": "nonpitchers, pitchers"})
    assert config.curve_c == [0.0, 0.25]
    assert config.curve_n == [12, 48]
    assert config.cohort == ["nonpitchers", "pitchers"]


@pytest.mark.parametrize(
    "values, field",
    [
        ({"min_ab": 0}, "min_ab"),
        ({"c": 0.7}, "c"),
        ({"scheme": "weekly"}, "scheme"),
        ({"cohort": "rookies"}, "cohort"),
        ({"unknown": 1}, "unknown"),
    ],
)
def test_config_errors_name_the_field(values, field):
    with pytest.raises(ConfigError) as info:
        build_config({"subcommand": "validate", **values})
    assert str(info.value).startswith(f"{field}")
    assert info.value.exit_code == 2


def test_unknown_study():
    with pytest.raises(ConfigError, match="^study:"):
        resolve_config({"subcommand": "validate", "study": "table9"})


def test_every_study_resolves():
    for name in load_yaml_section("studies"):
        assert resolve_config({"subcommand": "validate", "study": name}).study == name


def test_manifest_round_trip(tmp_path):
    config = resolve_config(
        {"subcommand": "simulate", "study": "table2", "seed": 7, "h": 0.2, "sim_theta": "mixture", "output_dir": str(tmp_path)}
    )
    path = write_manifest(config, tmp_path / "manifest.txt")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# written ")
    assert lines[1:] == sorted(lines[1:])
    assert "seed=7" in lines
    assert RunConfig.from_manifest(path) == config


def test_exit_codes():
    assert ShrinkageError("x").exit_code == 1
    assert ConfigError("x").exit_code == 2
    assert DomainError("x").exit_code == 3
    assert NumericError("x").exit_code == 4
    assert isinstance(DomainError("x"), ValueError)
