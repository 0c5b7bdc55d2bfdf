from __future__ import annotations
import logging
import os
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, field_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

load_dotenv()

CONFIG_DIR = Path(__file__).parent / "config"

DATA_PATH_ENV = "BATTING_SHRINKAGE_DATA"
OUTPUT_DIR_ENV = "BATTING_SHRINKAGE_OUTPUT"
LOG_LEVEL_ENV = "BATTING_SHRINKAGE_LOG_LEVEL"

Subcommand = Literal["curves", "fit", "validate", "breakeven", "gof", "scan", "simulate"]


@lru_cache(maxsize=None)
def _read_yaml(name: str) -> Dict[str, Any]:
    path = CONFIG_DIR / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"missing packaged configuration {path.name}")
    with path.open("r", encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def load_yaml_section(name: str) -> Dict[str, Any]:
    """One of the packaged YAML files (``defaults``, ``estimators``, ``studies``, ``schemes``)."""
    return dict(_read_yaml(name))


def load_defaults() -> Dict[str, Any]:
    return load_yaml_section("defaults")


def _split_list(value: Union[str, List[str], None]) -> Optional[List[str]]:
    if value is None:
        return None
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


class RunConfig(BaseModel):
    """Fully resolved settings for one CLI run."""

    model_config = ConfigDict(extra="forbid")

    subcommand: Subcommand
    study: Optional[str] = Field(None, description="Preset from studies.yaml")
    data_path: Optional[str] = Field(None, description="Monthly or segment CSV")
    output_dir: str = Field("out", description="Directory receiving CSV/text outputs")
    scheme: str = Field("halves", description="Period scheme name from schemes.yaml")
    cohort: List[Literal["all", "pitchers", "nonpitchers"]] = Field(default_factory=lambda: ["all"])
    min_ab: PositiveInt = Field(11, description="Per-period attempt threshold (N >= min_ab)")
    min_ab_train: Optional[PositiveInt] = Field(None, description="Period-1 threshold override")
    min_season_ab: Optional[PositiveInt] = Field(None, description="Season attempt threshold")
    gof_min_ab: PositiveInt = Field(12, description="Qualifying-period threshold for the binomial tests")
    c: float = Field(0.25, ge=0.0, le=0.5, description="Arcsine offset constant")
    curve_c: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.375])
    curve_n: List[PositiveInt] = Field(default_factory=lambda: [12])
    curve_p: List[float] = Field(default_factory=list)
    h: Optional[float] = Field(None, gt=0.0, description="NPEB bandwidth constant; None = by P")
    hb_nodes_mu: PositiveInt = 64
    hb_nodes_omega: PositiveInt = 64
    tolerance: float = Field(1e-10, gt=0.0)
    max_iter: PositiveInt = 500
    estimators: List[str] = Field(default_factory=lambda: ["all"])
    criteria: List[str] = Field(default_factory=lambda: ["all"])
    q_star: float = Field(0.05, gt=0.0, lt=1.0)
    sided: Literal["one", "two"] = "one"
    seed: int = 20050403
    replications: PositiveInt = 500
    workers: PositiveInt = 1
    sim_tau2: float = Field(0.0011, ge=0.0)
    sim_theta: Literal["normal", "mixture", "n-correlated"] = "normal"
    sim_noise: Literal["gaussian", "binomial"] = "gaussian"

    @field_validator("cohort", "estimators", "criteria", "curve_c", "curve_n", "curve_p", mode="before")
    @classmethod
    def comma_lists(cls, v: Any) -> Any:
        return _split_list(v) if isinstance(v, str) else v

    @field_validator("scheme")
    @classmethod
    def known_scheme(cls, v: str) -> str:
        schemes = load_yaml_section("schemes")
        if v not in schemes:
            raise ValueError(f"unknown scheme '{v}' (known: {', '.join(sorted(schemes))})")
        return v

    def manifest_items(self) -> Dict[str, str]:
        items = {}
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            items[key] = str(value)
        return dict(sorted(items.items()))

    @classmethod
    def from_manifest(cls, path: Union[str, Path]) -> "RunConfig":
        values: Dict[str, Any] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value
        return build_config(values)


def build_config(values: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{field}: {first['msg']}") from exc


def resolve_config(cli_values: Dict[str, Any]) -> RunConfig:
    """
    Merge packaged defaults, environment, an optional study preset and CLI flags
    (later wins). ``None`` flag values mean "not given".
    """
    values: Dict[str, Any] = dict(load_defaults())
    if os.environ.get(DATA_PATH_ENV):
        values["data_path"] = os.environ[DATA_PATH_ENV]
    if os.environ.get(OUTPUT_DIR_ENV):
        values["output_dir"] = os.environ[OUTPUT_DIR_ENV]

    study = cli_values.get("study")
    if study:
        studies = load_yaml_section("studies")
        if study not in studies:
            raise ConfigError(f"study: unknown preset '{study}' (known: {', '.join(sorted(studies))})")
        values.update(studies[study].get("run", {}))

    values.update({k: v for k, v in cli_values.items() if v is not None})
    return build_config(values)


def write_manifest(config: RunConfig, path: Union[str, Path]) -> Path:
    """key=value lines, sorted; only the first (comment) line depends on the clock."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    lines = [f"# written {stamp}"] + [f"{k}={v}" for k, v in config.manifest_items().items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Manifest written to %s", path)
    return path
