"""
regflow configuration management using Pydantic Settings.

Loads defaults from environment variables and the .env.regflow file.
Command-line flags override these values per run.
"""
from pathlib import Path
from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from regflow.models.schemas import AmiAverage, DetectConfig, SearchConfig


class RegFlowSettings(BaseSettings):
    """Defaults loaded from .env.regflow or REGFLOW_* environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env.regflow",
        env_file_encoding="utf-8",
        env_prefix="REGFLOW_",
        case_sensitive=False,
        extra="ignore",
    )

    # Flow computation
    tolerance: float = Field(
        default=1e-12,
        gt=0,
        description="L1 convergence tolerance of the power iteration"
    )
    max_iter: int = Field(
        default=10_000,
        ge=1,
        description="Maximum number of power iterations"
    )
    teleport_alpha: float = Field(
        default=0.15,
        gt=0,
        lt=1,
        description="Teleportation probability for the standard and teleport models"
    )
    prior_scale: float = Field(
        default=1.0,
        gt=0,
        description="Multiplier on every connectivity parameter of the prior"
    )

    # Search
    seed: int = Field(default=0, description="Base seed for search and sampling")
    trials: int = Field(default=10, ge=1, description="Independent search trials")
    max_outer_loops: int = Field(
        default=100,
        ge=1,
        description="Maximum number of aggregation levels per trial"
    )
    max_sweeps: int = Field(
        default=1000,
        ge=1,
        description="Maximum local-move sweeps per aggregation level"
    )
    improvement_threshold: float = Field(
        default=1e-10,
        gt=0,
        description="Minimum codelength improvement (bits) that continues a search"
    )

    # Experiments
    workers: int = Field(default=1, ge=1, description="Worker processes for trials and sweeps")
    ami_average: AmiAverage = Field(
        default="arithmetic",
        description="Entropy normalization used by AMI"
    )

    # Output preferences
    output_dir: Path = Field(
        default=Path("regflow-out"),
        description="Directory for partition files, summaries and sweep CSVs"
    )
    color_enabled: bool = Field(
        default=True,
        description="Enable colored output"
    )


@lru_cache()
def get_settings() -> RegFlowSettings:
    """
    Get cached settings instance.

    Settings are loaded once and cached for performance.
    """
    return RegFlowSettings()


def detect_config(settings: Optional[RegFlowSettings] = None, **overrides) -> DetectConfig:
    """
    Detection parameters from settings, with non-None keyword overrides.

    Recognized overrides: seed, trials, workers, teleport_alpha, tolerance,
    max_iter, prior_scale, weight_model, ami_average.
    """
    settings = settings or get_settings()
    values = {key: value for key, value in overrides.items() if value is not None}
    search = SearchConfig(
        seed=values.pop("seed", settings.seed),
        trials=values.pop("trials", settings.trials),
        workers=values.pop("workers", settings.workers),
        max_outer_loops=settings.max_outer_loops,
        max_sweeps=settings.max_sweeps,
        improvement_threshold=settings.improvement_threshold,
    )
    return DetectConfig(
        teleport_alpha=values.pop("teleport_alpha", settings.teleport_alpha),
        tolerance=values.pop("tolerance", settings.tolerance),
        max_iter=values.pop("max_iter", settings.max_iter),
        prior_scale=values.pop("prior_scale", settings.prior_scale),
        ami_average=values.pop("ami_average", settings.ami_average),
        search=search,
        **values,
    )
