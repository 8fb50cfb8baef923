from pathlib import Path
from typing import Any

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from goalplace.core.exceptions import InputError


class Settings(BaseSettings):
    log_level: str = "INFO"
    threads: int = Field(1, ge=1)
    seed: int = 0

    # density
    bin_scale: float = Field(10.0, gt=0)
    hist_bins: int = Field(100, ge=2)

    # empirical Bayes
    target_floor: float = Field(1e-3, gt=0, le=1)
    quantile_count: int = Field(10, ge=1)
    prior_size: int = Field(50, ge=2)
    hetero_max_iter: int = 1000
    hetero_tol: float = 1e-10
    hetero_damping: float = Field(0.5, gt=0, le=1)

    # inflation
    r_max: float = Field(8.0, ge=1)

    # placer
    filler_sites: int = Field(4, ge=1)
    overflow_stop: float = Field(0.07, ge=0)
    density_growth: float = Field(1.05, ge=1)
    warmup_iterations: int = Field(20, ge=0)

    # clustering
    clique_net_cap: int = Field(64, ge=2)
    leiden_resolution: float = Field(1.0, gt=0)
    module_min: int = Field(1000, ge=1)
    module_max: int = Field(50000, ge=2)

    # explore
    shift_limit: float = Field(0.2, ge=0)

    model_config = SettingsConfigDict(
        env_prefix="GOALPLACE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",  # Ignore extra environment variables
    )


# Create settings instance lazily to allow for test environment overrides
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get settings instance, allowing for runtime environment variable changes."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def load_config_file(path: Path) -> dict[str, Any]:
    """Read a YAML mapping of setting overrides."""
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle) or {}
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise InputError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must contain a mapping")
    return data


def configure(config_file: Path | None = None, **overrides: Any) -> Settings:
    """Rebuild the settings from env, an optional YAML file and explicit overrides."""
    global _settings
    values: dict[str, Any] = {}
    if config_file is not None:
        values.update(load_config_file(config_file))
    values.update({k: v for k, v in overrides.items() if v is not None})
    _settings = Settings(**values)
    return _settings


# Lazy property for backward compatibility
class SettingsProxy:
    def __getattr__(self, name):
        return getattr(get_settings(), name)


settings = SettingsProxy()
