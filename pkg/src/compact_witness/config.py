"""Configuration management using Pydantic models."""

import logging
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .constants import (
    DEFAULT_BATCH_COUNT,
    DEFAULT_BATCH_WORKERS,
    DEFAULT_DEPTH,
    DEFAULT_EPSILON_BITS,
    DEFAULT_FRESH_PROBE,
    DEFAULT_HORIZON,
    DEFAULT_PRECISION_BITS,
    DEFAULT_TOLERANCE_BITS,
)

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class PrecisionConfig(BaseModel):
    """Interval arithmetic settings."""
    bits: int = Field(default=DEFAULT_PRECISION_BITS, ge=1)


class VerifyConfig(BaseModel):
    """Convergence check settings."""
    epsilon_bits: int = Field(default=DEFAULT_EPSILON_BITS, ge=0)
    depth: int = Field(default=DEFAULT_DEPTH, ge=1)
    fresh_probe: int = Field(default=DEFAULT_FRESH_PROBE, ge=0)


class EmpiricalConfig(BaseModel):
    """Black-box extraction settings."""
    horizon: int = Field(default=DEFAULT_HORIZON, ge=2)
    tolerance_bits: int = Field(default=DEFAULT_TOLERANCE_BITS, ge=0)


class BatchConfig(BaseModel):
    """Batch and generator settings."""
    workers: int = Field(default=DEFAULT_BATCH_WORKERS, ge=1)
    seed: int = 0
    count: int = Field(default=DEFAULT_BATCH_COUNT, ge=0)


class LoggingConfig(BaseModel):
    level: str = "INFO"

    @field_validator("level", mode="before")
    @classmethod
    def normalise_level(cls, v):
        """Accept lower-case level names."""
        level = str(v).upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log level must be one of {LOG_LEVELS}, got {v!r}")
        return level


class Config(BaseModel):
    """Root configuration model."""
    precision: PrecisionConfig = Field(default_factory=PrecisionConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    empirical: EmpiricalConfig = Field(default_factory=EmpiricalConfig)
    batch: BatchConfig = Field(default_factory=BatchConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


class EnvSettings(BaseSettings):
    """Environment overrides (COMPACT_WITNESS_CONFIG, COMPACT_WITNESS_LOG_LEVEL)."""

    model_config = SettingsConfigDict(env_prefix="COMPACT_WITNESS_")

    config: Path = Path("config.yaml")
    log_level: Optional[str] = None


class Settings:
    """Application settings loaded from the YAML file named by the environment."""

    def __init__(self, config_path: Optional[Path] = None):
        """Load and validate configuration."""
        env = EnvSettings()
        self.config_path = Path(config_path) if config_path else env.config
        self.config = self._load_config()
        if env.log_level:
            self.config.logging = LoggingConfig(level=env.log_level)

    def _load_config(self) -> Config:
        """Load configuration from YAML using Pydantic; a missing file means defaults."""
        if not self.config_path.exists():
            logger.debug(f"No config file at {self.config_path}, using defaults")
            return Config()
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                raw_config = yaml.safe_load(f) or {}
            config = Config(**raw_config)
            logger.debug(f"[OK] Loaded configuration from {self.config_path}")
            return config
        except Exception as e:
            logger.error(f"[ERROR] Failed to load config: {e}")
            raise

    @property
    def log_level(self) -> str:
        return self.config.logging.level


# Singleton cache for settings
_SETTINGS_SINGLETON = None


def get_settings() -> Settings:
    """Get (cached) application settings singleton."""
    global _SETTINGS_SINGLETON
    if _SETTINGS_SINGLETON is None:
        _SETTINGS_SINGLETON = Settings()
    return _SETTINGS_SINGLETON


def reload_settings(config_path: Optional[Path] = None) -> Settings:
    """Force reload of application settings singleton."""
    global _SETTINGS_SINGLETON
    _SETTINGS_SINGLETON = Settings(config_path)
    return _SETTINGS_SINGLETON
