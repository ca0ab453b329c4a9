"""
Configuration module using Pydantic Settings.
Reads process-level settings from environment variables with automatic validation.
Run-level settings (datasets, training, fusion) live in RunConfig.
"""

from typing import Literal
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="RIAC_",
        case_sensitive=False,
        extra="ignore"
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="INFO",
        description="Logging level"
    )

    # RIAC_OUTPUT_ROOT
    output_root: str = Field(
        default="runs",
        description="Default root directory for command outputs",
    )

    jobs: int = Field(default=1, ge=1, le=64, description="Default worker cap for parallel jobs")

    log_buffer_size: int = Field(
        default=5000,
        ge=100,
        description="Number of log records kept in memory and flushed to run.log",
    )


# Global settings instance
settings = Settings()
