"""
Process Settings
Environment-driven settings loaded from the environment and .env
"""

import logging
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings that apply to every run in this process"""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", description="Root log level")
    output_dir: str = Field(default="runs", description="Default directory for reports and models")
    n_jobs: int = Field(default=1, description="Parallel jobs for sub-model and trial training")
    game_time_budget_s: float = Field(default=600.0, description="Wall-clock budget for one security game")
    host: str = Field(default="0.0.0.0")
    port: int = Field(default=8000)
    cors_origins: str = Field(default="*", description="Comma-separated allowed origins")


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings singleton"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once for CLI and server entry points"""
    logging.basicConfig(
        level=getattr(logging, (level or get_settings().log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
