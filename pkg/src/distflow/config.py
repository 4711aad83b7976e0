"""Configuration management for DistFlow-Sim using Pydantic."""

from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Config(BaseSettings):
    """Process-level settings, overridable through DISTFLOW_* environment variables."""

    # Run records
    data_dir: Path = Field(default=Path("data"))

    # Transport settings
    max_frame_size: int = Field(default=64 * 1024 * 1024, gt=0)
    recv_timeout_s: float = Field(default=120.0, gt=0)
    handshake_timeout_s: float = Field(default=20.0, gt=0)
    tcp_host: str = "127.0.0.1"
    tcp_base_port: int = Field(default=0, ge=0, le=65535)

    # Logging
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        if v.upper() not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}")
        return v.upper()

    model_config = SettingsConfigDict(
        env_prefix="DISTFLOW_",
        env_file_encoding="utf-8",
        extra="ignore",
    )


def find_env_file() -> Optional[Path]:
    """Find the .env file, checking current directory and project roots above it."""
    cwd_env = Path.cwd() / ".env"
    if cwd_env.exists():
        return cwd_env

    current = Path.cwd()
    for parent in [current] + list(current.parents):
        env_file = parent / ".env"
        if env_file.exists():
            # Only trust .env files sitting next to a project manifest
            if (parent / "pyproject.toml").exists() or (parent / "setup.py").exists():
                return env_file

    return None


# Global config instance cache
_config_instance: Optional[Config] = None
_env_loaded = False


def get_config() -> Config:
    """Get the global configuration instance with environment file loading."""
    global _config_instance, _env_loaded

    if not _env_loaded:
        env_file = find_env_file()
        if env_file:
            load_dotenv(env_file)
        _env_loaded = True

    if _config_instance is None:
        _config_instance = Config()

    return _config_instance


def reset_config() -> None:
    """Drop the cached configuration so the next get_config() re-reads the environment."""
    global _config_instance
    _config_instance = None
