"""
Configuration management for OrdiStage
"""

from typing import Literal

import psutil
from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    DATA_DIR: str = "data"

    LOG_FORMAT: Literal["text", "json"] = "text"
    LOG_LEVEL: str = "INFO"

    # Upper bound on folds trained in parallel processes
    ORDISTAGE_THREADS: int = 1

    @field_validator("ORDISTAGE_THREADS")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"ORDISTAGE_THREADS must be at least 1 (got {v})")
        available = psutil.cpu_count() or 1
        return min(v, available)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"LOG_LEVEL must be a standard logging level, got {v!r}")
        return level

    OUTPUT_DIR: str = "runs"

    model_config = {"env_file": ".env", "case_sensitive": True, "extra": "ignore"}


settings = Settings()
