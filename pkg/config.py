# config.py
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
from pathlib import Path
from typing import Optional

class Settings(BaseSettings):

    log_level: str = "INFO"
    log_file: str = "ped_prune.log"
    block_rows: int = 256
    default_seed: int = 0
    default_subsample_cap: Optional[int] = None
    grad_floor: float = 1e-3

    model_config = SettingsConfigDict(
        env_prefix="PED_",
        env_file=Path(__file__).resolve().parent / ".env",
        env_file_encoding="utf-8",
    )

@lru_cache()
def get_settings() -> Settings:
    return Settings()
