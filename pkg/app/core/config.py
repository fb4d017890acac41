from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    # Scenario file (the only scenario-level override taken from the environment)
    config_path: Optional[str] = None

    # Logging
    log_level: str = "INFO"

    # Spectral kernel cache; unset disables the on-disk cache
    kernel_cache_dir: Optional[str] = None

    # Surrogate directory served by the HTTP app
    surrogate_dir: Optional[str] = None

    class Config:
        env_file = ".env"
        env_prefix = "KINETIC_UQ_"


settings = Settings()
