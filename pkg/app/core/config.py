"""
Configuration management for DampOpt
Handles environment variables, solver tolerances and application settings
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.
    """

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application Info
    APP_NAME: str = "DampOpt"
    APP_VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"

    # CORS Settings
    CORS_ORIGINS: list[str] = [
        "http://localhost:3000",
        "http://127.0.0.1:3000",
    ]

    # Parallelism
    NUM_THREADS: int = 1

    # Rank tolerances
    ORTH_DROP_TOL: float = 1e-10
    ENRICH_DROP_TOL: float = 3e-3     # relative to the largest weighted column
    GRAMIAN_DROP_TOL: float = 1e-12
    V0_ENERGY_TOL: float = 1e-4       # discarded fraction of trace(X11) for V0

    # sym2IRKA
    IRKA_ORDER: int = 30
    IRKA_MAX_ITER: int = 50
    IRKA_SHIFT_TOL: float = 1e-4

    # Optimization
    TOL_OPT: float = 1e-3
    TOL_ERR1: float = 1e-2
    TOL_ERR2: float = 1e-4
    MAX_EVAL: int = 2000
    MAX_OUTER_ITER: int = 30
    INTERP_CORNER_CAP: int = 6

    # Benchmarks
    FULL_SCALE_N: int = 500
    OUTPUT_DIR: str = "results"


# Create global settings instance
settings = Settings()


def get_settings() -> Settings:
    """
    Get application settings instance.

    Returns:
        Settings: Application settings
    """
    return settings
