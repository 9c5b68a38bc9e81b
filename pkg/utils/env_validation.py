from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level knobs; experiment parameters live in ExperimentConfig."""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="FTRAIL_", extra="ignore")

    LOG_LEVEL: str = Field("INFO")
    OUTPUT_DIR: str = Field("runs")
    # torch intra-op threads; 1 keeps training bit-reproducible
    NUM_THREADS: int = Field(1, ge=1)


try:
    settings = Settings()
except ValidationError as e:
    print("Environment validation error:", e)
    raise
