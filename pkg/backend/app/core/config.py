"""
Configuration settings for the CTR prediction toolkit
"""

from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseSettings):
    # Application settings
    APP_NAME: str = "ctrforge"
    DEBUG: bool = False
    VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "INFO"

    # Run directory root, used when a run config leaves workdir unset
    WORKDIR: str = "runs"

    # Ingestion: fraction of malformed log rows tolerated before aborting
    MALFORMED_ROW_THRESHOLD: float = 0.05

    # Numeric precision for parameters and activations
    FLOAT_DTYPE: str = "float32"

    # Checkpoint format
    CHECKPOINT_VERSION: int = 1

    model_config = SettingsConfigDict(
        env_prefix="CTRFORGE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

# Create settings instance
settings = Settings()
