import logging
import sys
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

SHIPPED_MODEL_PATH = Path(__file__).parent / "services" / "activity" / "data" / "weekday_reference.json"


class Settings(BaseSettings):
    LOG_LEVEL: str = "INFO"
    MODEL_PATH: str = str(SHIPPED_MODEL_PATH)
    OUTPUT_DIR: str = "./runs"
    N_SCENARIOS: int = 100
    SEED: int = 1
    SOLVER: str = "fast"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="MPC_", extra="ignore")


settings = Settings()


def configure_logging(level: str | None = None) -> None:
    """Install a single stderr handler on the root logger (idempotent)."""
    root = logging.getLogger()
    root.setLevel((level or settings.LOG_LEVEL).upper())
    if any(getattr(h, "_mpc_handler", False) for h in root.handlers):
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler._mpc_handler = True
    root.addHandler(handler)
