"""Gas model configuration."""
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings

from gas_model.models import ForkConfig, GasSchedule
from gas_model.schedules import load_schedule


class GasModelConfig(BaseSettings):
    """Gas model configuration."""
    schedule: str = "berlin"
    schedule_file: Optional[Path] = None  # key=integer overrides
    coinbase_auto_warm: bool = True
    precompile_max: int = Field(default=9, ge=1)

    class Config:
        env_file = ".env"
        env_prefix = "GAS_"
        extra = "ignore"

    def gas_schedule(self) -> GasSchedule:
        return load_schedule(self.schedule, self.schedule_file)

    def fork(self) -> ForkConfig:
        return ForkConfig(
            coinbase_auto_warm=self.coinbase_auto_warm,
            precompile_max=self.precompile_max,
        )
