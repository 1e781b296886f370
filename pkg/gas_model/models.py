"""Gas model types."""
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, model_validator

from shared.exceptions import UnsupportedSchedule
from trace_core.models import WarmSets

__all__ = ["GasSchedule", "ForkConfig", "WarmSets", "WarmReason", "GasBreakdown"]

ScheduleName = Literal["frontier", "eip150", "eip1884", "berlin"]


class GasSchedule(BaseModel):
    """Integer cost constants of one gas schedule.

    Schedules without warm/cold tracking (everything before berlin) price
    every access flat and reject access lists.
    """
    model_config = ConfigDict(frozen=True)

    name: ScheduleName = "berlin"
    cold_account_access_cost: NonNegativeInt = 2600
    warm_access_cost: NonNegativeInt = 100
    cold_sload_cost: NonNegativeInt = 2100
    access_list_address_cost: NonNegativeInt = 2400
    access_list_storage_key_cost: NonNegativeInt = 1900
    tracks_warmth: bool = True

    @property
    def supports_access_lists(self) -> bool:
        return self.tracks_warmth

    @property
    def per_address_saving(self) -> int:
        """Net gain of listing an address that is then accessed cold."""
        return self.cold_account_access_cost - self.access_list_address_cost - self.warm_access_cost

    @property
    def per_key_saving(self) -> int:
        """Net gain of listing a storage key that is then accessed."""
        return self.cold_sload_cost - self.access_list_storage_key_cost - self.warm_access_cost

    def require_access_lists(self) -> None:
        if not self.supports_access_lists:
            raise UnsupportedSchedule(f"schedule {self.name!r} has no access list pricing")


class ForkConfig(BaseModel):
    """Fork-dependent warmth rules."""
    model_config = ConfigDict(frozen=True)

    coinbase_auto_warm: bool = True
    precompile_max: int = Field(default=9, ge=1)


class WarmReason(str, Enum):
    """Why an address is warm before the first opcode runs."""
    SENDER = "Sender"
    RECIPIENT = "Recipient"
    PRODUCER = "Producer"
    CREATED = "Created"
    PRECOMPILE = "Precompile"


class GasBreakdown(BaseModel):
    """Gas charged for one trace under one access list."""
    model_config = ConfigDict(frozen=True)

    upfront_tal_cost: NonNegativeInt = 0
    access_gas: NonNegativeInt = 0
    total: NonNegativeInt = 0
    cold_address_events: NonNegativeInt = 0
    warm_address_events: NonNegativeInt = 0
    cold_slot_events: NonNegativeInt = 0
    warm_slot_events: NonNegativeInt = 0

    @model_validator(mode="after")
    def _total_adds_up(self) -> "GasBreakdown":
        if self.total != self.upfront_tal_cost + self.access_gas:
            raise ValueError("total must equal upfront_tal_cost + access_gas")
        return self
