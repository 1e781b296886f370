"""Optimizer models."""
from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator

from gas_model.models import GasBreakdown


class TalDelta(BaseModel):
    """Gas effect of an access list relative to sending the same trace without one.

    Negative values are savings.
    """
    model_config = ConfigDict(frozen=True)

    vs_empty: int
    vs_empty_wei: int
    breakdown_with: GasBreakdown
    breakdown_without: GasBreakdown

    @model_validator(mode="after")
    def _delta_matches_breakdowns(self) -> "TalDelta":
        if self.vs_empty != self.breakdown_with.total - self.breakdown_without.total:
            raise ValueError("vs_empty must equal breakdown_with.total - breakdown_without.total")
        return self

    def relative_saving(self, gas_used: Optional[int]) -> Optional[float]:
        """Share of the transaction's gas saved (positive = saving)."""
        if not gas_used:
            return None
        return -self.vs_empty / gas_used
