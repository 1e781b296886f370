"""Named gas schedule presets and key=integer override files."""
from pathlib import Path
from typing import Dict, Optional, Union

import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from gas_model.models import GasSchedule
from shared.exceptions import ConfigError

logger = structlog.get_logger()

# Flat pre-berlin prices: SLOAD and BALANCE as priced by each fork.
PRESETS: Dict[str, GasSchedule] = {
    "frontier": GasSchedule(
        name="frontier", cold_account_access_cost=20, warm_access_cost=20, cold_sload_cost=20,
        access_list_address_cost=0, access_list_storage_key_cost=0, tracks_warmth=False,
    ),
    "eip150": GasSchedule(
        name="eip150", cold_account_access_cost=400, warm_access_cost=200, cold_sload_cost=200,
        access_list_address_cost=0, access_list_storage_key_cost=0, tracks_warmth=False,
    ),
    "eip1884": GasSchedule(
        name="eip1884", cold_account_access_cost=700, warm_access_cost=800, cold_sload_cost=800,
        access_list_address_cost=0, access_list_storage_key_cost=0, tracks_warmth=False,
    ),
    "berlin": GasSchedule(name="berlin"),
}

OVERRIDABLE = (
    "cold_account_access_cost",
    "warm_access_cost",
    "cold_sload_cost",
    "access_list_address_cost",
    "access_list_storage_key_cost",
)


def read_overrides(path: Union[str, Path]) -> Dict[str, int]:
    """Parse a key=integer schedule override file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"schedule file not found: {path}")
    overrides = {}
    for key, value in dotenv_values(path).items():
        if key not in OVERRIDABLE:
            raise ConfigError(f"unknown schedule key {key!r} in {path}")
        try:
            overrides[key] = int(value or "")
        except ValueError:
            raise ConfigError(f"schedule key {key!r} must be an integer, got {value!r}")
    return overrides


def load_schedule(name: str, overrides_file: Optional[Union[str, Path]] = None) -> GasSchedule:
    """Preset by name, optionally overridden from a key=integer file."""
    if name not in PRESETS:
        raise ConfigError(f"unknown schedule {name!r}; expected one of {', '.join(PRESETS)}")
    schedule = PRESETS[name]
    if overrides_file is None:
        return schedule

    overrides = read_overrides(overrides_file)
    try:
        schedule = GasSchedule.model_validate({**schedule.model_dump(), **overrides})
    except ValidationError as e:
        raise ConfigError(f"invalid schedule override: {e.errors()[0]['msg']}") from e
    logger.info("Loaded schedule overrides", schedule=name, keys=sorted(overrides))
    return schedule
