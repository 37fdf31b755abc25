"""
Configuration module for the hidsense simulator.

This module provides centralized configuration settings: bus timing defaults,
environment variable names and the helpers that read them.
"""

import os

from hidsense.utils.errors import ConfigError

SEED_ENV_VAR = "HIDSENSE_SEED"
LOG_LEVEL_ENV_VAR = "HIDSENSE_LOG_LEVEL"
STRUCTURED_LOGS_ENV_VAR = "HIDSENSE_STRUCTURED_LOGS"

DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_TRACE_OUT = "hidsense.trace"

# EasyHID "Polling (Input)" value; the endpoint's bInterval of 1 ms is the floor.
DEFAULT_HOST_POLL_MS = 10
KEEPALIVE_WINDOW_US = 10_000
# USB attach debounce the host waits out before resetting/enumerating.
ATTACH_DEBOUNCE_US = 100_000

# Two Delay_ms(1000) after Hid_Enable, then one per loop.
STARTUP_DELAY_US = 2_000_000
REPORT_PERIOD_US = 1_000_000

CRYSTAL_HZ = 8_000_000
DEVICE_VENDOR_ID = 0x1234
DEVICE_PRODUCT_ID = 0x0001

MAX_SEED = 2**64 - 1


def get_env(key: str, default: str | None = None) -> str | None:
    """
    Get an environment variable with optional default value.

    Args:
        key: The name of the environment variable
        default: Optional default value if not found

    Returns:
        The value of the environment variable or the default
    """
    return os.environ.get(key, default)


def parse_seed(text: str) -> int:
    """
    Parse a 64-bit simulation seed (decimal or 0x-prefixed hex).

    Raises:
        ConfigError: If the text is not an integer in 0..2**64-1
    """
    try:
        seed = int(text, 0)
    except ValueError as e:
        raise ConfigError(f"Invalid seed: {text!r}") from e
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"Seed out of range: {seed}", {"max": MAX_SEED})
    return seed


def get_seed(default: int = 0) -> int:
    """
    Get the default simulation seed from the environment.

    Returns:
        The HIDSENSE_SEED value, or `default` when it is not set
    """
    value = get_env(SEED_ENV_VAR)
    if not value:
        return default
    return parse_seed(value)


def get_log_level() -> str:
    return (get_env(LOG_LEVEL_ENV_VAR, DEFAULT_LOG_LEVEL) or DEFAULT_LOG_LEVEL).upper()


def structured_logs_enabled() -> bool:
    return (get_env(STRUCTURED_LOGS_ENV_VAR, "false") or "false").lower() == "true"
