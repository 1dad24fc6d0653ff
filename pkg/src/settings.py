import copy
import json
import logging
import os

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "config/settings.json"

# Baseline scenario: 10 sensors in a 100 m x 100 m area, W = 40, 30 steps,
# 100 mW transmit power, 50 J battery.
DEFAULT_CONFIG = {
    "simulation": {
        "num_sensors": 10,
        "num_uavs": 3,
        "steps": 30,
        "seed": 0,
        "policy": "icl",
        "top_k": 3,
        "dt": 1.0,
        "debug_checks": True,
    },
    "world": {
        "area_m": 100.0,
        "queue_cap": 40,
        "initial_queue": 0,
        "arrival_rate": 3.0,
        "arrival_rates": None,
        "sensor_positions": None,
        "battery_cap_j": 50.0,
        "tx_power_mw": 100.0,
        "packet_airtime_s": 0.1,
        "step_budget": 25,
    },
    "uav": {
        "altitude_m": 30.0,
        "v_max": 20.0,
        "battery_j": 5000.0,
        "trajectory": "random",
        "waypoint_count": 30,
        "hover_steps": 1,
        "patrol_side_m": 8.0,
        "patrol_ring_m": 20.0,
        "waypoints": None,
    },
    "channel": {
        "a": 9.61,
        "b": 0.16,
        "eta_los_db": 1.0,
        "eta_nlos_db": 20.0,
        "wavelength_m": 0.125,
        "light_speed": 3.0e8,
        "coverage_radius_m": 100.0,
        "gain_threshold_db": "median",
        "max_elevation_deg": 89.9,
        "calibration_grid": 21,
    },
    "attention": {
        "enabled": True,
        "d_prime": 8,
        "init_scale": 0.5,
        "learning_rate": 0.05,
        "online_update": False,
        "checkpoint": None,
    },
    "policy": {
        "buffer_capacity": 8,
        "prompt_char_budget": 12000,
    },
    "llm": {
        "backend": "mock",
        "base_url": "https://api.openai.com/v1",
        "model_name": "gpt-4o-mini",
        "timeout_s": 30.0,
        "max_retries": 2,
        "temperature": 0.0,
        "backoff_base_s": 0.5,
        "mock_latency_s": 0.25,
        "max_response_chars": 4000,
        "api_key_env": "UAVSIM_LLM_API_KEY",
    },
    "protocol": {
        "beacon_deadline": 2,
        "receive_deadline": 2,
    },
    "storage": {
        "out_dir": "results",
        "database": "runs.db",
    },
    "logging": {
        "level": "INFO",
    },
}


class ConfigError(Exception):
    """Raised for unreadable, unknown or invalid configuration."""


def load_config(config_file=None, overrides=None):
    """
    Load configuration

    Args:
        config_file: Path to a JSON settings file. None means built-in defaults.
        overrides: Iterable of "section.key=value" strings applied last

    Returns:
        Configuration dictionary (defaults deep-merged with the file)
    """
    config = copy.deepcopy(DEFAULT_CONFIG)

    if config_file is not None:
        if not os.path.exists(config_file):
            raise ConfigError(f"Config file not found: {config_file}")
        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {config_file}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config root must be an object: {config_file}")
        merge_config(config, loaded)
        logger.debug("📄 Loaded config %s", config_file)

    if overrides:
        apply_overrides(config, overrides)

    return config


def merge_config(base, update, path=""):
    """Deep-merge `update` into `base` in place; unknown keys are rejected."""
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"Unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config section {where} must be an object")
            merge_config(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def parse_override(text):
    """Split "section.key=value" into (["section", "key"], value)."""
    if "=" not in text:
        raise ConfigError(f"Override must look like section.key=value: {text!r}")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if len(parts) < 2:
        raise ConfigError(f"Override key must name a section and a key: {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_overrides(config, overrides):
    for text in overrides:
        parts, value = parse_override(text)
        nested = value
        for part in reversed(parts):
            nested = {part: nested}
        merge_config(config, nested)
    return config


def configure_logging(config):
    level_name = str(config.get("logging", {}).get("level", "INFO")).upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        raise ConfigError(f"Unknown logging level: {level_name}")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
