from pathlib import Path
from typing import Any, Dict, Iterable
import logging
import os

import yaml

from gaptv.data_and_types import GapMode

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = 'GAPTV_HOME'
CONFIG_FILE_NAME = 'config.yaml'

DEFAULT_CONFIG: Dict[str, Any] = {
    'q_min': 2,
    'q_max': 50,
    'gap_mode': GapMode.PER_CELL_NULL.value,
    'folds': 5,
    'n_lambda': 50,
    'lambda_min_ratio': 1e-4,
    'tol': 1e-8,
    'seed': 0,
    'jobs': 1,
}

_TYPES = {
    'q_min': int, 'q_max': int, 'gap_mode': str, 'folds': int, 'n_lambda': int,
    'lambda_min_ratio': float, 'tol': float, 'seed': int, 'jobs': int,
}

# commands whose own defaults must not be replaced by the shared config values
_COMMAND_EXCLUDES = {
    'crime-recipe': ('q_max', 'folds'),
}


def config_dir() -> Path:
    return Path(os.environ.get(CONFIG_ENV_VAR) or Path.home() / '.gaptv')


def config_path() -> Path:
    return config_dir() / CONFIG_FILE_NAME


def init_config_dir(reset: bool = False) -> Path:
    """Create the configuration directory and a default config.yaml if missing"""
    directory = config_dir()
    (directory / 'logs').mkdir(parents=True, exist_ok=True)
    path = directory / CONFIG_FILE_NAME
    if reset or not path.exists():
        with open(path, 'w') as f:
            yaml.safe_dump(DEFAULT_CONFIG, f, sort_keys=False)
    return path


def load_config() -> Dict[str, Any]:
    """Defaults overlaid with the values of config.yaml; bad entries are skipped with a warning"""
    config = dict(DEFAULT_CONFIG)
    path = config_path()
    if not path.exists():
        return config
    try:
        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        logger.warning("Ignoring unreadable config file %s: %s", path, e)
        return config
    if not isinstance(loaded, dict):
        logger.warning("Ignoring config file %s: expected a mapping", path)
        return config
    for key, value in loaded.items():
        if key not in _TYPES:
            logger.warning("Unknown config key '%s' in %s", key, path)
            continue
        try:
            config[key] = _TYPES[key](value)
        except (TypeError, ValueError):
            logger.warning("Config key '%s' has invalid value %r; using %r",
                           key, value, DEFAULT_CONFIG[key])
    return config


def command_default_map(config: Dict[str, Any], commands: Iterable[str]) -> Dict[str, Dict[str, Any]]:
    """click default_map: the shared values for every subcommand."""
    default_map = {}
    for name in commands:
        excluded = _COMMAND_EXCLUDES.get(name, ())
        default_map[name] = {k: v for k, v in config.items() if k not in excluded}
    return default_map
