"""
Configuration loader
Loads process settings from the user's private .env, a local .env, or the environment
"""

import logging
import os

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError


def load_config():
    """
    Load configuration from multiple locations in order of priority:
    1. .env file in ~/.cachewire (per-user settings)
    2. .env file in current directory (for local development)
    3. Plain environment variables
    """

    home_env = os.path.expanduser('~/.cachewire/.env')
    if os.path.exists(home_env):
        load_dotenv(home_env)
        return home_env

    local_env = os.path.join(os.path.dirname(os.path.abspath(__file__)), '.env')
    if os.path.exists(local_env):
        load_dotenv(local_env)
        return local_env

    return None


CONFIG_SOURCE = load_config()


def get_config(key, default=None):
    """Get configuration value with fallback"""
    return os.environ.get(key, default)


def get_int_config(key, default):
    """Integer setting; rejects non-numeric and non-positive values"""
    raw = get_config(key)
    if raw is None or raw == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer (got {raw!r})")
    if value < 1:
        raise ConfigError(f"{key} must be >= 1 (got {value})")
    return value


def thread_cap():
    """Worker threads for sweeps, rounds and threshold scans"""
    return get_int_config('CACHEWIRE_THREADS', os.cpu_count() or 1)


DATA_DIR = get_config('CACHEWIRE_DATA_DIR', 'data')
MOVIELENS_URL = get_config(
    'CACHEWIRE_MOVIELENS_URL',
    'https://files.grouplens.org/datasets/movielens/ml-100k.zip'
)

# ============================================================================
# LOGGING
# ============================================================================

LOG_FORMAT = '[%(levelname)s] %(message)s'


def setup_logging(level=None, log_file=None):
    """
    Configure the root logger once for the CLI
    Console output always; a log file too when CACHEWIRE_LOG_FILE is set
    """
    level = level or get_config('CACHEWIRE_LOG_LEVEL', 'INFO')
    log_file = log_file or get_config('CACHEWIRE_LOG_FILE')

    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"CACHEWIRE_LOG_LEVEL not recognised: {level!r}")

    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(level=numeric, format=LOG_FORMAT, handlers=handlers, force=True)
    return logging.getLogger('cachewire')


# ============================================================================
# EXPERIMENT FILES
# ============================================================================

def read_experiment_file(path):
    """
    Parse a flat key=value experiment file (same syntax as .env)
    Returns a plain dict of strings; OSError propagates for missing files
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")

    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"{path}: keys without a value: {', '.join(missing)}")
    return dict(values)
