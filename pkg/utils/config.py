import json
import os
import hashlib
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

# Load .env file for local development
load_dotenv()

ENV_PREFIX = 'YIELDGAN__'
OUTPUT_ROOT_ENV = 'YIELDGAN_OUTPUT_ROOT'


def _coerce(value: str) -> Any:
    """Convert an environment string to bool/int/float where possible."""
    if value.lower() == 'true':
        return True
    if value.lower() == 'false':
        return False
    if value.lower() in ('null', 'none'):
        return None
    try:
        if '.' in value or 'e' in value.lower():
            return float(value)
        return int(value)
    except ValueError:
        return value


def apply_env_overrides(config: Dict[str, Any], environ: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """
    Override nested config keys from the environment.

    Format: YIELDGAN__SECTION__KEY=value (double underscore separates levels,
    so keys that contain single underscores survive).
    Example: YIELDGAN__DGAN__EPOCHS=10 overrides dgan.epochs
    """
    environ = os.environ if environ is None else environ
    for env_key, env_val in sorted(environ.items()):
        if not env_key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in env_key[len(ENV_PREFIX):].split('__') if p]
        if not parts:
            continue

        # Navigate/Create nested dicts
        current = config
        for part in parts[:-1]:
            if part not in current or not isinstance(current[part], dict):
                current[part] = {}
            current = current[part]
        current[parts[-1]] = _coerce(env_val)
        logger.debug(f"Config override from environment: {'.'.join(parts)}")
    return config


def get_config(config_path: str = 'config/config.yaml', required: bool = False) -> Dict[str, Any]:
    """
    Load configuration from a YAML (or JSON) file and override with environment variables.

    Args:
        config_path: Path to configuration file
        required: Raise ConfigError instead of falling back to defaults when the file is missing

    Returns:
        Configuration dictionary
    """
    path = Path(config_path)
    if not path.exists():
        if required:
            raise ConfigError(f"Config file {config_path} not found")
        logger.warning(f"Config file {config_path} not found. Using defaults/env vars.")
        config: Dict[str, Any] = {}
    else:
        try:
            with open(path, 'r') as f:
                # JSON is a subset of YAML, so both formats load here
                config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse config {config_path}: {e}") from e
        if not isinstance(config, dict):
            raise ConfigError(f"Config {config_path} must contain a mapping at top level")

    return apply_env_overrides(config)


def output_root(default: str = 'output') -> Path:
    """Root directory for artifacts, overridable with YIELDGAN_OUTPUT_ROOT."""
    return Path(os.environ.get(OUTPUT_ROOT_ENV, default))


def canonical_json(data: Any) -> str:
    """Deterministic JSON text used for hashing and manifests."""
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()
