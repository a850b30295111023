import json
from pathlib import Path

DEFAULT_CONFIG_PATH = Path("conf/config.json")


def load_config(config_path: str | Path = DEFAULT_CONFIG_PATH) -> dict:
    """Load project config from JSON file."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")
    with open(config_path, "r") as f:
        return json.load(f)


def config_value(config: dict, section: str, key: str, default=None):
    """Read `config[section][key]`, tolerating a missing section."""
    return config.get(section, {}).get(key, default)
