import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.config.constants import LOO_DEFAULT_FOLDS
from app.core.errors import ConfigError

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_ignore_empty=True, extra="ignore")

    LOG_LEVEL: str = "INFO"

    # Run directory used when neither the config file nor --out names one
    OUTPUT_DIR: str = "runs/default"

    # Root seed expanded into named per-stage seeds
    ROOT_SEED: int = 0

    # Parallel grid cells / leave-one-out folds (1 = sequential)
    WORKERS: int = 1

    # Leave-one-out fold subsample (0 = all folds)
    LOO_FOLDS: int = LOO_DEFAULT_FOLDS


settings = Settings()


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """
    Apply ``dotted.key=value`` overrides to a nested config dict.

    Values are parsed as JSON when possible and kept as strings otherwise.
    """
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"Override '{override}' is not of the form key=value")
        key, raw = override.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"Override '{override}' has an empty key")
        node = data
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override '{override}' descends into non-object '{part}'")
            node = child
        node[parts[-1]] = _parse_override_value(raw)
    return data


def load_experiment_config(
    path: Optional[str] = None,
    overrides: Optional[List[str]] = None,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
):
    """Load an ExperimentConfig from JSON plus command-line overrides."""
    from app.schemas.experiment import ExperimentConfig

    data: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")

    apply_overrides(data, overrides or [])
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = output_dir

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError:
        logger.error("Experiment config failed validation")
        raise
