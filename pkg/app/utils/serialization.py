import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from app.core.errors import ArtifactMissingError, DataError

PathLike = Union[str, Path]


def array_to_json(array: np.ndarray) -> Dict[str, Any]:
    array = np.asarray(array, dtype=np.float64)
    return {"shape": list(array.shape), "data": array.reshape(-1).tolist()}


def array_from_json(payload: Dict[str, Any]) -> np.ndarray:
    try:
        return np.asarray(payload["data"], dtype=np.float64).reshape(payload["shape"])
    except (KeyError, ValueError) as e:
        raise DataError(f"Malformed stored array: {e}") from e


def state_to_json(state: Dict[str, np.ndarray]) -> Dict[str, Any]:
    return {key: array_to_json(value) for key, value in state.items()}


def state_from_json(payload: Dict[str, Any]) -> Dict[str, np.ndarray]:
    return {key: array_from_json(value) for key, value in payload.items()}


def dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def read_json(path: PathLike, stage: str = "") -> Any:
    path = Path(path)
    if not path.is_file():
        if stage:
            raise ArtifactMissingError(str(path), stage)
        raise FileNotFoundError(str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}") from e


def file_sha256(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def payload_sha256(payload: Any) -> str:
    return hashlib.sha256(dumps(payload).encode("utf-8")).hexdigest()
