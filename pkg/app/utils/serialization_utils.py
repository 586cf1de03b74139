import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np


def to_jsonable(data: Any) -> Any:
    """
    Convert numpy scalars, arrays and nested containers into plain JSON types.

    Args:
        data (Any): Value to convert.

    Returns:
        Any: A structure made only of dict, list, str, int, float, bool and None.
    """
    if isinstance(data, dict):
        return {str(key): to_jsonable(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_jsonable(value) for value in data]
    if isinstance(data, np.ndarray):
        return [to_jsonable(value) for value in data.tolist()]
    if isinstance(data, np.bool_):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, np.floating):
        return float(data)
    return data


def write_json(path: Union[str, Path], data: Dict[str, Any]) -> None:
    """Write a manifest with sorted keys so equal content gives equal bytes."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(to_jsonable(data), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
