"""
Relic Sketch - JSON Artifacts
Async JSON writers for manifests and reports
"""

import json
import logging
from pathlib import Path
from typing import Any, Union

import aiofiles

from relic_sketch.errors import DataError

logger = logging.getLogger(__name__)


async def write_json(path: Union[str, Path], payload: Any) -> None:
    path = Path(path)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "w") as handle:
            await handle.write(text)
    except OSError as e:
        raise DataError(f"Failed to write {path}: {e}") from e
    logger.debug(f"Wrote {path}")


async def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        async with aiofiles.open(path, "r") as handle:
            text = await handle.read()
    except FileNotFoundError as e:
        raise DataError(f"File not found: {path}") from e
    except OSError as e:
        raise DataError(f"Failed to read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e
