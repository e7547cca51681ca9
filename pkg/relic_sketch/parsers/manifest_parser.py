"""
Relic Sketch - Dataset Manifest Parser
A manifest is {"records": [...]} where each record names an image and its optional
labels by paths relative to the manifest file.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from relic_sketch.errors import DataError, ManifestError
from relic_sketch.utils.artifacts import write_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PATH_FIELDS = ("image_path", "edge_label_path", "sketch_label_path", "fdog_target_path")
RECORD_KEYS = set(PATH_FIELDS) | {"split"}
SPLITS = ("train", "test")


@dataclass
class ManifestRecord:
    image_path: Path
    edge_label_path: Optional[Path] = None
    sketch_label_path: Optional[Path] = None
    fdog_target_path: Optional[Path] = None
    split: str = "train"

    @property
    def name(self) -> str:
        return self.image_path.stem

    def paths(self) -> Dict[str, Path]:
        return {key: getattr(self, key) for key in PATH_FIELDS if getattr(self, key) is not None}


@dataclass
class DatasetManifest:
    root: Path
    records: List[ManifestRecord] = field(default_factory=list)

    def split(self, name: str) -> List[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def require(self, label_field: str, split: str = "train") -> List[ManifestRecord]:
        """Records of a split, failing when the split is empty or any lacks the label"""
        records = self.split(split)
        if not records:
            raise ManifestError(f"manifest under {self.root} has no '{split}' records")
        missing = [r.name for r in records if getattr(r, label_field) is None]
        if missing:
            raise ManifestError(f"{len(missing)} '{split}' records lack {label_field}: {missing[:5]}")
        return records

    def check_files(self):
        for index, record in enumerate(self.records):
            for key, path in record.paths().items():
                if not path.exists():
                    raise ManifestError(f"record {index} ({record.name}): {key} {path} does not exist")


def _parse_record(raw, index: int, root: Path) -> ManifestRecord:
    if not isinstance(raw, dict):
        raise ManifestError(f"record {index} must be a JSON object")
    unknown = sorted(set(raw) - RECORD_KEYS)
    if unknown:
        raise ManifestError(f"record {index}: unknown keys {unknown}")
    if not raw.get("image_path"):
        raise ManifestError(f"record {index}: image_path is required")
    split = raw.get("split", "train")
    if split not in SPLITS:
        raise ManifestError(f"record {index}: split must be one of {SPLITS}, got {split!r}")
    values = {"split": split}
    for key in PATH_FIELDS:
        value = raw.get(key)
        if value is None:
            continue
        if not isinstance(value, str):
            raise ManifestError(f"record {index}: {key} must be a string path")
        values[key] = (root / value).resolve()
    return ManifestRecord(**values)


def parse_manifest(data, root: Path, check_files: bool = True) -> DatasetManifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = sorted(set(data) - {"records"})
    if unknown:
        raise ManifestError(f"manifest: unknown keys {unknown}")
    raw_records = data.get("records")
    if not isinstance(raw_records, list):
        raise ManifestError("manifest: 'records' must be a list")
    manifest = DatasetManifest(root, [_parse_record(raw, i, root) for i, raw in enumerate(raw_records)])
    if check_files:
        manifest.check_files()
    return manifest


def load_manifest(path: PathLike, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise DataError(f"Manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from e
    manifest = parse_manifest(data, path.parent.resolve(), check_files)
    logger.info(f"📊 Loaded manifest {path}: {len(manifest.split('train'))} train / "
                f"{len(manifest.split('test'))} test records")
    return manifest


def manifest_document(manifest: DatasetManifest, directory: Path) -> Dict:
    directory = directory.resolve()
    records = []
    for record in manifest.records:
        entry = {"split": record.split}
        for key, path in record.paths().items():
            entry[key] = Path(os.path.relpath(path, directory)).as_posix()
        records.append(entry)
    return {"records": records}


async def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    """Write the manifest with paths relative to its new location"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    await write_json(path, manifest_document(manifest, path.parent))
    logger.info(f"💾 Saved manifest with {len(manifest.records)} records to {path}")
