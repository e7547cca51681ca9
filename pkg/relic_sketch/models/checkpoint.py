"""
Relic Sketch - Checkpoints
Layout: b"RSKC1", uint64 little-endian header length, sorted-key JSON header,
then every tensor as little-endian float64 at the offset the header records.
"""

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from relic_sketch.errors import CheckpointError, ConfigError, ContractError, DataError
from relic_sketch.models.coarse_net import CoarseNet, CoarseNetConfig
from relic_sketch.models.fine_net import FineNet, FineNetConfig
from relic_sketch.models.layers import Network
from relic_sketch.settings import ARTIFACT_VERSION

logger = logging.getLogger(__name__)

MAGIC = b"RSKC1"
BLOB_DTYPE = np.dtype("<f8")
_LENGTH = struct.Struct("<Q")

NETWORKS = {
    "coarse": (CoarseNet, CoarseNetConfig),
    "fine": (FineNet, FineNetConfig),
}

PathLike = Union[str, Path]


@dataclass
class CheckpointHeader:
    artifact_version: str
    net_kind: str
    config: Dict[str, Any]
    seed: int
    step: int = 0
    stage: Optional[str] = None
    train_config: Optional[Dict[str, Any]] = None
    tensors: Dict[str, Dict[str, Any]] = field(default_factory=dict)


def encode_checkpoint(net: Network, step: int = 0, stage: Optional[str] = None,
                      train_config: Optional[Dict[str, Any]] = None) -> bytes:
    tensors = {}
    chunks = []
    offset = 0
    for name, value in net.parameters.items():
        raw = np.ascontiguousarray(value, dtype=BLOB_DTYPE).tobytes()
        tensors[name] = {"shape": list(value.shape), "offset": offset}
        chunks.append(raw)
        offset += len(raw)

    header = CheckpointHeader(
        artifact_version=ARTIFACT_VERSION,
        net_kind=net.kind,
        config=asdict(net.config),
        seed=net.seed,
        step=int(step),
        stage=stage,
        train_config=train_config,
        tensors=tensors,
    )
    header_bytes = json.dumps(asdict(header), sort_keys=True).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(chunks)


def save_checkpoint(path: PathLike, net: Network, step: int = 0, stage: Optional[str] = None,
                    train_config: Optional[Dict[str, Any]] = None) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(net, step, stage, train_config))
    except OSError as e:
        raise DataError(f"Failed to write checkpoint {path}: {e}") from e
    logger.info(f"💾 Saved {net.kind} checkpoint ({net.parameter_count()} parameters, step {step}) to {path}")


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> Tuple[Network, CheckpointHeader]:
    prefix = len(MAGIC) + _LENGTH.size
    if len(payload) < prefix or not payload.startswith(MAGIC):
        raise CheckpointError(f"{source}: not a relic-sketch checkpoint")
    (header_len,) = _LENGTH.unpack_from(payload, len(MAGIC))
    if prefix + header_len > len(payload):
        raise CheckpointError(f"{source}: truncated header")
    try:
        header = CheckpointHeader(**json.loads(payload[prefix:prefix + header_len].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as e:
        raise CheckpointError(f"{source}: unreadable header ({e})") from e

    if header.artifact_version != ARTIFACT_VERSION:
        raise CheckpointError(
            f"{source}: artifact version {header.artifact_version} is not supported (expected {ARTIFACT_VERSION})")
    if header.net_kind not in NETWORKS:
        raise CheckpointError(f"{source}: unknown network kind '{header.net_kind}'")

    net_cls, config_cls = NETWORKS[header.net_kind]
    try:
        net = net_cls(config_cls(**header.config), header.seed)
    except (TypeError, ConfigError) as e:
        raise CheckpointError(f"{source}: config does not match {config_cls.__name__} ({e})") from e

    blob = memoryview(payload)[prefix + header_len:]
    state = {}
    spans = []
    for name, entry in header.tensors.items():
        shape = tuple(entry["shape"])
        start = int(entry["offset"])
        end = start + int(np.prod(shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
        if start < 0 or end > len(blob):
            raise CheckpointError(f"{source}: tensor '{name}' lies outside the blob")
        spans.append((start, end, name))
        state[name] = np.frombuffer(blob[start:end], dtype=BLOB_DTYPE).reshape(shape).astype(np.float64)
    spans.sort()
    for (_, end, first), (start, _, second) in zip(spans, spans[1:]):
        if start < end:
            raise CheckpointError(f"{source}: tensors '{first}' and '{second}' overlap")

    try:
        net.load_state(state)
    except ContractError as e:
        raise CheckpointError(f"{source}: {e}") from e
    return net, header


def load_checkpoint(path: PathLike, expected_kind: Optional[str] = None) -> Tuple[Network, CheckpointHeader]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Checkpoint not found: {path}")
    net, header = decode_checkpoint(path.read_bytes(), str(path))
    if expected_kind is not None and header.net_kind != expected_kind:
        raise CheckpointError(f"{path}: expected a {expected_kind} checkpoint, found {header.net_kind}")
    logger.info(f"✅ Loaded {header.net_kind} checkpoint from {path} (step {header.step}, stage {header.stage})")
    return net, header
