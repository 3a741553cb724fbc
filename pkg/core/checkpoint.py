"""
Checkpoint persistence

File layout:
    8 bytes   little-endian uint64 header length
    N bytes   UTF-8 JSON header (sorted keys, compact)
    payload   little-endian IEEE-754 doubles, arrays back to back

The header holds the format version, model kind, the shape manifest with
offsets, the config snapshot, normalization statistics, seed lineage and a
SHA-256 of the payload. Saving is deterministic, so save -> load -> save
reproduces the same bytes.
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from core.interfaces.model import BaseModel
from utils.errors import CheckpointError
from utils.logger import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = 1
MAGIC = 'yieldgan-checkpoint'
_LEN = struct.Struct('<Q')


def encode_arrays(arrays: Mapping[str, np.ndarray]) -> Tuple[List[Dict[str, Any]], bytes]:
    """
    Pack named arrays into one little-endian float64 buffer.

    Returns:
        (manifest entries with name/shape/offset, payload bytes)
    """
    manifest, chunks, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype='<f8')
        manifest.append({'name': name, 'shape': list(arr.shape), 'offset': offset})
        chunk = arr.tobytes(order='C')
        chunks.append(chunk)
        offset += len(chunk)
    return manifest, b''.join(chunks)


def decode_arrays(manifest: List[Dict[str, Any]], payload: bytes) -> Dict[str, np.ndarray]:
    arrays = {}
    for entry in manifest:
        shape = tuple(int(s) for s in entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry['offset'])
        end = start + 8 * count
        if end > len(payload):
            raise CheckpointError(f"Payload too short for array '{entry['name']}'")
        arrays[entry['name']] = np.frombuffer(payload[start:end], dtype='<f8').astype(np.float64).reshape(shape)
    return arrays


def write_container(path: Path, header: Dict[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
    """Write a header + array payload file."""
    manifest, payload = encode_arrays(arrays)
    header = dict(header)
    header['arrays'] = manifest
    header['payload_bytes'] = len(payload)
    header['payload_sha256'] = hashlib.sha256(payload).hexdigest()
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)


def read_container(path: Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read and verify a file written by write_container."""
    raw = Path(path).read_bytes()
    if len(raw) < _LEN.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    (header_len,) = _LEN.unpack_from(raw, 0)
    body_start = _LEN.size + header_len
    if body_start > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[_LEN.size:body_start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e

    payload = raw[body_start:]
    if len(payload) != header.get('payload_bytes'):
        raise CheckpointError(
            f"{path}: corrupt payload, expected {header.get('payload_bytes')} bytes, found {len(payload)}"
        )
    if hashlib.sha256(payload).hexdigest() != header.get('payload_sha256'):
        raise CheckpointError(f"{path}: corrupt payload, checksum mismatch")
    return header, decode_arrays(header.get('arrays', []), payload)


def save_checkpoint(model: BaseModel, path, seed_lineage: Optional[Dict[str, Any]] = None) -> Path:
    """
    Save a model's parameters and rebuild state.

    Args:
        model: Any BaseModel
        path: Destination file
        seed_lineage: Optional seed record to embed

    Returns:
        Path written
    """
    path = Path(path)
    header = {
        'magic': MAGIC,
        'format_version': FORMAT_VERSION,
        'kind': model.kind,
        'config': model.config_snapshot(),
        'statistics': model.statistics(),
        'seed_lineage': seed_lineage or {},
    }
    write_container(path, header, model.params)
    logger.info(f"💾 Saved {model.kind} checkpoint ({model.num_parameters()} parameters) to {path}")
    return path


def load_checkpoint(path, expected_kind: Optional[str] = None) -> BaseModel:
    """
    Load a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: version mismatch, shape-manifest mismatch, corrupt payload
    """
    from core.model_factory import model_class_for

    header, arrays = read_container(Path(path))
    if header.get('magic') != MAGIC:
        raise CheckpointError(f"{path}: not a YieldGAN checkpoint")
    if header.get('format_version') != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} is not supported (expected {FORMAT_VERSION})"
        )
    kind = header.get('kind')
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"{path}: expected a '{expected_kind}' checkpoint, found '{kind}'")

    model = model_class_for(kind).from_state(arrays, header.get('config', {}), header.get('statistics', {}))
    for name, value in model.params.items():
        if name not in arrays or arrays[name].shape != value.shape:
            raise CheckpointError(f"{path}: shape manifest does not match the '{kind}' architecture at '{name}'")
    if set(arrays) != set(model.params):
        raise CheckpointError(f"{path}: unexpected arrays {sorted(set(arrays) - set(model.params))}")
    logger.debug(f"Loaded {kind} checkpoint from {path}")
    return model


def read_checkpoint_header(path) -> Dict[str, Any]:
    """Header only (kind, config, statistics, lineage)."""
    header, _ = read_container(Path(path))
    return header
