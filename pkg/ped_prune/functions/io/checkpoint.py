"""
PEDN network checkpoints.

magic "PEDN", u8 version=1, 3 reserved bytes, u32 JSON length, UTF-8 JSON
{"config", "alphas", "stage"}, u64 weight count, then the weights as f64
little-endian in canonical parameter order (full stored shapes, pruned units
included).
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from ped_prune.errors import BadMagic, InvalidShape, TrailingData, TruncatedPayload, UnsupportedVersion
from ped_prune.functions.io.dumps import check_reserved
from ped_prune.functions.toynet.network import SkipNetwork, assemble_network, parameter_shapes
from ped_prune.types import PruningPolicy, SkipNetConfig

logger = logging.getLogger("ped-prune.io")

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"PEDN"
CHECKPOINT_VERSION = 1

_HEADER = struct.Struct("<4sB3xI")
_COUNT = struct.Struct("<Q")


def encode_checkpoint(net: SkipNetwork) -> bytes:
    meta = json.dumps(
        {
            "config": net.config.model_dump(mode="json"),
            "alphas": net.policy.alphas,
            "stage": net.policy.stage,
        },
        sort_keys=True,
    ).encode("utf-8")
    weights = np.concatenate([arr.ravel() for _, arr in net.named_parameters()]).astype("<f8")
    return (
        _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta))
        + meta
        + _COUNT.pack(weights.size)
        + weights.tobytes()
    )


def save_checkpoint(path: PathLike, net: SkipNetwork) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(net))
    logger.info(f"Saved checkpoint {path} ({len(net.policy.active_set)}/{net.config.units} units active)")
    return path


def load_checkpoint(path: PathLike) -> SkipNetwork:
    """
    Read a PEDN checkpoint back into a SkipNetwork.

    Raises:
        BadMagic, UnsupportedVersion, TruncatedPayload, TrailingData,
        InvalidShape (bad metadata or a weight count that disagrees with it)
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(path, 0, f"expected magic {CHECKPOINT_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedPayload(path, len(raw), f"header needs {_HEADER.size} bytes")
    _, version, meta_len = _HEADER.unpack_from(raw)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersion(path, 4, f"version {version} (supported: {CHECKPOINT_VERSION})")
    check_reserved(path, raw, 5, 8)

    count_at = _HEADER.size + meta_len
    if len(raw) < count_at + _COUNT.size:
        raise TruncatedPayload(path, len(raw), f"metadata declares {meta_len} bytes")
    try:
        meta = json.loads(raw[_HEADER.size:count_at].decode("utf-8"))
        cfg = SkipNetConfig.model_validate(meta["config"])
        policy = PruningPolicy(alphas=meta["alphas"], stage=meta.get("stage", 0))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise InvalidShape(path, _HEADER.size, f"unreadable metadata: {e}") from None

    (count,) = _COUNT.unpack_from(raw, count_at)
    shapes = parameter_shapes(cfg)
    expected_count = sum(int(np.prod(shape)) for _, shape in shapes)
    if count != expected_count:
        raise InvalidShape(path, count_at, f"{count} weights stored, config needs {expected_count}")
    start = count_at + _COUNT.size
    end = start + 8 * count
    if len(raw) < end:
        raise TruncatedPayload(path, len(raw), f"declared {count} weights, found {(len(raw) - start) // 8}")
    if len(raw) > end:
        raise TrailingData(path, end, f"{len(raw) - end} bytes after the weights")

    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=start).astype(np.float64)
    arrays = {}
    cursor = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        arrays[name] = flat[cursor:cursor + size].reshape(shape).copy()
        cursor += size
    return assemble_network(cfg, policy, arrays)
