"""
PEDF feature dumps and PEDL label files, with a CSV fallback.

PEDF: magic "PEDF", u8 version=1, u8 dtype (0=f32, 1=f64), 2 reserved bytes,
u64 n, u64 d, then n*d little-endian values, row-major.
PEDL: magic "PEDL", u8 version=1, 3 reserved bytes, u64 n, then n u32 labels.
"""

import codecs
import csv
import logging
import struct
from pathlib import Path
from typing import Iterator, List, Tuple, Union

import numpy as np

from ped_prune.errors import (
    BadMagic,
    CsvParseError,
    InvalidShape,
    LengthMismatch,
    MissingClass,
    NonFiniteValue,
    TrailingData,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
    ZeroLabel,
)
from ped_prune.types import FeatureMatrix, LabelVector

logger = logging.getLogger("ped-prune.io")

PathLike = Union[str, Path]

FEATURE_MAGIC = b"PEDF"
LABEL_MAGIC = b"PEDL"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sBB2xQQ")
_LABEL_HEADER = struct.Struct("<4sB3xQ")
_DTYPES = {0: ("f32", np.dtype("<f4")), 1: ("f64", np.dtype("<f8"))}
_DTYPE_CODES = {"f32": 0, "f64": 1}


def _is_csv(path: Path, head: bytes, magic: bytes) -> bool:
    return head[:4] != magic and path.suffix.lower() == ".csv"


def check_reserved(path: Path, raw: bytes, start: int, stop: int) -> None:
    """Reserved header bytes must be zero."""
    nonzero = np.flatnonzero(np.frombuffer(raw[start:stop], dtype=np.uint8))
    if nonzero.size:
        at = start + int(nonzero[0])
        raise InvalidShape(path, at, f"reserved header byte is 0x{raw[at]:02x}, expected 0x00")


# ============================================================================
# FEATURE DUMPS
# ============================================================================

def load_feature_dump(path: PathLike) -> FeatureMatrix:
    """
    Load a PEDF dump (or a CSV of feature rows) into a FeatureMatrix.

    Args:
        path: dump file; `.csv` files without the binary magic are parsed as CSV

    Returns:
        FeatureMatrix with the header-declared shape, values held in f64 and
        the storage dtype remembered for round-tripping

    Raises:
        BadMagic, UnsupportedVersion, UnsupportedDtype, InvalidShape,
        TruncatedPayload, TrailingData, NonFiniteValue (all with byte offset)
    """
    path = Path(path)
    raw = path.read_bytes()
    if _is_csv(path, raw, FEATURE_MAGIC):
        return _load_feature_csv(path, raw)

    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise BadMagic(path, 0, f"expected magic {FEATURE_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _FEATURE_HEADER.size:
        raise TruncatedPayload(path, len(raw), f"header needs {_FEATURE_HEADER.size} bytes")

    _, version, dtype_code, n, d = _FEATURE_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(path, 4, f"version {version} (supported: {FORMAT_VERSION})")
    if dtype_code not in _DTYPES:
        raise UnsupportedDtype(path, 5, f"dtype code {dtype_code} (0=f32, 1=f64)")
    check_reserved(path, raw, 6, 8)
    if n < 1 or d < 1:
        raise InvalidShape(path, 8, f"declared shape {n}x{d}; both must be >= 1")

    dtype_name, dtype = _DTYPES[dtype_code]
    count = n * d
    expected = _FEATURE_HEADER.size + count * dtype.itemsize
    if len(raw) < expected:
        present = (len(raw) - _FEATURE_HEADER.size) // dtype.itemsize
        raise TruncatedPayload(path, len(raw), f"declared {n}x{d}={count} values, found {present}")
    if len(raw) > expected:
        raise TrailingData(path, expected, f"{len(raw) - expected} bytes after the declared payload")

    values = np.frombuffer(raw, dtype=dtype, count=count, offset=_FEATURE_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        offset = _FEATURE_HEADER.size + int(bad[0]) * dtype.itemsize
        raise NonFiniteValue(path, offset, f"value #{int(bad[0])} is {values[bad[0]]}")

    logger.debug(f"Loaded {path}: {n}x{d} {dtype_name}")
    return FeatureMatrix(data=values.astype(np.float64).reshape(n, d), dtype=dtype_name)


def encode_feature_dump(matrix: FeatureMatrix) -> bytes:
    dtype = _DTYPES[_DTYPE_CODES[matrix.dtype]][1]
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, _DTYPE_CODES[matrix.dtype], matrix.n, matrix.d)
    return header + matrix.data.astype(dtype).tobytes(order="C")


def write_feature_dump(path: PathLike, matrix: FeatureMatrix) -> Path:
    """Write `matrix` as PEDF in its storage dtype (reserved bytes zero)."""
    path = Path(path)
    path.write_bytes(encode_feature_dump(matrix))
    return path


# ============================================================================
# LABEL FILES
# ============================================================================

def load_labels(path: PathLike) -> LabelVector:
    """
    Load a PEDL label file (or a one-column CSV) into a LabelVector.

    Labels are 1-based; p is the largest label and every class in 1..p must
    occur at least once.

    Raises:
        BadMagic, UnsupportedVersion, InvalidShape (non-zero reserved byte or
        zero count), TruncatedPayload, TrailingData, ZeroLabel, MissingClass
    """
    path = Path(path)
    raw = path.read_bytes()
    if _is_csv(path, raw, LABEL_MAGIC):
        labels, offsets = _load_label_csv(path, raw)
        return _label_vector(path, labels, offsets)

    if len(raw) < 4 or raw[:4] != LABEL_MAGIC:
        raise BadMagic(path, 0, f"expected magic {LABEL_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _LABEL_HEADER.size:
        raise TruncatedPayload(path, len(raw), f"header needs {_LABEL_HEADER.size} bytes")

    _, version, n = _LABEL_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(path, 4, f"version {version} (supported: {FORMAT_VERSION})")
    check_reserved(path, raw, 5, 8)
    if n < 1:
        raise InvalidShape(path, 8, "declared label count is 0")

    expected = _LABEL_HEADER.size + 4 * n
    if len(raw) < expected:
        present = (len(raw) - _LABEL_HEADER.size) // 4
        raise TruncatedPayload(path, len(raw), f"declared {n} labels, found {present}")
    if len(raw) > expected:
        raise TrailingData(path, expected, f"{len(raw) - expected} bytes after the declared labels")

    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=_LABEL_HEADER.size).astype(np.int64)
    offsets = _LABEL_HEADER.size + 4 * np.arange(n)
    return _label_vector(path, labels, offsets)


def _label_vector(path: Path, labels: np.ndarray, offsets: np.ndarray) -> LabelVector:
    zeros = np.flatnonzero(labels < 1)
    if zeros.size:
        raise ZeroLabel(path, int(offsets[zeros[0]]))
    try:
        return LabelVector(labels=labels)
    except MissingClass as e:
        raise MissingClass(e.class_id, path) from None


def encode_labels(labels: LabelVector) -> bytes:
    header = _LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, labels.n)
    return header + labels.labels.astype("<u4").tobytes()


def write_labels(path: PathLike, labels: LabelVector) -> Path:
    path = Path(path)
    path.write_bytes(encode_labels(labels))
    return path


def validate_pair(features: FeatureMatrix, labels: LabelVector) -> None:
    """Succeeds iff the matrix and label vector describe the same samples."""
    if features.n != labels.n:
        raise LengthMismatch(features.n, labels.n)


# ============================================================================
# CSV FALLBACK
# ============================================================================

def _csv_lines(path: Path, raw: bytes) -> Iterator[Tuple[int, List[str]]]:
    """Yield (byte offset, fields) for every non-blank line."""
    offset = 0
    for line in raw.splitlines(keepends=True):
        skip = len(codecs.BOM_UTF8) if offset == 0 and line.startswith(codecs.BOM_UTF8) else 0
        try:
            text = line[skip:].decode("utf-8").strip()
        except UnicodeDecodeError as e:
            raise CsvParseError(path, offset + skip + e.start, f"invalid UTF-8 ({e.reason})") from None
        if text:
            fields = next(csv.reader([text]))
            yield offset, [f.strip() for f in fields]
        offset += len(line)


def _looks_numeric(fields: List[str]) -> bool:
    try:
        [float(f) for f in fields]
    except ValueError:
        return False
    return True


def _load_feature_csv(path: Path, raw: bytes) -> FeatureMatrix:
    rows: List[List[float]] = []
    width = None
    for index, (offset, fields) in enumerate(_csv_lines(path, raw)):
        if index == 0 and not _looks_numeric(fields):
            logger.debug(f"{path}: treating first line as header")
            continue
        try:
            values = [float(f) for f in fields]
        except ValueError as e:
            raise CsvParseError(path, offset, str(e)) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise CsvParseError(path, offset, f"row has {len(values)} columns, expected {width}")
        if not all(np.isfinite(values)):
            raise NonFiniteValue(path, offset, "row contains NaN or Inf")
        rows.append(values)
    if not rows:
        raise InvalidShape(path, 0, "CSV contains no data rows")
    return FeatureMatrix(data=np.array(rows, dtype=np.float64), dtype="f64")


def _load_label_csv(path: Path, raw: bytes) -> Tuple[np.ndarray, np.ndarray]:
    labels: List[int] = []
    offsets: List[int] = []
    for index, (offset, fields) in enumerate(_csv_lines(path, raw)):
        if index == 0 and not _looks_numeric(fields[:1]):
            continue
        try:
            value = float(fields[0])
        except ValueError as e:
            raise CsvParseError(path, offset, str(e)) from None
        if not value.is_integer():
            raise CsvParseError(path, offset, f"label {fields[0]!r} is not an integer")
        labels.append(int(value))
        offsets.append(offset)
    if not labels:
        raise InvalidShape(path, 0, "CSV contains no labels")
    return np.array(labels, dtype=np.int64), np.array(offsets, dtype=np.int64)
