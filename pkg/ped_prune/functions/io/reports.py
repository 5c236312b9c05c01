"""
JSON and CSV emission for profiles, policies, clusterings and stage reports.
"""

import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from ped_prune.errors import ConfigError, ProfileFormatError
from ped_prune.types import DependenceProfile, PruningPolicy, StageReport

logger = logging.getLogger("ped-prune.io")

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)


def to_jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    if isinstance(payload, dict):
        return {key: to_jsonable(value) for key, value in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [to_jsonable(value) for value in payload]
    return payload


def dumps_json(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), indent=2, allow_nan=False) + "\n"


def emit_text(text: str, out: Optional[PathLike] = None) -> None:
    """Write `text` to `out`, or to stdout when no path is given."""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps CSV line endings byte-exact
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {path}")


def write_json(payload: Any, out: Optional[PathLike] = None) -> None:
    emit_text(dumps_json(payload), out)


def format_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """RFC-4180 CSV (CRLF line endings, minimal quoting)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _field_path(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def _load_model(path: PathLike, model: Type[ModelT]) -> ModelT:
    source = str(path)
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ProfileFormatError(source, f"line {e.lineno} column {e.colno}", e.msg) from None
    except OSError as e:
        raise ProfileFormatError(source, "<file>", e.strerror or str(e)) from None
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        raise ProfileFormatError(source, _field_path(e), e.errors()[0]["msg"]) from None


def read_profile(path: PathLike) -> DependenceProfile:
    """Parse a profile JSON; errors name the offending field."""
    return _load_model(path, DependenceProfile)


def read_policy(path: PathLike) -> PruningPolicy:
    return _load_model(path, PruningPolicy)


def read_config_file(path: PathLike) -> Dict[str, Any]:
    """Raw dict of a JSON run-config file (validated later, after flag overrides)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return payload


STAGE_CSV_HEADER = ["stage", "params", "flops", "accuracy"]


def stage_rows(reports: List[StageReport]) -> List[List[Any]]:
    """(stage, params, flops, test accuracy) rows for re-plotting pruning curves."""
    return [
        [r.stage, r.param_count, r.flop_count, r.test_accuracy]
        for r in reports
    ]
