"""CSV/JSON serialization of sweep tables. Floats use the shortest round-trip repr."""
import json
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional

import numpy as np

from ubmot.schemas.sweep import SweepTable

FORMATS = ("csv", "json")


def _cell(value: Any) -> Any:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, Enum):
        value = value.value
    return value


def _text(value: Any) -> str:
    value = _cell(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _meta_lines(table: SweepTable, with_timestamp: bool) -> List[str]:
    meta = table.metadata
    lines = [f"tool_version={meta.tool_version}", f"command_line={meta.command_line}"]
    if meta.seed is not None:
        lines.append(f"seed={meta.seed}")
    if with_timestamp:
        lines.append(f"timestamp={meta.timestamp.isoformat()}")
    lines.extend(f"{key}={_text(value)}" for key, value in meta.extra.items())
    return lines


def render_csv(table: SweepTable, with_timestamp: bool = True) -> str:
    lines = [f"# {line}" for line in _meta_lines(table, with_timestamp)]
    lines.append(",".join(table.header))
    lines.extend(",".join(_text(v) for v in row) for row in table.rows())
    return "\n".join(lines) + "\n"


def _json_value(value: Any) -> Any:
    value = _cell(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def render_json(table: SweepTable, with_timestamp: bool = True) -> str:
    meta = table.metadata.model_dump(mode="json")
    if not with_timestamp:
        meta.pop("timestamp", None)
    meta["extra"] = {k: _json_value(v) for k, v in table.metadata.extra.items()}
    payload = {
        "metadata": meta,
        "columns": table.header,
        "rows": [[_json_value(v) for v in row] for row in table.rows()],
    }
    return json.dumps(payload, indent=2) + "\n"


def render(table: SweepTable, fmt: str = "csv", with_timestamp: bool = True) -> str:
    if fmt == "json":
        return render_json(table, with_timestamp)
    return render_csv(table, with_timestamp)


def write_output(text: str, out: Optional[str] = None):
    """Single writer: the file at `out`, else stdout. LF line endings on every platform."""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
