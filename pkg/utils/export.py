import csv
import json
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def plain(value):
    """JSON-ready copy of nested numpy data."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return plain(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    return str(value)


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plain(payload), indent=2, ensure_ascii=False), encoding="utf-8")
    return path


def write_csv(rows: list[dict], path: Path) -> Path:
    """RFC-4180 table; list-valued cells are spread over indexed columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat_rows = []
    for row in rows:
        flat = {}
        for key, value in plain(row).items():
            if isinstance(value, list):
                for i, item in enumerate(value):
                    flat[f"{key}_{i}"] = item
            else:
                flat[key] = value
        flat_rows.append(flat)
    header: list[str] = []
    for flat in flat_rows:
        header.extend(k for k in flat if k not in header)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\r\n")
        writer.writeheader()
        for flat in flat_rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in flat.items()})
    return path


def emit_plot_data(tables: dict[str, list[dict]], directory: Path) -> list[Path]:
    """One CSV per series, named after the table."""
    directory = Path(directory)
    paths = []
    for name, rows in tables.items():
        if not rows:
            continue
        paths.append(write_csv(rows, directory / f"{name}.csv"))
    logger.info("wrote %d series to %s", len(paths), directory)
    return paths
