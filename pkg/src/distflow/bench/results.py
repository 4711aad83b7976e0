"""CSV output: UTF-8, header row, RFC-4180 quoting, fixed column order."""

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Type

from pydantic import BaseModel

from ..errors import DataIoError


def _as_cells(row: BaseModel) -> Dict[str, object]:
    return {key: "" if value is None else value for key, value in row.model_dump(mode="json").items()}


def write_rows(path: Path, rows: Iterable[BaseModel], model: Type[BaseModel]) -> Path:
    """Write rows of one model type; the header is the model's field order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(model.model_fields), quoting=csv.QUOTE_MINIMAL)
            writer.writeheader()
            writer.writerows(_as_cells(row) for row in rows)
    except OSError as e:
        raise DataIoError(f"Cannot write results to {path}: {e}") from e
    return path


def read_rows(path: Path) -> List[Dict[str, str]]:
    """Rows of a results CSV as string dicts, in file order."""
    try:
        with Path(path).open("r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise DataIoError(f"Cannot read results {path}: {e}") from e


def summary_path(path: Path) -> Path:
    """Where the per-run summary of a results CSV goes: `<stem>.summary.csv` next to it."""
    path = Path(path)
    return path.with_name(f"{path.stem}.summary{path.suffix or '.csv'}")
