from __future__ import annotations

import csv
import json
import os
from typing import Dict, Iterable, List, Sequence

from loguru import logger


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_json(path: str, data: Dict) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
    logger.info(f"Wrote {path}")


def write_jsonl(path: str, records: Iterable[Dict]) -> None:
    """One compact JSON object per line."""
    _ensure_parent(path)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    logger.info(f"Wrote {path} ({count} records)")


def write_table(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    _ensure_parent(path)
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
            n += 1
    logger.info(f"Wrote {path} ({n} rows)")


def read_table(path: str) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
