import hashlib
import json
from typing import Any


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def sha256_of(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def report_hash(results: dict, tables: dict) -> str:
    """Hash of the numeric content only; timing and paths are excluded."""
    return sha256_of({"results": results, "tables": tables})
