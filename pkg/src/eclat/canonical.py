"""Canonical serialization and digests.

Everything that ends up in a report or a digest goes through here so that
identical runs produce byte-identical output regardless of hash seeds.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any



def scalar_key(v: Any) -> tuple[str, Any]:
    """Total order over mixed JSON scalars (by type name, then value)."""
    return (type(v).__name__, v)


def plain(v: Any) -> Any:
    """Runtime value -> JSON value, without needing the domain."""
    if isinstance(v, frozenset):
        return sorted((plain(x) for x in v), key=scalar_key)
    if isinstance(v, tuple):
        if all(isinstance(x, tuple) and len(x) == 2 for x in v):
            return {str(k): plain(x) for k, x in v}
        return [plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): plain(x) for k, x in v.items()}
    if isinstance(v, list):
        return [plain(x) for x in v]
    return v


def dumps(obj: Any, *, indent: int | None = None) -> str:
    return json.dumps(obj, sort_keys=True, indent=indent, ensure_ascii=False,
                      separators=(",", ":") if indent is None else (",", ": "))


def digest(obj: Any) -> str:
    return hashlib.sha256(dumps(plain(obj)).encode("utf-8")).hexdigest()


def stable_seed(*parts: Any) -> int:
    """64-bit seed derived from arbitrary JSON-able parts (hash-seed independent)."""
    h = hashlib.sha256(dumps([plain(p) for p in parts]).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")
