"""Small helpers for writing descriptor documents inline in tests."""

from __future__ import annotations

from typing import Any


def intd(lo: int, hi: int) -> dict:
    return {"kind": "int", "min": lo, "max": hi}


def enumd(*values: Any, chain: bool = False) -> dict:
    d: dict = {"kind": "enum", "values": list(values)}
    if chain:
        d["order"] = [[a, b] for a, b in zip(values, values[1:])]
    return d


def setd(*elements: Any) -> dict:
    return {"kind": "set", "elements": list(elements)}


def field(name: str, domain: dict) -> dict:
    return {"name": name, "domain": domain}


def op(name: str, kind: str, *effect: dict, params: tuple = (), **extra: Any) -> dict:
    o: dict = {"name": name, "update_kind": kind, "effect": list(effect)}
    if params:
        o["params"] = list(params)
    o.update(extra)
    return o


def aggregate(name: str, fields: list, initial: dict, ops: list = (), **extra: Any) -> dict:
    a: dict = {"name": name, "state_space": {"fields": list(fields), "initial": dict(initial)},
               "writers": extra.pop("writers", "any")}
    if ops:
        a["operations"] = list(ops)
    a.update(extra)
    return a


def model(*aggregates: dict, name: str = "fixture") -> dict:
    return {"schema": "eclat-model/1", "name": name, "bounded_context": "tests",
            "aggregates": list(aggregates)}


def counter(lo: int = -10, hi: int = 10, deltas: tuple = (1, 2), kind: str = "Incremental") -> dict:
    """One aggregate ``Counter`` with one ``add<d>`` operation per delta."""
    ops = [op(f"add{d}", kind, {"fn": "add_delta", "field": "count", "value": d})
           for d in deltas]
    return model(aggregate("Counter", [field("count", intd(lo, hi))], {"count": 0}, ops))
