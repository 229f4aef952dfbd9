"""Structural validation of parsed models.

Checks the update-kind rules by executing effects over the declared state
space (exhaustively when small, otherwise on a fixed pseudo-random sample).
"""

from __future__ import annotations

import random
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Any

from eclat.canonical import stable_seed
from eclat.errors import CapExceeded
from eclat.model.descriptor import (
    AggregateDescriptor,
    ModelDescriptor,
    OperationDescriptor,
    State,
    StateSpaceSpec,
    UpdateKind,
    enumerate_states,
)
from eclat.model.domains import BoolDomain, EnumDomain, IntRange, MapDomain, SetDomain, map_get

# evaluations per operation before falling back to sampling
CHECK_BUDGET = 50_000
SAMPLE_STATES = 500


@dataclass(frozen=True)
class Finding:
    code: str
    aggregate: str
    operation: str | None
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "aggregate": self.aggregate,
                "operation": self.operation, "message": self.message}


def states_for_checking(space: StateSpaceSpec, budget: int, salt: Any) -> list[State]:
    """All states if ``budget`` allows, else a deterministic sample."""
    if space.size() <= budget:
        try:
            return list(enumerate_states(space))
        except CapExceeded:
            pass
    rng = random.Random(stable_seed("states", salt))
    return [space.sample(rng) for _ in range(min(budget, SAMPLE_STATES))]


def _runs(agg: AggregateDescriptor, op: OperationDescriptor) -> Iterator[tuple[dict, list]]:
    """Yield (params, [(state, new_state), ...]) over applicable states."""
    per_params = max(1, CHECK_BUDGET // max(1, op.param_count()))
    states = [s for s in states_for_checking(agg.state_space, per_params, (agg.name, op.name))
              if not agg.invariant_violations(s)]
    for params in op.param_space():
        pairs = []
        for s in states:
            if op.precondition_holds(s, params):
                pairs.append((s, op.apply(s, params)))
        yield params, pairs


def _incremental_problem(agg: AggregateDescriptor, fname: str, pairs: list) -> str | None:
    dom = agg.state_space.domains[fname]
    by_old: dict = {}
    for s, t in pairs:
        key = s[fname]
        if by_old.setdefault(key, t[fname]) != t[fname]:
            return f"new value of {fname!r} depends on fields other than {fname!r}"
    if isinstance(dom, IntRange):
        deltas = {t[fname] - s[fname] for s, t in pairs}
        if len(deltas) > 1 and not all(t[fname] >= s[fname] for s, t in pairs):
            return f"change to {fname!r} is not a fixed delta"
        return None
    if isinstance(dom, SetDomain):
        added = frozenset().union(*(t[fname] - s[fname] for s, t in pairs)) if pairs else frozenset()
        removed = frozenset().union(*(s[fname] - t[fname] for s, t in pairs)) if pairs else frozenset()
        for s, t in pairs:
            if (s[fname] | added) - removed != t[fname]:
                return f"change to {fname!r} is not a fixed insertion/removal"
        return None
    if isinstance(dom, MapDomain):
        for k in dom.keys:
            per_key: dict = {}
            for s, t in pairs:
                old, new = map_get(s[fname], k), map_get(t[fname], k)
                if per_key.setdefault(old, new) != new:
                    return f"entry {k!r} of {fname!r} depends on other entries or fields"
        return None
    if isinstance(dom, (EnumDomain, BoolDomain)):
        if isinstance(dom, EnumDomain) and not dom.is_lattice:
            return f"{fname!r} is an unordered enumeration; overwriting it is not incremental"
        for s, t in pairs:
            if not dom.leq(s[fname], t[fname]):
                return f"{fname!r} moves down its declared order"
    return None


def validate_operation(agg: AggregateDescriptor, op: OperationDescriptor) -> list[Finding]:
    findings: list[Finding] = []
    declared = op.touched_fields

    def add(code: str, msg: str) -> None:
        findings.append(Finding(code, agg.name, op.name, msg))

    try:
        runs = list(_runs(agg, op))
    except Exception as exc:  # effect library misuse surfaces here
        add("effect-failure", f"effect raised {type(exc).__name__}: {exc}")
        return findings

    changed: set[str] = set()
    for _, pairs in runs:
        for s, t in pairs:
            changed.update(f for f in s if s[f] != t[f])
    if op.update_kind is not UpdateKind.STATE_BASED:
        stray = sorted(changed - declared)
        if stray:
            add("kind-effect-mismatch",
                f"kind/effect mismatch: {op.update_kind.value} op changes undeclared "
                f"fields {stray}")
            return findings
    if op.update_kind is UpdateKind.INCREMENTAL:
        for params, pairs in runs:
            for fname in sorted(declared):
                problem = _incremental_problem(agg, fname, pairs)
                if problem:
                    add("kind-effect-mismatch", f"kind/effect mismatch: {problem} "
                        f"(params {params})")
                    return findings
    return findings


def validate_model(model: ModelDescriptor) -> list[Finding]:
    """Structural findings; an empty list means the model is analyzable."""
    findings: list[Finding] = []
    for agg in model.aggregates:
        bad = agg.invariant_violations(agg.state_space.initial())
        for name in bad:
            findings.append(Finding("invariant-violated-initially", agg.name, None,
                                    f"initial state violates invariant {name!r}"))
        if not agg.state_space.contains(agg.state_space.initial()):
            findings.append(Finding("initial-out-of-domain", agg.name, None,
                                    "initial state is outside the declared domains"))
        for op in agg.operations:
            findings.extend(validate_operation(agg, op))
    return findings
