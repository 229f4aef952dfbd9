"""In-memory domain model types, descriptor parsing and serialization."""

from __future__ import annotations

import itertools
import json
import random
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from eclat.errors import CapExceeded, DomainError, ModelReferenceError, ModelSyntaxError
from eclat.model.domains import Domain, parse_domain
from eclat.model.library import (
    Effect,
    Predicate,
    compile_effects,
    compile_predicate,
    compile_projection,
)

SCHEMA_VERSION = "eclat-model/1"
DEFAULT_ENUMERATION_CAP = 1_000_000

State = dict[str, Any]


class UpdateKind(str, Enum):
    INCREMENTAL = "Incremental"
    TRUE_BLIND = "TrueBlind"
    STATE_BASED = "StateBased"


@dataclass(frozen=True)
class StateSpaceSpec:
    fields: tuple[tuple[str, Domain], ...]
    initial_state: Mapping[str, Any]
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    @cached_property
    def domains(self) -> dict[str, Domain]:
        return dict(self.fields)

    @property
    def field_names(self) -> list[str]:
        return [n for n, _ in self.fields]

    def size(self) -> int:
        n = 1
        for _, d in self.fields:
            n *= d.size()
        return n

    def initial(self) -> State:
        return dict(self.initial_state)

    def contains(self, state: Mapping[str, Any]) -> bool:
        return set(state) == set(self.domains) and all(
            d.contains(state[n]) for n, d in self.fields)

    def sample(self, rng: random.Random) -> State:
        return {n: d.sample(rng) for n, d in self.fields}

    def to_json(self, state: Mapping[str, Any]) -> dict:
        """JSON valuation; values outside the declared domain are passed through."""
        out = {}
        for n, d in self.fields:
            v = state[n]
            out[n] = d.to_json(v) if d.contains(v) else v
        return out


def enumerate_states(space: StateSpaceSpec, cap: int | None = None) -> Iterator[State]:
    """Every state of ``space`` exactly once, in a fixed order.

    Raises CapExceeded (eagerly, before yielding anything) when the product of
    domain sizes is over ``cap`` (default: the space's own cap).
    """
    limit = space.enumeration_cap if cap is None else cap
    size = space.size()
    if size > limit:
        raise CapExceeded(size, limit)
    names = space.field_names
    per_field = [list(d.values()) for _, d in space.fields]

    def gen() -> Iterator[State]:
        for combo in itertools.product(*per_field):
            yield dict(zip(names, combo))
    return gen()


@dataclass(frozen=True)
class OperationDescriptor:
    name: str
    aggregate: str
    params: tuple[tuple[str, Domain], ...]
    update_kind: UpdateKind
    effect: tuple[Mapping, ...]
    precondition: Mapping | None = None
    intent: Mapping | None = None
    superseded_by: tuple[str, ...] = ()
    touches: tuple[str, ...] | None = None
    # compiled closures, filled in by the owning aggregate
    _apply: Effect | None = field(default=None, compare=False, repr=False)
    _pre: Predicate | None = field(default=None, compare=False, repr=False)
    _intent: Predicate | None = field(default=None, compare=False, repr=False)
    _effect_touches: frozenset = field(default=frozenset(), compare=False, repr=False)

    @cached_property
    def param_domains(self) -> dict[str, Domain]:
        return dict(self.params)

    @property
    def touched_fields(self) -> frozenset[str]:
        """Declared touched fields, defaulting to what the effect binds."""
        if self.touches is not None:
            return frozenset(self.touches)
        return self._effect_touches

    def param_count(self) -> int:
        n = 1
        for _, d in self.params:
            n *= d.size()
        return n

    def param_space(self) -> Iterator[dict[str, Any]]:
        names = [n for n, _ in self.params]
        for combo in itertools.product(*(list(d.values()) for _, d in self.params)):
            yield dict(zip(names, combo))

    def sample_params(self, rng: random.Random) -> dict[str, Any]:
        return {n: d.sample(rng) for n, d in self.params}

    def coerce_params(self, raw: Mapping[str, Any]) -> dict[str, Any]:
        """JSON params -> runtime values, checking names and domains."""
        unknown = set(raw) - set(self.param_domains)
        if unknown:
            raise DomainError(f"{self.aggregate}.{self.name}: unknown params {sorted(unknown)}")
        missing = set(self.param_domains) - set(raw)
        if missing:
            raise DomainError(f"{self.aggregate}.{self.name}: missing params {sorted(missing)}")
        return {n: d.coerce(raw[n]) if not d.contains(raw[n]) else raw[n]
                for n, d in self.params}

    def params_to_json(self, params: Mapping[str, Any]) -> dict:
        return {n: d.to_json(params[n]) for n, d in self.params}

    def precondition_holds(self, state: State, params: Mapping[str, Any]) -> bool:
        return self._pre(state, params)

    def apply(self, state: State, params: Mapping[str, Any]) -> State:
        return self._apply(state, params)

    def intent_holds(self, state: State, params: Mapping[str, Any]) -> bool:
        return self._intent(state, params)


@dataclass(frozen=True)
class ProjectionRef:
    source: str
    function: str
    bindings: Mapping[str, str]


@dataclass(frozen=True)
class AggregateDescriptor:
    name: str
    state_space: StateSpaceSpec
    operations: tuple[OperationDescriptor, ...] = ()
    writers: str | frozenset[str] = "any"
    projection_of: ProjectionRef | None = None
    declared_class: str | None = None
    invariants: tuple[tuple[str, Mapping], ...] = ()
    opaque_updates: bool = False
    _invariant_fns: tuple = field(default=(), compare=False, repr=False)
    _project: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        names = [op.name for op in self.operations]
        if len(set(names)) != len(names):
            raise ModelReferenceError(f"{self.name}: duplicate operation names")
        fields = self.state_space.domains
        for op in self.operations:
            where = f"{self.name}.{op.name}"
            apply, touched = compile_effects(list(op.effect), fields, op.param_domains, where)
            if op.touches is not None:
                bad = set(op.touches) - set(fields)
                if bad:
                    raise ModelReferenceError(f"{where}: touches unknown fields {sorted(bad)}")
            object.__setattr__(op, "_apply", apply)
            object.__setattr__(op, "_effect_touches", touched)
            object.__setattr__(op, "_pre", compile_predicate(
                op.precondition, fields, op.param_domains, f"{where}.precondition"))
            object.__setattr__(op, "_intent", compile_predicate(
                op.intent, fields, op.param_domains, f"{where}.intent"))
            for s in op.superseded_by:
                if s not in names:
                    raise ModelReferenceError(f"{where}: superseded_by names unknown op {s!r}")
        inv = tuple(compile_predicate(p, fields, {}, f"{self.name}.invariant[{n}]")
                    for n, p in self.invariants)
        object.__setattr__(self, "_invariant_fns", inv)

    @property
    def single_writer(self) -> bool:
        return self.writers != "any" and len(self.writers) == 1

    def operation(self, name: str) -> OperationDescriptor:
        for op in self.operations:
            if op.name == name:
                return op
        from eclat.errors import UnknownOperation
        raise UnknownOperation(f"{self.name} has no operation {name!r}")

    def invariant_violations(self, state: State) -> list[str]:
        return [n for (n, _), f in zip(self.invariants, self._invariant_fns) if not f(state, {})]

    def project(self, source_state: State) -> State:
        return self._project(source_state, self.state_space.initial())


@dataclass(frozen=True)
class ModelDescriptor:
    name: str
    bounded_context: str
    aggregates: tuple[AggregateDescriptor, ...]
    provenance: str = ""

    def __post_init__(self):
        if not self.aggregates:
            raise DomainError(f"model {self.name!r} has no aggregates")
        names = [a.name for a in self.aggregates]
        if len(set(names)) != len(names):
            raise ModelReferenceError(f"model {self.name!r}: duplicate aggregate names")
        by_name = dict(zip(names, self.aggregates))
        for agg in self.aggregates:
            ref = agg.projection_of
            if ref is None:
                continue
            if agg.operations:
                raise ModelReferenceError(
                    f"{agg.name}: derived aggregates (projection_of) must declare no operations")
            src = by_name.get(ref.source)
            if src is None or src is agg:
                raise ModelReferenceError(f"{agg.name}: projection_of names unknown aggregate "
                                          f"{ref.source!r}")
            if src.projection_of is not None:
                raise ModelReferenceError(f"{agg.name}: projections of projections are not supported")
            proj = compile_projection({"function": ref.function, "bindings": dict(ref.bindings)},
                                      src.state_space.domains, agg.state_space.domains,
                                      f"{agg.name}.projection_of")
            object.__setattr__(agg, "_project", proj)

    def aggregate(self, name: str) -> AggregateDescriptor:
        for a in self.aggregates:
            if a.name == name:
                return a
        raise ModelReferenceError(f"model {self.name!r} has no aggregate {name!r}")

    def operation_count(self) -> int:
        return sum(len(a.operations) for a in self.aggregates)

    def find_operation(self, op_name: str) -> OperationDescriptor:
        """Look up ``op`` or ``Aggregate.op``; bare names must be unambiguous."""
        if "." in op_name:
            agg, _, op = op_name.partition(".")
            return self.aggregate(agg).operation(op)
        hits = [op for a in self.aggregates for op in a.operations if op.name == op_name]
        if not hits:
            from eclat.errors import UnknownOperation
            raise UnknownOperation(f"model {self.name!r} has no operation {op_name!r}")
        if len(hits) > 1:
            raise ModelReferenceError(
                f"operation {op_name!r} is ambiguous; qualify it as Aggregate.{op_name}")
        return hits[0]

    def derived_of(self, source: str) -> list[AggregateDescriptor]:
        return [a for a in self.aggregates
                if a.projection_of is not None and a.projection_of.source == source]


# -- parsing -------------------------------------------------------------------

def _schema(name: str) -> dict:
    return json.loads(resources.files("eclat.schemas").joinpath(name).read_text("utf-8"))


_MODEL_VALIDATOR = None


def _validator() -> jsonschema.Draft202012Validator:
    global _MODEL_VALIDATOR
    if _MODEL_VALIDATOR is None:
        _MODEL_VALIDATOR = jsonschema.Draft202012Validator(_schema("model.schema.json"))
    return _MODEL_VALIDATOR


def parse_model(source: str | bytes | Mapping) -> ModelDescriptor:
    """Parse a descriptor document (JSON text or an already-decoded mapping)."""
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ModelSyntaxError(exc.msg, line=exc.lineno, column=exc.colno) from None
    else:
        doc = source
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ModelSyntaxError(f"schema violation: {err.message}", path=path)
    if not doc["aggregates"]:
        raise DomainError(f"model {doc['name']!r} has no aggregates")
    aggs = tuple(_parse_aggregate(a) for a in doc["aggregates"])
    return ModelDescriptor(doc["name"], doc["bounded_context"], aggs, doc.get("provenance", ""))


def load_model(path: str | Path) -> ModelDescriptor:
    return parse_model(Path(path).read_text("utf-8"))


def _named_domains(items: list, where: str) -> tuple[tuple[str, Domain], ...]:
    out = []
    seen = set()
    for item in items:
        n = item["name"]
        if n in seen:
            raise ModelReferenceError(f"{where}: duplicate name {n!r}")
        seen.add(n)
        out.append((n, parse_domain(item["domain"], where=f"{where}.{n}")))
    return tuple(out)


def _parse_aggregate(raw: Mapping) -> AggregateDescriptor:
    name = raw["name"]
    ss = raw["state_space"]
    fields = _named_domains(ss["fields"], f"{name}.state_space")
    domains = dict(fields)
    init_raw = ss["initial"]
    unknown = set(init_raw) - set(domains)
    if unknown:
        raise ModelReferenceError(f"{name}: initial state names unknown fields {sorted(unknown)}")
    initial = {}
    for fname, dom in fields:
        if fname not in init_raw:
            raise DomainError(f"{name}: initial state misses field {fname!r}")
        try:
            initial[fname] = dom.coerce(init_raw[fname])
        except DomainError as exc:
            raise DomainError(f"{name}: initial value of {fname!r}: {exc}") from None
    space = StateSpaceSpec(fields, initial, ss.get("enumeration_cap", DEFAULT_ENUMERATION_CAP))

    ops = []
    for o in raw.get("operations", []):
        ops.append(OperationDescriptor(
            name=o["name"],
            aggregate=name,
            params=_named_domains(o.get("params", []), f"{name}.{o['name']}.params"),
            update_kind=UpdateKind(o["update_kind"]),
            effect=tuple(o["effect"]),
            precondition=o.get("precondition"),
            intent=o.get("intent"),
            superseded_by=tuple(o.get("superseded_by", ())),
            touches=tuple(o["touches"]) if "touches" in o else None,
        ))
    writers = raw.get("writers", "any")
    if writers != "any":
        writers = frozenset(writers)
    proj = raw.get("projection_of")
    return AggregateDescriptor(
        name=name,
        state_space=space,
        operations=tuple(ops),
        writers=writers,
        projection_of=ProjectionRef(proj["source"], proj["function"], dict(proj["bindings"]))
        if proj else None,
        declared_class=raw.get("declared_class"),
        invariants=tuple((i["name"], i["predicate"]) for i in raw.get("invariants", [])),
        opaque_updates=raw.get("opaque_updates", False),
    )


# -- serialization -------------------------------------------------------------

def model_to_dict(model: ModelDescriptor) -> dict:
    """Inverse of parse_model: parse_model(model_to_dict(m)) == m."""
    doc: dict = {"schema": SCHEMA_VERSION, "name": model.name,
                 "bounded_context": model.bounded_context}
    if model.provenance:
        doc["provenance"] = model.provenance
    doc["aggregates"] = [_aggregate_to_dict(a) for a in model.aggregates]
    return doc


def _aggregate_to_dict(agg: AggregateDescriptor) -> dict:
    ss = agg.state_space
    out: dict = {
        "name": agg.name,
        "state_space": {
            "fields": [{"name": n, "domain": d.spec()} for n, d in ss.fields],
            "initial": ss.to_json(ss.initial_state),
        },
    }
    if ss.enumeration_cap != DEFAULT_ENUMERATION_CAP:
        out["state_space"]["enumeration_cap"] = ss.enumeration_cap
    out["writers"] = "any" if agg.writers == "any" else sorted(agg.writers)
    if agg.operations:
        out["operations"] = [_op_to_dict(op) for op in agg.operations]
    if agg.projection_of is not None:
        p = agg.projection_of
        out["projection_of"] = {"source": p.source, "function": p.function,
                                "bindings": dict(p.bindings)}
    if agg.declared_class is not None:
        out["declared_class"] = agg.declared_class
    if agg.opaque_updates:
        out["opaque_updates"] = True
    if agg.invariants:
        out["invariants"] = [{"name": n, "predicate": p} for n, p in agg.invariants]
    return out


def _op_to_dict(op: OperationDescriptor) -> dict:
    out: dict = {"name": op.name, "update_kind": op.update_kind.value}
    if op.params:
        out["params"] = [{"name": n, "domain": d.spec()} for n, d in op.params]
    if op.precondition is not None:
        out["precondition"] = op.precondition
    out["effect"] = list(op.effect)
    if op.touches is not None:
        out["touches"] = list(op.touches)
    if op.intent is not None:
        out["intent"] = op.intent
    if op.superseded_by:
        out["superseded_by"] = list(op.superseded_by)
    return out


def serialize_model(model: ModelDescriptor, *, indent: int = 2) -> str:
    return json.dumps(model_to_dict(model), indent=indent, ensure_ascii=False) + "\n"
