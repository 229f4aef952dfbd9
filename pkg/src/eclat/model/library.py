"""Built-in effect, predicate and projection library.

Descriptor documents never contain code: every effect, predicate and
projection is a registered identifier plus field/param bindings. The
``compile_*`` functions turn those bindings into closures over plain
``dict`` states, checking every reference against the aggregate's fields and
the operation's params.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from typing import Any

from eclat.errors import DomainError, ModelReferenceError
from eclat.model.domains import (
    BoolDomain,
    Domain,
    EnumDomain,
    IntRange,
    MapDomain,
    SetDomain,
    map_get,
    map_set,
)

State = dict[str, Any]
Params = Mapping[str, Any]
Effect = Callable[[State, Params], State]
Predicate = Callable[[State, Params], bool]

EFFECTS = ("add_delta", "set_register", "insert_keyed", "tombstone_delete",
           "replace_state", "lattice_join_field")
PREDICATES = ("always", "field_equals", "field_at_least", "field_at_most", "contains",
              "key_present", "key_equals", "key_contains", "param_contains",
              "not", "all_of", "any_of")
PROJECTIONS = ("sum_values", "count_entries", "copy_field")

# inherent update kind of each effect; used by validation and the docs
EFFECT_KIND = {
    "add_delta": "Incremental",
    "insert_keyed": "Incremental",
    "tombstone_delete": "Incremental",
    "lattice_join_field": "Incremental",
    "set_register": "TrueBlind",
    "replace_state": "StateBased",
}


class _Ctx:
    def __init__(self, fields: Mapping[str, Domain], params: Mapping[str, Domain], where: str):
        self.fields = fields
        self.params = params
        self.where = where

    def field(self, spec: Mapping, key: str = "field") -> tuple[str, Domain]:
        name = spec.get(key)
        if name not in self.fields:
            raise ModelReferenceError(f"{self.where}: unknown field {name!r}")
        return name, self.fields[name]

    def param(self, name: Any) -> Domain:
        if name not in self.params:
            raise ModelReferenceError(f"{self.where}: unknown param {name!r}")
        return self.params[name]

    def ref(self, spec: Mapping, domain: Domain | None, *, param_key: str = "param",
            value_key: str = "value", required: bool = True) -> Callable[[Params], Any] | None:
        """Getter for a ``{"param": p}`` / ``{"value": v}`` binding."""
        if param_key in spec:
            name = spec[param_key]
            self.param(name)
            return lambda params: params[name]
        if value_key in spec:
            raw = spec[value_key]
            v = domain.coerce(raw) if domain is not None else raw
            return lambda params: v
        if required:
            raise ModelReferenceError(
                f"{self.where}: binding needs '{param_key}' or '{value_key}'")
        return None


def _element_domain(d: Domain) -> Domain | None:
    if isinstance(d, SetDomain):
        return EnumDomain(d.elements) if d.elements else None
    return d


# -- effects -----------------------------------------------------------------

def compile_effect(spec: Mapping, fields: Mapping[str, Domain], params: Mapping[str, Domain],
                   where: str) -> tuple[Effect, frozenset[str]]:
    """Compile one effect step; returns the closure and the fields it touches."""
    ctx = _Ctx(fields, params, where)
    fn = spec.get("fn")
    if fn not in EFFECTS:
        raise ModelReferenceError(f"{where}: unknown effect {fn!r}")

    if fn == "replace_state":
        assign = spec.get("assign", {})
        getters = {}
        for fname, binding in sorted(assign.items()):
            if fname not in fields:
                raise ModelReferenceError(f"{where}: unknown field {fname!r}")
            getters[fname] = ctx.ref(binding, fields[fname])

        def replace(state: State, p: Params) -> State:
            new = dict(state)
            for fname, get in getters.items():
                new[fname] = get(p)
            return new
        return replace, frozenset(fields)

    name, dom = ctx.field(spec)

    if fn == "add_delta":
        if not isinstance(dom, IntRange):
            raise DomainError(f"{where}: add_delta needs an integer field, {name!r} is {dom.kind}")
        get = ctx.ref(spec, IntRange(-(2 ** 62), 2 ** 62))

        def add(state: State, p: Params) -> State:
            return {**state, name: state[name] + get(p)}
        return add, frozenset({name})

    if fn == "set_register":
        get = ctx.ref(spec, dom)

        def assign_(state: State, p: Params) -> State:
            return {**state, name: get(p)}
        return assign_, frozenset({name})

    if fn == "lattice_join_field":
        if isinstance(dom, EnumDomain) and not dom.is_lattice:
            raise DomainError(f"{where}: field {name!r} declares no order to join over")
        if not isinstance(dom, (EnumDomain, IntRange, BoolDomain)):
            raise DomainError(f"{where}: lattice_join_field needs a scalar ordered field")
        get = ctx.ref(spec, dom)
        join = dom.join

        def lattice(state: State, p: Params) -> State:
            return {**state, name: join(state[name], get(p))}
        return lattice, frozenset({name})

    if isinstance(dom, SetDomain):
        get = ctx.ref(spec, _element_domain(dom))
        if fn == "insert_keyed":
            def insert(state: State, p: Params) -> State:
                return {**state, name: state[name] | {get(p)}}
            return insert, frozenset({name})

        def remove(state: State, p: Params) -> State:
            return {**state, name: state[name] - {get(p)}}
        return remove, frozenset({name})

    if not isinstance(dom, MapDomain):
        raise DomainError(f"{where}: {fn} needs a set or map field, {name!r} is {dom.kind}")

    key = ctx.ref(spec, EnumDomain(dom.keys), param_key="key_param", value_key="key")
    tomb = dom.tombstone

    if fn == "insert_keyed":
        if dom.set_valued:
            get = ctx.ref(spec, _element_domain(dom.value_domain))

            def insert_elem(state: State, p: Params) -> State:
                k = key(p)
                cur = map_get(state[name], k, frozenset())
                return {**state, name: map_set(state[name], k, cur | {get(p)})}
            return insert_elem, frozenset({name})
        get = ctx.ref(spec, dom.value_domain)

        def insert_entry(state: State, p: Params) -> State:
            k = key(p)
            if tomb is not None and map_get(state[name], k) == tomb:
                return dict(state)
            return {**state, name: map_set(state[name], k, get(p))}
        return insert_entry, frozenset({name})

    # tombstone_delete on a map
    elem = None
    if dom.set_valued:
        elem = ctx.ref(spec, _element_domain(dom.value_domain), required=False)

    def delete(state: State, p: Params) -> State:
        k = key(p)
        m = state[name]
        if elem is not None:
            cur = map_get(m, k, frozenset())
            return {**state, name: map_set(m, k, cur - {elem(p)})}
        return {**state, name: map_set(m, k, tomb)}
    return delete, frozenset({name})


def compile_effects(steps: list, fields: Mapping[str, Domain], params: Mapping[str, Domain],
                    where: str) -> tuple[Effect, frozenset[str]]:
    """Compose a list of effect steps left to right."""
    if not steps:
        raise ModelReferenceError(f"{where}: operation declares no effect")
    compiled = [compile_effect(s, fields, params, f"{where}.effect[{i}]")
                for i, s in enumerate(steps)]
    touched = frozenset().union(*(t for _, t in compiled))
    if len(compiled) == 1:
        return compiled[0][0], touched
    fns = [f for f, _ in compiled]

    def composed(state: State, p: Params) -> State:
        for f in fns:
            state = f(state, p)
        return state
    return composed, touched


# -- predicates ----------------------------------------------------------------

def compile_predicate(spec: Mapping | None, fields: Mapping[str, Domain],
                      params: Mapping[str, Domain], where: str) -> Predicate:
    if spec is None:
        return lambda state, p: True
    ctx = _Ctx(fields, params, where)
    name = spec.get("pred")
    if name not in PREDICATES:
        raise ModelReferenceError(f"{where}: unknown predicate {name!r}")

    if name == "always":
        return lambda state, p: True
    if name in ("all_of", "any_of"):
        subs = [compile_predicate(s, fields, params, f"{where}.{name}[{i}]")
                for i, s in enumerate(spec.get("of", []))]
        combine = all if name == "all_of" else any
        return lambda state, p: combine(s(state, p) for s in subs)
    if name == "not":
        inner = compile_predicate(spec.get("of"), fields, params, f"{where}.not")
        return lambda state, p: not inner(state, p)
    if name == "param_contains":
        sp = spec.get("set_param")
        sd = ctx.param(sp)
        if not isinstance(sd, SetDomain):
            raise DomainError(f"{where}: param {sp!r} is not set-valued")
        get = ctx.ref(spec, _element_domain(sd))
        return lambda state, p: get(p) in p[sp]

    fname, dom = ctx.field(spec)

    if name == "field_equals":
        get = ctx.ref(spec, dom)
        return lambda state, p: state[fname] == get(p)
    if name in ("field_at_least", "field_at_most"):
        if not hasattr(dom, "leq") or (isinstance(dom, EnumDomain) and not dom.is_lattice):
            raise DomainError(f"{where}: field {fname!r} has no order")
        get = ctx.ref(spec, dom)
        leq = dom.leq
        if name == "field_at_least":
            return lambda state, p: leq(get(p), state[fname])
        return lambda state, p: leq(state[fname], get(p))
    if name == "contains":
        if not isinstance(dom, SetDomain):
            raise DomainError(f"{where}: 'contains' needs a set field")
        get = ctx.ref(spec, _element_domain(dom))
        return lambda state, p: get(p) in state[fname]

    if not isinstance(dom, MapDomain):
        raise DomainError(f"{where}: {name} needs a map field")
    key = ctx.ref(spec, EnumDomain(dom.keys), param_key="key_param", value_key="key")
    if name == "key_present":
        return lambda state, p: map_get(state[fname], key(p)) is not None
    if name == "key_equals":
        get = ctx.ref(spec, dom.value_domain)
        return lambda state, p: map_get(state[fname], key(p)) == get(p)
    if not dom.set_valued:
        raise DomainError(f"{where}: key_contains needs a set-valued map")
    get = ctx.ref(spec, _element_domain(dom.value_domain))
    return lambda state, p: get(p) in map_get(state[fname], key(p), frozenset())


# -- projections ---------------------------------------------------------------

def compile_projection(spec: Mapping, source_fields: Mapping[str, Domain],
                       target_fields: Mapping[str, Domain],
                       where: str) -> Callable[[State, State], State]:
    """Compile a pure projection ``(source_state, target_initial) -> target_state``."""
    fn = spec.get("function")
    if fn not in PROJECTIONS:
        raise ModelReferenceError(f"{where}: unknown projection {fn!r}")
    b = spec.get("bindings", {})
    src, into = b.get("from"), b.get("into")
    if src not in source_fields:
        raise ModelReferenceError(f"{where}: unknown source field {src!r}")
    if into not in target_fields:
        raise ModelReferenceError(f"{where}: unknown target field {into!r}")
    sdom = source_fields[src]

    if fn == "copy_field":
        return lambda s, t: {**t, into: s[src]}

    if fn == "count_entries":
        if isinstance(sdom, SetDomain):
            return lambda s, t: {**t, into: len(s[src])}
        if isinstance(sdom, MapDomain):
            tomb = sdom.tombstone
            return lambda s, t: {**t, into: sum(1 for _, v in s[src] if v != tomb)}
        raise DomainError(f"{where}: count_entries needs a set or map source")

    def total(v: Any) -> int:
        if isinstance(v, bool):
            return int(v)
        if isinstance(v, int):
            return v
        if isinstance(v, frozenset):
            return sum(total(x) for x in v)
        if isinstance(v, tuple):
            return sum(total(x) for _, x in v)
        return 0
    return lambda s, t: {**t, into: total(s[src])}
