import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import aggregate, counter, enumd, field, intd, model, op, setd
from eclat.corpus import MODEL_IDS, load_corpus_model
from eclat.errors import (
    CapExceeded,
    DomainError,
    ModelReferenceError,
    ModelSyntaxError,
    NotALattice,
)
from eclat.model import (
    StateSpaceSpec,
    enumerate_states,
    model_to_dict,
    parse_model,
    serialize_model,
    validate_model,
)
from eclat.model.domains import (
    EnumDomain,
    IntRange,
    MapDomain,
    SetDomain,
    map_get,
    map_set,
    parse_domain,
)


def space(*fields):
    doms = tuple((n, parse_domain(d)) for n, d in fields)
    return StateSpaceSpec(doms, {n: next(iter(d.values())) for n, d in doms})


# -- enumerate_states ----------------------------------------------------------

def test_single_int_field_enumerates_in_order():
    s = space(("x", intd(0, 3)))
    assert [st["x"] for st in enumerate_states(s)] == [0, 1, 2, 3]


def test_product_rule():
    s = space(("a", enumd("p", "q", "r")), ("b", intd(1, 5)))
    states = list(enumerate_states(s))
    assert len(states) == 15
    assert len({json.dumps(x, sort_keys=True) for x in states}) == 15


def test_cap_exceeded_is_raised_eagerly():
    s = space(*((f"f{i}", intd(0, 9)) for i in range(9)))
    assert s.size() == 10**9
    with pytest.raises(CapExceeded) as exc:
        enumerate_states(s, cap=10**6)
    assert exc.value.size == 10**9


domain_specs = st.one_of(
    st.tuples(st.integers(-3, 3), st.integers(0, 3)).map(lambda t: intd(t[0], t[0] + t[1])),
    st.just({"kind": "bool"}),
    st.integers(1, 4).map(lambda n: enumd(*[f"v{i}" for i in range(n)])),
    st.integers(0, 3).map(lambda n: setd(*[f"e{i}" for i in range(n)])),
    st.integers(1, 2).map(lambda n: {"kind": "map", "keys": [f"k{i}" for i in range(n)],
                                     "values": enumd("x", "y")}),
)


@given(st.lists(domain_specs, min_size=1, max_size=3))
def test_enumeration_yields_every_state_exactly_once(specs):
    s = space(*((f"f{i}", d) for i, d in enumerate(specs)))
    states = list(enumerate_states(s))
    assert len(states) == s.size()
    keys = {tuple(sorted(x.items(), key=lambda kv: kv[0])) for x in states}
    assert len(keys) == len(states)
    assert all(s.contains(x) for x in states)


# -- domains -----------------------------------------------------------------------

def test_int_domain_requires_bounds():
    with pytest.raises(DomainError):
        parse_domain({"kind": "int", "min": 0})


def test_collections_are_capped_at_eight():
    with pytest.raises(DomainError):
        parse_domain(setd(*range(9)))
    with pytest.raises(DomainError):
        parse_domain({"kind": "map", "keys": list(range(9)), "values": {"kind": "bool"}})


def test_enum_order_must_be_a_join_semilattice():
    # two maximal elements: a and b have no least upper bound
    with pytest.raises(NotALattice):
        parse_domain({"kind": "enum", "values": ["z", "a", "b"], "order": [["z", "a"], ["z", "b"]]})
    with pytest.raises(NotALattice):
        parse_domain({"kind": "enum", "values": ["a", "b"], "order": [["a", "b"], ["b", "a"]]})


def test_chain_join_is_the_larger_value():
    d = parse_domain(enumd("Todo", "InProgress", "Blocked", chain=True))
    assert isinstance(d, EnumDomain) and d.is_lattice
    assert d.join("InProgress", "Blocked") == "Blocked"
    assert d.join("Todo", "Todo") == "Todo"


def test_domain_sizes():
    assert IntRange(0, 3).size() == 4
    assert SetDomain(("a", "b", "c")).size() == 8
    # partial map over 2 keys with 3 values: (3 + 1)^2
    assert MapDomain(("k1", "k2"), EnumDomain(("x", "y", "z"))).size() == 16
    # set-valued entries exclude the empty set
    assert MapDomain(("k",), SetDomain((1, 2))).size() == 4


def test_map_set_and_get():
    m = map_set((), "b", 1)
    m = map_set(m, "a", 2)
    assert m == (("a", 2), ("b", 1))
    assert map_get(m, "a") == 2
    assert map_set(m, "a", None) == (("b", 1),)
    assert map_set(m, "a", frozenset()) == (("b", 1),)


# -- parsing -----------------------------------------------------------------------

def test_baseline_has_four_aggregates_and_two_operations():
    m = load_corpus_model("moodbarometer-baseline")
    assert len(m.aggregates) == 4
    assert m.operation_count() == 2


def test_zero_aggregates_is_a_domain_error():
    with pytest.raises(DomainError):
        parse_model(model())


def test_projection_with_operation_is_rejected():
    src = aggregate("Votes", [field("n", intd(0, 3))], {"n": 0})
    bad = aggregate("Tally", [field("t", intd(0, 3))], {"t": 0},
                    [op("bump", "Incremental", {"fn": "add_delta", "field": "t", "value": 1})],
                    projection_of={"source": "Votes", "function": "copy_field",
                                   "bindings": {"from": "n", "into": "t"}})
    with pytest.raises(ModelReferenceError):
        parse_model(model(src, bad))


def test_dangling_references():
    dangling_proj = aggregate("Tally", [field("t", intd(0, 3))], {"t": 0},
                              projection_of={"source": "Nope", "function": "copy_field",
                                             "bindings": {"from": "n", "into": "t"}})
    with pytest.raises(ModelReferenceError):
        parse_model(model(dangling_proj))
    doc = counter()
    doc["aggregates"][0]["operations"][0]["superseded_by"] = ["missing"]
    with pytest.raises(ModelReferenceError):
        parse_model(doc)


def test_duplicate_names_are_rejected():
    a = aggregate("A", [field("x", intd(0, 1))], {"x": 0})
    with pytest.raises(ModelReferenceError):
        parse_model(model(a, a))
    doc = counter(deltas=(1, 1))
    with pytest.raises(ModelReferenceError):
        parse_model(doc)


def test_malformed_json_reports_line_and_column():
    with pytest.raises(ModelSyntaxError) as exc:
        parse_model('{\n  "name": "x",\n  oops\n}')
    assert exc.value.line == 3
    assert exc.value.column == 3


def test_schema_violation_reports_a_path():
    doc = counter()
    doc["aggregates"][0]["operations"][0]["update_kind"] = "Sometimes"
    with pytest.raises(ModelSyntaxError) as exc:
        parse_model(doc)
    assert exc.value.path == "/aggregates/0/operations/0/update_kind"


def test_initial_state_outside_domain():
    doc = counter(lo=1, hi=3)
    with pytest.raises(DomainError):
        parse_model(doc)


def test_unknown_effect_and_field_references():
    doc = counter()
    doc["aggregates"][0]["operations"][0]["effect"][0]["field"] = "nope"
    with pytest.raises(ModelReferenceError):
        parse_model(doc)


def test_qualified_operation_lookup():
    m = load_corpus_model("backlog")
    assert m.find_operation("UserStory.markReady").name == "markReady"
    assert m.find_operation("addStory").aggregate == "Backlog"


@pytest.mark.parametrize("mid", MODEL_IDS)
def test_corpus_round_trip(mid):
    m = load_corpus_model(mid)
    again = parse_model(model_to_dict(m))
    assert again == m
    assert parse_model(serialize_model(again)) == m


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_round_trip_generated_models(data):
    nfields = data.draw(st.integers(1, 3))
    fields, initial, ops = [], {}, []
    for i in range(nfields):
        kind = data.draw(st.sampled_from(["int", "set", "enum"]))
        if kind == "int":
            lo = data.draw(st.integers(-5, 0))
            fields.append(field(f"f{i}", intd(lo, lo + 5)))
            initial[f"f{i}"] = lo
            ops.append(op(f"bump{i}", "Incremental",
                          {"fn": "add_delta", "field": f"f{i}", "value": 1}))
        elif kind == "set":
            fields.append(field(f"f{i}", setd("a", "b")))
            initial[f"f{i}"] = data.draw(st.lists(st.sampled_from(["a", "b"]), unique=True))
            ops.append(op(f"ins{i}", "Incremental",
                          {"fn": "insert_keyed", "field": f"f{i}", "param": "e"},
                          params=(field("e", enumd("a", "b")),),
                          intent={"pred": "contains", "field": f"f{i}", "param": "e"}))
        else:
            fields.append(field(f"f{i}", enumd("lo", "mid", "hi", chain=True)))
            initial[f"f{i}"] = "lo"
            ops.append(op(f"raise{i}", "Incremental",
                          {"fn": "lattice_join_field", "field": f"f{i}", "value": "mid"}))
    writers = data.draw(st.sampled_from(["any", ["w1"], ["w1", "w2"]]))
    doc = model(aggregate("Agg", fields, initial, ops, writers=writers))
    m = parse_model(doc)
    assert parse_model(model_to_dict(m)) == m


# -- validation --------------------------------------------------------------------

@pytest.mark.parametrize("mid", MODEL_IDS)
def test_corpus_models_validate_clean(mid):
    assert validate_model(load_corpus_model(mid)) == []


def test_incremental_op_writing_an_undeclared_field():
    doc = model(aggregate(
        "A", [field("a", intd(0, 3)), field("b", intd(0, 3))], {"a": 0, "b": 0},
        [op("sneaky", "Incremental", {"fn": "add_delta", "field": "a", "value": 1},
            {"fn": "set_register", "field": "b", "value": 3}, touches=["a"])]))
    findings = validate_model(parse_model(doc))
    assert len(findings) == 1
    assert findings[0].code == "kind-effect-mismatch"
    assert "kind/effect mismatch" in findings[0].message


def test_incremental_overwrite_of_unordered_enum_is_flagged():
    doc = model(aggregate("A", [field("s", enumd("x", "y"))], {"s": "x"},
                          [op("set", "Incremental", {"fn": "set_register", "field": "s",
                                                      "value": "y"})]))
    findings = validate_model(parse_model(doc))
    assert [f.code for f in findings] == ["kind-effect-mismatch"]


def test_initial_state_violating_an_invariant():
    doc = counter(lo=0, hi=5)
    doc["aggregates"][0]["invariants"] = [
        {"name": "positive", "predicate": {"pred": "field_at_least", "field": "count", "value": 1}}]
    findings = validate_model(parse_model(doc))
    assert [f.code for f in findings] == ["invariant-violated-initially"]


def test_state_based_ops_are_not_structurally_restricted():
    doc = model(aggregate(
        "A", [field("a", intd(0, 3)), field("b", setd("x"))], {"a": 0, "b": []},
        [op("put", "StateBased", {"fn": "replace_state",
                                  "assign": {"a": {"param": "a"}, "b": {"param": "b"}}},
            params=(field("a", intd(0, 3)), field("b", setd("x"))))]))
    assert validate_model(parse_model(doc)) == []


def test_state_space_size_product_matches_itertools():
    m = load_corpus_model("backlog")
    for agg in m.aggregates:
        per_field = [len(list(d.values())) for _, d in agg.state_space.fields]
        expected = 1
        for n in per_field:
            expected *= n
        assert agg.state_space.size() == expected
        if expected <= 5000:
            assert sum(1 for _ in enumerate_states(agg.state_space)) == expected
            assert len(list(itertools.islice(enumerate_states(agg.state_space), 3))) == min(3, expected)
