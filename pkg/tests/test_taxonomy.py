import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import aggregate, counter, enumd, field, intd, model, op
from eclat.compatibility import Ratio
from eclat.corpus import MODEL_IDS, load_corpus_model
from eclat.model import parse_model
from eclat.model.descriptor import ModelDescriptor
from eclat.taxonomy import AggregateClass, classify_model, trivial_share

C = AggregateClass


def classes(m: ModelDescriptor) -> dict[str, AggregateClass]:
    return {c.aggregate: c.cls for c in classify_model(m)}


def test_aggregate_without_operations_is_immutable():
    m = parse_model(model(aggregate("Scale", [field("x", intd(0, 1))], {"x": 0})))
    (c,) = classify_model(m)
    assert c.cls is C.IMMUTABLE and c.trivial
    assert trivial_share(m) == Ratio(1, 1)
    assert trivial_share(m).render() == "1/1 (100.0%)"


def test_projection_is_derived():
    src = aggregate("Votes", [field("n", intd(0, 3))], {"n": 0},
                    [op("vote", "Incremental", {"fn": "add_delta", "field": "n", "value": 1})])
    proj = aggregate("Tally", [field("t", intd(0, 3))], {"t": 0},
                     projection_of={"source": "Votes", "function": "copy_field",
                                    "bindings": {"from": "n", "into": "t"}})
    got = classes(parse_model(model(src, proj)))
    assert got == {"Votes": C.FULLY_COMPATIBLE, "Tally": C.DERIVED}


def test_single_writer_is_trivial_even_when_ops_conflict():
    doc = counter(kind="StateBased")
    doc["aggregates"][0]["writers"] = ["admin"]
    (c,) = classify_model(parse_model(doc))
    assert c.cls is C.SINGLE_WRITER and c.trivial


def test_conflicting_state_based_ops_are_state_opaque():
    assert classes(load_corpus_model("taskboard-naive")) == {"Task": C.STATE_OPAQUE}


def test_mixed_verdicts_are_partially_compatible():
    got = classes(load_corpus_model("backlog"))
    assert got["UserStory"] is C.PARTIALLY_COMPATIBLE
    assert got["EstimationScale"] is C.IMMUTABLE


@pytest.mark.parametrize("mid,expected", [
    ("moodbarometer-baseline", Ratio(1, 4)),
    ("backlog", Ratio(3, 8)),
    ("moodbarometer-redesign-a", Ratio(2, 5)),
    ("moodbarometer-redesign-b", Ratio(3, 5)),
    ("taskboard-naive", Ratio(0, 1)),
    ("taskboard-safe", Ratio(1, 2)),
])
def test_trivial_shares(mid, expected):
    assert trivial_share(load_corpus_model(mid)) == expected


def test_trivial_share_renders_one_decimal():
    assert trivial_share(load_corpus_model("backlog")).render() == "3/8 (37.5%)"
    assert trivial_share(load_corpus_model("moodbarometer-baseline")).render() == "1/4 (25.0%)"


def test_declared_class_mismatch_is_reported():
    doc = counter()
    doc["aggregates"][0]["declared_class"] = "Immutable"
    (c,) = classify_model(parse_model(doc))
    assert c.cls is C.FULLY_COMPATIBLE
    assert c.mismatch is not None
    assert c.mismatch.code == "declared-class-mismatch"
    assert "declared Immutable but analysis shows FullyCompatible" in c.mismatch.message
    assert c.to_json()["mismatch"] == c.mismatch.message


def test_matching_declared_class_has_no_mismatch():
    doc = counter()
    doc["aggregates"][0]["declared_class"] = "FullyCompatible"
    (c,) = classify_model(parse_model(doc))
    assert c.mismatch is None


@pytest.mark.parametrize("mid", MODEL_IDS)
def test_corpus_declared_classes_agree(mid):
    assert all(c.mismatch is None for c in classify_model(load_corpus_model(mid)))


ops_strategy = st.lists(
    st.tuples(st.sampled_from(["Incremental", "StateBased", "TrueBlind"]),
              st.integers(1, 3)),
    min_size=1, max_size=3)


@settings(max_examples=50, deadline=None)
@given(ops_strategy, st.sampled_from(["any", ["w1", "w2"]]))
def test_aggregate_with_operations_is_never_immutable_or_derived(ops, writers):
    doc = model(aggregate(
        "A", [field("n", intd(0, 6)), field("s", enumd("x", "y"))], {"n": 0, "s": "x"},
        [op(f"o{i}", kind,
            {"fn": "add_delta", "field": "n", "value": d} if kind == "Incremental"
            else {"fn": "set_register", "field": "s", "value": "y"})
         for i, (kind, d) in enumerate(ops)],
        writers=writers))
    (c,) = classify_model(parse_model(doc))
    assert c.cls not in (C.IMMUTABLE, C.DERIVED)
    assert not c.trivial
