import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import counter, enumd
from eclat.corpus import load_corpus_model
from eclat.errors import NotALattice, PreconditionFailed, UnknownOperation
from eclat.model import parse_model
from eclat.model.descriptor import UpdateKind
from eclat.model.domains import parse_domain
from eclat.replication import (
    DeliveryOutcome,
    OperationInstance,
    Ordering,
    Versioned,
    converged,
    deliver,
    journal_ndjson,
    lattice_join,
    lww_merge,
    new_replicas,
    read_journal,
    state_shipped,
    submit,
    superset_merge,
    vv_compare,
    vv_leq,
    vv_merge,
    vv_normalize,
)

# -- version vectors -------------------------------------------------------------

def test_vv_examples():
    assert vv_compare({0: 1}, {0: 1, 1: 0}) is Ordering.EQUAL
    assert vv_compare({0: 1}, {0: 2}) is Ordering.BEFORE
    assert vv_compare({0: 2, 1: 1}, {0: 2}) is Ordering.AFTER
    assert vv_compare({0: 1}, {1: 1}) is Ordering.CONCURRENT
    assert vv_merge({0: 3, 1: 1}, {1: 4, 2: 0}) == {0: 3, 1: 4}
    assert vv_normalize({2: 0, 1: 5}) == {1: 5}
    with pytest.raises(ValueError):
        vv_normalize({0: -1})


vvs = st.dictionaries(st.integers(0, 3), st.integers(0, 4), max_size=4)


@given(vvs, vvs)
def test_vv_compare_is_antisymmetric(a, b):
    flip = {Ordering.BEFORE: Ordering.AFTER, Ordering.AFTER: Ordering.BEFORE,
            Ordering.EQUAL: Ordering.EQUAL, Ordering.CONCURRENT: Ordering.CONCURRENT}
    assert vv_compare(b, a) is flip[vv_compare(a, b)]


@given(vvs, vvs, vvs)
def test_vv_merge_is_a_join(a, b, c):
    m = vv_merge(a, b)
    assert vv_leq(a, m) and vv_leq(b, m)
    assert m == vv_merge(b, a)
    assert vv_merge(m, c) == vv_merge(a, vv_merge(b, c))
    assert vv_merge(a, a) == vv_normalize(a)


# -- submit and deliver ------------------------------------------------------------

def safe_pair():
    return new_replicas(load_corpus_model("taskboard-safe"), 2)


def test_submit_applies_locally_and_stamps_instance():
    r0, _ = safe_pair()
    inst = submit(r0, "Task", "addComment", {"comment": "c2"}, tick=4)
    assert inst.op_id == (0, 1) and inst.origin_vv == {} and inst.wall_ts == 4
    assert r0.vv == {0: 1}
    assert dict(r0.states["Task"]["comments"])["c2"] == "live"
    # the derived card is refreshed after every change
    assert r0.states["TaskCard"]["comment_count"] == 2
    second = submit(r0, "Task", "startWork", {}, tick=1)
    assert second.wall_ts == 5  # the clock never goes backwards
    assert second.origin_vv == {0: 1}


def test_derived_aggregate_accepts_no_operations():
    r0, _ = safe_pair()
    with pytest.raises(UnknownOperation):
        submit(r0, "TaskCard", "anything", {})


def test_delivery_and_duplicate():
    r0, r1 = safe_pair()
    inst = submit(r0, "Task", "startWork", {})
    assert deliver(r1, inst) is DeliveryOutcome.APPLIED
    assert deliver(r1, inst) is DeliveryOutcome.DUPLICATE
    assert r1.vv == {0: 1}
    assert converged([r0, r1])


def test_causal_buffering_until_dependencies_arrive():
    r0, r1, r2 = new_replicas(load_corpus_model("taskboard-safe"), 3)
    a = submit(r0, "Task", "addComment", {"comment": "c2"})
    deliver(r1, a)
    b = submit(r1, "Task", "deleteComment", {"comment": "c2"})
    assert b.origin_vv == {0: 1}
    assert deliver(r2, b) is DeliveryOutcome.BUFFERED
    assert deliver(r2, b) is DeliveryOutcome.DUPLICATE
    assert r2.vv == {}
    assert deliver(r2, a) is DeliveryOutcome.APPLIED
    assert r2.buffered == [] and r2.vv == {0: 1, 1: 1}
    assert converged([r0, r1, r2]).converged is False
    deliver(r0, b)
    assert converged([r0, r1, r2])


def test_fifo_and_none_policies():
    r0, r1 = safe_pair()
    a = submit(r0, "Task", "addComment", {"comment": "c2"})
    b = submit(r0, "Task", "addComment", {"comment": "c3"})
    assert deliver(r1, b, "fifo") is DeliveryOutcome.BUFFERED
    assert deliver(r1, a, "fifo") is DeliveryOutcome.APPLIED
    assert r1.vv == {0: 2}
    r2, r3 = safe_pair()
    c = submit(r2, "Task", "addComment", {"comment": "c2"})
    d = submit(r2, "Task", "addComment", {"comment": "c3"})
    assert deliver(r3, d, "none") is DeliveryOutcome.APPLIED
    assert deliver(r3, c, "none") is DeliveryOutcome.APPLIED


def test_instance_rejects_inconsistent_sequence_number():
    with pytest.raises(ValueError):
        OperationInstance(0, 2, "Task", "startWork", {}, {}, 1)


def test_happened_before():
    r0, r1 = safe_pair()
    a = submit(r0, "Task", "startWork", {})
    deliver(r1, a)
    b = submit(r1, "Task", "addComment", {"comment": "c2"})
    c = submit(r0, "Task", "addComment", {"comment": "c3"})
    assert a.happened_before(b) and not b.happened_before(a)
    assert not b.happened_before(c) and not c.happened_before(b)


# -- rejections ------------------------------------------------------------------------

def bounded_counter():
    doc = counter(deltas=(1, -1))
    doc["aggregates"][0]["invariants"] = [
        {"name": "non-negative", "predicate": {"pred": "field_at_least", "field": "count",
                                               "value": 0}}]
    return parse_model(doc)


def test_local_invariant_violation_is_logged_and_not_broadcast():
    (r0,) = new_replicas(bounded_counter(), 1)
    with pytest.raises(PreconditionFailed):
        submit(r0, "Counter", "add-1", {})
    assert r0.vv == {} and r0.applied == set()
    assert [(e.outcome, e.local) for e in r0.events] == [("rejected", True)]
    assert "invariant violated: non-negative" in r0.events[0].reason


def test_remote_rejection_is_counted_as_processed():
    r0, r1 = new_replicas(bounded_counter(), 2)
    up = submit(r0, "Counter", "add1", {})
    deliver(r1, up)
    d0 = submit(r0, "Counter", "add-1", {})
    d1 = submit(r1, "Counter", "add-1", {})
    assert deliver(r1, d0) is DeliveryOutcome.REJECTED
    assert deliver(r0, d1) is DeliveryOutcome.REJECTED
    for r in (r0, r1):
        assert r.states["Counter"]["count"] == 0
        assert sum(r.vv.values()) == len(r.applied) + len(r.rejected)
        assert len(r.rejected) == 1
    assert deliver(r1, d0) is DeliveryOutcome.DUPLICATE
    assert converged([r0, r1])


# -- naive state merges ------------------------------------------------------------------

def test_lww_merge_uses_timestamp_then_origin():
    a, b = {"x": 1}, {"x": 2}
    assert lww_merge(Versioned(a, 5, 0), Versioned(b, 4, 1)) == a
    assert lww_merge(Versioned(a, 5, 0), Versioned(b, 5, 1)) == b
    assert lww_merge(Versioned(b, 5, 1), Versioned(a, 5, 0)) == b


def test_superset_merge_unions_sets():
    a = {"s": frozenset({"c1"}), "k": "x"}
    b = {"s": frozenset({"c2"}), "k": "y"}
    assert superset_merge(a, b) == {"s": frozenset({"c1", "c2"}), "k": "y"}
    assert superset_merge(a, b, prefer=a)["k"] == "x"


def test_lattice_join():
    chain = parse_domain(enumd("Todo", "InProgress", "Done", chain=True))
    assert lattice_join(chain, "Done", "Todo") == "Done"
    with pytest.raises(NotALattice):
        lattice_join(parse_domain(enumd("a", "b")), "a", "b")


def test_state_shipping_aggregates():
    naive = load_corpus_model("taskboard-naive")
    safe = load_corpus_model("taskboard-safe")
    assert state_shipped(naive.aggregate("Task"))
    assert not state_shipped(safe.aggregate("Task"))
    assert not state_shipped(safe.aggregate("TaskCard"))


def test_lww_state_shipping_loses_a_concurrent_update():
    r0, r1 = new_replicas(load_corpus_model("taskboard-naive"), 2, merge_policy="lww")
    a = submit(r0, "Task", "startWork", {"comments": ["c1"]}, tick=5)
    b = submit(r1, "Task", "addComment", {"comment": "c2", "comments": ["c1", "c2"]}, tick=7)
    assert a.snapshot is not None
    deliver(r0, b)
    deliver(r1, a)
    assert converged([r0, r1])
    # the later whole-state snapshot wins; the status change is gone
    assert r0.states["Task"]["status"] == "Todo"
    assert r0.states["Task"]["comments"] == frozenset({"c1", "c2"})


def test_superset_merge_resurrects_deleted_elements():
    r0, r1 = new_replicas(load_corpus_model("taskboard-naive"), 2, merge_policy="superset")
    a = submit(r0, "Task", "deleteComment", {"comment": "c1", "comments": []}, tick=5)
    b = submit(r1, "Task", "addComment", {"comment": "c2", "comments": ["c1", "c2"]}, tick=6)
    deliver(r0, b)
    deliver(r1, a)
    assert converged([r0, r1])
    assert r0.states["Task"]["comments"] == frozenset({"c1", "c2"})


# -- journal -------------------------------------------------------------------------------

def test_journal_ndjson_round_trip():
    m = load_corpus_model("taskboard-safe")
    r0, r1 = new_replicas(m, 2)
    deliver(r1, submit(r0, "Task", "addComment", {"comment": "c2"}, tick=1), tick=3)
    rows = read_journal(journal_ndjson([r0, r1], m))
    assert [(row["replica"], row["local"], row["outcome"]) for row in rows] == [
        (0, True, "applied"), (1, False, "applied")]
    assert rows[1]["op_id"] == [0, 1]
    assert rows[1]["params"] == {"comment": "c2"}
    assert rows[1]["tick"] == 3
    assert rows[0]["vv"] == {"0": 1}


# -- properties ------------------------------------------------------------------------------

def random_run(mid: str, seed: int, dup: float):
    m = load_corpus_model(mid)
    rng = random.Random(seed)
    reps = new_replicas(m, 3)
    # only operations that commute with every partner (backlog's text edit does not)
    ops = [(a.name, o) for a in m.aggregates for o in a.operations
           if o.update_kind is not UpdateKind.STATE_BASED]
    sent = []
    for _ in range(8):
        r = rng.choice(reps)
        agg, o = rng.choice(ops)
        try:
            sent.append(submit(r, agg, o.name, o.sample_params(rng)))
        except PreconditionFailed:
            pass
    msgs = [(r, i) for r in reps for i in sent if i.origin != r.id]
    msgs += [x for x in msgs if rng.random() < dup]
    rng.shuffle(msgs)
    return reps, msgs


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["taskboard-safe", "moodbarometer-redesign-a", "backlog"]),
       st.integers(0, 2**32), st.floats(0, 1))
def test_any_delivery_order_with_duplicates_converges(mid, seed, dup):
    reps, msgs = random_run(mid, seed, dup)
    for r, i in msgs:
        deliver(r, i)
    assert all(r.buffered == [] for r in reps)
    assert converged(reps)
    for r in reps:
        assert sum(r.vv.values()) == len(r.applied) + len(r.rejected)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_redelivery_never_changes_state(seed):
    reps, msgs = random_run("backlog", seed, 0.0)
    for r, i in msgs:
        deliver(r, i)
    before = [r.state_digest() for r in reps]
    for r, i in msgs:
        assert deliver(r, i) is DeliveryOutcome.DUPLICATE
    assert [r.state_digest() for r in reps] == before
