"""Operation-based replication engine.

Each replica applies operations locally and broadcasts them as immutable
``OperationInstance`` messages. Delivery is at-least-once; duplicates are
recognized by ``op_id``. Under the default ``causal`` policy an instance is
buffered until everything its origin had seen is applied locally.

For aggregates whose updates are whole-state replacements (all operations
StateBased, or ``opaque_updates``), a replica can instead ship post-apply
state snapshots and reconcile them with a naive syntactic merge (``lww`` or
``superset``). Those merges are deliberately included to reproduce the
lost-update anomalies they cause.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple

from eclat.canonical import digest, dumps, plain
from eclat.errors import NotALattice, PreconditionFailed, UnknownOperation
from eclat.model.descriptor import AggregateDescriptor, ModelDescriptor, State, UpdateKind
from eclat.model.domains import EnumDomain

VersionVector = dict[int, int]
OpId = tuple[int, int]


class DeliveryPolicy(str, Enum):
    CAUSAL = "causal"
    FIFO = "fifo"
    NONE = "none"


class MergePolicy(str, Enum):
    NONE = "none"
    LWW = "lww"
    SUPERSET = "superset"


class Ordering(str, Enum):
    BEFORE = "Before"
    AFTER = "After"
    EQUAL = "Equal"
    CONCURRENT = "Concurrent"


class DeliveryOutcome(str, Enum):
    APPLIED = "Applied"
    BUFFERED = "Buffered"
    DUPLICATE = "Duplicate"
    REJECTED = "Rejected"


# -- version vectors -----------------------------------------------------------

def vv_normalize(v: Mapping[int, int]) -> VersionVector:
    """Drop zero entries (absent and zero are the same counter)."""
    if any(c < 0 for c in v.values()):
        raise ValueError(f"negative counter in version vector {dict(v)}")
    return {r: c for r, c in sorted(v.items()) if c}


def vv_merge(a: Mapping[int, int], b: Mapping[int, int]) -> VersionVector:
    """Componentwise maximum."""
    return vv_normalize({r: max(a.get(r, 0), b.get(r, 0)) for r in set(a) | set(b)})


def vv_leq(a: Mapping[int, int], b: Mapping[int, int]) -> bool:
    return all(c <= b.get(r, 0) for r, c in a.items())


def vv_compare(a: Mapping[int, int], b: Mapping[int, int]) -> Ordering:
    le, ge = vv_leq(a, b), vv_leq(b, a)
    if le and ge:
        return Ordering.EQUAL
    if le:
        return Ordering.BEFORE
    if ge:
        return Ordering.AFTER
    return Ordering.CONCURRENT


# -- messages ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperationInstance:
    """One submitted operation, as broadcast to every other replica.

    ``snapshot`` is only set for aggregates replicated by state shipping; it
    holds the origin's state right after the local apply.
    """

    origin: int
    seq: int
    aggregate: str
    op_name: str
    params: Mapping[str, Any]
    origin_vv: Mapping[int, int]
    wall_ts: int
    snapshot: State | None = None

    def __post_init__(self):
        if self.origin_vv.get(self.origin, 0) + 1 != self.seq:
            raise ValueError(f"op {self.op_id}: origin_vv[{self.origin}] + 1 must equal seq")

    @property
    def op_id(self) -> OpId:
        return (self.origin, self.seq)

    def happened_before(self, other: OperationInstance) -> bool:
        """True if this instance was applied at ``other``'s origin before ``other``."""
        return other.origin_vv.get(self.origin, 0) >= self.seq


class Versioned(NamedTuple):
    state: State
    wall_ts: int
    origin: int


# -- naive state merges ----------------------------------------------------------

def lww_merge(a: Versioned, b: Versioned) -> State:
    """Whole state of the version with the larger (wall_ts, origin) pair."""
    winner = a if (a.wall_ts, a.origin) >= (b.wall_ts, b.origin) else b
    return dict(winner.state)


def superset_merge(a: State, b: State, *, prefer: State | None = None) -> State:
    """Union every set-valued field; other fields come from ``prefer`` (default ``b``)."""
    src = b if prefer is None else prefer
    out = {}
    for name in a:
        x, y = a[name], b[name]
        out[name] = x | y if isinstance(x, frozenset) and isinstance(y, frozenset) else src[name]
    return out


def lattice_join(domain: EnumDomain, a: Any, b: Any) -> Any:
    """Least upper bound of two values of an ordered enumeration."""
    if not domain.is_lattice:
        raise NotALattice(f"enumeration {list(domain.members)} has no declared order")
    return domain.join(a, b)


def state_shipped(agg: AggregateDescriptor) -> bool:
    """Aggregates whose updates are opaque whole-state writes."""
    if agg.projection_of is not None:
        return False
    return agg.opaque_updates or (bool(agg.operations) and all(
        op.update_kind is UpdateKind.STATE_BASED for op in agg.operations))


# -- replicas --------------------------------------------------------------------

@dataclass(frozen=True)
class JournalEvent:
    """One applied or rejected operation at one replica."""

    seq: int
    replica: int
    op_id: OpId
    aggregate: str
    op_name: str
    params: Mapping[str, Any]
    vv: Mapping[int, int]
    outcome: str  # "applied" | "rejected"
    local: bool
    tick: int
    reason: str | None = None

    def to_json(self, model: ModelDescriptor | None = None) -> dict:
        if model is not None:
            op = model.aggregate(self.aggregate).operation(self.op_name)
            params = op.params_to_json(self.params)
        else:
            params = plain(dict(self.params))
        out = {"seq": self.seq, "replica": self.replica, "op_id": list(self.op_id),
               "aggregate": self.aggregate, "op_name": self.op_name, "params": params,
               "vv": {str(r): c for r, c in self.vv.items()}, "outcome": self.outcome,
               "local": self.local, "tick": self.tick}
        if self.reason is not None:
            out["reason"] = self.reason
        return out


@dataclass
class ReplicaState:
    """Mutable state of one replica; owned by a single thread of control.

    ``vv`` counts processed instances per origin; processed means applied or
    rejected, so ``sum(vv) == len(applied) + len(rejected)``.
    """

    id: int
    model: ModelDescriptor
    name: str = ""
    merge_policy: MergePolicy = MergePolicy.NONE
    states: dict[str, State] = field(default_factory=dict)
    vv: VersionVector = field(default_factory=dict)
    applied: set[OpId] = field(default_factory=set)
    rejected: set[OpId] = field(default_factory=set)
    journal: list[OperationInstance] = field(default_factory=list)
    events: list[JournalEvent] = field(default_factory=list)
    buffered: list[OperationInstance] = field(default_factory=list)
    clock: int = 0
    stamps: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            self.name = f"r{self.id}"
        if not self.states:
            self.states = {a.name: a.state_space.initial() for a in self.model.aggregates}
        self.merge_policy = MergePolicy(self.merge_policy)

    @property
    def processed(self) -> set[OpId]:
        return self.applied | self.rejected

    def ships_state(self, aggregate: str) -> bool:
        return (self.merge_policy is not MergePolicy.NONE
                and state_shipped(self.model.aggregate(aggregate)))

    def state_digest(self) -> dict[str, str]:
        return {a: digest(s) for a, s in sorted(self.states.items())}

    # internal helpers
    def _log(self, inst: OperationInstance, outcome: str, local: bool, tick: int,
             reason: str | None = None) -> None:
        self.events.append(JournalEvent(len(self.events) + 1, self.id, inst.op_id, inst.aggregate,
                                        inst.op_name, dict(inst.params), dict(self.vv), outcome,
                                        local, tick, reason))

    def _bump(self, origin: int) -> None:
        self.vv[origin] = self.vv.get(origin, 0) + 1

    def _refresh_derived(self, source: str) -> None:
        for d in self.model.derived_of(source):
            self.states[d.name] = d.project(self.states[source])

    def _try_apply(self, agg: AggregateDescriptor, op_name: str, params: Mapping) -> str | None:
        """Apply at this replica; return a rejection reason instead of applying."""
        op = agg.operation(op_name)
        state = self.states[agg.name]
        if not op.precondition_holds(state, params):
            return "precondition failed"
        new = op.apply(state, params)
        bad = agg.invariant_violations(new)
        if bad:
            return f"invariant violated: {', '.join(bad)}"
        self.states[agg.name] = new
        self._refresh_derived(agg.name)
        return None


def new_replicas(model: ModelDescriptor, count: int, *, merge_policy: MergePolicy | str = "none",
                 names: Iterable[str] | None = None) -> list[ReplicaState]:
    names = list(names) if names is not None else [f"r{i}" for i in range(count)]
    return [ReplicaState(i, model, names[i], MergePolicy(merge_policy)) for i in range(count)]


def submit(replica: ReplicaState, aggregate: str, op_name: str, params: Mapping[str, Any],
           *, tick: int = 0) -> OperationInstance:
    """Apply an operation locally and return the instance to broadcast.

    Raises PreconditionFailed (after logging the rejection) when the
    precondition or an invariant does not hold; the update is not broadcast.
    """
    agg = replica.model.aggregate(aggregate)
    if agg.projection_of is not None:
        raise UnknownOperation(f"{aggregate} is derived and accepts no operations")
    op = agg.operation(op_name)
    params = op.coerce_params(params)
    wall_ts = max(tick, replica.clock + 1)
    inst = OperationInstance(replica.id, replica.vv.get(replica.id, 0) + 1, aggregate, op_name,
                             params, vv_normalize(replica.vv), wall_ts)
    reason = replica._try_apply(agg, op_name, params)
    if reason is not None:
        replica._log(inst, "rejected", True, tick, reason)
        raise PreconditionFailed(f"{aggregate}.{op_name} rejected at {replica.name}: {reason}")
    replica.clock = wall_ts
    if replica.ships_state(aggregate):
        replica.stamps[aggregate] = (wall_ts, replica.id)
        inst = OperationInstance(inst.origin, inst.seq, aggregate, op_name, params,
                                 inst.origin_vv, wall_ts, dict(replica.states[aggregate]))
    replica._bump(replica.id)
    replica.applied.add(inst.op_id)
    replica.journal.append(inst)
    replica._log(inst, "applied", True, tick)
    return inst


def _deliverable(replica: ReplicaState, inst: OperationInstance, policy: DeliveryPolicy) -> bool:
    if policy is DeliveryPolicy.NONE:
        return True
    if inst.seq != replica.vv.get(inst.origin, 0) + 1:
        return False
    if policy is DeliveryPolicy.FIFO:
        return True
    return all(c <= replica.vv.get(r, 0) for r, c in inst.origin_vv.items() if r != inst.origin)


def _apply_remote(replica: ReplicaState, inst: OperationInstance, tick: int) -> DeliveryOutcome:
    replica.clock = max(replica.clock, inst.wall_ts)
    agg = replica.model.aggregate(inst.aggregate)
    if inst.snapshot is not None and replica.ships_state(inst.aggregate):
        mine = Versioned(replica.states[agg.name], *replica.stamps.get(agg.name, (0, -1)))
        theirs = Versioned(inst.snapshot, inst.wall_ts, inst.origin)
        if replica.merge_policy is MergePolicy.LWW:
            merged = lww_merge(mine, theirs)
        else:
            winner = lww_merge(mine, theirs)
            merged = superset_merge(mine.state, theirs.state, prefer=winner)
        replica.states[agg.name] = merged
        replica.stamps[agg.name] = max((mine.wall_ts, mine.origin), (theirs.wall_ts, theirs.origin))
        replica._refresh_derived(agg.name)
        reason = None
    else:
        reason = replica._try_apply(agg, inst.op_name, inst.params)
    replica._bump(inst.origin)
    if reason is None:
        replica.applied.add(inst.op_id)
        replica.journal.append(inst)
        replica._log(inst, "applied", False, tick)
        return DeliveryOutcome.APPLIED
    replica.rejected.add(inst.op_id)
    replica._log(inst, "rejected", False, tick, reason)
    return DeliveryOutcome.REJECTED


def deliver(replica: ReplicaState, inst: OperationInstance,
            policy: DeliveryPolicy | str = DeliveryPolicy.CAUSAL, *, tick: int = 0
            ) -> DeliveryOutcome:
    """Receive one (possibly duplicated or early) instance.

    A rejected remote apply leaves state unchanged and is logged as an event;
    the instance still counts as processed so causal delivery can proceed.
    """
    policy = DeliveryPolicy(policy)
    if inst.op_id in replica.processed or any(b.op_id == inst.op_id for b in replica.buffered):
        return DeliveryOutcome.DUPLICATE
    if not _deliverable(replica, inst, policy):
        replica.buffered.append(inst)
        return DeliveryOutcome.BUFFERED
    outcome = _apply_remote(replica, inst, tick)
    _drain(replica, policy, tick)
    return outcome


def _drain(replica: ReplicaState, policy: DeliveryPolicy, tick: int) -> None:
    """Apply buffered instances that became deliverable, to a fixpoint."""
    progress = True
    while progress and replica.buffered:
        progress = False
        for inst in sorted(replica.buffered, key=lambda i: i.op_id):
            if _deliverable(replica, inst, policy):
                replica.buffered.remove(inst)
                _apply_remote(replica, inst, tick)
                progress = True


@dataclass(frozen=True)
class Convergence:
    converged: bool
    digests: tuple[dict[str, str], ...]

    def __bool__(self) -> bool:
        return self.converged


def converged(replicas: list[ReplicaState]) -> Convergence:
    """Whether all replicas hold identical per-aggregate states."""
    if not replicas:
        raise ValueError("converged() needs at least one replica")
    digests = tuple(r.state_digest() for r in replicas)
    return Convergence(all(d == digests[0] for d in digests), digests)


def events_ndjson(events: Iterable[JournalEvent], model: ModelDescriptor | None = None) -> str:
    return "".join(dumps(e.to_json(model)) + "\n" for e in events)


def journal_ndjson(replicas: Iterable[ReplicaState], model: ModelDescriptor | None = None) -> str:
    """Newline-delimited JSON of every applied/rejected event, replica by replica."""
    return events_ndjson((e for r in replicas for e in r.events), model)


def read_journal(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
