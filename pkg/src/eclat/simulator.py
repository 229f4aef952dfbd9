"""Deterministic, seeded discrete-event simulation of replicated domain models.

A single-threaded event loop over logical ticks interleaves local submits with
message deliveries. The network can delay, reorder, duplicate and partition
messages but never loses them: after the workload a quiescence phase keeps
delivering (and, if needed, retransmitting) until every instance reached
every replica. The run ends with a convergence check, lost-update detection
and inconsistency-window statistics.

Randomness comes from independent streams derived from the seed (workload,
network delays, duplicates, injected duplicates), so enabling one feature
never perturbs the draws of another.
"""

from __future__ import annotations

import heapq
import json
import random
import statistics
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from eclat.canonical import digest, stable_seed
from eclat.errors import EclatError, PreconditionFailed, ScenarioError
from eclat.model.descriptor import ModelDescriptor, OperationDescriptor
from eclat.replication import (
    DeliveryOutcome,
    DeliveryPolicy,
    JournalEvent,
    MergePolicy,
    OperationInstance,
    converged,
    deliver,
    new_replicas,
    state_shipped,
    submit,
)

SCENARIO_SCHEMA = "eclat-scenario/1"
REPORT_SCHEMA = "eclat-report/1"
MAX_RETRANSMIT_ROUNDS = 16


# -- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    start: int
    end: int
    groups: tuple[tuple[int, ...], ...]

    def separates(self, a: int, b: int, tick: int) -> bool:
        if not self.start <= tick < self.end:
            return False
        return not any(a in g and b in g for g in self.groups)


@dataclass(frozen=True)
class NetworkConfig:
    delay_min: int = 1
    delay_max: int = 1
    reorder: bool = False
    duplicate_probability: float = 0.0
    partitions: tuple[Partition, ...] = ()


@dataclass(frozen=True)
class ScriptedOp:
    tick: int
    replica: int
    aggregate: str
    op_name: str
    params: Mapping[str, Any]


@dataclass(frozen=True)
class RandomWorkload:
    ops_per_replica: int
    operations: tuple[str, ...] = ()  # qualified names; empty = every operation
    window: tuple[int, int] = (0, 50)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: ModelDescriptor
    model_ref: str
    replica_count: int
    seed: int = 0
    replica_names: tuple[str, ...] = ()
    scripted: tuple[ScriptedOp, ...] = ()
    random_workload: RandomWorkload | None = None
    network: NetworkConfig = field(default_factory=NetworkConfig)
    delivery_policy: DeliveryPolicy = DeliveryPolicy.CAUSAL
    merge_policy: MergePolicy = MergePolicy.NONE
    description: str = ""
    expect: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _check_config(self)

    def with_seed(self, seed: int) -> ScenarioConfig:
        return replace(self, seed=seed)


def _check_config(cfg: ScenarioConfig) -> None:
    n = cfg.replica_count
    if n < 1:
        raise ScenarioError("replica_count must be at least 1")
    if cfg.replica_names and len(cfg.replica_names) != n:
        raise ScenarioError("replica names must match replica_count")
    net = cfg.network
    if not 0.0 <= net.duplicate_probability <= 1.0:
        raise ScenarioError("duplicate_probability must lie in [0, 1]")
    if not 0 <= net.delay_min <= net.delay_max:
        raise ScenarioError("delay range must satisfy 0 <= min <= max")
    if net.delay_max < 1:
        raise ScenarioError("delay_max must be at least 1 tick")
    for p in net.partitions:
        if p.end <= p.start:
            raise ScenarioError(f"partition [{p.start}, {p.end}) is empty")
        members = [r for g in p.groups for r in g]
        if sorted(members) != list(range(n)):
            raise ScenarioError(f"partition groups {[list(g) for g in p.groups]} do not "
                                f"partition replicas 0..{n - 1}")
    for s in cfg.scripted:
        if not 0 <= s.replica < n:
            raise ScenarioError(f"scripted op at tick {s.tick} names unknown replica {s.replica}")
        if s.tick < 0:
            raise ScenarioError("scripted ticks must be non-negative")


_SCENARIO_VALIDATOR = None


def _validator() -> jsonschema.Draft202012Validator:
    global _SCENARIO_VALIDATOR
    if _SCENARIO_VALIDATOR is None:
        schema = json.loads(resources.files("eclat.schemas")
                            .joinpath("scenario.schema.json").read_text("utf-8"))
        _SCENARIO_VALIDATOR = jsonschema.Draft202012Validator(schema)
    return _SCENARIO_VALIDATOR


def resolve_model(ref: str, base: Path | None = None) -> ModelDescriptor:
    """``corpus:<id>`` or a path (relative paths resolve against ``base``)."""
    from eclat.corpus import load_corpus_model
    from eclat.model.descriptor import load_model

    if ref.startswith("corpus:"):
        return load_corpus_model(ref.removeprefix("corpus:"))
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = base / path
    try:
        return load_model(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read model {ref!r}: {exc.strerror}") from None


def _resolve_op(model: ModelDescriptor, name: str) -> OperationDescriptor:
    try:
        return model.find_operation(name)
    except EclatError as exc:
        raise ScenarioError(str(exc)) from None


def parse_scenario(source: str | bytes | Mapping, *, base: Path | None = None,
                   model: ModelDescriptor | None = None) -> ScenarioConfig:
    """Parse an ``eclat-scenario/1`` document.

    ``model`` overrides the document's model reference (useful in tests).
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    else:
        doc = source
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ScenarioError(f"schema violation: {err.message} (at {path})")
    if model is None:
        model = resolve_model(doc["model"], base)

    reps = doc["replicas"]
    names = tuple(reps) if isinstance(reps, list) else ()
    count = len(names) if names else reps

    scripted = []
    for i, s in enumerate(doc.get("workload", {}).get("scripted", [])):
        op = _resolve_op(model, s["op"])
        try:
            params = op.coerce_params(s.get("params", {}))
        except EclatError as exc:
            raise ScenarioError(f"scripted op #{i}: {exc}") from None
        replica = s["replica"]
        if isinstance(replica, str):
            if replica not in names:
                raise ScenarioError(f"scripted op #{i}: unknown replica {replica!r}")
            replica = names.index(replica)
        scripted.append(ScriptedOp(s["tick"], replica, op.aggregate, op.name, params))

    rw = doc.get("workload", {}).get("random")
    random_workload = None
    if rw is not None:
        ops = tuple(f"{o.aggregate}.{o.name}" for o in
                    (_resolve_op(model, n) for n in rw.get("operations", [])))
        random_workload = RandomWorkload(rw["ops_per_replica"], ops, tuple(rw.get("window", (0, 50))))

    net = doc.get("network", {})
    delay = net.get("delay", [1, 1])
    network = NetworkConfig(
        delay_min=delay[0], delay_max=delay[1], reorder=net.get("reorder", False),
        duplicate_probability=net.get("duplicate_probability", 0.0),
        partitions=tuple(Partition(p["start"], p["end"], tuple(tuple(g) for g in p["groups"]))
                         for p in net.get("partitions", [])))
    return ScenarioConfig(
        name=doc["name"], model=model, model_ref=doc["model"], replica_count=count,
        seed=doc.get("seed", 0), replica_names=names, scripted=tuple(scripted),
        random_workload=random_workload, network=network,
        delivery_policy=DeliveryPolicy(doc.get("delivery_policy", "causal")),
        merge_policy=MergePolicy(doc.get("merge_policy", "none")),
        description=doc.get("description", ""), expect=doc.get("expect", {}))


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {exc.strerror}") from None
    return parse_scenario(text, base=path.parent)


def random_scenario(model_ref: str, seed: int, *, model: ModelDescriptor | None = None,
                    delivery_policy: DeliveryPolicy | str = DeliveryPolicy.CAUSAL,
                    replicas: tuple[int, int] = (3, 5), ops_per_replica: int = 4,
                    duplicate_probability: float = 0.2, reorder: bool = True,
                    partition: bool = True, horizon: int = 40) -> ScenarioConfig:
    """A randomized adversarial scenario: random replica count, random
    workload, reordering delays, duplicates and one random partition interval."""
    if model is None:
        model = resolve_model(model_ref)
    rng = random.Random(stable_seed("random-scenario", model_ref, seed))
    n = rng.randint(*replicas)
    partitions: tuple[Partition, ...] = ()
    if partition and n > 1:
        start = rng.randint(0, horizon // 2)
        end = start + rng.randint(5, horizon // 2)
        ids = list(range(n))
        rng.shuffle(ids)
        cut = rng.randint(1, n - 1)
        partitions = (Partition(start, end, (tuple(sorted(ids[:cut])), tuple(sorted(ids[cut:])))),)
    return ScenarioConfig(
        name=f"random-{model.name}-{seed}", model=model, model_ref=model_ref, replica_count=n,
        seed=seed, random_workload=RandomWorkload(ops_per_replica, (), (0, horizon)),
        network=NetworkConfig(1, 8, reorder, duplicate_probability, partitions),
        delivery_policy=DeliveryPolicy(delivery_policy))


# -- results -------------------------------------------------------------------------

class LostReason(str, Enum):
    MERGE_OVERWRITE = "MergeOverwrite"
    REJECTED_REMOTE = "RejectedRemote"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class LostUpdateFinding:
    op_id: tuple[int, int]
    aggregate: str
    op_name: str
    reason: LostReason
    evidence: Mapping[str, Any]

    def to_json(self) -> dict:
        return {"op_id": list(self.op_id), "aggregate": self.aggregate, "op_name": self.op_name,
                "reason": self.reason.value, "evidence": dict(self.evidence)}


@dataclass(frozen=True)
class WindowStats:
    count: int
    min: int
    median: float
    max: int

    def to_json(self) -> dict:
        return {"count": self.count, "min": self.min, "median": self.median, "max": self.max}


@dataclass
class SimReport:
    scenario: str
    model: str
    seed: int
    replica_names: tuple[str, ...]
    delivery_policy: DeliveryPolicy
    merge_policy: MergePolicy
    converged: bool
    final_digests: tuple[dict[str, str], ...]
    final_states: tuple[dict[str, dict], ...]
    lost_updates: list[LostUpdateFinding]
    rejected_applies: list[dict]
    origin_rejections: list[dict]
    windows: list[dict]
    counts: dict[str, int]
    events: list[JournalEvent] = field(default_factory=list, repr=False)

    @property
    def digest(self) -> str:
        """Digest of every replica's final state (equal across seeds iff states are)."""
        return digest(list(self.final_states))

    @property
    def safe(self) -> bool:
        return self.converged and not self.lost_updates

    def window_stats(self) -> WindowStats:
        return inconsistency_windows(self)

    def digest_line(self) -> str:
        return (f"converged={str(self.converged).lower()} lost={len(self.lost_updates)} "
                f"digest={self.digest}")

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "simulation",
            "scenario": self.scenario,
            "model": self.model,
            "seed": self.seed,
            "replicas": list(self.replica_names),
            "delivery_policy": self.delivery_policy.value,
            "merge_policy": self.merge_policy.value,
            "converged": self.converged,
            "digest": self.digest,
            "final_digests": [{"replica": n, "aggregates": d}
                              for n, d in zip(self.replica_names, self.final_digests)],
            "final_state": self.final_states[0],
            "lost_updates": [f.to_json() for f in self.lost_updates],
            "rejected_applies": {"count": len(self.rejected_applies),
                                 "details": self.rejected_applies},
            "origin_rejections": {"count": len(self.origin_rejections),
                                  "details": self.origin_rejections},
            "inconsistency_windows": {"summary": self.window_stats().to_json(),
                                      "per_instance": self.windows},
            "counts": dict(self.counts),
        }


def inconsistency_windows(report: SimReport) -> WindowStats:
    """min/median/max of (last-replica apply tick - origin apply tick)."""
    w = [x["window"] for x in report.windows]
    if not w:
        return WindowStats(0, 0, 0, 0)
    return WindowStats(len(w), min(w), statistics.median(w), max(w))


def detect_lost_updates(instances: Sequence[OperationInstance],
                        finals: Sequence[Mapping[str, dict]], model: ModelDescriptor,
                        events: Sequence[JournalEvent] = (),
                        merge_policy: MergePolicy = MergePolicy.NONE) -> list[LostUpdateFinding]:
    """Lost updates among the origin-applied ``instances``.

    An instance whose intent predicate is false on a final state is lost
    unless an applied instance of an operation in its ``superseded_by`` set,
    not causally before it, masks it. A remote rejection is always reported
    (reason RejectedRemote).
    """
    findings: list[LostUpdateFinding] = []
    by_id = {i.op_id: i for i in instances}
    reported: set = set()
    for e in events:
        if e.outcome == "rejected" and not e.local and e.op_id in by_id and e.op_id not in reported:
            reported.add(e.op_id)
            findings.append(LostUpdateFinding(e.op_id, e.aggregate, e.op_name,
                                              LostReason.REJECTED_REMOTE,
                                              {"replica": e.replica, "detail": e.reason}))
    for inst in instances:
        if inst.op_id in reported:
            continue
        agg = model.aggregate(inst.aggregate)
        op = agg.operation(inst.op_name)
        if op.intent is None:
            continue
        failing = [s for s in finals if not op.intent_holds(s[agg.name], inst.params)]
        if not failing:
            continue
        masked = any(j is not inst and j.aggregate == inst.aggregate
                     and j.op_name in op.superseded_by and not j.happened_before(inst)
                     for j in instances)
        if masked:
            continue
        reason = (LostReason.MERGE_OVERWRITE
                  if merge_policy is not MergePolicy.NONE and state_shipped(agg)
                  else LostReason.UNKNOWN)
        space = agg.state_space
        fields = sorted(op.touched_fields) or space.field_names
        excerpt = {k: v for k, v in space.to_json(failing[0][agg.name]).items() if k in fields}
        findings.append(LostUpdateFinding(inst.op_id, inst.aggregate, inst.op_name, reason,
                                          {"params": op.params_to_json(inst.params),
                                           "final_state": excerpt}))
    findings.sort(key=lambda f: f.op_id)
    return findings


# -- the event loop --------------------------------------------------------------------

_DELIVER, _SUBMIT = 0, 1  # deliveries at a tick happen before that tick's submits


@dataclass(order=True)
class _Event:
    tick: int
    rank: int
    counter: int
    payload: tuple = field(compare=False)


def _workload(cfg: ScenarioConfig, seed: int) -> list[ScriptedOp]:
    ops = list(cfg.scripted)
    rw = cfg.random_workload
    if rw is None or rw.ops_per_replica == 0:
        return ops
    model = cfg.model
    rng = random.Random(stable_seed(seed, "workload"))
    if rw.operations:
        pool = [model.find_operation(n) for n in rw.operations]
    else:
        pool = [op for a in model.aggregates for op in a.operations]
    if not pool:
        return ops
    lo, hi = rw.window
    for r in range(cfg.replica_count):
        mine = [op for op in pool if r == 0 or not model.aggregate(op.aggregate).single_writer]
        if not mine:
            continue
        for _ in range(rw.ops_per_replica):
            op = rng.choice(mine)
            ops.append(ScriptedOp(rng.randint(lo, hi), r, op.aggregate, op.name,
                                  op.sample_params(rng)))
    return ops


def run_scenario(cfg: ScenarioConfig, *, seed: int | None = None,
                 inject_duplicates: float = 0.0) -> SimReport:
    """Run ``cfg`` deterministically.

    ``inject_duplicates`` adds extra message copies drawn from a separate
    random stream, leaving the base schedule untouched.
    """
    seed = cfg.seed if seed is None else seed
    model, net = cfg.model, cfg.network
    names = cfg.replica_names or tuple(f"r{i}" for i in range(cfg.replica_count))
    replicas = new_replicas(model, cfg.replica_count, merge_policy=cfg.merge_policy, names=names)
    policy = cfg.delivery_policy
    net_rng = random.Random(stable_seed(seed, "network"))
    dup_rng = random.Random(stable_seed(seed, "duplicates"))
    inj_rng = random.Random(stable_seed(seed, "inject"))

    heap: list[_Event] = []
    counter = 0

    def push(tick: int, rank: int, payload: tuple) -> None:
        nonlocal counter
        counter += 1
        heapq.heappush(heap, _Event(tick, rank, counter, payload))

    for op in _workload(cfg, seed):
        push(op.tick, _SUBMIT, ("submit", op))

    channel_last: dict[tuple[int, int], int] = {}
    counts = {"submitted": 0, "messages": 0, "delivered": 0, "applied_remote": 0,
              "rejected_remote": 0, "duplicates": 0, "buffered": 0, "retransmissions": 0}
    instances: list[OperationInstance] = []
    origin_tick: dict = {}
    last_tick: dict = {}
    origin_rejections: list[dict] = []

    def send(inst: OperationInstance, src: int, dst: int, now: int) -> None:
        d = net_rng.randint(net.delay_min, net.delay_max)
        t = now + d
        if not net.reorder:
            t = max(t, channel_last.get((src, dst), 0))
            channel_last[(src, dst)] = t
        push(t, _DELIVER, ("deliver", inst, src, dst, d))
        counts["messages"] += 1
        if net.duplicate_probability and dup_rng.random() < net.duplicate_probability:
            d2 = dup_rng.randint(net.delay_min, net.delay_max)
            push(now + d2, _DELIVER, ("deliver", inst, src, dst, d2))
            counts["messages"] += 1
        if inject_duplicates and inj_rng.random() < inject_duplicates:
            d3 = inj_rng.randint(net.delay_min, net.delay_max)
            push(now + d3, _DELIVER, ("deliver", inst, src, dst, d3))
            counts["messages"] += 1

    def blocked_until(src: int, dst: int, tick: int) -> int | None:
        ends = [p.end for p in net.partitions if p.separates(src, dst, tick)]
        return max(ends) if ends else None

    now = 0

    def drain() -> None:
        nonlocal now
        while heap:
            ev = heapq.heappop(heap)
            now = ev.tick
            kind = ev.payload[0]
            if kind == "submit":
                op: ScriptedOp = ev.payload[1]
                rep = replicas[op.replica]
                try:
                    inst = submit(rep, op.aggregate, op.op_name, op.params, tick=now)
                except PreconditionFailed as exc:
                    o = model.aggregate(op.aggregate).operation(op.op_name)
                    origin_rejections.append({"replica": rep.name, "tick": now,
                                              "op_name": op.op_name,
                                              "params": o.params_to_json(op.params),
                                              "detail": str(exc)})
                    continue
                counts["submitted"] += 1
                instances.append(inst)
                origin_tick[inst.op_id] = now
                last_tick[inst.op_id] = now
                for other in replicas:
                    if other.id != rep.id:
                        send(inst, rep.id, other.id, now)
                continue
            _, inst, src, dst, d = ev.payload
            until = blocked_until(src, dst, now)
            if until is not None:
                push(until + d, _DELIVER, ev.payload)
                continue
            rep = replicas[dst]
            before = len(rep.events)
            outcome = deliver(rep, inst, policy, tick=now)
            counts["delivered"] += 1
            if outcome is DeliveryOutcome.DUPLICATE:
                counts["duplicates"] += 1
            elif outcome is DeliveryOutcome.BUFFERED:
                counts["buffered"] += 1
            for e in rep.events[before:]:
                counts["applied_remote" if e.outcome == "applied" else "rejected_remote"] += 1
                last_tick[e.op_id] = max(last_tick.get(e.op_id, 0), now)

    drain()
    # quiescence: retransmit anything some replica has still not processed
    for _ in range(MAX_RETRANSMIT_ROUNDS):
        missing = [(inst, r) for inst in instances for r in replicas
                   if inst.op_id not in r.processed]
        if not missing:
            break
        for inst, r in missing:
            counts["retransmissions"] += 1
            push(now + net.delay_max, _DELIVER, ("deliver", inst, inst.origin, r.id, net.delay_max))
        drain()

    conv = converged(replicas)
    finals = [dict(r.states) for r in replicas]
    events = [e for r in replicas for e in r.events]
    lost = detect_lost_updates(instances, finals, model, events, cfg.merge_policy)
    rejected = [{"replica": names[e.replica], "tick": e.tick, "op_id": list(e.op_id),
                 "op_name": e.op_name, "detail": e.reason}
                for e in events if e.outcome == "rejected" and not e.local]
    windows = [{"op_id": list(i.op_id), "op_name": i.op_name, "origin_tick": origin_tick[i.op_id],
                "last_apply_tick": last_tick[i.op_id],
                "window": last_tick[i.op_id] - origin_tick[i.op_id]} for i in instances]
    final_states = tuple({a.name: a.state_space.to_json(r.states[a.name])
                          for a in model.aggregates} for r in replicas)
    return SimReport(
        scenario=cfg.name, model=cfg.model_ref, seed=seed, replica_names=names,
        delivery_policy=policy, merge_policy=cfg.merge_policy, converged=conv.converged,
        final_digests=conv.digests, final_states=final_states, lost_updates=lost,
        rejected_applies=rejected, origin_rejections=origin_rejections, windows=windows,
        counts=counts, events=events)
