"""Pairwise operation compatibility, the compatible-operation share, and
compatibility anti-pattern detection.

Two operations are compatible when executing them in either order, from any
state of the declared state space and with any parameters, gives the same
state and the same set of applied operations. An operation whose
precondition holds in one order but not the other is order sensitive, hence
incompatible.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

from eclat.canonical import stable_seed
from eclat.errors import DomainMismatch, EmptyModel
from eclat.model.descriptor import (
    AggregateDescriptor,
    ModelDescriptor,
    OperationDescriptor,
    State,
    StateSpaceSpec,
    UpdateKind,
    enumerate_states,
)
from eclat.model.validate import states_for_checking

DEFAULT_SAMPLES = 10_000


class Outcome(str, Enum):
    COMPATIBLE = "Compatible"
    INCOMPATIBLE = "Incompatible"
    PROBABLY_COMPATIBLE = "ProbablyCompatible"


@dataclass(frozen=True)
class Coverage:
    mode: str  # "exhaustive" | "sampled"
    checked: int
    seed: int | None = None

    def to_json(self) -> dict:
        out: dict = {"mode": self.mode, "checked": self.checked}
        if self.seed is not None:
            out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class Witness:
    state: State
    params_a: dict
    params_b: dict
    result_ab: State
    result_ba: State
    applied_ab: tuple[bool, bool]
    applied_ba: tuple[bool, bool]

    def swapped(self) -> Witness:
        return Witness(self.state, self.params_b, self.params_a, self.result_ba, self.result_ab,
                       self.applied_ba[::-1], self.applied_ab[::-1])


@dataclass(frozen=True)
class CompatibilityVerdict:
    op_a: str
    op_b: str
    outcome: Outcome
    coverage: Coverage
    witness: Witness | None = None

    @property
    def compatible(self) -> bool:
        return self.outcome is Outcome.COMPATIBLE

    def swapped(self) -> CompatibilityVerdict:
        return CompatibilityVerdict(self.op_b, self.op_a, self.outcome, self.coverage,
                                    self.witness.swapped() if self.witness else None)


def run_order(first: OperationDescriptor, pf: Mapping, second: OperationDescriptor,
              ps: Mapping, state: State) -> tuple[State, bool, bool]:
    """Apply ``first`` then ``second``; a failed precondition leaves state unchanged."""
    ok1 = first.precondition_holds(state, pf)
    if ok1:
        state = first.apply(state, pf)
    ok2 = second.precondition_holds(state, ps)
    if ok2:
        state = second.apply(state, ps)
    return state, ok1, ok2


def _compare(a: OperationDescriptor, pa: Mapping, b: OperationDescriptor, pb: Mapping,
             s: State) -> Witness | None:
    r_ab, a1, b1 = run_order(a, pa, b, pb, s)
    r_ba, b2, a2 = run_order(b, pb, a, pa, s)
    if r_ab == r_ba and (a1, b1) == (a2, b2):
        return None
    return Witness(dict(s), dict(pa), dict(pb), r_ab, r_ba, (a1, b1), (a2, b2))


def check_pair(op_a: OperationDescriptor, op_b: OperationDescriptor, space: StateSpaceSpec,
               *, cap: int | None = None, samples: int = DEFAULT_SAMPLES,
               seed: int = 0) -> CompatibilityVerdict:
    """Decide whether two operations of one aggregate commute.

    Exhaustive over (state, params_a, params_b) when that product is within
    ``cap`` (default: the space's enumeration cap); otherwise ``samples``
    seeded uniform draws, answering ProbablyCompatible if none disagree.
    The witness is the first combination whose two final states differ; one
    that differs only in which application was rejected is reported only
    when no such combination exists.
    """
    if op_a.aggregate != op_b.aggregate:
        raise DomainMismatch(
            f"{op_a.aggregate}.{op_a.name} and {op_b.aggregate}.{op_b.name} "
            "belong to different aggregates")
    # canonical orientation keeps verdicts (and witnesses) symmetric
    if op_b.name < op_a.name:
        return check_pair(op_b, op_a, space, cap=cap, samples=samples, seed=seed).swapped()

    limit = space.enumeration_cap if cap is None else cap
    total = space.size() * op_a.param_count() * op_b.param_count()
    if total <= limit:
        params_a = list(op_a.param_space())
        params_b = list(op_b.param_space())
        checked = 0
        fallback = None
        for s in enumerate_states(space, cap=limit):
            for pa in params_a:
                for pb in params_b:
                    checked += 1
                    w = _compare(op_a, pa, op_b, pb, s)
                    if w is None:
                        continue
                    if w.result_ab != w.result_ba:
                        return CompatibilityVerdict(op_a.name, op_b.name, Outcome.INCOMPATIBLE,
                                                    Coverage("exhaustive", checked), w)
                    fallback = fallback or w
        if fallback is not None:
            return CompatibilityVerdict(op_a.name, op_b.name, Outcome.INCOMPATIBLE,
                                        Coverage("exhaustive", checked), fallback)
        return CompatibilityVerdict(op_a.name, op_b.name, Outcome.COMPATIBLE,
                                    Coverage("exhaustive", checked))

    pair_seed = stable_seed(seed, op_a.aggregate, op_a.name, op_b.name)
    rng = random.Random(pair_seed)
    fallback = None
    for i in range(samples):
        s = space.sample(rng)
        pa = op_a.sample_params(rng)
        pb = op_b.sample_params(rng)
        w = _compare(op_a, pa, op_b, pb, s)
        if w is None:
            continue
        if w.result_ab != w.result_ba:
            return CompatibilityVerdict(op_a.name, op_b.name, Outcome.INCOMPATIBLE,
                                        Coverage("sampled", i + 1, seed), w)
        fallback = fallback or w
    if fallback is not None:
        return CompatibilityVerdict(op_a.name, op_b.name, Outcome.INCOMPATIBLE,
                                    Coverage("sampled", samples, seed), fallback)
    return CompatibilityVerdict(op_a.name, op_b.name, Outcome.PROBABLY_COMPATIBLE,
                                Coverage("sampled", samples, seed))


@dataclass(frozen=True)
class CompatibilityMatrix:
    aggregate: str
    operations: tuple[str, ...]
    table: Mapping[tuple[str, str], CompatibilityVerdict] = field(repr=False)

    def verdict(self, a: str, b: str) -> CompatibilityVerdict:
        return self.table[(a, b)]

    def compatible_with_all(self, op: str) -> bool:
        return all(self.table[(op, other)].compatible for other in self.operations)

    def pairs(self) -> list[CompatibilityVerdict]:
        """Each unordered pair (incl. diagonal) once, in declaration order."""
        return [self.table[(a, b)] for i, a in enumerate(self.operations)
                for b in self.operations[i:]]

    def to_json(self, space: StateSpaceSpec | None = None,
                ops: Mapping[str, OperationDescriptor] | None = None) -> dict:
        return {
            "aggregate": self.aggregate,
            "operations": list(self.operations),
            "compatible_with_all": {op: self.compatible_with_all(op) for op in self.operations},
            "pairs": [verdict_to_json(v, space, ops) for v in self.pairs()],
        }


def verdict_to_json(v: CompatibilityVerdict, space: StateSpaceSpec | None = None,
                    ops: Mapping[str, OperationDescriptor] | None = None) -> dict:
    """JSON form of a verdict; ``space``/``ops`` render witness values as JSON."""
    def state_json(s):
        return space.to_json(s) if space is not None else s

    def params_json(name, p):
        return ops[name].params_to_json(p) if ops is not None else p

    e: dict = {"a": v.op_a, "b": v.op_b, "outcome": v.outcome.value,
               "coverage": v.coverage.to_json()}
    if v.witness is not None:
        w = v.witness
        e["witness"] = {
            "state": state_json(w.state),
            "params_a": params_json(v.op_a, w.params_a),
            "params_b": params_json(v.op_b, w.params_b),
            "result_ab": state_json(w.result_ab),
            "result_ba": state_json(w.result_ba),
            "applied_ab": list(w.applied_ab),
            "applied_ba": list(w.applied_ba),
        }
    return e


def build_matrix(agg: AggregateDescriptor, *, seed: int = 0, cap: int | None = None,
                 samples: int = DEFAULT_SAMPLES) -> CompatibilityMatrix:
    ops = agg.operations
    table: dict[tuple[str, str], CompatibilityVerdict] = {}
    for i, a in enumerate(ops):
        for b in ops[i:]:
            v = check_pair(a, b, agg.state_space, cap=cap, samples=samples, seed=seed)
            table[(a.name, b.name)] = v
            table[(b.name, a.name)] = v.swapped() if a is not b else v
    return CompatibilityMatrix(agg.name, tuple(op.name for op in ops), table)


def build_matrices(model: ModelDescriptor, *, seed: int = 0) -> dict[str, CompatibilityMatrix]:
    return {agg.name: build_matrix(agg, seed=seed) for agg in model.aggregates}


@dataclass(frozen=True)
class Ratio:
    numerator: int
    denominator: int

    def __post_init__(self):
        if not 0 <= self.numerator <= self.denominator:
            raise ValueError(f"invalid ratio {self.numerator}/{self.denominator}")

    @property
    def percent(self) -> float:
        return round(100.0 * self.numerator / self.denominator, 1) if self.denominator else 0.0

    def render(self) -> str:
        return f"{self.numerator}/{self.denominator} ({self.percent:.1f}%)"

    def to_json(self) -> dict:
        return {"numerator": self.numerator, "denominator": self.denominator,
                "percent": self.percent}


def compatible_share(model: ModelDescriptor,
                     matrices: Mapping[str, CompatibilityMatrix] | None = None) -> Ratio:
    """Operations compatible with every operation of their aggregate, over all operations."""
    if matrices is None:
        matrices = build_matrices(model)
    num = den = 0
    for agg in model.aggregates:
        m = matrices[agg.name]
        for op in m.operations:
            den += 1
            num += m.compatible_with_all(op)
    if den == 0:
        raise EmptyModel(f"model {model.name!r} declares no operations")
    return Ratio(num, den)


@dataclass(frozen=True)
class ToleranceResult:
    passed: bool
    trials: int
    witness: dict | None = None


def apply_sequence(seq: list[tuple[OperationDescriptor, Mapping]], state: State
                   ) -> tuple[State, tuple[bool, ...]]:
    applied = []
    for op, p in seq:
        ok = op.precondition_holds(state, p)
        if ok:
            state = op.apply(state, p)
        applied.append(ok)
    return state, tuple(applied)


def check_partial_order_tolerance(op: OperationDescriptor, agg: AggregateDescriptor, seed: int,
                                  trials: int, *, matrix: CompatibilityMatrix | None = None,
                                  max_len: int = 5) -> ToleranceResult:
    """Audit that ``op`` can be moved across any sequence of its compatible partners.

    Draws ``trials`` random sequences S over operations whose verdict with
    ``op`` is Compatible and random start states, and checks that applying
    ``op`` before S and after S ends in the same state.
    """
    if matrix is None:
        matrix = build_matrix(agg, seed=seed)
    partners = [o for o in agg.operations if matrix.verdict(op.name, o.name).compatible]
    rng = random.Random(stable_seed("tolerance", seed, agg.name, op.name))
    space = agg.state_space
    for t in range(trials):
        s = space.sample(rng)
        p = op.sample_params(rng)
        seq = [(o, o.sample_params(rng)) for o in
               (rng.choice(partners) for _ in range(rng.randint(0, max_len)) if partners)]
        before, ab = apply_sequence([(op, p)] + seq, s)
        after, ba = apply_sequence(seq + [(op, p)], s)
        if before != after or ab[0] != ba[-1] or ab[1:] != ba[:-1]:
            return ToleranceResult(False, t + 1, {
                "state": space.to_json(s),
                "op_params": op.params_to_json(p),
                "sequence": [{"op": o.name, "params": o.params_to_json(q)} for o, q in seq],
                "op_first": space.to_json(before),
                "op_last": space.to_json(after),
            })
    return ToleranceResult(True, trials)


class AntiPattern(str, Enum):
    COARSE_STATE_OVERWRITE = "CoarseStateOverwrite"
    READ_MODIFY_WRITE_AS_BLIND = "ReadModifyWriteAsBlind"
    NON_COMMUTING_INCREMENT_PAIR = "NonCommutingIncrementPair"


@dataclass(frozen=True)
class AntiPatternFinding:
    pattern: AntiPattern
    aggregate: str
    operations: tuple[str, ...]
    explanation: str

    def to_json(self) -> dict:
        return {"pattern": self.pattern.value, "aggregate": self.aggregate,
                "operations": list(self.operations), "explanation": self.explanation}


def _reads_state(agg: AggregateDescriptor, op: OperationDescriptor) -> str | None:
    """Field whose current value leaks into a blind op's output, if any."""
    space = agg.state_space
    touched = sorted(op.touched_fields)
    states = states_for_checking(space, 200, ("blind", agg.name, op.name))
    for params in itertools.islice(op.param_space(), 32):
        for s in states:
            if not op.precondition_holds(s, params):
                continue
            base = op.apply(s, params)
            for fname, dom in space.fields:
                for v in itertools.islice(dom.values(), 16):
                    if v == s[fname]:
                        continue
                    s2 = {**s, fname: v}
                    if not op.precondition_holds(s2, params):
                        continue
                    out = op.apply(s2, params)
                    if any(out[f] != base[f] for f in touched):
                        return fname
    return None


def detect_anti_patterns(model: ModelDescriptor,
                         matrices: Mapping[str, CompatibilityMatrix] | None = None
                         ) -> list[AntiPatternFinding]:
    if matrices is None:
        matrices = build_matrices(model)
    found: list[AntiPatternFinding] = []
    for agg in model.aggregates:
        nfields = len(agg.state_space.fields)
        for op in agg.operations:
            if op.update_kind is UpdateKind.STATE_BASED and nfields > 1:
                found.append(AntiPatternFinding(
                    AntiPattern.COARSE_STATE_OVERWRITE, agg.name, (op.name,),
                    f"{op.name} replaces the whole {agg.name} state although its "
                    f"{nfields} fields are updated independently; concurrent updates "
                    "to different fields overwrite each other"))
            if op.update_kind is UpdateKind.TRUE_BLIND:
                leaked = _reads_state(agg, op)
                if leaked is not None:
                    found.append(AntiPatternFinding(
                        AntiPattern.READ_MODIFY_WRITE_AS_BLIND, agg.name, (op.name,),
                        f"{op.name} is declared a blind update but its result depends on "
                        f"the current value of {leaked!r}"))
        m = matrices[agg.name]
        for v in m.pairs():
            a, b = agg.operation(v.op_a), agg.operation(v.op_b)
            if (a.update_kind is UpdateKind.INCREMENTAL and b.update_kind is UpdateKind.INCREMENTAL
                    and v.outcome is Outcome.INCOMPATIBLE):
                found.append(AntiPatternFinding(
                    AntiPattern.NON_COMMUTING_INCREMENT_PAIR, agg.name,
                    (v.op_a,) if v.op_a == v.op_b else (v.op_a, v.op_b),
                    f"incremental updates {v.op_a} and {v.op_b} do not commute"))
    return found

