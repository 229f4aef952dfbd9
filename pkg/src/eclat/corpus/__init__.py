"""Bundled domain models and scenarios, plus the serial oracle.

The four case-study models (the mood-barometer baseline and its two
redesigns, and the backlog-management model) are authored reconstructions:
only their operation and aggregate counts are fixed reference values, so the
aggregates and operations here are plausible domain semantics constrained to
reproduce those counts exactly. The two taskboard models illustrate a
concurrent task-update conflict and its compatible redesign.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Protocol

from eclat.errors import UnknownCorpusId
from eclat.model.descriptor import ModelDescriptor, State, parse_model
from eclat.model.validate import validate_model

MODEL_IDS = (
    "taskboard-naive",
    "taskboard-safe",
    "moodbarometer-baseline",
    "moodbarometer-redesign-a",
    "moodbarometer-redesign-b",
    "backlog",
)

SCENARIO_IDS = (
    "taskboard-lww-conflict",
    "taskboard-superset-resurrection",
    "taskboard-naive-op-replay",
    "taskboard-safe-storm",
    "moodbarometer-baseline-config-race",
    "moodbarometer-redesign-a-storm",
    "backlog-grooming-storm",
)


@dataclass(frozen=True)
class ExpectedMetrics:
    """Frozen (numerator, denominator) pairs for the two model metrics."""

    compatible: tuple[int, int]
    trivial: tuple[int, int]
    source: str  # "reference" (fixed target counts) or "authored"


EXPECTED: dict[str, ExpectedMetrics] = {
    "moodbarometer-baseline": ExpectedMetrics((0, 2), (1, 4), "reference"),
    "moodbarometer-redesign-a": ExpectedMetrics((4, 4), (2, 5), "reference"),
    "moodbarometer-redesign-b": ExpectedMetrics((2, 3), (3, 5), "reference"),
    "backlog": ExpectedMetrics((21, 22), (3, 8), "reference"),
    "taskboard-naive": ExpectedMetrics((0, 5), (0, 1), "authored"),
    "taskboard-safe": ExpectedMetrics((4, 4), (1, 2), "authored"),
}

ALL_COMPATIBLE = ("taskboard-safe", "moodbarometer-redesign-a")


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    document: dict = field(repr=False)
    scenarios: tuple[str, ...]
    expected: ExpectedMetrics
    provenance: str

    def to_json(self) -> dict:
        return {"id": self.id, "scenarios": list(self.scenarios),
                "expected": {"compatible": list(self.expected.compatible),
                             "trivial": list(self.expected.trivial),
                             "source": self.expected.source},
                "provenance": self.provenance}


def _read(kind: str, name: str) -> str:
    return resources.files("eclat.corpus").joinpath(kind, f"{name}.json").read_text("utf-8")


def strip_prefix(ref: str) -> str:
    return ref.removeprefix("corpus:")


def model_document(model_id: str) -> dict:
    model_id = strip_prefix(model_id)
    if model_id not in MODEL_IDS:
        raise UnknownCorpusId(f"unknown corpus model {model_id!r}; known: {', '.join(MODEL_IDS)}")
    return json.loads(_read("models", model_id))


def scenario_document(scenario_id: str) -> dict:
    scenario_id = strip_prefix(scenario_id)
    if scenario_id not in SCENARIO_IDS:
        raise UnknownCorpusId(f"unknown corpus scenario {scenario_id!r}; "
                              f"known: {', '.join(SCENARIO_IDS)}")
    return json.loads(_read("scenarios", scenario_id))


@lru_cache(maxsize=None)
def load_corpus_model(model_id: str) -> ModelDescriptor:
    """Parse and structurally validate a bundled model."""
    model = parse_model(model_document(model_id))
    problems = validate_model(model)
    if problems:  # pragma: no cover - guarded by the corpus tests
        raise AssertionError(f"corpus model {model_id} fails validation: {problems}")
    return model


def load_corpus_scenario(scenario_id: str):
    from eclat.simulator import parse_scenario

    return parse_scenario(scenario_document(scenario_id))


def entries() -> list[CorpusEntry]:
    out = []
    for mid in MODEL_IDS:
        doc = model_document(mid)
        scen = tuple(s for s in SCENARIO_IDS
                     if strip_prefix(scenario_document(s)["model"]) == mid)
        out.append(CorpusEntry(mid, doc, scen, EXPECTED[mid], doc.get("provenance", "")))
    return out


def export(dest: str | Path) -> list[Path]:
    """Write every bundled model and scenario below ``dest``."""
    dest = Path(dest)
    written = []
    for kind, ids in (("models", MODEL_IDS), ("scenarios", SCENARIO_IDS)):
        (dest / kind).mkdir(parents=True, exist_ok=True)
        for i in ids:
            p = dest / kind / f"{i}.json"
            p.write_text(_read(kind, i), encoding="utf-8")
            written.append(p)
    return written


# -- serial oracle -------------------------------------------------------------------

class _OpLike(Protocol):
    aggregate: str
    op_name: str
    params: Any


@dataclass(frozen=True)
class OracleResult:
    states: dict[str, State]
    skipped: tuple[int, ...]  # indices (into the instance list) whose apply was rejected


def serial_oracle(model: ModelDescriptor, instances: Sequence[_OpLike],
                  order: Iterable[int] | None = None) -> OracleResult:
    """Apply ``instances`` one after another on a single replica.

    ``order`` is a permutation of ``range(len(instances))`` (default: as
    given). An instance whose precondition or an invariant fails is skipped
    and reported, as the replication engine would reject it.
    """
    order = list(range(len(instances))) if order is None else list(order)
    if sorted(order) != list(range(len(instances))):
        raise ValueError("order must be a permutation of the instance indices")
    states = {a.name: a.state_space.initial() for a in model.aggregates}
    skipped = []
    for i in order:
        inst = instances[i]
        agg = model.aggregate(inst.aggregate)
        op = agg.operation(inst.op_name)
        cur = states[agg.name]
        if not op.precondition_holds(cur, inst.params):
            skipped.append(i)
            continue
        new = op.apply(cur, inst.params)
        if agg.invariant_violations(new):
            skipped.append(i)
            continue
        states[agg.name] = new
        for d in model.derived_of(agg.name):
            states[d.name] = d.project(new)
    return OracleResult(states, tuple(skipped))
