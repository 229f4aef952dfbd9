"""Six-class aggregate taxonomy and the trivial-aggregate share.

The class names and the first-match precedence below are a reconstruction:
Immutable -> Derived -> SingleWriter are trivial (their structure rules out
concurrent conflicting updates); FullyCompatible -> PartiallyCompatible ->
StateOpaque are ordered by growing conflict potential.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum

from eclat.compatibility import CompatibilityMatrix, Outcome, Ratio, build_matrices
from eclat.errors import EmptyModel
from eclat.model.descriptor import AggregateDescriptor, ModelDescriptor, UpdateKind
from eclat.model.validate import Finding


class AggregateClass(str, Enum):
    IMMUTABLE = "Immutable"
    DERIVED = "Derived"
    SINGLE_WRITER = "SingleWriter"
    FULLY_COMPATIBLE = "FullyCompatible"
    PARTIALLY_COMPATIBLE = "PartiallyCompatible"
    STATE_OPAQUE = "StateOpaque"

    @property
    def trivial(self) -> bool:
        return self in TRIVIAL


TRIVIAL = frozenset({AggregateClass.IMMUTABLE, AggregateClass.DERIVED,
                     AggregateClass.SINGLE_WRITER})


@dataclass(frozen=True)
class Classification:
    aggregate: str
    cls: AggregateClass
    rationale: str
    criteria: tuple[str, ...]
    mismatch: Finding | None = None

    @property
    def trivial(self) -> bool:
        return self.cls.trivial

    def to_json(self) -> dict:
        out = {"aggregate": self.aggregate, "class": self.cls.value, "trivial": self.trivial,
               "rationale": self.rationale, "criteria": list(self.criteria)}
        if self.mismatch is not None:
            out["mismatch"] = self.mismatch.message
        return out


def _classify(agg: AggregateDescriptor, matrix: CompatibilityMatrix
              ) -> tuple[AggregateClass, str, tuple[str, ...]]:
    ops = agg.operations
    if not ops and agg.projection_of is None and not agg.opaque_updates:
        return (AggregateClass.IMMUTABLE, "offers no update operations",
                ("no-operations", "no-projection"))
    if agg.projection_of is not None:
        return (AggregateClass.DERIVED,
                f"pure projection of {agg.projection_of.source}", ("projection_of",))
    if agg.single_writer:
        (writer,) = agg.writers
        return (AggregateClass.SINGLE_WRITER,
                f"only {writer!r} writes it, so no concurrent updates", ("single-writer",))
    kinds = {op.update_kind for op in ops}
    outcomes = [v.outcome for v in matrix.pairs()]
    if ops and not agg.opaque_updates and all(o is Outcome.COMPATIBLE for o in outcomes):
        return (AggregateClass.FULLY_COMPATIBLE, "every operation pair commutes",
                ("all-pairs-compatible",))
    some_ok = Outcome.COMPATIBLE in outcomes
    some_bad = any(o is not Outcome.COMPATIBLE for o in outcomes)
    if ops and not agg.opaque_updates and ((some_ok and some_bad) or len(kinds) > 1):
        crit = []
        if some_ok and some_bad:
            crit.append("compatible-and-incompatible-pairs")
        if len(kinds) > 1:
            crit.append("mixed-update-kinds")
        return (AggregateClass.PARTIALLY_COMPATIBLE,
                "some operation pairs conflict", tuple(crit))
    if agg.opaque_updates or kinds == {UpdateKind.STATE_BASED}:
        why = ("updated through opaque whole-state writes" if agg.opaque_updates
               else "all operations replace the whole state")
        return (AggregateClass.STATE_OPAQUE, why,
                ("opaque-updates",) if agg.opaque_updates else ("all-state-based",))
    # a single non-state-based kind whose pairs all conflict
    return (AggregateClass.PARTIALLY_COMPATIBLE, "no operation pair commutes",
            ("no-compatible-pairs",))


def classify_aggregate(agg: AggregateDescriptor, matrix: CompatibilityMatrix) -> Classification:
    cls, why, crit = _classify(agg, matrix)
    mismatch = None
    if agg.declared_class is not None and agg.declared_class != cls.value:
        mismatch = Finding("declared-class-mismatch", agg.name, None,
                           f"declared {agg.declared_class} but analysis shows {cls.value}")
    return Classification(agg.name, cls, why, crit, mismatch)


def classify_model(model: ModelDescriptor,
                   matrices: Mapping[str, CompatibilityMatrix] | None = None
                   ) -> list[Classification]:
    if matrices is None:
        matrices = build_matrices(model)
    return [classify_aggregate(a, matrices[a.name]) for a in model.aggregates]


def trivial_share(model: ModelDescriptor,
                  matrices: Mapping[str, CompatibilityMatrix] | None = None) -> Ratio:
    if not model.aggregates:
        raise EmptyModel(f"model {model.name!r} has no aggregates")
    classes = classify_model(model, matrices)
    return Ratio(sum(c.trivial for c in classes), len(classes))
