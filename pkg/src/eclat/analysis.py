"""Whole-model analysis: shares, classifications, matrices and anti-patterns."""

from __future__ import annotations

from dataclasses import dataclass

from eclat.compatibility import (
    AntiPatternFinding,
    CompatibilityMatrix,
    Outcome,
    Ratio,
    build_matrices,
    compatible_share,
    detect_anti_patterns,
)
from eclat.model.descriptor import ModelDescriptor
from eclat.model.validate import Finding, validate_model
from eclat.simulator import REPORT_SCHEMA
from eclat.taxonomy import Classification, classify_model


@dataclass(frozen=True)
class AnalyzeReport:
    model_id: str
    model: ModelDescriptor
    compatible: Ratio
    trivial: Ratio
    classifications: tuple[Classification, ...]
    matrices: dict[str, CompatibilityMatrix]
    anti_patterns: tuple[AntiPatternFinding, ...]
    findings: tuple[Finding, ...]
    seed: int = 0

    @property
    def non_compatible(self) -> list[tuple[str, str, str]]:
        return [(m.aggregate, v.op_a, v.op_b) for m in self.matrices.values()
                for v in m.pairs() if v.outcome is not Outcome.COMPATIBLE]

    @property
    def has_findings(self) -> bool:
        return bool(self.anti_patterns or self.findings or self.non_compatible)

    def summary_line(self) -> str:
        return f"compatible {self.compatible.render()} trivial {self.trivial.render()}"

    def to_json(self) -> dict:
        aggs = {a.name: a for a in self.model.aggregates}
        return {
            "schema": REPORT_SCHEMA,
            "kind": "analysis",
            "model": self.model_id,
            "name": self.model.name,
            "bounded_context": self.model.bounded_context,
            "seed": self.seed,
            "compatible_share": self.compatible.to_json(),
            "trivial_share": self.trivial.to_json(),
            "aggregates": [c.to_json() for c in self.classifications],
            "matrices": [m.to_json(aggs[name].state_space,
                                   {op.name: op for op in aggs[name].operations})
                         for name, m in self.matrices.items()],
            "anti_patterns": [f.to_json() for f in self.anti_patterns],
            "findings": [f.to_json() for f in self.findings],
        }

    def render(self) -> str:
        lines = [f"model {self.model_id} ({self.model.bounded_context})", self.summary_line(), ""]
        header = ("aggregate", "class", "trivial", "ops", "compatible")
        rows = []
        for c in self.classifications:
            m = self.matrices[c.aggregate]
            ok = sum(m.compatible_with_all(o) for o in m.operations)
            rows.append((c.aggregate, c.cls.value, "yes" if c.trivial else "no",
                         str(len(m.operations)), f"{ok}/{len(m.operations)}" if m.operations else "-"))
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        for r in [header, *rows]:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        bad = self.non_compatible
        if bad:
            lines += ["", "non-compatible pairs:"]
            lines += [f"  {agg}: {a} x {b} -> {self.matrices[agg].verdict(a, b).outcome.value}"
                      for agg, a, b in bad]
        if self.anti_patterns:
            lines += ["", "anti-patterns:"]
            lines += [f"  {f.pattern.value} {f.aggregate}.{'/'.join(f.operations)}: {f.explanation}"
                      for f in self.anti_patterns]
        if self.findings:
            lines += ["", "findings:"]
            lines += [f"  {f.code} {f.aggregate}{'.' + f.operation if f.operation else ''}: "
                      f"{f.message}" for f in self.findings]
        return "\n".join(lines)


def analyze(model: ModelDescriptor, model_id: str | None = None, *, seed: int = 0) -> AnalyzeReport:
    matrices = build_matrices(model, seed=seed)
    classes = tuple(classify_model(model, matrices))
    findings = list(validate_model(model))
    findings += [c.mismatch for c in classes if c.mismatch is not None]
    return AnalyzeReport(
        model_id=model_id or model.name,
        model=model,
        compatible=compatible_share(model, matrices),
        trivial=Ratio(sum(c.trivial for c in classes), len(classes)),
        classifications=classes,
        matrices=matrices,
        anti_patterns=tuple(detect_anti_patterns(model, matrices)),
        findings=tuple(findings),
        seed=seed,
    )
