"""Command-line interface.

Exit codes: 0 safe/clean, 1 findings, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from eclat import __version__
from eclat.canonical import dumps
from eclat.errors import EclatError, UnknownCorpusId
from eclat.model.descriptor import ModelDescriptor, load_model

EXIT_OK, EXIT_FINDINGS, EXIT_ERROR = 0, 1, 2
U64_MAX = 2**64 - 1


class UsageError(Exception):
    """Bad command-line input (exit code 2)."""


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64-1], got {v}")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("probability must be in [0, 1]")
    return v


def _add_globals(p: argparse.ArgumentParser, *, top: bool) -> None:
    # defined on the top parser and on each subcommand, so the flags work on
    # either side of the subcommand name
    d = {} if top else {"default": argparse.SUPPRESS}
    p.add_argument("--json", metavar="PATH", help="also write the report as JSON ('-' = stdout)",
                   **({"default": None} if top else d))
    p.add_argument("--seed", type=_u64, metavar="N",
                   help="seed for randomized parts (fallback: $ECLAT_SEED)",
                   **({"default": None} if top else d))
    p.add_argument("--quiet", action="store_true", help="suppress the human-readable output",
                   **({"default": False} if top else d))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eclat",
        description="Analyze and simulate eventually consistent domain models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("analyze", help="compatibility and taxonomy metrics of a model")
    p.add_argument("model", help="model file or corpus:<id>")
    p.add_argument("--fail-on-findings", action="store_true",
                   help="exit 1 on any anti-pattern, finding or non-compatible pair")
    _add_globals(p, top=False)

    p = sub.add_parser("simulate", help="run a replication scenario")
    p.add_argument("scenario", help="scenario file or corpus:<id>")
    p.add_argument("--digest-only", action="store_true",
                   help="print only 'converged=<bool> lost=<n> digest=<hex>'")
    p.add_argument("--journal", metavar="PATH", help="write the event journal as NDJSON")
    p.add_argument("--inject-duplicates", type=_probability, default=0.0, metavar="P",
                   help="extra duplicate deliveries from an independent random stream")
    _add_globals(p, top=False)

    p = sub.add_parser("check", help="compatibility verdict for one operation pair")
    p.add_argument("model", help="model file or corpus:<id>")
    p.add_argument("--pair", nargs=2, required=True, metavar=("OP_A", "OP_B"),
                   help="operation names (qualify as Aggregate.op when ambiguous)")
    _add_globals(p, top=False)

    p = sub.add_parser("corpus", help="bundled models and scenarios")
    csub = p.add_subparsers(dest="corpus_command", required=True, metavar="ACTION")
    c = csub.add_parser("list", help="list bundled models and scenarios")
    _add_globals(c, top=False)
    c = csub.add_parser("export", help="write the bundled documents to a directory")
    c.add_argument("dest", nargs="?", default="corpus", help="target directory (default: corpus)")
    _add_globals(c, top=False)
    return parser


def _seed(args: argparse.Namespace) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ECLAT_SEED")
    if env is None or env == "":
        return None
    try:
        return _u64(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"ECLAT_SEED: {exc}") from None


def _load_model_ref(ref: str) -> tuple[ModelDescriptor, str]:
    from eclat.corpus import MODEL_IDS, load_corpus_model

    if ref.startswith("corpus:"):
        return load_corpus_model(ref.removeprefix("corpus:")), ref
    path = Path(ref)
    if not path.exists() and ref in MODEL_IDS:
        return load_corpus_model(ref), f"corpus:{ref}"
    try:
        return load_model(path), ref
    except OSError as exc:
        raise UsageError(f"cannot read model {ref!r}: {exc.strerror}") from None


def _emit_json(args: argparse.Namespace, doc: dict) -> None:
    if not args.json:
        return
    text = dumps(doc, indent=2) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
    else:
        Path(args.json).write_text(text, encoding="utf-8")


def _say(args: argparse.Namespace, text: str) -> None:
    # JSON on stdout must stay parseable, so it silences the human output
    if not args.quiet and args.json != "-":
        print(text)


def cmd_analyze(args: argparse.Namespace) -> int:
    from eclat.analysis import analyze

    model, ref = _load_model_ref(args.model)
    report = analyze(model, ref, seed=_seed(args) or 0)
    _say(args, report.render())
    _emit_json(args, report.to_json())
    return EXIT_FINDINGS if args.fail_on_findings and report.has_findings else EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from eclat.corpus import load_corpus_scenario
    from eclat.replication import events_ndjson
    from eclat.simulator import load_scenario, run_scenario

    ref = args.scenario
    cfg = load_corpus_scenario(ref) if ref.startswith("corpus:") else load_scenario(ref)
    report = run_scenario(cfg, seed=_seed(args), inject_duplicates=args.inject_duplicates)
    if args.digest_only:
        print(report.digest_line())
    else:
        w = report.window_stats()
        _say(args, "\n".join([
            f"scenario {report.scenario} (model {report.model}, {len(report.replica_names)} "
            f"replicas, delivery {report.delivery_policy.value}, merge "
            f"{report.merge_policy.value}, seed {report.seed})",
            report.digest_line(),
            f"submitted {report.counts['submitted']}, origin rejections "
            f"{len(report.origin_rejections)}, remote rejections {len(report.rejected_applies)}, "
            f"duplicates {report.counts['duplicates']}, buffered {report.counts['buffered']}",
            f"inconsistency window (ticks): min {w.min} median {w.median} max {w.max}",
            *(f"lost update {f.op_name} {list(f.op_id)}: {f.reason.value} {dumps(f.evidence)}"
              for f in report.lost_updates),
        ]))
    if args.journal:
        Path(args.journal).write_text(events_ndjson(report.events, cfg.model), encoding="utf-8")
    _emit_json(args, report.to_json())
    return EXIT_OK if report.safe else EXIT_FINDINGS


def cmd_check(args: argparse.Namespace) -> int:
    from eclat.compatibility import check_pair, verdict_to_json
    from eclat.simulator import REPORT_SCHEMA

    model, ref = _load_model_ref(args.model)
    a, b = (model.find_operation(n) for n in args.pair)
    agg = model.aggregate(a.aggregate)
    v = check_pair(a, b, agg.state_space, seed=_seed(args) or 0)
    ops = {o.name: o for o in agg.operations}
    doc = verdict_to_json(v, agg.state_space, ops)
    lines = [f"{ref} {agg.name}: {a.name} x {b.name}",
             f"verdict: {v.outcome.value} ({v.coverage.mode}, {v.coverage.checked} "
             "combinations checked)"]
    if v.witness is not None:
        w = doc["witness"]
        lines += ["witness:",
                  f"  state       {dumps(w['state'])}",
                  f"  params a    {dumps(w['params_a'])}",
                  f"  params b    {dumps(w['params_b'])}",
                  f"  a then b    {dumps(w['result_ab'])} applied={dumps(w['applied_ab'])}",
                  f"  b then a    {dumps(w['result_ba'])} applied={dumps(w['applied_ba'])}"]
    _say(args, "\n".join(lines))
    _emit_json(args, {"schema": REPORT_SCHEMA, "kind": "check", "model": ref,
                      "aggregate": agg.name, "verdict": doc})
    return EXIT_OK if v.compatible else EXIT_FINDINGS


def cmd_corpus(args: argparse.Namespace) -> int:
    from eclat import corpus

    if args.corpus_command == "list":
        entries = corpus.entries()
        lines = []
        for e in entries:
            c, t = e.expected.compatible, e.expected.trivial
            lines.append(f"corpus:{e.id}  compatible {c[0]}/{c[1]}  trivial {t[0]}/{t[1]}  "
                         f"[{e.expected.source}]")
            lines += [f"    scenario corpus:{s}" for s in e.scenarios]
        _say(args, "\n".join(lines))
        _emit_json(args, {"models": [e.to_json() for e in entries],
                          "scenarios": list(corpus.SCENARIO_IDS)})
        return EXIT_OK
    written = corpus.export(args.dest)
    _say(args, f"wrote {len(written)} files to {args.dest}")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "check": cmd_check,
            "corpus": cmd_corpus}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (EclatError, UsageError, UnknownCorpusId) as exc:
        print(f"eclat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"eclat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
