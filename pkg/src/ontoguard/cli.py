"""Command-line front end.

Subcommands cover the three pillars plus the benchmark harness: ``infer``
(class-level rule expansion), ``delegate``/``request``/``revoke`` (signed
delegation over a file-backed policy store), ``annotate``/``publish``/
``read`` (content sanitization), and ``bench``.

Data files are found in one fixture directory, given with ``--fixtures``
or the ``ONTOGUARD_FIXTURES`` environment variable:

    ontology.onto  keys.txt  psets/          (delegation)
    taxonomy.tax   gazetteer.txt  stopwords.txt  lexicon.txt
    privacy.txt    contacts.txt   annotated/     (content)

Exit codes: 0 on success (including Deny decisions), 1 on a domain error,
2 on a usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

from .annotate import (
    Lexicon,
    annotate_message,
    load_annotated,
    load_extra_phrases,
    load_gazetteer,
    load_message,
    load_stopwords,
    serialize_annotated,
)
from .bench import BenchmarkConfig, run_benchmark
from .delegation import AccessRequest, DelegationEngine
from .errors import OntoGuardError, ValidationError
from .monitor import AccessMonitor, load_contacts, load_privacy_requirements
from .ontology import infer_instance_rules, load_ontology, rules_from_args
from .policy import (
    KeyedHashScheme,
    PolicyDecision,
    PolicyKind,
    PolicySetStore,
    load_key_file,
)
from .taxonomy import load_taxonomy


def _fixtures_root(args: argparse.Namespace) -> Path:
    if args.fixtures:
        return Path(args.fixtures)
    env = os.environ.get("ONTOGUARD_FIXTURES")
    if env:
        return Path(env)
    raise ValidationError(
        "no fixture directory: pass --fixtures or set ONTOGUARD_FIXTURES"
    )


# --- rule inference ------------------------------------------------------------


def _cmd_infer(args: argparse.Namespace) -> int:
    path = Path(args.ontology) if args.ontology else _fixtures_root(args) / "ontology.onto"
    onto = load_ontology(path)
    rule = rules_from_args(
        args.subject, args.object, args.action, args.subject_attr, args.object_attr
    )
    for inferred in infer_instance_rules(onto, rule):
        print(
            f"rule subject={inferred.subject_ref} "
            f"action={inferred.action.value} object={inferred.object_ref}"
        )
    return 0


# --- delegation ----------------------------------------------------------------


def _engine_from(args: argparse.Namespace) -> DelegationEngine:
    root = _fixtures_root(args)
    onto = load_ontology(root / "ontology.onto")
    registry, private_keys = load_key_file(root / "keys.txt")
    store = PolicySetStore(root / "psets")
    return DelegationEngine(onto, store, registry, KeyedHashScheme(), private_keys)


def _cmd_delegate(args: argparse.Namespace) -> int:
    engine = _engine_from(args)
    policy = engine.delegate_authority(
        args.delegator,
        args.delegatee,
        args.resource,
        tuple(a for a in args.actions.split(",") if a),
        PolicyKind(args.kind.capitalize()),
        PolicyDecision(args.decision.capitalize()),
    )
    print(f"delegated policy={policy.id} level={policy.delegation_level}")
    return 0


def _cmd_request(args: argparse.Namespace) -> int:
    engine = _engine_from(args)
    decision = engine.access_request(
        AccessRequest(args.requester, args.resource, args.action)
    )
    print(decision.render())
    return 0


def _cmd_revoke(args: argparse.Namespace) -> int:
    engine = _engine_from(args)
    engine.revoke_authority(args.delegator, args.delegatee, args.resource)
    print(f"revoked {args.delegator}->{args.delegatee} on {args.resource}")
    return 0


# --- content -------------------------------------------------------------------


def _content_parts(root: Path):
    store = load_taxonomy(root / "taxonomy.tax")
    gazetteer_path = root / "gazetteer.txt"
    stopwords_path = root / "stopwords.txt"
    lexicon_path = root / "lexicon.txt"
    gazetteer = load_gazetteer(gazetteer_path) if gazetteer_path.exists() else ()
    stopwords = (
        load_stopwords(stopwords_path) if stopwords_path.exists() else frozenset()
    )
    extra = load_extra_phrases(lexicon_path) if lexicon_path.exists() else ()
    return store, gazetteer, stopwords, Lexicon.build(store, extra)


def _annotate_file(args: argparse.Namespace):
    root = _fixtures_root(args)
    store, gazetteer, stopwords, lexicon = _content_parts(root)
    message = load_message(args.message_file)
    return root, store, annotate_message(message, store, gazetteer, stopwords, lexicon)


def _cmd_annotate(args: argparse.Namespace) -> int:
    _, _, annotated = _annotate_file(args)
    sys.stdout.write(serialize_annotated(annotated))
    return 0


def _cmd_publish(args: argparse.Namespace) -> int:
    root, _, annotated = _annotate_file(args)
    outdir = root / "annotated"
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{annotated.message.id}.ann"
    path.write_text(serialize_annotated(annotated), encoding="utf-8")
    print(f"published {annotated.message.id} annotations={len(annotated.annotations)}")
    return 0


def _cmd_read(args: argparse.Namespace) -> int:
    root = _fixtures_root(args)
    store = load_taxonomy(root / "taxonomy.tax")
    rules = load_privacy_requirements(root / "privacy.txt", store)
    contacts = load_contacts(root / "contacts.txt")
    annotated_dir = root / "annotated"
    messages = [
        load_annotated(path, store) for path in sorted(annotated_dir.glob("*.ann"))
    ]
    monitor = AccessMonitor(store, rules, contacts, messages)
    variant = monitor.read_message(args.reader, args.message)
    print(variant.text)
    if args.audit:
        original = monitor.annotated(args.message).message.text
        for line in variant.audit_lines(original):
            print(line)
    return 0


# --- benchmark -----------------------------------------------------------------


def _cmd_bench(args: argparse.Namespace) -> int:
    config = BenchmarkConfig(
        N_values=tuple(args.N) if args.N else (10, 100, 1000, 10000),
        n_values=tuple(args.n) if args.n else (5,),
        l=args.l,
        per_policy_cost_ms=args.cost_ms,
        repetitions=args.reps,
        seed=args.seed,
    )
    text = run_benchmark(config).to_tsv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# --- wiring --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ontoguard",
        description="Ontology-driven access control and content sanitization.",
    )
    parser.add_argument(
        "--fixtures",
        help="fixture directory (default: $ONTOGUARD_FIXTURES)",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    infer = sub.add_parser("infer", help="expand a class-level access rule")
    infer.add_argument("--subject", required=True)
    infer.add_argument("--object", required=True)
    infer.add_argument("--action", required=True, choices=["allow", "deny"])
    infer.add_argument("--subject-attr", action="append", default=[])
    infer.add_argument("--object-attr", action="append", default=[])
    infer.add_argument("--ontology", help="ontology file (default: fixtures/ontology.onto)")
    infer.set_defaults(func=_cmd_infer)

    delegate = sub.add_parser("delegate", help="issue a delegated policy")
    delegate.add_argument("--delegator", required=True)
    delegate.add_argument("--delegatee", required=True)
    delegate.add_argument("--resource", required=True)
    delegate.add_argument("--actions", required=True, help="comma-separated actions")
    delegate.add_argument(
        "--kind", required=True, choices=["access", "administrative"]
    )
    delegate.add_argument(
        "--decision", default="permit", choices=["permit", "deny"]
    )
    delegate.set_defaults(func=_cmd_delegate)

    request = sub.add_parser("request", help="decide an access request")
    request.add_argument("--requester", required=True)
    request.add_argument("--resource", required=True)
    request.add_argument("--action", required=True)
    request.set_defaults(func=_cmd_request)

    revoke = sub.add_parser("revoke", help="withdraw a delegated policy")
    revoke.add_argument("--delegator", required=True)
    revoke.add_argument("--delegatee", required=True)
    revoke.add_argument("--resource", required=True)
    revoke.set_defaults(func=_cmd_revoke)

    annotate = sub.add_parser("annotate", help="annotate a message file")
    annotate.add_argument("message_file")
    annotate.set_defaults(func=_cmd_annotate)

    publish = sub.add_parser(
        "publish", help="annotate a message file and store the result"
    )
    publish.add_argument("message_file")
    publish.set_defaults(func=_cmd_publish)

    read = sub.add_parser("read", help="read a published message as a contact")
    read.add_argument("--reader", required=True)
    read.add_argument("--message", required=True)
    read.add_argument("--audit", action="store_true")
    read.set_defaults(func=_cmd_read)

    bench = sub.add_parser("bench", help="run the engine comparison benchmark")
    bench.add_argument("--N", action="append", type=int)
    bench.add_argument("--n", action="append", type=int)
    bench.add_argument("--l", type=int, default=5)
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--reps", type=int, default=3)
    bench.add_argument("--cost-ms", type=float, default=0.4)
    bench.add_argument("--out")
    bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except OntoGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
