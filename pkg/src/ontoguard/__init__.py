"""Ontology-driven access control, delegation chains, and content sanitization.

The package splits into four layers:

- :mod:`ontoguard.ontology` — subject/object ontologies and class-level
  rule expansion into instance-level rules.
- :mod:`ontoguard.policy` / :mod:`ontoguard.delegation` — signed policies,
  policy-set stores, and the delegation engine that issues, verifies,
  revokes, and combines policies over a standing workflow graph.
- :mod:`ontoguard.taxonomy` / :mod:`ontoguard.annotate` /
  :mod:`ontoguard.monitor` — a taxonomy knowledge base, the message
  annotation pipeline (named entities, noun phrases, sense
  disambiguation), and the access monitor that serves per-reader
  sanitized message variants.
- :mod:`ontoguard.bench` — the benchmark harness comparing workflow
  traversal against per-request graph generation.
"""

from __future__ import annotations

from .annotate import (
    AnnotatedMessage,
    Annotation,
    Lexicon,
    Message,
    Span,
    annotate_message,
    disambiguate,
    load_annotated,
    load_message,
    semantic_distance,
    serialize_annotated,
)
from .bench import BenchmarkConfig, BenchmarkReport, generate_workload, run_benchmark
from .delegation import (
    AccessRequest,
    Decision,
    DecisionOutcome,
    DelegationEngine,
    DenyReason,
    combine_policies,
)
from .errors import (
    AuthorityError,
    DelegationLimitError,
    DuplicateIdError,
    FormatError,
    IntegrityError,
    NotFoundError,
    OntoGuardError,
    SignatureError,
    UnknownReferenceError,
    ValidationError,
)
from .monitor import (
    WITHHELD,
    AccessMonitor,
    PrivacyRule,
    SanitizedMessage,
    compile_privacy_rules,
    evaluate,
    load_contacts,
    load_privacy_requirements,
    paper_style,
    resolve_access_level,
    sanitize,
)
from .ontology import (
    AccessRule,
    Ontology,
    RuleAction,
    infer_instance_rules,
    load_ontology,
    rules_from_args,
)
from .policy import (
    KeyedHashScheme,
    KeyRegistry,
    MemoryPolicySetStore,
    Policy,
    PolicyDecision,
    PolicyKind,
    PolicySet,
    PolicySetStore,
    load_key_file,
    sign_trusted_policy,
    verify_signature,
)
from .taxonomy import Concept, KbResource, Sense, TaxonomyStore, load_taxonomy

__version__ = "0.1.0"

__all__ = [
    "AccessMonitor",
    "AccessRequest",
    "AccessRule",
    "AnnotatedMessage",
    "Annotation",
    "AuthorityError",
    "BenchmarkConfig",
    "BenchmarkReport",
    "Concept",
    "Decision",
    "DecisionOutcome",
    "DelegationEngine",
    "DelegationLimitError",
    "DenyReason",
    "DuplicateIdError",
    "FormatError",
    "IntegrityError",
    "KbResource",
    "KeyRegistry",
    "KeyedHashScheme",
    "Lexicon",
    "MemoryPolicySetStore",
    "Message",
    "NotFoundError",
    "OntoGuardError",
    "Ontology",
    "Policy",
    "PolicyDecision",
    "PolicyKind",
    "PolicySet",
    "PolicySetStore",
    "PrivacyRule",
    "RuleAction",
    "SanitizedMessage",
    "Sense",
    "SignatureError",
    "Span",
    "TaxonomyStore",
    "UnknownReferenceError",
    "ValidationError",
    "WITHHELD",
    "annotate_message",
    "combine_policies",
    "compile_privacy_rules",
    "disambiguate",
    "evaluate",
    "generate_workload",
    "infer_instance_rules",
    "load_annotated",
    "load_contacts",
    "load_key_file",
    "load_message",
    "load_ontology",
    "load_privacy_requirements",
    "load_taxonomy",
    "paper_style",
    "resolve_access_level",
    "rules_from_args",
    "run_benchmark",
    "sanitize",
    "semantic_distance",
    "serialize_annotated",
    "sign_trusted_policy",
    "verify_signature",
    "__version__",
]
