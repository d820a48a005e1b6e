"""Benchmark harness: workflow traversal vs. per-request graph generation.

The comparison engine ("baseline") emulates a decision point that has no
standing workflow graph: for every request it rebuilds the delegation graph
by scanning the whole policy database once per delegator node it expands.
Decisions are computed independently over that rebuilt graph, so the two
engines double-check each other while their evaluation counts diverge.
"""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass

from .annotate import AnnotatedMessage
from .delegation import (
    DEFAULT_MAX_DELEGATION_LEVEL,
    AccessRequest,
    Decision,
    DecisionOutcome,
    DelegationEngine,
    DenyReason,
)
from .errors import IntegrityError, ValidationError
from .ontology import EntityInstance, OntClass, Ontology, RoleTag
from .policy import (
    KeyedHashScheme,
    KeyRegistry,
    MemoryPolicySetStore,
    Policy,
    PolicyDecision,
    PolicyKind,
    SignatureError,
    SignatureScheme,
    verify_signature,
)

FILLER_CHAIN_DEPTH = 4


@dataclass(frozen=True)
class BenchmarkConfig:
    """Grid and cost constants for one benchmark run."""

    N_values: tuple[int, ...] = (10, 100, 1000, 10000)
    n_values: tuple[int, ...] = (5,)
    l: int = DEFAULT_MAX_DELEGATION_LEVEL
    per_policy_cost_ms: float = 0.4
    repetitions: int = 3
    seed: int = 1

    def __post_init__(self) -> None:
        if not self.N_values or not self.n_values:
            raise ValidationError("benchmark grid must be non-empty")
        if any(v < 1 for v in self.N_values) or any(v < 1 for v in self.n_values):
            raise ValidationError("N and n values must be positive")
        if self.l < 1:
            raise ValidationError("max delegation level must be at least 1")
        if self.per_policy_cost_ms <= 0:
            raise ValidationError("per-policy cost must be positive")
        if self.repetitions < 3:
            raise ValidationError("at least 3 repetitions are required")


@dataclass(frozen=True)
class Workload:
    """A synthetic policy database plus the request it is sized for."""

    N: int
    n: int
    max_level: int
    ontology: Ontology
    store: MemoryPolicySetStore
    registry: KeyRegistry
    scheme: SignatureScheme
    private_keys: dict[str, bytes]
    request: AccessRequest
    policies: tuple[Policy, ...]


@dataclass(frozen=True)
class BenchRow:
    N: int
    n: int
    engine: str
    policy_evaluations: int
    model_ms: float
    wall_ms: float


@dataclass(frozen=True)
class AnnotationStats:
    """Cost drivers of annotating and assessing one message."""

    message_id: str
    noun_phrases: int
    senses: int
    lookup_ms: float
    branch_nodes: int


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchRow, ...]
    annotation: tuple[AnnotationStats, ...] = ()

    def to_tsv(self) -> str:
        lines = ["N\tn\tengine\tevals\tmodel_ms\twall_ms"]
        for row in self.rows:
            lines.append(
                f"{row.N}\t{row.n}\t{row.engine}\t{row.policy_evaluations}"
                f"\t{row.model_ms:g}\t{row.wall_ms:g}"
            )
        return "\n".join(lines) + "\n"


# --- workload generation -------------------------------------------------------


def _flat_ontology(subjects: list[str], resources: list[str]) -> Ontology:
    # Built in one shot: the incremental builder revalidates the whole
    # ontology per definition, which is wasteful for 10^4 synthetic ids.
    classes = {
        "subject": OntClass("subject", "Subject", RoleTag.SUBJECT),
        "resource": OntClass("resource", "Resource", RoleTag.OBJECT),
    }
    instances: dict[str, EntityInstance] = {}
    relations: set[tuple[str, str, str]] = set()
    for sid in subjects:
        instances[sid] = EntityInstance(sid, "subject")
        relations.add((sid, "instance_of", "subject"))
    for rid in resources:
        instances[rid] = EntityInstance(rid, "resource")
        relations.add((rid, "instance_of", "resource"))
    return Ontology(classes=classes, instances=instances, relations=frozenset(relations))


def generate_workload(
    seed: int, N: int, n: int, l: int = DEFAULT_MAX_DELEGATION_LEVEL
) -> Workload:
    """Build a policy database of exactly ``N`` policies, deterministically.

    The requester is connected to exactly ``n`` delegators, each holding an
    owner-signed administrative entry.  The remaining ``N - 2n`` policies
    form owner-rooted chains on disjoint filler resources, inflating the
    database without touching the requester.
    """
    if N < 0 or n < 0:
        raise ValidationError("N and n must be non-negative")
    if l < 1:
        raise ValidationError("max delegation level must be at least 1")
    if 2 * n > N:
        raise ValidationError(
            f"infeasible workload: {n} connected delegators need at least "
            f"{2 * n} policies, got N={N}"
        )
    rng = random.Random(f"{seed}:{N}:{n}:{l}")

    owner = "owner-0"
    requester = "req-0"
    resource = "res-0"
    delegators = [f"del-{k}" for k in range(1, n + 1)]

    depths: list[int] = []
    remaining = N - 2 * n
    while remaining:
        depth = min(remaining, rng.randint(1, min(FILLER_CHAIN_DEPTH, l)))
        depths.append(depth)
        remaining -= depth
    filler_subjects = [f"fill-{i}" for i in range(sum(depths))]
    filler_resources = [f"res-f-{j}" for j in range(len(depths))]

    registry = KeyRegistry()
    private_keys = {owner: rng.randbytes(32)}
    registry.register_key(owner, private_keys[owner])
    registry.register_owner(resource, owner)
    for rid in filler_resources:
        registry.register_owner(rid, owner)

    ontology = _flat_ontology(
        [owner, requester, *delegators, *filler_subjects],
        [resource, *filler_resources],
    )
    store = MemoryPolicySetStore()
    engine = DelegationEngine(
        ontology, store, registry, KeyedHashScheme(), private_keys, max_level=l
    )

    for delegator in delegators:
        engine.delegate_authority(
            owner, delegator, resource, ("read", "delegate"),
            PolicyKind.ADMINISTRATIVE,
        )
    for delegator in delegators:
        engine.delegate_authority(
            delegator, requester, resource, ("read",), PolicyKind.ACCESS
        )

    cursor = 0
    for chain, depth in enumerate(depths):
        issuer = owner
        rid = filler_resources[chain]
        for hop in range(depth):
            delegatee = filler_subjects[cursor]
            cursor += 1
            last = hop == depth - 1
            kind = PolicyKind.ACCESS if last and rng.random() < 0.5 else PolicyKind.ADMINISTRATIVE
            decision = (
                PolicyDecision.DENY
                if last and rng.random() < 0.125
                else PolicyDecision.PERMIT
            )
            actions = ("read",) if kind is PolicyKind.ACCESS else ("read", "delegate")
            engine.delegate_authority(issuer, delegatee, rid, actions, kind, decision)
            issuer = delegatee

    policies = tuple(store.all_policies())
    if len(policies) != N:
        raise IntegrityError(
            f"generated {len(policies)} policies, expected {N}"
        )
    return Workload(
        N=N,
        n=n,
        max_level=l,
        ontology=ontology,
        store=store,
        registry=registry,
        scheme=KeyedHashScheme(),
        private_keys=private_keys,
        request=AccessRequest(requester, resource, "read"),
        policies=policies,
    )


# --- baseline engine -----------------------------------------------------------

_REASON_ORDER = (
    DenyReason.NO_POLICY,
    DenyReason.RULE_MISMATCH,
    DenyReason.INVALID_AUTHORITY,
    DenyReason.BAD_SIGNATURE,
)


def _firmer(a: DenyReason, b: DenyReason) -> DenyReason:
    return max(a, b, key=_REASON_ORDER.index)


def _safe_verify(policy: Policy, registry: KeyRegistry, scheme: SignatureScheme) -> bool:
    try:
        return verify_signature(policy, registry, scheme)
    except SignatureError:
        return False


def _decide_on_graph(
    request: AccessRequest,
    incoming: dict[str, list[Policy]],
    owner: str | None,
    registry: KeyRegistry,
    scheme: SignatureScheme,
) -> Decision:
    """Decide a request over a freshly generated per-request graph."""

    def ordered(subject: str) -> list[Policy]:
        return sorted(
            incoming.get(subject, []),
            key=lambda p: (-p.delegation_level, p.issuer),
        )

    def authority(
        subject: str, action: str, visited: frozenset[str]
    ) -> tuple[bool, tuple[str, ...], DenyReason]:
        if subject == owner:
            return True, (), DenyReason.OK
        visited = visited | {subject}
        best = DenyReason.INVALID_AUTHORITY
        for policy in ordered(subject):
            if (
                policy.kind is not PolicyKind.ADMINISTRATIVE
                or policy.decision is not PolicyDecision.PERMIT
                or action not in policy.rule_actions
            ):
                continue
            if policy.issuer == owner:
                if _safe_verify(policy, registry, scheme):
                    return True, (policy.issuer,), DenyReason.OK
                best = _firmer(best, DenyReason.BAD_SIGNATURE)
                continue
            if policy.issuer in visited:
                continue
            valid, chain, reason = authority(policy.issuer, action, visited)
            if valid:
                return True, (policy.issuer,) + chain, DenyReason.OK
            best = _firmer(best, reason)
        return False, (), best

    candidates = ordered(request.requester)
    if not candidates:
        return Decision(DecisionOutcome.DENY, DenyReason.NO_POLICY)
    best = DenyReason.NO_POLICY
    for policy in candidates:
        if (
            request.action not in policy.rule_actions
            or policy.decision is not PolicyDecision.PERMIT
        ):
            best = _firmer(best, DenyReason.RULE_MISMATCH)
            continue
        if policy.issuer == owner:
            if _safe_verify(policy, registry, scheme):
                return Decision(DecisionOutcome.GRANT, DenyReason.OK, (policy.issuer,))
            best = _firmer(best, DenyReason.BAD_SIGNATURE)
            continue
        valid, chain, reason = authority(
            policy.issuer, request.action, frozenset({request.requester})
        )
        if valid:
            return Decision(
                DecisionOutcome.GRANT, DenyReason.OK, (policy.issuer,) + chain
            )
        best = _firmer(best, reason)
    return Decision(DecisionOutcome.DENY, best)


def run_baseline(
    request: AccessRequest,
    policy_db: tuple[Policy, ...],
    registry: KeyRegistry,
    scheme: SignatureScheme,
    per_policy_cost_ms: float = 0.4,
) -> tuple[Decision, int, float]:
    """Decide one request the graph-generation way and price the scans.

    Locating the requester's own policies is the decision point's native
    request matching and is not billed; every delegator node expanded while
    generating the graph costs one full scan of the database.
    """
    owner = registry.owner_of(request.resource)

    def matching(subject: str) -> list[Policy]:
        return [
            p
            for p in policy_db
            if p.delegatee == subject and p.resource == request.resource
        ]

    incoming: dict[str, list[Policy]] = {request.requester: matching(request.requester)}
    frontier = sorted(
        {p.issuer for p in incoming[request.requester]} - {owner, request.requester}
    )
    evaluations = 0
    while frontier:
        node = frontier.pop(0)
        if node in incoming:
            continue
        evaluations += len(policy_db)
        incoming[node] = matching(node)
        for policy in incoming[node]:
            if policy.issuer != owner and policy.issuer not in incoming:
                frontier.append(policy.issuer)
    decision = _decide_on_graph(request, incoming, owner, registry, scheme)
    return decision, evaluations, evaluations * per_policy_cost_ms


# --- measurement ---------------------------------------------------------------


def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Measure both engines over the configured grid.

    Each (N, n) cell regenerates its workload from the seed, runs both
    engines ``repetitions`` times, and reports the median wall time next
    to the deterministic evaluation counts and the synthetic cost model.
    """
    rows: list[BenchRow] = []
    for N in config.N_values:
        for n in config.n_values:
            workload = generate_workload(config.seed, N, n, config.l)
            engine = DelegationEngine(
                workload.ontology,
                workload.store,
                workload.registry,
                workload.scheme,
                workload.private_keys,
                max_level=workload.max_level,
            )

            walls: list[float] = []
            for _ in range(config.repetitions):
                started = time.perf_counter()
                workflow_evals = engine.count_policy_evaluations(workload.request)
                walls.append((time.perf_counter() - started) * 1000.0)
            workflow_decision = engine.access_request(workload.request)
            if workflow_evals > n + config.l:
                raise IntegrityError(
                    f"workflow evaluated {workflow_evals} policies, "
                    f"expected at most n + l = {n + config.l}"
                )
            rows.append(
                BenchRow(
                    N, n, "workflow", workflow_evals,
                    workflow_evals * config.per_policy_cost_ms,
                    statistics.median(walls),
                )
            )

            walls = []
            for _ in range(config.repetitions):
                started = time.perf_counter()
                baseline_decision, baseline_evals, model_ms = run_baseline(
                    workload.request,
                    workload.policies,
                    workload.registry,
                    workload.scheme,
                    config.per_policy_cost_ms,
                )
                walls.append((time.perf_counter() - started) * 1000.0)
            if baseline_decision.outcome is not workflow_decision.outcome:
                raise IntegrityError(
                    f"engine disagreement at N={N} n={n}: workflow says "
                    f"{workflow_decision.outcome.value}, baseline says "
                    f"{baseline_decision.outcome.value}"
                )
            if baseline_evals < N:
                raise IntegrityError(
                    f"baseline evaluated {baseline_evals} policies at N={N}; "
                    "a graph generation must scan the database at least once"
                )
            rows.append(
                BenchRow(
                    N, n, "baseline", baseline_evals, model_ms,
                    statistics.median(walls),
                )
            )
    return BenchmarkReport(tuple(rows))


# --- annotation-side cost drivers ------------------------------------------------


def annotation_stats(
    annotated: AnnotatedMessage, store, access_level: tuple[str, ...]
) -> AnnotationStats:
    """Measure what drives annotation and assessment cost for one message.

    Counts the noun phrases, the sense-carrying annotations, the wall time
    of re-running sense lookup for every noun phrase, and the size of the
    access level's branch (its members plus everything below them).
    """
    noun_spans = [a for a in annotated.annotations if a.span.kind == "NounPhrase"]
    sensed = sum(1 for a in annotated.annotations if a.sense is not None)
    started = time.perf_counter()
    for ann in noun_spans:
        store.senses_of(annotated.surface(ann))
    lookup_ms = (time.perf_counter() - started) * 1000.0
    branch = {
        concept
        for member in access_level
        for concept in store.concepts
        if member in store.ancestors(concept)
    }
    return AnnotationStats(
        message_id=annotated.message.id,
        noun_phrases=len(noun_spans),
        senses=sensed,
        lookup_ms=lookup_ms,
        branch_nodes=len(branch),
    )
