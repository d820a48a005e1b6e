"""Delegation engine: issue, verify, revoke, and combine delegated policies.

The engine keeps a workflow graph alongside the policy-set store.  Nodes
are subject instances, resource instances, and policy-set nodes; a
policy-set node hangs off its delegator (``defines``), points at the
delegatees it covers (``written_for``) and at its resource
(``refers_to_resource``).  Access decisions walk this graph from the
requester back to an owner-signed policy instead of rescanning a policy
database.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import (
    AuthorityError,
    DelegationLimitError,
    IntegrityError,
    NotFoundError,
    SignatureError,
    UnknownReferenceError,
    ValidationError,
)
from .ontology import Ontology
from .policy import (
    KeyRegistry,
    Policy,
    PolicyDecision,
    PolicyKind,
    PolicySet,
    SignatureScheme,
    find_policy_for,
    sign_trusted_policy,
    verify_signature,
)

DEFAULT_MAX_DELEGATION_LEVEL = 5


class NodeType(str, Enum):
    SUBJECT = "subject_instance"
    RESOURCE = "resource_instance"
    POLICY_SET = "policyset_node"


class DenyReason(str, Enum):
    """Why a request was denied, ranked from least to most specific."""

    OK = "ok"
    NO_POLICY = "no_policy"
    RULE_MISMATCH = "rule_mismatch"
    INVALID_AUTHORITY = "invalid_authority"
    BAD_SIGNATURE = "bad_signature"
    REVOKED = "revoked"


_REASON_RANK = {
    DenyReason.NO_POLICY: 0,
    DenyReason.RULE_MISMATCH: 1,
    DenyReason.INVALID_AUTHORITY: 2,
    DenyReason.BAD_SIGNATURE: 3,
}


def _more_specific(a: DenyReason, b: DenyReason) -> DenyReason:
    return a if _REASON_RANK[a] >= _REASON_RANK[b] else b


class DecisionOutcome(str, Enum):
    GRANT = "grant"
    DENY = "deny"


@dataclass(frozen=True)
class AccessRequest:
    requester: str
    resource: str
    action: str


@dataclass(frozen=True)
class Decision:
    outcome: DecisionOutcome
    reason: DenyReason
    chain: tuple[str, ...] = ()

    def render(self) -> str:
        return (
            f"decision={self.outcome.value} reason={self.reason.value} "
            f"chain={','.join(self.chain)}"
        )


@dataclass(frozen=True)
class Authority:
    """Outcome of walking a subject's delegation chain for one resource."""

    valid: bool
    chain: tuple[str, ...]
    reason: DenyReason
    entry_policy: Policy | None


@dataclass
class WorkflowGraph:
    """Typed nodes plus labelled edges, mutated as policies come and go.

    Edges are indexed by (label, endpoint) so request-time traversal stays
    flat in the total number of policies.
    """

    node_types: dict[str, NodeType] = field(default_factory=dict)
    edges: set[tuple[str, str, str]] = field(default_factory=set)
    _sources: dict[tuple[str, str], set[str]] = field(default_factory=dict)
    _targets: dict[tuple[str, str], set[str]] = field(default_factory=dict)

    def ensure_node(self, node_id: str, node_type: NodeType) -> None:
        existing = self.node_types.get(node_id)
        if existing is not None and existing is not node_type:
            raise IntegrityError(
                f"workflow node {node_id!r} is {existing.value}, not {node_type.value}"
            )
        self.node_types[node_id] = node_type

    def add_edge(self, src: str, label: str, dst: str) -> None:
        for end in (src, dst):
            if end not in self.node_types:
                raise UnknownReferenceError(f"unknown workflow node: {end!r}")
        self.edges.add((src, label, dst))
        self._sources.setdefault((label, dst), set()).add(src)
        self._targets.setdefault((label, src), set()).add(dst)

    def remove_edge(self, src: str, label: str, dst: str) -> None:
        self.edges.discard((src, label, dst))
        self._sources.get((label, dst), set()).discard(src)
        self._targets.get((label, src), set()).discard(dst)

    def remove_node(self, node_id: str) -> None:
        self.node_types.pop(node_id, None)
        for edge in [e for e in self.edges if node_id in (e[0], e[2])]:
            self.remove_edge(*edge)

    def policy_set_nodes_for(self, subject: str, resource: str) -> list[str]:
        """Policy-set nodes that cover ``subject`` on ``resource``, sorted."""
        covering = self._sources.get(("written_for", subject), set())
        referring = self._sources.get(("refers_to_resource", resource), set())
        return sorted(covering & referring)

    def delegator_of(self, pset_node: str) -> str:
        owners = self._sources.get(("defines", pset_node), set())
        if len(owners) != 1:
            raise IntegrityError(
                f"policy-set node {pset_node!r} has {len(owners)} defines edges"
            )
        return next(iter(owners))

    def validate(self) -> None:
        for node_id, node_type in self.node_types.items():
            if node_type is not NodeType.POLICY_SET:
                continue
            defines = self._sources.get(("defines", node_id), ())
            refers = self._targets.get(("refers_to_resource", node_id), ())
            written = self._targets.get(("written_for", node_id), ())
            if len(defines) != 1 or len(refers) != 1 or not written:
                raise IntegrityError(f"malformed policy-set node {node_id!r}")


def combine_policies(p1: Policy, p2: Policy, delegatee: str, resource: str) -> Policy:
    """Pick the policy that governs when two target the same delegatee.

    The higher delegation level wins outright; on a level tie a Deny beats
    a Permit; if that still ties, the first argument wins.
    """
    for p in (p1, p2):
        if p.delegatee != delegatee:
            raise ValidationError(f"policy {p.id!r} is not for delegatee {delegatee!r}")
        if p.resource != resource:
            raise ValidationError(f"policy {p.id!r} is not for resource {resource!r}")
    if p1.delegation_level != p2.delegation_level:
        return p1 if p1.delegation_level > p2.delegation_level else p2
    if p1.decision is PolicyDecision.DENY:
        return p1
    if p2.decision is PolicyDecision.DENY:
        return p2
    return p1


class DelegationEngine:
    """Issues and verifies delegated policies over a standing workflow graph."""

    def __init__(
        self,
        ontology: Ontology,
        store,
        registry: KeyRegistry,
        scheme: SignatureScheme,
        private_keys: Mapping[str, bytes] | None = None,
        max_level: int = DEFAULT_MAX_DELEGATION_LEVEL,
    ):
        if max_level < 1:
            raise ValidationError("max delegation level must be at least 1")
        self.ontology = ontology
        self.store = store
        self.registry = registry
        self.scheme = scheme
        self.private_keys = dict(private_keys or {})
        self.max_level = max_level
        self.workflow = WorkflowGraph()
        self._evaluations = 0
        self._rebuild_workflow()

    # -- workflow maintenance ------------------------------------------------

    @staticmethod
    def _pset_node(delegator: str, resource: str) -> str:
        return f"{delegator}__{resource}"

    def _attach(self, policy: Policy) -> None:
        node = self._pset_node(policy.issuer, policy.resource)
        self.workflow.ensure_node(policy.issuer, NodeType.SUBJECT)
        self.workflow.ensure_node(policy.delegatee, NodeType.SUBJECT)
        self.workflow.ensure_node(policy.resource, NodeType.RESOURCE)
        self.workflow.ensure_node(node, NodeType.POLICY_SET)
        self.workflow.add_edge(policy.issuer, "defines", node)
        self.workflow.add_edge(node, "refers_to_resource", policy.resource)
        self.workflow.add_edge(node, "written_for", policy.delegatee)

    def _rebuild_workflow(self) -> None:
        self.workflow = WorkflowGraph()
        for delegator, resource in self.store.list_pairs():
            for policy in self.store.load(delegator, resource).policies:
                self._attach(policy)
        self.workflow.validate()

    # -- instrumentation -----------------------------------------------------

    def count_policy_evaluations(self, request: AccessRequest) -> int:
        """Policies examined while deciding ``request`` (graph walk only)."""
        self._evaluations = 0
        self.access_request(request)
        return self._evaluations

    # -- delegation ----------------------------------------------------------

    def _require_instance(self, entity: str, what: str) -> None:
        if entity not in self.ontology.instances:
            raise UnknownReferenceError(f"unknown {what}: {entity!r}")

    def delegate_authority(
        self,
        delegator: str,
        delegatee: str,
        resource: str,
        actions: Iterable[str],
        kind: PolicyKind,
        decision: PolicyDecision = PolicyDecision.PERMIT,
    ) -> Policy:
        """Issue (or replace) ``delegator``'s policy for ``delegatee``.

        Owners issue signed policies at the maximum delegation level.  A
        non-owner must hold a verifiable Administrative policy covering
        ``delegate``; the new policy drops one level, and issuance is
        refused once the next level would fall below 1 (no state changes).
        """
        self._require_instance(delegator, "delegator")
        self._require_instance(delegatee, "delegatee")
        self._require_instance(resource, "resource")
        action_set = frozenset(actions)
        owner = self.registry.owner_of(resource)

        if delegator == owner:
            level = self.max_level
        else:
            authority = self.verify_delegator_authority(delegator, resource, "delegate")
            if not authority.valid:
                raise AuthorityError(
                    f"{delegator!r} has no valid delegation authority on "
                    f"{resource!r} ({authority.reason.value})"
                )
            level = authority.entry_policy.delegation_level - 1
            if level < 1:
                raise DelegationLimitError(
                    f"{delegator!r} reached the delegation depth limit on {resource!r}"
                )

        policy = Policy(
            id=f"{delegator}__{delegatee}__{resource}",
            issuer=delegator,
            delegatee=delegatee,
            resource=resource,
            kind=kind,
            rule_actions=action_set,
            decision=decision,
            delegation_level=level,
        )
        policy.validate()
        if delegator == owner:
            try:
                private = self.private_keys[delegator]
            except KeyError:
                raise SignatureError(f"no private key for owner {delegator!r}") from None
            policy = sign_trusted_policy(policy, private, self.registry, self.scheme)

        if self.store.exists(delegator, resource):
            pset = self.store.load(delegator, resource)
            replaced = find_policy_for(pset, delegatee)
            if replaced is not None:
                pset.policies.remove(replaced)
            pset.policies.append(policy)
        else:
            pset = PolicySet(delegator, resource, [policy])
        self.store.store(pset)
        self._attach(policy)
        return policy

    # -- verification ----------------------------------------------------------

    def _candidates(self, subject: str, resource: str) -> list[tuple[Policy, str]]:
        """Policies issued to ``subject`` for ``resource``, best first.

        Each candidate found counts as one policy evaluation.  Ordering is
        by descending delegation level, then lexicographic issuer id.
        """
        found: list[tuple[Policy, str]] = []
        for node in self.workflow.policy_set_nodes_for(subject, resource):
            delegator = self.workflow.delegator_of(node)
            try:
                pset = self.store.load(delegator, resource)
            except NotFoundError:
                raise IntegrityError(
                    f"workflow references missing policy set {node!r}"
                ) from None
            policy = find_policy_for(pset, subject)
            if policy is None:
                continue
            self._evaluations += 1
            found.append((policy, delegator))
        found.sort(key=lambda pair: (-pair[0].delegation_level, pair[1]))
        return found

    def verify_delegator_authority(
        self,
        subject: str,
        resource: str,
        action: str,
        _visited: frozenset[str] | None = None,
    ) -> Authority:
        """Walk ``subject``'s chain back to an owner-signed policy.

        The chain is valid when every hop holds a Permit Administrative
        policy covering ``action`` and the terminal owner-issued policy
        carries a verifiable signature.  The owner itself is trivially
        valid with an empty chain.
        """
        owner = self.registry.owner_of(resource)
        if subject == owner:
            return Authority(True, (), DenyReason.OK, None)
        visited = (_visited or frozenset()) | {subject}
        best = DenyReason.INVALID_AUTHORITY
        for policy, delegator in self._candidates(subject, resource):
            if (
                policy.kind is not PolicyKind.ADMINISTRATIVE
                or policy.decision is not PolicyDecision.PERMIT
                or action not in policy.rule_actions
            ):
                continue
            if delegator == owner:
                try:
                    ok = verify_signature(policy, self.registry, self.scheme)
                except SignatureError:
                    ok = False
                if ok:
                    return Authority(True, (delegator,), DenyReason.OK, policy)
                best = _more_specific(best, DenyReason.BAD_SIGNATURE)
                continue
            if delegator in visited:
                continue
            upstream = self.verify_delegator_authority(
                delegator, resource, action, visited
            )
            if upstream.valid:
                return Authority(
                    True, (delegator,) + upstream.chain, DenyReason.OK, policy
                )
            best = _more_specific(best, upstream.reason)
        return Authority(False, (), best, None)

    def access_request(self, request: AccessRequest) -> Decision:
        """Decide one request by walking the workflow graph.

        Candidates issued to the requester are tried best-first; the first
        one whose rule matches and whose issuer chain verifies wins.  When
        everything fails the most specific failure is reported.
        """
        self._require_instance(request.requester, "requester")
        self._require_instance(request.resource, "resource")
        owner = self.registry.owner_of(request.resource)
        candidates = self._candidates(request.requester, request.resource)
        if not candidates:
            return Decision(DecisionOutcome.DENY, DenyReason.NO_POLICY)
        best = DenyReason.NO_POLICY
        for policy, delegator in candidates:
            if (
                request.action not in policy.rule_actions
                or policy.decision is not PolicyDecision.PERMIT
            ):
                best = _more_specific(best, DenyReason.RULE_MISMATCH)
                continue
            if delegator == owner:
                try:
                    ok = verify_signature(policy, self.registry, self.scheme)
                except SignatureError:
                    ok = False
                if ok:
                    return Decision(DecisionOutcome.GRANT, DenyReason.OK, (delegator,))
                best = _more_specific(best, DenyReason.BAD_SIGNATURE)
                continue
            authority = self.verify_delegator_authority(
                delegator, request.resource, request.action, frozenset({request.requester})
            )
            if authority.valid:
                return Decision(
                    DecisionOutcome.GRANT,
                    DenyReason.OK,
                    (delegator,) + authority.chain,
                )
            best = _more_specific(best, authority.reason)
        return Decision(DecisionOutcome.DENY, best)

    # -- revocation ------------------------------------------------------------

    def revoke_authority(
        self, delegator: str, delegatee: str, resource: str, action: str = "delegate"
    ) -> None:
        """Remove ``delegator``'s policy for ``delegatee`` on ``resource``.

        Non-owners must still hold valid authority for ``action``.  When the
        last policy of a set goes, the set node and its file go with it.
        """
        owner = self.registry.owner_of(resource)
        if delegator != owner:
            authority = self.verify_delegator_authority(delegator, resource, action)
            if not authority.valid:
                raise AuthorityError(
                    f"{delegator!r} may not revoke on {resource!r} "
                    f"({authority.reason.value})"
                )
        pset = self.store.load(delegator, resource)
        policy = find_policy_for(pset, delegatee)
        if policy is None:
            raise NotFoundError(
                f"{delegator!r} holds no policy for {delegatee!r} on {resource!r}"
            )
        pset.policies.remove(policy)
        node = self._pset_node(delegator, resource)
        if pset.policies:
            self.store.store(pset)
            self.workflow.remove_edge(node, "written_for", delegatee)
        else:
            self.store.delete(delegator, resource)
            self.workflow.remove_node(node)
