"""Delegation policies: canonical byte encoding, signing, and file-backed sets.

A policy is the unit a delegator hands to a delegatee for one resource.
Policies issued by a resource owner ("trusted" policies) carry the owner's
signature over the canonical encoding; everything downstream is anchored by
re-verifying that signature.
"""

from __future__ import annotations

import hmac
import hashlib
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

from .errors import (
    AuthorityError,
    FormatError,
    IntegrityError,
    NotFoundError,
    SignatureError,
    ValidationError,
)


class PolicyKind(str, Enum):
    ACCESS = "Access"
    ADMINISTRATIVE = "Administrative"


class PolicyDecision(str, Enum):
    PERMIT = "Permit"
    DENY = "Deny"


_ID_BAD_CHARS = set('=\n\r\t "')


def _check_id(value: str, what: str) -> None:
    if not value:
        raise ValidationError(f"{what} must be non-empty")
    if any(ch in _ID_BAD_CHARS for ch in value) or "/" in value or os.sep in value:
        raise ValidationError(f"{what} contains forbidden characters: {value!r}")


@dataclass(frozen=True)
class Policy:
    id: str
    issuer: str
    delegatee: str
    resource: str
    kind: PolicyKind
    rule_actions: frozenset[str]
    decision: PolicyDecision
    delegation_level: int
    owner_signature: bytes | None = None

    def validate(self) -> None:
        for value, what in (
            (self.id, "policy id"),
            (self.issuer, "issuer"),
            (self.delegatee, "delegatee"),
            (self.resource, "resource"),
        ):
            _check_id(value, what)
        if not self.rule_actions:
            raise ValidationError("rule_actions must be non-empty")
        for action in self.rule_actions:
            _check_id(action, "action name")
            if "," in action:
                raise ValidationError(f"action name contains comma: {action!r}")
        if self.delegation_level < 0:
            raise ValidationError("delegation_level must be non-negative")
        if self.kind is PolicyKind.ADMINISTRATIVE and "delegate" not in self.rule_actions:
            raise ValidationError("Administrative policies must include the delegate action")


#: Field order of the canonical encoding.  Changing it invalidates every
#: stored signature, so treat it as frozen.
_CANONICAL_FIELDS = (
    "id",
    "issuer",
    "delegatee",
    "resource",
    "kind",
    "rule_actions",
    "decision",
    "delegation_level",
)


def canonical_encode(policy: Policy) -> bytes:
    """Deterministic byte encoding of every field except the signature."""
    policy.validate()
    lines = [
        f"id={policy.id}",
        f"issuer={policy.issuer}",
        f"delegatee={policy.delegatee}",
        f"resource={policy.resource}",
        f"kind={policy.kind.value}",
        f"rule_actions={','.join(sorted(policy.rule_actions))}",
        f"decision={policy.decision.value}",
        f"delegation_level={policy.delegation_level}",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_policy_block(lines: list[str]) -> Policy:
    """Parse one canonical block (optionally ending in ``signature=<hex>``)."""
    fields: dict[str, str] = {}
    order: list[str] = []
    for line in lines:
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed policy line: {line!r}")
        if key in fields:
            raise FormatError(f"duplicate policy field: {key!r}")
        fields[key] = value
        order.append(key)
    expected = list(_CANONICAL_FIELDS)
    if order[: len(expected)] != expected or len(order) > len(expected) + 1:
        raise FormatError(f"policy fields out of canonical order: {order}")
    signature: bytes | None = None
    if len(order) == len(expected) + 1:
        if order[-1] != "signature":
            raise FormatError(f"unexpected trailing field: {order[-1]!r}")
        try:
            signature = bytes.fromhex(fields["signature"])
        except ValueError as exc:
            raise FormatError("signature is not valid hex") from exc
    try:
        kind = PolicyKind(fields["kind"])
        decision = PolicyDecision(fields["decision"])
        level = int(fields["delegation_level"])
    except ValueError as exc:
        raise FormatError(f"bad policy field value: {exc}") from exc
    policy = Policy(
        id=fields["id"],
        issuer=fields["issuer"],
        delegatee=fields["delegatee"],
        resource=fields["resource"],
        kind=kind,
        rule_actions=frozenset(a for a in fields["rule_actions"].split(",") if a),
        decision=decision,
        delegation_level=level,
        owner_signature=signature,
    )
    policy.validate()
    return policy


# --- signatures -------------------------------------------------------------


class SignatureScheme(Protocol):
    """Anything that can sign bytes and verify detached signatures."""

    def sign(self, private_key: bytes, data: bytes) -> bytes: ...

    def verify(self, public_key: bytes, data: bytes, signature: bytes) -> bool: ...


class KeyedHashScheme:
    """HMAC-SHA256 test scheme where the public key equals the private key.

    Deterministic and dependency-free; swap in an asymmetric scheme by
    implementing the same two methods.
    """

    def sign(self, private_key: bytes, data: bytes) -> bytes:
        if not private_key:
            raise SignatureError("empty signing key")
        return hmac.new(private_key, data, hashlib.sha256).digest()

    def verify(self, public_key: bytes, data: bytes, signature: bytes) -> bool:
        if not public_key:
            raise SignatureError("empty verification key")
        expected = hmac.new(public_key, data, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


@dataclass
class KeyRegistry:
    """Public keys by subject plus the owner of each resource."""

    keys: dict[str, bytes] = field(default_factory=dict)
    owners: dict[str, str] = field(default_factory=dict)

    def register_key(self, subject: str, public_key: bytes) -> None:
        _check_id(subject, "subject")
        if not public_key:
            raise ValidationError("public key must be non-empty")
        self.keys[subject] = public_key

    def register_owner(self, resource: str, owner: str) -> None:
        _check_id(resource, "resource")
        _check_id(owner, "owner")
        self.owners[resource] = owner

    def owner_of(self, resource: str) -> str | None:
        return self.owners.get(resource)

    def key_of(self, subject: str) -> bytes:
        try:
            return self.keys[subject]
        except KeyError:
            raise SignatureError(f"no registered key for {subject!r}") from None


def sign_trusted_policy(
    policy: Policy,
    private_key: bytes,
    registry: KeyRegistry,
    scheme: SignatureScheme,
) -> Policy:
    """Attach the owner signature to an owner-issued policy.

    Only the registered owner of the policy's resource may sign, and the
    private key must correspond to the owner's registered public key.
    """
    owner = registry.owner_of(policy.resource)
    if owner is None:
        raise SignatureError(f"resource {policy.resource!r} has no registered owner")
    if policy.issuer != owner:
        raise AuthorityError(
            f"issuer {policy.issuer!r} is not the owner of {policy.resource!r}"
        )
    data = canonical_encode(policy)
    signature = scheme.sign(private_key, data)
    if not scheme.verify(registry.key_of(owner), data, signature):
        raise SignatureError("private key does not match the owner's registered key")
    return replace(policy, owner_signature=signature)


def verify_signature(
    policy: Policy, registry: KeyRegistry, scheme: SignatureScheme
) -> bool:
    """Check the owner signature against the resource owner's public key.

    A missing signature or an unregistered owner/key is an error, not a
    False: the caller must be able to tell tampering apart from misuse.
    """
    if policy.owner_signature is None:
        raise SignatureError(f"policy {policy.id!r} carries no signature")
    owner = registry.owner_of(policy.resource)
    if owner is None:
        raise SignatureError(f"resource {policy.resource!r} has no registered owner")
    return scheme.verify(
        registry.key_of(owner), canonical_encode(policy), policy.owner_signature
    )


# --- policy sets ------------------------------------------------------------


@dataclass
class PolicySet:
    """All policies one delegator issued for one resource."""

    delegator: str
    resource: str
    policies: list[Policy] = field(default_factory=list)

    def validate(self) -> None:
        _check_id(self.delegator, "delegator")
        _check_id(self.resource, "resource")
        seen: set[str] = set()
        for policy in self.policies:
            policy.validate()
            if policy.issuer != self.delegator:
                raise IntegrityError(
                    f"policy {policy.id!r} issued by {policy.issuer!r} "
                    f"cannot live in {self.delegator!r}'s set"
                )
            if policy.resource != self.resource:
                raise IntegrityError(
                    f"policy {policy.id!r} is for resource {policy.resource!r}, "
                    f"set is for {self.resource!r}"
                )
            if policy.delegatee in seen:
                raise IntegrityError(
                    f"duplicate delegatee {policy.delegatee!r} in policy set"
                )
            seen.add(policy.delegatee)


def find_policy_for(pset: PolicySet, delegatee: str) -> Policy | None:
    """The unique policy issued to ``delegatee``, or None."""
    matches = [p for p in pset.policies if p.delegatee == delegatee]
    if len(matches) > 1:
        raise IntegrityError(
            f"policy set {pset.delegator!r}/{pset.resource!r} holds "
            f"{len(matches)} policies for {delegatee!r}"
        )
    return matches[0] if matches else None


def serialize_policy_set(pset: PolicySet) -> str:
    pset.validate()
    chunks = [f"policyset delegator={pset.delegator} resource={pset.resource}"]
    for policy in pset.policies:
        block = canonical_encode(policy).decode("utf-8")
        if policy.owner_signature is not None:
            block += f"signature={policy.owner_signature.hex()}\n"
        chunks.append(block.rstrip("\n"))
    return "\n\n".join(chunks) + "\n"


def parse_policy_set(text: str) -> PolicySet:
    blocks = [b for b in text.split("\n\n") if b.strip()]
    if not blocks:
        raise FormatError("empty policy set file")
    header = blocks[0].strip().splitlines()
    if len(header) != 1 or not header[0].startswith("policyset "):
        raise FormatError("missing policyset header line")
    fields = dict(
        token.partition("=")[::2] for token in header[0].split()[1:] if "=" in token
    )
    if set(fields) != {"delegator", "resource"}:
        raise FormatError("policyset header needs delegator= and resource=")
    policies = [
        parse_policy_block([ln for ln in block.splitlines() if ln.strip()])
        for block in blocks[1:]
    ]
    pset = PolicySet(fields["delegator"], fields["resource"], policies)
    pset.validate()
    return pset


class PolicySetStore:
    """One ``<delegator>__<resource>.pset`` file per policy set.

    Writes go through a temp file and an atomic rename, so readers never
    observe a torn set.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, delegator: str, resource: str) -> Path:
        for value, what in ((delegator, "delegator"), (resource, "resource")):
            _check_id(value, what)
            if "__" in value:
                raise ValidationError(f"{what} id may not contain '__': {value!r}")
        return self.root / f"{delegator}__{resource}.pset"

    def store(self, pset: PolicySet) -> None:
        path = self._path(pset.delegator, pset.resource)
        payload = serialize_policy_set(pset)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    def load(self, delegator: str, resource: str) -> PolicySet:
        path = self._path(delegator, resource)
        if not path.exists():
            raise NotFoundError(f"no policy set for ({delegator!r}, {resource!r})")
        pset = parse_policy_set(path.read_text(encoding="utf-8"))
        if (pset.delegator, pset.resource) != (delegator, resource):
            raise IntegrityError(f"policy set header does not match file name {path.name!r}")
        return pset

    def exists(self, delegator: str, resource: str) -> bool:
        return self._path(delegator, resource).exists()

    def delete(self, delegator: str, resource: str) -> None:
        path = self._path(delegator, resource)
        if not path.exists():
            raise NotFoundError(f"no policy set for ({delegator!r}, {resource!r})")
        path.unlink()

    def list_pairs(self) -> list[tuple[str, str]]:
        pairs = []
        for path in sorted(self.root.glob("*.pset")):
            header = path.read_text(encoding="utf-8").splitlines()[0]
            fields = dict(
                token.partition("=")[::2] for token in header.split()[1:] if "=" in token
            )
            pairs.append((fields["delegator"], fields["resource"]))
        return sorted(pairs)

    def all_policies(self) -> list[Policy]:
        out: list[Policy] = []
        for delegator, resource in self.list_pairs():
            out.extend(self.load(delegator, resource).policies)
        return out


class MemoryPolicySetStore:
    """Drop-in, dict-backed twin of :class:`PolicySetStore` for benchmarks."""

    def __init__(self) -> None:
        self._sets: dict[tuple[str, str], PolicySet] = {}

    def store(self, pset: PolicySet) -> None:
        pset.validate()
        self._sets[(pset.delegator, pset.resource)] = PolicySet(
            pset.delegator, pset.resource, list(pset.policies)
        )

    def load(self, delegator: str, resource: str) -> PolicySet:
        try:
            found = self._sets[(delegator, resource)]
        except KeyError:
            raise NotFoundError(
                f"no policy set for ({delegator!r}, {resource!r})"
            ) from None
        return PolicySet(found.delegator, found.resource, list(found.policies))

    def exists(self, delegator: str, resource: str) -> bool:
        return (delegator, resource) in self._sets

    def delete(self, delegator: str, resource: str) -> None:
        if (delegator, resource) not in self._sets:
            raise NotFoundError(f"no policy set for ({delegator!r}, {resource!r})")
        del self._sets[(delegator, resource)]

    def list_pairs(self) -> list[tuple[str, str]]:
        return sorted(self._sets)

    def all_policies(self) -> list[Policy]:
        out: list[Policy] = []
        for pair in self.list_pairs():
            out.extend(self._sets[pair].policies)
        return out


def load_key_file(path: str | Path) -> tuple[KeyRegistry, dict[str, bytes]]:
    """Read a key fixture file.

    Lines are ``key <subject> <hex>`` and ``owner <resource> <subject>``.
    With the keyed-hash test scheme the private key equals the public key,
    so the same hex value lands in both the registry and the private map.
    """
    registry = KeyRegistry()
    private: dict[str, bytes] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "key" and len(tokens) == 3:
            try:
                secret = bytes.fromhex(tokens[2])
            except ValueError as exc:
                raise FormatError(f"line {line_no}: bad key hex") from exc
            registry.register_key(tokens[1], secret)
            private[tokens[1]] = secret
        elif tokens[0] == "owner" and len(tokens) == 3:
            registry.register_owner(tokens[1], tokens[2])
        else:
            raise FormatError(f"line {line_no}: unknown key directive {line!r}")
    return registry, private
