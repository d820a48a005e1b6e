"""Access-control ontology: class hierarchies, instances, and rule inference.

An :class:`Ontology` holds three class trees (subject, object, policy),
entity instances attached to those classes, and labelled relations.
Class-level access rules written against it expand deterministically into
instance-level rules.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    CycleError,
    DuplicateIdError,
    FormatError,
    UnknownReferenceError,
    ValidationError,
)

#: Relation labels understood by the model.  ``subclass_of`` and
#: ``instance_of`` edges are materialised automatically; the rest may be
#: asserted explicitly.
RELATION_LABELS = frozenset(
    {
        "subclass_of",
        "instance_of",
        "has",
        "defines",
        "written_for",
        "access_rights_on",
    }
)


class RoleTag(str, Enum):
    """Which abstract tree a class belongs to."""

    SUBJECT = "subject"
    OBJECT = "object"
    POLICY = "policy"
    NEUTRAL = "neutral"


class RuleAction(str, Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class OntClass:
    id: str
    label: str
    role_tag: RoleTag
    parents: frozenset[str] = frozenset()


@dataclass(frozen=True)
class EntityInstance:
    id: str
    class_id: str
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AccessRule:
    """A rule whose subject/object side may name a class or an instance.

    Attribute predicates are equality constraints evaluated against
    instance attributes; an instance missing a constrained attribute never
    matches.
    """

    subject_ref: str
    object_ref: str
    action: RuleAction
    subject_attrs: tuple[tuple[str, str], ...] = ()
    object_attrs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Ontology:
    classes: Mapping[str, OntClass]
    instances: Mapping[str, EntityInstance]
    relations: frozenset[tuple[str, str, str]]

    @staticmethod
    def empty() -> "Ontology":
        return Ontology(classes={}, instances={}, relations=frozenset())


def _known_ids(onto: Ontology) -> frozenset[str]:
    return frozenset(onto.classes) | frozenset(onto.instances)


def _root_roles(onto: Ontology, class_id: str, seen: set[str]) -> set[RoleTag]:
    """Role tags of all parentless ancestors reachable from ``class_id``."""
    if class_id in seen:
        raise CycleError(f"class hierarchy cycle through {class_id!r}")
    seen.add(class_id)
    cls = onto.classes[class_id]
    if not cls.parents:
        return {cls.role_tag}
    roles: set[RoleTag] = set()
    for parent in cls.parents:
        roles |= _root_roles(onto, parent, set(seen))
    return roles


def define_class(onto: Ontology, cls: OntClass) -> Ontology:
    """Return a new ontology with ``cls`` added.

    Parents must already exist, the id must be fresh, and a non-neutral
    class must sit under the single abstract root matching its role tag.
    """
    if cls.id in _known_ids(onto):
        raise DuplicateIdError(f"id already defined: {cls.id!r}")
    if not cls.label:
        raise ValidationError("class label must be non-empty")
    for parent in cls.parents:
        if parent == cls.id:
            raise CycleError(f"class {cls.id!r} cannot be its own parent")
        if parent not in onto.classes:
            raise UnknownReferenceError(f"unknown parent class: {parent!r}")

    classes = dict(onto.classes)
    classes[cls.id] = cls
    candidate = replace(onto, classes=classes)

    if cls.role_tag is not RoleTag.NEUTRAL:
        if not cls.parents:
            # This is an abstract root; there may be only one per role.
            for other in onto.classes.values():
                if not other.parents and other.role_tag is cls.role_tag:
                    raise ValidationError(
                        f"role {cls.role_tag.value!r} already has root {other.id!r}"
                    )
        else:
            roles = _root_roles(candidate, cls.id, set())
            if roles != {cls.role_tag}:
                raise ValidationError(
                    f"class {cls.id!r} tagged {cls.role_tag.value!r} but reaches "
                    f"roots {sorted(r.value for r in roles)}"
                )

    relations = set(onto.relations)
    for parent in cls.parents:
        relations.add((cls.id, "subclass_of", parent))
    return replace(candidate, relations=frozenset(relations))


def define_instance(onto: Ontology, inst: EntityInstance) -> Ontology:
    if inst.id in _known_ids(onto):
        raise DuplicateIdError(f"id already defined: {inst.id!r}")
    if inst.class_id not in onto.classes:
        raise UnknownReferenceError(f"unknown class: {inst.class_id!r}")
    instances = dict(onto.instances)
    instances[inst.id] = inst
    relations = set(onto.relations)
    relations.add((inst.id, "instance_of", inst.class_id))
    return replace(onto, instances=instances, relations=frozenset(relations))


def add_relation(onto: Ontology, src: str, label: str, dst: str) -> Ontology:
    if label not in RELATION_LABELS:
        raise ValidationError(f"unknown relation label: {label!r}")
    known = _known_ids(onto)
    for end in (src, dst):
        if end not in known:
            raise UnknownReferenceError(f"unknown relation endpoint: {end!r}")
    return replace(onto, relations=onto.relations | {(src, label, dst)})


def subclasses_of(onto: Ontology, class_id: str) -> frozenset[str]:
    """All classes at or below ``class_id`` (including itself)."""
    if class_id not in onto.classes:
        raise UnknownReferenceError(f"unknown class: {class_id!r}")
    children: dict[str, set[str]] = {}
    for cls in onto.classes.values():
        for parent in cls.parents:
            children.setdefault(parent, set()).add(cls.id)
    out: set[str] = set()
    stack = [class_id]
    while stack:
        current = stack.pop()
        if current in out:
            continue
        out.add(current)
        stack.extend(children.get(current, ()))
    return frozenset(out)


def descendants_of(onto: Ontology, class_id: str) -> frozenset[str]:
    """Instance ids attached to ``class_id`` or any of its subclasses."""
    classes = subclasses_of(onto, class_id)
    return frozenset(i.id for i in onto.instances.values() if i.class_id in classes)


def _attrs_match(inst: EntityInstance, constraints: tuple[tuple[str, str], ...]) -> bool:
    return all(inst.attributes.get(name) == value for name, value in constraints)


def _resolve_side(
    onto: Ontology, ref: str, constraints: tuple[tuple[str, str], ...]
) -> list[str]:
    """Instance ids a rule side expands to, sorted."""
    if ref in onto.instances:
        inst = onto.instances[ref]
        return [ref] if _attrs_match(inst, constraints) else []
    if ref in onto.classes:
        ids = descendants_of(onto, ref)
        return sorted(
            i for i in ids if _attrs_match(onto.instances[i], constraints)
        )
    raise UnknownReferenceError(f"rule reference {ref!r} is neither class nor instance")


def infer_instance_rules(onto: Ontology, rule: AccessRule) -> tuple[AccessRule, ...]:
    """Expand a class-level rule into instance-level rules.

    The result is the cross product of matching subject and object
    instances, sorted by (subject id, object id).
    """
    subjects = _resolve_side(onto, rule.subject_ref, rule.subject_attrs)
    objects = _resolve_side(onto, rule.object_ref, rule.object_attrs)
    return tuple(
        AccessRule(subject_ref=s, object_ref=o, action=rule.action)
        for s in subjects
        for o in objects
    )


def evaluate_access(
    onto: Ontology, rules: Sequence[AccessRule], subject_id: str, object_id: str
) -> RuleAction:
    """Decide subject-on-object access under deny-overrides.

    Classes named by the rules are re-expanded at call time, so rules keep
    tracking hierarchy changes.  No applicable rule means deny.
    """
    for ref, kind in ((subject_id, "subject"), (object_id, "object")):
        if ref not in onto.instances:
            raise UnknownReferenceError(f"unknown {kind} instance: {ref!r}")

    def applies(ref: str, constraints: tuple[tuple[str, str], ...], inst_id: str) -> bool:
        inst = onto.instances[inst_id]
        if ref in onto.instances:
            return ref == inst_id and _attrs_match(inst, constraints)
        if ref in onto.classes:
            return inst.class_id in subclasses_of(onto, ref) and _attrs_match(
                inst, constraints
            )
        raise UnknownReferenceError(f"rule reference {ref!r} is neither class nor instance")

    verdict: RuleAction | None = None
    for rule in rules:
        if not applies(rule.subject_ref, rule.subject_attrs, subject_id):
            continue
        if not applies(rule.object_ref, rule.object_attrs, object_id):
            continue
        if rule.action is RuleAction.DENY:
            return RuleAction.DENY
        verdict = RuleAction.ALLOW
    return verdict if verdict is not None else RuleAction.DENY


# ---------------------------------------------------------------------------
# fixture file format
#
#   class <id> "<label>" role=<subject|object|policy|neutral> parents=<id,...>
#   instance <id> class=<id> attrs=<k=v;k=v>
#   relation <src> <label> <dst>
#
# Blank lines and lines starting with '#' are ignored.  Classes must appear
# before anything that references them.
# ---------------------------------------------------------------------------


def _split_kv(token: str, line_no: int) -> tuple[str, str]:
    if "=" not in token:
        raise FormatError(f"line {line_no}: expected key=value, got {token!r}")
    key, _, value = token.partition("=")
    return key, value


def _csv(value: str) -> list[str]:
    return [part for part in value.split(",") if part]


def parse_ontology(text: str) -> Ontology:
    onto = Ontology.empty()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise FormatError(f"line {line_no}: {exc}") from exc
        kind, rest = tokens[0], tokens[1:]
        if kind == "class":
            if len(rest) != 4:
                raise FormatError(f"line {line_no}: malformed class line")
            cid, label = rest[0], rest[1]
            fields = dict(_split_kv(token, line_no) for token in rest[2:])
            if set(fields) != {"role", "parents"}:
                raise FormatError(f"line {line_no}: class needs role= and parents=")
            try:
                role = RoleTag(fields["role"])
            except ValueError as exc:
                raise FormatError(f"line {line_no}: bad role {fields['role']!r}") from exc
            cls = OntClass(
                id=cid,
                label=label,
                role_tag=role,
                parents=frozenset(_csv(fields["parents"])),
            )
            onto = define_class(onto, cls)
        elif kind == "instance":
            if len(rest) < 2:
                raise FormatError(f"line {line_no}: malformed instance line")
            iid = rest[0]
            fields = dict(_split_kv(token, line_no) for token in rest[1:])
            if "class" not in fields:
                raise FormatError(f"line {line_no}: instance needs class=")
            attrs: dict[str, str] = {}
            for pair in fields.get("attrs", "").split(";"):
                if not pair:
                    continue
                name, _, value = pair.partition("=")
                if not name or not value:
                    raise FormatError(f"line {line_no}: bad attribute {pair!r}")
                attrs[name] = value
            onto = define_instance(
                onto, EntityInstance(id=iid, class_id=fields["class"], attributes=attrs)
            )
        elif kind == "relation":
            if len(rest) != 3:
                raise FormatError(f"line {line_no}: malformed relation line")
            onto = add_relation(onto, rest[0], rest[1], rest[2])
        else:
            raise FormatError(f"line {line_no}: unknown directive {kind!r}")
    return onto


def load_ontology(path: str | Path) -> Ontology:
    return parse_ontology(Path(path).read_text(encoding="utf-8"))


def rules_from_args(
    subject: str,
    obj: str,
    action: str,
    subject_attrs: Iterable[str] = (),
    object_attrs: Iterable[str] = (),
) -> AccessRule:
    """Build a rule from CLI-style strings (``k=v`` attribute constraints)."""

    def parse_pairs(pairs: Iterable[str]) -> tuple[tuple[str, str], ...]:
        out = []
        for pair in pairs:
            name, sep, value = pair.partition("=")
            if not sep or not name or not value:
                raise ValidationError(f"expected k=v constraint, got {pair!r}")
            out.append((name, value))
        return tuple(out)

    try:
        act = RuleAction(action)
    except ValueError as exc:
        raise ValidationError(f"unknown rule action: {action!r}") from exc
    return AccessRule(
        subject_ref=subject,
        object_ref=obj,
        action=act,
        subject_attrs=parse_pairs(subject_attrs),
        object_attrs=parse_pairs(object_attrs),
    )
