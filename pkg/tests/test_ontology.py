from __future__ import annotations

import random

import pytest

from ontoguard.errors import (
    CycleError,
    DuplicateIdError,
    UnknownReferenceError,
    ValidationError,
)
from ontoguard.ontology import (
    AccessRule,
    EntityInstance,
    OntClass,
    Ontology,
    RoleTag,
    RuleAction,
    add_relation,
    define_class,
    define_instance,
    descendants_of,
    evaluate_access,
    infer_instance_rules,
    load_ontology,
    subclasses_of,
)


@pytest.fixture(scope="module")
def osn(fixtures_dir):
    return load_ontology(fixtures_dir / "alice_osn.onto")


@pytest.fixture(scope="module")
def cloud(fixtures_dir):
    return load_ontology(fixtures_dir / "google_cloud.onto")


# --- independent expansion oracle -----------------------------------------


def _closure(onto: Ontology, class_id: str) -> set[str]:
    out = {class_id}
    changed = True
    while changed:
        changed = False
        for cls in onto.classes.values():
            if cls.id not in out and cls.parents & out:
                out.add(cls.id)
                changed = True
    return out


def _oracle_expand(onto: Ontology, rule: AccessRule) -> set[tuple[str, str]]:
    def side(ref, constraints):
        matches = set()
        for inst in onto.instances.values():
            if ref in onto.instances:
                in_scope = inst.id == ref
            else:
                in_scope = inst.class_id in _closure(onto, ref)
            if in_scope and all(
                inst.attributes.get(k) == v for k, v in constraints
            ):
                matches.add(inst.id)
        return matches

    return {
        (s, o)
        for s in side(rule.subject_ref, rule.subject_attrs)
        for o in side(rule.object_ref, rule.object_attrs)
    }


# --- golden expansions ------------------------------------------------------


def test_family_friends_rule_expands_to_bob_only(osn):
    rule = AccessRule("family_friends", "resource", RuleAction.ALLOW)
    inferred = infer_instance_rules(osn, rule)
    assert [(r.subject_ref, r.object_ref) for r in inferred] == [
        ("Bob", "college.jpg"),
        ("Bob", "family.jpg"),
        ("Bob", "festival.avi"),
        ("Bob", "party.avi"),
    ]
    assert all(r.action is RuleAction.ALLOW for r in inferred)


def test_instance_subject_rule_expands_objects_only(osn):
    rule = AccessRule("Alex", "photo", RuleAction.ALLOW)
    inferred = infer_instance_rules(osn, rule)
    assert [(r.subject_ref, r.object_ref) for r in inferred] == [
        ("Alex", "college.jpg"),
        ("Alex", "family.jpg"),
    ]


def test_saas_rule_expands_to_six(cloud):
    rule = AccessRule("saas", "resource", RuleAction.ALLOW)
    inferred = infer_instance_rules(cloud, rule)
    assert len(inferred) == 6
    assert [(r.subject_ref, r.object_ref) for r in inferred] == [
        ("Gmail", "e-mail_applications"),
        ("Gmail", "e-mail_server"),
        ("Gmail", "storage_drive"),
        ("GmailEdu", "e-mail_applications"),
        ("GmailEdu", "e-mail_server"),
        ("GmailEdu", "storage_drive"),
    ]


def test_attribute_filtered_rule_selects_education_pairs(cloud):
    rule = AccessRule(
        "user",
        "cloud_service",
        RuleAction.ALLOW,
        subject_attrs=(("U_Type", "Education"),),
        object_attrs=(("S_Type", "Education"),),
    )
    inferred = infer_instance_rules(cloud, rule)
    assert [(r.subject_ref, r.object_ref) for r in inferred] == [
        ("Institute-1", "GmailEdu"),
        ("Institute-1", "Google_DriveEdu"),
    ]


def test_inference_matches_bruteforce_oracle(osn, cloud):
    rules = [
        AccessRule("family_friends", "resource", RuleAction.ALLOW),
        AccessRule("contact", "video", RuleAction.DENY),
        AccessRule("Alex", "photo", RuleAction.ALLOW),
        AccessRule("subject", "object", RuleAction.ALLOW),
    ]
    for rule in rules:
        got = {(r.subject_ref, r.object_ref) for r in infer_instance_rules(osn, rule)}
        assert got == _oracle_expand(osn, rule)
    cloud_rules = [
        AccessRule("saas", "resource", RuleAction.ALLOW),
        AccessRule(
            "user",
            "cloud_service",
            RuleAction.ALLOW,
            subject_attrs=(("U_Type", "Education"),),
            object_attrs=(("S_Type", "Education"),),
        ),
        AccessRule("tenant", "cloud_service", RuleAction.ALLOW),
        AccessRule("csp", "hardware_resource", RuleAction.DENY),
    ]
    for rule in cloud_rules:
        got = {(r.subject_ref, r.object_ref) for r in infer_instance_rules(cloud, rule)}
        assert got == _oracle_expand(cloud, rule)


def test_inference_on_random_ontology_matches_oracle():
    rng = random.Random(7)
    onto = Ontology.empty()
    onto = define_class(onto, OntClass("s", "S", RoleTag.SUBJECT))
    onto = define_class(onto, OntClass("o", "O", RoleTag.OBJECT))
    onto = define_class(onto, OntClass("p", "P", RoleTag.POLICY))
    subject_classes, object_classes = ["s"], ["o"]
    for i in range(12):
        pool = subject_classes if i % 2 == 0 else object_classes
        parents = frozenset(rng.sample(pool, k=min(len(pool), rng.randint(1, 2))))
        role = RoleTag.SUBJECT if i % 2 == 0 else RoleTag.OBJECT
        cid = f"c{i}"
        onto = define_class(onto, OntClass(cid, cid.upper(), role, parents))
        pool.append(cid)
    for i in range(40):
        pool = subject_classes if i % 2 == 0 else object_classes
        attrs = {"tier": rng.choice(["a", "b"])} if rng.random() < 0.5 else {}
        onto = define_instance(
            onto, EntityInstance(f"i{i}", rng.choice(pool), attrs)
        )
    for _ in range(30):
        rule = AccessRule(
            subject_ref=rng.choice(subject_classes),
            object_ref=rng.choice(object_classes),
            action=rng.choice([RuleAction.ALLOW, RuleAction.DENY]),
            subject_attrs=(("tier", "a"),) if rng.random() < 0.4 else (),
        )
        got = infer_instance_rules(onto, rule)
        assert {(r.subject_ref, r.object_ref) for r in got} == _oracle_expand(onto, rule)
        # output ordering is canonical
        assert list(got) == sorted(got, key=lambda r: (r.subject_ref, r.object_ref))


# --- hierarchy behaviour ----------------------------------------------------


def test_descendants_monotone_along_every_edge(cloud, osn):
    for onto in (cloud, osn):
        for cls in onto.classes.values():
            for parent in cls.parents:
                assert descendants_of(onto, parent) >= descendants_of(onto, cls.id)


def test_subclasses_includes_self(cloud):
    assert "cloud_service" in subclasses_of(cloud, "cloud_service")
    assert subclasses_of(cloud, "saas") == {"saas"}


def test_evaluation_tracks_hierarchy_changes(osn):
    rules = [AccessRule("family_friends", "resource", RuleAction.ALLOW)]
    assert evaluate_access(osn, rules, "Alex", "college.jpg") is RuleAction.DENY
    grown = define_instance(
        osn, EntityInstance("Eve", "family_friends", {})
    )
    assert evaluate_access(grown, rules, "Eve", "college.jpg") is RuleAction.ALLOW
    # the original Allow keeps holding
    assert evaluate_access(grown, rules, "Bob", "party.avi") is RuleAction.ALLOW


def test_deny_overrides_allow(osn):
    rules = [
        AccessRule("contact", "resource", RuleAction.ALLOW),
        AccessRule("Bob", "family.jpg", RuleAction.DENY),
    ]
    assert evaluate_access(osn, rules, "Bob", "family.jpg") is RuleAction.DENY
    assert evaluate_access(osn, rules, "Bob", "college.jpg") is RuleAction.ALLOW
    # deny wins regardless of rule order
    assert evaluate_access(osn, rules[::-1], "Bob", "family.jpg") is RuleAction.DENY


def test_no_applicable_rule_denies(osn):
    assert evaluate_access(osn, [], "Bob", "family.jpg") is RuleAction.DENY
    rules = [AccessRule("strangers", "resource", RuleAction.ALLOW)]
    assert evaluate_access(osn, rules, "Bob", "family.jpg") is RuleAction.DENY


def test_evaluate_rejects_unknown_instances(osn):
    with pytest.raises(UnknownReferenceError):
        evaluate_access(osn, [], "nobody", "family.jpg")
    with pytest.raises(UnknownReferenceError):
        evaluate_access(osn, [], "Bob", "missing.jpg")


# --- construction errors ----------------------------------------------------


def test_duplicate_ids_rejected(osn):
    with pytest.raises(DuplicateIdError):
        define_class(osn, OntClass("photo", "Photo again", RoleTag.OBJECT, frozenset({"resource"})))
    with pytest.raises(DuplicateIdError):
        define_instance(osn, EntityInstance("Bob", "strangers", {}))
    # instance ids and class ids share one namespace
    with pytest.raises(DuplicateIdError):
        define_class(osn, OntClass("Bob", "Bob class", RoleTag.SUBJECT, frozenset({"subject"})))


def test_unknown_parent_rejected(osn):
    with pytest.raises(UnknownReferenceError):
        define_class(osn, OntClass("x", "X", RoleTag.SUBJECT, frozenset({"ghost"})))


def test_self_parent_rejected(osn):
    with pytest.raises(CycleError):
        define_class(osn, OntClass("loop", "Loop", RoleTag.SUBJECT, frozenset({"loop"})))


def test_role_must_match_reachable_root(osn):
    with pytest.raises(ValidationError):
        define_class(osn, OntClass("odd", "Odd", RoleTag.OBJECT, frozenset({"contact"})))
    with pytest.raises(ValidationError):
        # a second subject root is not allowed
        define_class(osn, OntClass("subject2", "Subject too", RoleTag.SUBJECT))


def test_neutral_classes_are_exempt_from_role_check(osn):
    grown = define_class(osn, OntClass("note", "Annotation helper", RoleTag.NEUTRAL))
    grown = define_class(
        grown, OntClass("note2", "Nested helper", RoleTag.NEUTRAL, frozenset({"contact"}))
    )
    assert grown.classes["note2"].role_tag is RoleTag.NEUTRAL


def test_relation_endpoints_and_labels_checked(osn):
    with pytest.raises(ValidationError):
        add_relation(osn, "Bob", "likes", "family.jpg")
    with pytest.raises(UnknownReferenceError):
        add_relation(osn, "Bob", "has", "ghost")
    grown = add_relation(osn, "Bob", "access_rights_on", "family.jpg")
    assert ("Bob", "access_rights_on", "family.jpg") in grown.relations
