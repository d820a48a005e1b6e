from __future__ import annotations

import dataclasses

import pytest

from ontoguard.annotate import (
    Lexicon,
    annotate_message,
    load_extra_phrases,
    load_gazetteer,
    load_message,
    load_stopwords,
)
from ontoguard.bench import (
    BenchmarkConfig,
    annotation_stats,
    generate_workload,
    run_baseline,
    run_benchmark,
)
from ontoguard.delegation import (
    AccessRequest,
    DecisionOutcome,
    DelegationEngine,
    DenyReason,
)
from ontoguard.errors import ValidationError
from ontoguard.policy import (
    PolicyDecision,
    PolicyKind,
    PolicySet,
    canonical_encode,
    verify_signature,
)
from ontoguard.taxonomy import load_taxonomy


def _engine(workload):
    return DelegationEngine(
        workload.ontology,
        workload.store,
        workload.registry,
        workload.scheme,
        workload.private_keys,
        max_level=workload.max_level,
    )


# --- workload generation ---------------------------------------------------------


def test_workload_is_deterministic():
    a = generate_workload(7, 40, 4)
    b = generate_workload(7, 40, 4)
    assert [canonical_encode(p) for p in a.policies] == [
        canonical_encode(p) for p in b.policies
    ]
    assert [p.owner_signature for p in a.policies] == [
        p.owner_signature for p in b.policies
    ]
    c = generate_workload(8, 40, 4)
    assert [canonical_encode(p) for p in a.policies] != [
        canonical_encode(p) for p in c.policies
    ]


def test_workload_size_and_requester_connectivity():
    for N, n in [(10, 5), (37, 3), (100, 0), (8, 4)]:
        workload = generate_workload(3, N, n)
        assert len(workload.policies) == N
        mine = [
            p
            for p in workload.policies
            if p.delegatee == workload.request.requester
        ]
        assert len(mine) == n
        assert len({p.issuer for p in mine}) == n


def test_workload_infeasible_parameters():
    with pytest.raises(ValidationError):
        generate_workload(1, 5, 3)
    with pytest.raises(ValidationError):
        generate_workload(1, 10, 5, l=0)


def test_workload_chains_respect_depth_limit():
    workload = generate_workload(11, 60, 2, l=5)
    by_resource: dict[str, int] = {}
    for policy in workload.policies:
        if policy.resource.startswith("res-f-"):
            by_resource[policy.resource] = by_resource.get(policy.resource, 0) + 1
    assert by_resource and all(1 <= depth <= 4 for depth in by_resource.values())
    # every owner-signed entry policy verifies
    for policy in workload.policies:
        if policy.issuer == "owner-0":
            assert verify_signature(policy, workload.registry, workload.scheme)


def test_unconnected_requester_denies_everywhere():
    workload = generate_workload(2, 12, 0)
    engine = _engine(workload)
    decision = engine.access_request(workload.request)
    assert decision.outcome is DecisionOutcome.DENY
    assert decision.reason is DenyReason.NO_POLICY
    baseline_decision, evals, _ = run_baseline(
        workload.request, workload.policies, workload.registry, workload.scheme
    )
    assert baseline_decision.outcome is DecisionOutcome.DENY
    assert baseline_decision.reason is DenyReason.NO_POLICY
    assert evals == 0


# --- worked cost example -----------------------------------------------------------


def test_worked_example_twenty_milliseconds():
    workload = generate_workload(1, 10, 5)
    decision, evals, model_ms = run_baseline(
        workload.request, workload.policies, workload.registry, workload.scheme, 0.4
    )
    assert decision.outcome is DecisionOutcome.GRANT
    assert evals == 50
    assert model_ms == pytest.approx(20.0)


def test_workflow_count_is_constant_in_database_size():
    counts = set()
    for N in (10, 100, 1000):
        workload = generate_workload(1, N, 5)
        engine = _engine(workload)
        counts.add(engine.count_policy_evaluations(workload.request))
    assert counts == {6}  # n candidates plus one chain hop


def test_baseline_count_is_linear_in_database_size():
    evals = {}
    for N in (10, 100, 1000):
        workload = generate_workload(1, N, 5)
        _, count, _ = run_baseline(
            workload.request, workload.policies, workload.registry, workload.scheme
        )
        evals[N] = count
    assert evals == {10: 50, 100: 500, 1000: 5000}


# --- cross-engine equivalence -------------------------------------------------------


def _verify_chain_oracle(workload, request, decision):
    """Re-verify a granted chain hop by hop, straight off the policy list."""
    chain = decision.chain
    owner = workload.registry.owner_of(request.resource)
    assert chain and chain[-1] == owner
    holder = request.requester
    action = request.action
    for position, issuer in enumerate(chain):
        policy = next(
            p
            for p in workload.policies
            if p.issuer == issuer
            and p.delegatee == holder
            and p.resource == request.resource
        )
        assert policy.decision is PolicyDecision.PERMIT
        if position == 0:
            assert action in policy.rule_actions
        else:
            assert policy.kind is PolicyKind.ADMINISTRATIVE
            assert "delegate" in policy.rule_actions
        if issuer == owner:
            assert verify_signature(policy, workload.registry, workload.scheme)
        holder = issuer


def test_engines_agree_on_randomized_workloads():
    checked = grants = 0
    for seed in range(12):
        N = 6 + (seed * 5) % 19
        n = seed % (N // 2 + 1) if N >= 2 else 0
        workload = generate_workload(seed, N, min(n, 4))
        engine = _engine(workload)
        subjects = sorted(workload.ontology.instances)
        resources = [s for s in subjects if s.startswith("res")]
        subjects = [s for s in subjects if not s.startswith("res")]
        for requester in subjects:
            for resource in resources:
                for action in ("read", "delegate"):
                    request = AccessRequest(requester, resource, action)
                    mine = engine.access_request(request)
                    theirs, _, _ = run_baseline(
                        request, workload.policies, workload.registry, workload.scheme
                    )
                    assert (mine.outcome, mine.reason) == (
                        theirs.outcome,
                        theirs.reason,
                    ), (seed, requester, resource, action)
                    checked += 1
                    if mine.outcome is DecisionOutcome.GRANT:
                        assert mine.chain == theirs.chain
                        _verify_chain_oracle(workload, request, mine)
                        grants += 1
    assert checked > 1000
    assert grants > 50


def test_engines_agree_after_tampering():
    workload = generate_workload(5, 2, 1)
    [admin] = [p for p in workload.policies if p.issuer == "owner-0"]
    flipped = bytearray(admin.owner_signature)
    flipped[0] ^= 0x01
    tampered = dataclasses.replace(admin, owner_signature=bytes(flipped))
    workload.store.store(PolicySet("owner-0", "res-0", [tampered]))
    policies = tuple(workload.store.all_policies())

    engine = _engine(workload)
    mine = engine.access_request(workload.request)
    theirs, _, _ = run_baseline(
        workload.request, policies, workload.registry, workload.scheme
    )
    assert mine.outcome is DecisionOutcome.DENY
    assert (mine.outcome, mine.reason) == (theirs.outcome, theirs.reason)
    assert mine.reason is DenyReason.BAD_SIGNATURE

    # a re-signed field edit must fail too: the content no longer matches
    relevelled = dataclasses.replace(admin, delegation_level=3)
    workload.store.store(PolicySet("owner-0", "res-0", [relevelled]))
    policies = tuple(workload.store.all_policies())
    engine = _engine(workload)
    mine = engine.access_request(workload.request)
    theirs, _, _ = run_baseline(
        workload.request, policies, workload.registry, workload.scheme
    )
    assert mine.outcome is DecisionOutcome.DENY
    assert (mine.outcome, mine.reason) == (theirs.outcome, theirs.reason)


# --- report ------------------------------------------------------------------------


def test_report_rows_and_determinism():
    config = BenchmarkConfig(N_values=(10, 50), n_values=(2, 5), seed=4)
    first = run_benchmark(config)
    second = run_benchmark(config)
    assert len(first.rows) == 8
    strip = lambda rows: [dataclasses.replace(r, wall_ms=0.0) for r in rows]
    assert strip(first.rows) == strip(second.rows)
    for row in first.rows:
        if row.engine == "workflow":
            assert row.policy_evaluations <= row.n + config.l
        else:
            assert row.policy_evaluations >= row.N
        assert row.model_ms == pytest.approx(
            row.policy_evaluations * config.per_policy_cost_ms
        )


def test_report_tsv_format():
    config = BenchmarkConfig(N_values=(10,), n_values=(5,))
    text = run_benchmark(config).to_tsv()
    lines = text.splitlines()
    assert lines[0] == "N\tn\tengine\tevals\tmodel_ms\twall_ms"
    assert lines[1].startswith("10\t5\tworkflow\t6\t2.4\t")
    assert lines[2].startswith("10\t5\tbaseline\t50\t20\t")


def test_config_validation():
    with pytest.raises(ValidationError):
        BenchmarkConfig(repetitions=2)
    with pytest.raises(ValidationError):
        BenchmarkConfig(N_values=())
    with pytest.raises(ValidationError):
        BenchmarkConfig(N_values=(0,))
    with pytest.raises(ValidationError):
        BenchmarkConfig(per_policy_cost_ms=0.0)


# --- annotation cost drivers ---------------------------------------------------------


def test_annotation_stats_counts(fixtures_dir):
    root = fixtures_dir / "health"
    store = load_taxonomy(root / "taxonomy.tax")
    annotated = annotate_message(
        load_message(root / "messages" / "msg-1.msg"),
        store,
        load_gazetteer(root / "gazetteer.txt"),
        load_stopwords(root / "stopwords.txt"),
        Lexicon.build(store, load_extra_phrases(root / "lexicon.txt")),
    )
    stats = annotation_stats(annotated, store, ("ill_health",))
    assert stats.message_id == "msg-1"
    assert stats.noun_phrases == 8
    assert stats.senses == 6
    assert stats.branch_nodes == 15
    assert stats.lookup_ms >= 0.0
