from __future__ import annotations

import math
import random
import timeit
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontoguard.annotate import (
    Annotation,
    AnnotatedMessage,
    DistanceMatrix,
    Lexicon,
    Message,
    Span,
    annotate_message,
    detect_named_entities,
    disambiguate,
    extract_noun_phrases,
    load_extra_phrases,
    load_gazetteer,
    load_message,
    load_stopwords,
    normalize_phrase,
    parse_annotated,
    semantic_distance,
    serialize_annotated,
)
from ontoguard.errors import FormatError, NotFoundError, ValidationError
from ontoguard.taxonomy import Concept, Sense, TaxonomyStore, load_taxonomy


@pytest.fixture(scope="module")
def health(fixtures_dir):
    return load_taxonomy(fixtures_dir / "health" / "taxonomy.tax")


@pytest.fixture(scope="module")
def pipeline(fixtures_dir, health):
    root = fixtures_dir / "health"
    return dict(
        store=health,
        gazetteer=load_gazetteer(root / "gazetteer.txt"),
        stopwords=load_stopwords(root / "stopwords.txt"),
        lexicon=Lexicon.build(health, load_extra_phrases(root / "lexicon.txt")),
    )


def _load(fixtures_dir, name):
    return load_message(fixtures_dir / "health" / "messages" / f"{name}.msg")


# --- named entities -----------------------------------------------------------


def test_entity_detection_covers_all_pattern_categories(fixtures_dir, pipeline):
    message = _load(fixtures_dir, "msg-3")
    spans = detect_named_entities(message.text, pipeline["gazetteer"])
    got = [(s.start, s.end, s.kind, message.text[s.start : s.end]) for s in spans]
    assert got == [
        (0, 5, "NE_Person", "Alice"),
        (10, 13, "NE_Person", "Bob"),
        (17, 23, "NE_Location", "Berlin"),
        (27, 37, "NE_Date", "2015-03-14"),
        (47, 50, "NE_Money", "$50"),
        (54, 57, "NE_Percent", "10%"),
    ]


def test_entity_detection_times_and_slash_dates():
    spans = detect_named_entities("Call at 9:30 am or 14:05, not on 3/14/2015.")
    got = {(s.kind, s.start, s.end) for s in spans}
    assert ("NE_Time", 8, 15) in got
    assert ("NE_Time", 19, 24) in got
    assert ("NE_Date", 33, 42) in got


def test_longer_entity_match_wins_overlap():
    gazetteer = (("Organization", "Acme Corp"), ("Person", "Acme"))
    spans = detect_named_entities("Acme Corp called.", gazetteer)
    assert [(s.start, s.end, s.kind) for s in spans] == [(0, 9, "NE_Organization")]


def test_gazetteer_matching_is_case_insensitive_and_word_bounded():
    gazetteer = (("Location", "Berlin"),)
    spans = detect_named_entities("berlin and Berliner", gazetteer)
    assert [(s.start, s.end) for s in spans] == [(0, 6)]


# --- noun phrases ---------------------------------------------------------------


def test_noun_phrases_of_the_sample_message(fixtures_dir, pipeline):
    message = _load(fixtures_dir, "msg-1")
    spans = extract_noun_phrases(
        message.text, pipeline["stopwords"], pipeline["lexicon"]
    )
    surfaces = [message.text[s.start : s.end] for s in spans]
    assert surfaces == ["Hiv", "AIDS", "thing", "life", "thing", "virus", "people", "leper"]


def test_all_stopword_text_has_no_phrases(pipeline):
    spans = extract_noun_phrases(
        "And then you are not.", pipeline["stopwords"], pipeline["lexicon"]
    )
    assert spans == []


def test_multiword_phrases_match_longest_first(pipeline):
    text = "Old life support systems hum."
    spans = extract_noun_phrases(text, pipeline["stopwords"], pipeline["lexicon"])
    assert [(text[s.start : s.end]) for s in spans] == ["life support systems"]


def test_phrases_do_not_cross_entity_spans(pipeline):
    text = "Berlin life goes on."
    blocked = detect_named_entities(text, (("Location", "Berlin"),))
    spans = extract_noun_phrases(text, pipeline["stopwords"], pipeline["lexicon"], blocked)
    assert [text[s.start : s.end] for s in spans] == ["life"]


def test_normalize_phrase_strips_punctuation_and_case():
    assert normalize_phrase("People (magazine)") == "people magazine"
    assert normalize_phrase("  Life  Support   SYSTEMS ") == "life support systems"


# --- semantic distance -----------------------------------------------------------


def _sense(cid, *ancestors):
    return Sense(cid, frozenset(ancestors) | {cid})


def test_distance_golden_values():
    a = _sense("a", "x", "y", "z")
    same = Sense("a", a.ancestors)
    assert semantic_distance(a, same) == 0.0
    # half overlap: |union|=4, |difference|=2 -> log2(1.5)
    b1 = _sense("b1", "r", "s")
    b2 = _sense("b2", "r", "s")
    assert semantic_distance(b1, b2) == pytest.approx(math.log2(1.5))
    # fully disjoint -> exactly 1
    c = _sense("c", "q")
    assert semantic_distance(a, c) == 1.0


def test_distance_requires_ancestors():
    with pytest.raises(ValidationError):
        semantic_distance(Sense("a", frozenset()), _sense("b", "x"))


_ANCESTOR_SETS = st.frozensets(
    st.sampled_from([f"n{i}" for i in range(12)]), min_size=1, max_size=8
)


@given(_ANCESTOR_SETS, _ANCESTOR_SETS)
def test_distance_properties(xs, ys):
    a, b = Sense("a", xs), Sense("b", ys)
    d = semantic_distance(a, b)
    assert d == semantic_distance(b, a)
    assert 0.0 <= d <= 1.0
    if xs == ys:
        assert d == 0.0
    else:
        assert d > 0.0
    assert (d == 1.0) == (not (xs & ys))


@given(_ANCESTOR_SETS, _ANCESTOR_SETS, _ANCESTOR_SETS)
def test_distance_grows_as_overlap_shrinks(shared, only_a, only_b):
    # moving an element out of the overlap never decreases the distance
    a_full = Sense("a", shared | only_a)
    b_full = Sense("b", shared | only_b)
    d_full = semantic_distance(a_full, b_full)
    smaller = frozenset(sorted(shared)[1:])
    if not smaller and not only_a:
        return
    a_less = Sense("a", smaller | only_a) if (smaller | only_a) else None
    if a_less is None:
        return
    d_less = semantic_distance(a_less, b_full)
    if not (smaller | only_a) & (shared | only_b):
        assert d_less == 1.0
    # no strict inequality claim in general (set sizes shift), only bounds
    assert 0.0 <= d_less <= 1.0


def test_distance_matrix_lookup_and_errors():
    a, b = _sense("a", "x"), _sense("b", "y")
    matrix = DistanceMatrix([a, b])
    assert matrix.get("a", "b") == matrix.get("b", "a") == 1.0
    assert matrix.get("a", "a") == 0.0
    with pytest.raises(NotFoundError):
        matrix.get("a", "ghost")
    with pytest.raises(ValidationError):
        DistanceMatrix([a, Sense("a", frozenset({"a", "different"}))])


# --- disambiguation ---------------------------------------------------------------


def test_single_phrase_takes_lexicographically_first_sense():
    senses = [_sense("zz", "r"), _sense("aa", "r")]
    assert disambiguate([senses]) == (next(s for s in senses if s.concept_id == "aa"),)


def test_empty_group_rejected():
    with pytest.raises(ValidationError):
        disambiguate([[_sense("a", "x")], []])


def test_related_senses_attract_each_other():
    apple_fruit = _sense("apple", "fruit", "plant")
    apple_company = _sense("apple_inc", "company")
    pear_fruit = _sense("pear", "fruit", "plant")
    chosen = disambiguate([[apple_company, apple_fruit], [pear_fruit]])
    assert [s.concept_id for s in chosen] == ["apple", "pear"]


def test_sample_message_argmin_matches_expected_senses(health):
    phrases = ["aids", "hiv", "leper", "life", "people", "virus"]
    groups = [health.senses_of(p) for p in phrases]
    assert math.prod(len(g) for g in groups) == 3200
    chosen = disambiguate(groups)
    assert [s.concept_id for s in chosen] == [
        "aids",
        "hiv",
        "leprosy",
        "life",
        "humans",
        "viruses",
    ]


def _random_instance(seed):
    rng = random.Random(seed)
    concepts = [Concept("c000", "c000", frozenset())]
    for i in range(1, rng.randint(12, 30)):
        k = min(rng.randint(0, 2), len(concepts))
        parents = frozenset(c.id for c in rng.sample(concepts, k)) if k else frozenset()
        concepts.append(Concept(f"c{i:03d}", f"c{i:03d}", parents))
    store = TaxonomyStore(concepts, [])
    ids = [c.id for c in concepts]
    groups = []
    for _ in range(rng.randint(2, 4)):
        members = rng.sample(ids, min(rng.randint(1, 5), len(ids)))
        groups.append([Sense(m, store.ancestors(m)) for m in members])
    return groups


def _oracle_best(groups, matrix):
    best = None
    for combo in product(*[sorted(g, key=lambda s: s.concept_id) for g in groups]):
        score = sum(
            matrix.get(combo[i].concept_id, combo[j].concept_id)
            for i in range(len(combo))
            for j in range(i + 1, len(combo))
        )
        key = (score, tuple(s.concept_id for s in combo))
        if best is None or key < best[0]:
            best = (key, combo)
    return best[1]


def test_exhaustive_matches_independent_enumeration_oracle():
    for seed in range(25):
        groups = _random_instance(seed)
        matrix = DistanceMatrix(s for g in groups for s in g)
        expected = _oracle_best(groups, matrix)
        got = disambiguate(groups)
        assert [s.concept_id for s in got] == [s.concept_id for s in expected], seed


def test_greedy_equals_exhaustive_on_small_instances():
    # cutoff=1 forces the greedy path on every instance
    for seed in range(60):
        groups = _random_instance(seed)
        exhaustive = disambiguate(groups)
        greedy = disambiguate(groups, cutoff=1)
        assert [s.concept_id for s in greedy] == [
            s.concept_id for s in exhaustive
        ], seed


def test_disambiguation_is_deterministic(health):
    groups = [health.senses_of(p) for p in ("hiv", "aids", "virus")]
    runs = {tuple(s.concept_id for s in disambiguate(groups)) for _ in range(5)}
    assert len(runs) == 1


# --- the full pipeline -------------------------------------------------------------


def _annotate(fixtures_dir, pipeline, name):
    return annotate_message(
        _load(fixtures_dir, name),
        pipeline["store"],
        pipeline["gazetteer"],
        pipeline["stopwords"],
        pipeline["lexicon"],
    )


def test_sample_message_annotations_golden(fixtures_dir, pipeline):
    annotated = _annotate(fixtures_dir, pipeline, "msg-1")
    got = [
        (a.span.start, a.span.end, a.span.kind, a.sense.concept_id if a.sense else None)
        for a in annotated.annotations
    ]
    assert got == [
        (13, 16, "NounPhrase", "hiv"),
        (58, 62, "NounPhrase", "aids"),
        (85, 90, "NounPhrase", None),
        (107, 111, "NounPhrase", "life"),
        (125, 130, "NounPhrase", None),
        (151, 156, "NounPhrase", "viruses"),
        (175, 181, "NounPhrase", "humans"),
        (235, 240, "NounPhrase", "leprosy"),
    ]


def test_every_sensed_phrase_gets_exactly_one_sense(fixtures_dir, pipeline):
    annotated = _annotate(fixtures_dir, pipeline, "msg-1")
    for ann in annotated.annotations:
        if ann.span.kind != "NounPhrase":
            continue
        surface = normalize_phrase(annotated.surface(ann))
        senses = pipeline["store"].senses_of(surface)
        assert (ann.sense is not None) == bool(senses)
        if ann.sense is not None:
            assert ann.sense in senses


def test_repeated_surfaces_share_the_sense_decision(fixtures_dir, pipeline):
    text = "The virus fought the virus."
    annotated = annotate_message(
        Message("m", "carol", (), text),
        pipeline["store"],
        pipeline["gazetteer"],
        pipeline["stopwords"],
        pipeline["lexicon"],
    )
    senses = {a.sense.concept_id for a in annotated.annotations if a.sense}
    assert len(senses) == 1


def test_annotation_is_deterministic_and_serializable(fixtures_dir, pipeline):
    first = _annotate(fixtures_dir, pipeline, "msg-1")
    second = _annotate(fixtures_dir, pipeline, "msg-1")
    assert serialize_annotated(first) == serialize_annotated(second)
    parsed = parse_annotated(serialize_annotated(first), pipeline["store"])
    assert parsed == first


def test_mixed_entity_and_phrase_message(fixtures_dir, pipeline):
    annotated = _annotate(fixtures_dir, pipeline, "msg-3")
    kinds = [a.span.kind for a in annotated.annotations]
    assert kinds == [
        "NE_Person",
        "NE_Person",
        "NE_Location",
        "NE_Date",
        "NE_Money",
        "NE_Percent",
    ]
    assert all(a.sense is None for a in annotated.annotations)


def test_message_files_validate(fixtures_dir):
    with pytest.raises(FormatError):
        parse_annotated("message x\ntext hi", None)
    message = _load(fixtures_dir, "msg-2")
    assert message.publisher == "bob"
    assert message.co_publishers == ("ted",)


def test_annotated_message_rejects_overlap(fixtures_dir, pipeline):
    message = _load(fixtures_dir, "msg-2")
    with pytest.raises(ValidationError):
        AnnotatedMessage(
            message,
            (
                Annotation(Span(0, 5, "NounPhrase")),
                Annotation(Span(3, 8, "NounPhrase")),
            ),
        )


def test_sense_lookup_cost_is_flat_across_ambiguity(fixtures_dir):
    fruit = load_taxonomy(fixtures_dir / "fruit.tax")
    assert len(fruit.senses_of("apple")) == 5
    assert len(fruit.senses_of("berry")) == 100

    def best_time(phrase):
        timer = timeit.Timer(lambda: fruit.senses_of(phrase))
        return min(timer.repeat(repeat=7, number=300))

    low, high = best_time("apple"), best_time("berry")
    ratio = high / low
    assert ratio < 2.0, f"100-sense lookup {ratio:.2f}x slower than 5-sense"
