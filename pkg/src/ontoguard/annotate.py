"""Message annotation: named entities, noun phrases, and sense choice.

Named entities are found first (gazetteer surfaces plus regex patterns for
dates, times, money and percentages).  Remaining text is scanned for noun
phrases against a lexicon, longest match first.  Phrases with taxonomy
senses are disambiguated together by minimising the total pairwise
semantic distance between the chosen senses.
"""

from __future__ import annotations

import math
import re
import shlex
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, NotFoundError, ValidationError
from .taxonomy import Sense, TaxonomyStore

NE_CATEGORIES = (
    "Time",
    "Location",
    "Organization",
    "Person",
    "Money",
    "Percent",
    "Date",
)

SPAN_KINDS = tuple(f"NE_{c}" for c in NE_CATEGORIES) + ("NounPhrase",)

_NE_PATTERNS: tuple[tuple[str, re.Pattern[str]], ...] = (
    ("Date", re.compile(r"\b\d{4}-\d{2}-\d{2}\b")),
    ("Date", re.compile(r"\b\d{1,2}/\d{1,2}/\d{2,4}\b")),
    ("Time", re.compile(r"\b\d{1,2}:\d{2}(?::\d{2})?(?:\s?(?:am|pm))?\b", re.IGNORECASE)),
    ("Money", re.compile(r"[$€£]\s?\d+(?:,\d{3})*(?:\.\d+)?")),
    ("Percent", re.compile(r"\b\d+(?:\.\d+)?\s?%")),
)

_TOKEN = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z0-9]+)?")


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in SPAN_KINDS:
            raise ValidationError(f"unknown span kind: {self.kind!r}")
        if not (0 <= self.start < self.end):
            raise ValidationError(f"bad span bounds: {self.start}..{self.end}")


@dataclass(frozen=True)
class Message:
    id: str
    publisher: str
    co_publishers: tuple[str, ...] = ()
    text: str = ""

    def __post_init__(self) -> None:
        if not self.id or not self.publisher:
            raise ValidationError("message needs an id and a publisher")
        if not self.text:
            raise ValidationError("message text must be non-empty")


@dataclass(frozen=True)
class Annotation:
    span: Span
    sense: Sense | None = None


@dataclass(frozen=True)
class AnnotatedMessage:
    message: Message
    annotations: tuple[Annotation, ...]

    def __post_init__(self) -> None:
        last_end = -1
        for ann in self.annotations:
            if ann.span.start < last_end:
                raise ValidationError("annotation spans overlap or are unsorted")
            if ann.span.end > len(self.message.text):
                raise ValidationError("annotation span exceeds the text")
            last_end = ann.span.end

    def surface(self, ann: Annotation) -> str:
        return self.message.text[ann.span.start : ann.span.end]


# --- named entities ---------------------------------------------------------


def load_gazetteer(path: str | Path) -> tuple[tuple[str, str], ...]:
    """Read ``<category> "<surface form>"`` lines."""
    entries = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = shlex.split(line)
        if len(tokens) != 2:
            raise FormatError(f"line {line_no}: expected '<category> \"<surface>\"'")
        category, surface = tokens
        if category not in NE_CATEGORIES:
            raise FormatError(f"line {line_no}: unknown entity category {category!r}")
        if not surface:
            raise FormatError(f"line {line_no}: empty surface form")
        entries.append((category, surface))
    return tuple(entries)


def detect_named_entities(
    text: str, gazetteer: Iterable[tuple[str, str]] = ()
) -> list[Span]:
    """Non-overlapping entity spans; longer matches win, then earlier ones."""
    candidates: list[tuple[int, int, int, str]] = []
    for category, surface in gazetteer:
        pattern = re.compile(rf"\b{re.escape(surface)}\b", re.IGNORECASE)
        for match in pattern.finditer(text):
            candidates.append(
                (match.start(), -(match.end() - match.start()),
                 NE_CATEGORIES.index(category), category)
            )
    for category, pattern in _NE_PATTERNS:
        for match in pattern.finditer(text):
            candidates.append(
                (match.start(), -(match.end() - match.start()),
                 NE_CATEGORIES.index(category), category)
            )
    spans: list[Span] = []
    occupied_until = -1
    for start, neg_len, _, category in sorted(candidates):
        end = start - neg_len
        if start < occupied_until:
            continue
        spans.append(Span(start, end, f"NE_{category}"))
        occupied_until = end
    return spans


# --- noun phrases -----------------------------------------------------------


def normalize_phrase(text: str) -> str:
    return " ".join(m.group(0) for m in _TOKEN.finditer(text)).casefold()


@dataclass(frozen=True)
class Lexicon:
    phrases: frozenset[str]
    max_words: int = field(default=1)

    @staticmethod
    def build(store: TaxonomyStore, extra: Iterable[str] = ()) -> "Lexicon":
        """Normalised resource titles plus extra phrases."""
        phrases = {normalize_phrase(r.title) for r in store.resources.values()}
        phrases |= {normalize_phrase(p) for p in extra}
        phrases.discard("")
        max_words = max((p.count(" ") + 1 for p in phrases), default=1)
        return Lexicon(frozenset(phrases), max_words)


def load_stopwords(path: str | Path) -> frozenset[str]:
    words = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            words.add(line.casefold())
    return frozenset(words)


def load_extra_phrases(path: str | Path) -> tuple[str, ...]:
    out = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return tuple(out)


def extract_noun_phrases(
    text: str,
    stopwords: frozenset[str],
    lexicon: Lexicon,
    blocked: Sequence[Span] = (),
) -> list[Span]:
    """Longest-first lexicon matches over tokens outside ``blocked`` spans."""
    tokens = [
        (m.start(), m.end(), m.group(0).casefold())
        for m in _TOKEN.finditer(text)
        if not any(b.start < m.end() and m.start() < b.end for b in blocked)
    ]
    spans: list[Span] = []
    i = 0
    while i < len(tokens):
        matched = 0
        for length in range(min(lexicon.max_words, len(tokens) - i), 0, -1):
            window = tokens[i : i + length]
            # multi-word phrases must be contiguous words (whitespace only)
            if any(
                text[window[k][1] : window[k + 1][0]].strip()
                for k in range(length - 1)
            ):
                continue
            phrase = " ".join(t[2] for t in window)
            if phrase not in lexicon.phrases:
                continue
            if length == 1 and window[0][2] in stopwords:
                continue
            spans.append(Span(window[0][0], window[-1][1], "NounPhrase"))
            matched = length
            break
        i += matched if matched else 1
    return spans


# --- semantic distance and disambiguation ------------------------------------


def semantic_distance(a: Sense, b: Sense) -> float:
    """Normalised taxonomic distance between two senses, in [0, 1].

    Zero for identical ancestor sets, one for fully disjoint ones; computed
    as log2(1 + |difference| / |union|).
    """
    if not a.ancestors or not b.ancestors:
        raise ValidationError("senses must carry non-empty ancestor sets")
    union = a.ancestors | b.ancestors
    difference = union - (a.ancestors & b.ancestors)
    return math.log2(1.0 + len(difference) / len(union))


class DistanceMatrix:
    """Pairwise distances between senses, keyed by concept id."""

    def __init__(self, senses: Iterable[Sense]):
        unique: dict[str, Sense] = {}
        for sense in senses:
            known = unique.setdefault(sense.concept_id, sense)
            if known.ancestors != sense.ancestors:
                raise ValidationError(
                    f"conflicting ancestor sets for sense {sense.concept_id!r}"
                )
        self._distances: dict[tuple[str, str], float] = {}
        ids = sorted(unique)
        for idx, a in enumerate(ids):
            self._distances[(a, a)] = 0.0
            for b in ids[idx + 1 :]:
                d = semantic_distance(unique[a], unique[b])
                self._distances[(a, b)] = d
                self._distances[(b, a)] = d

    def get(self, a: str, b: str) -> float:
        try:
            return self._distances[(a, b)]
        except KeyError:
            raise NotFoundError(f"no distance for pair ({a!r}, {b!r})") from None


#: Above this many sense combinations the exhaustive search hands over to
#: the anchored greedy approximation.
EXHAUSTIVE_CUTOFF = 100_000


def _score(assignment: Sequence[Sense], matrix: DistanceMatrix) -> float:
    total = 0.0
    for i in range(len(assignment)):
        for j in range(i + 1, len(assignment)):
            total += matrix.get(assignment[i].concept_id, assignment[j].concept_id)
    return total


def _exhaustive(
    groups: Sequence[Sequence[Sense]], matrix: DistanceMatrix
) -> tuple[Sense, ...]:
    best: tuple[float, tuple[str, ...], tuple[Sense, ...]] | None = None
    for combo in product(*groups):
        key = (_score(combo, matrix), tuple(s.concept_id for s in combo))
        if best is None or key < best[:2]:
            best = (key[0], key[1], combo)
    assert best is not None
    return best[2]


def _greedy(
    groups: Sequence[Sequence[Sense]], matrix: DistanceMatrix
) -> tuple[Sense, ...]:
    """Anchored greedy: seed every cross-group sense pair, extend cheapest-first.

    Each anchor pair is completed by repeatedly assigning the sense with the
    minimum added distance to the already-chosen senses; the best completed
    assignment (by total score, then lexicographic sense ids) wins.
    """
    count = len(groups)
    if count == 1:
        return (groups[0][0],)
    best: tuple[float, tuple[str, ...], tuple[Sense, ...]] | None = None
    for i in range(count):
        for j in range(i + 1, count):
            for si in groups[i]:
                for sj in groups[j]:
                    chosen: dict[int, Sense] = {i: si, j: sj}
                    while len(chosen) < count:
                        extension = min(
                            (
                                sum(
                                    matrix.get(s.concept_id, c.concept_id)
                                    for c in chosen.values()
                                ),
                                k,
                                s.concept_id,
                                s,
                            )
                            for k in range(count)
                            if k not in chosen
                            for s in groups[k]
                        )
                        chosen[extension[1]] = extension[3]
                    combo = tuple(chosen[k] for k in range(count))
                    key = (_score(combo, matrix), tuple(s.concept_id for s in combo))
                    if best is None or key < best[:2]:
                        best = (key[0], key[1], combo)
    assert best is not None
    return best[2]


def disambiguate(
    groups: Sequence[Sequence[Sense]], cutoff: int = EXHAUSTIVE_CUTOFF
) -> tuple[Sense, ...]:
    """Choose one sense per group, minimising total pairwise distance.

    Exhaustive search is used while the combination count stays at or under
    ``cutoff``; larger instances use the anchored greedy approximation.
    Ties fall to the lexicographically smallest tuple of concept ids.
    """
    if not groups:
        return ()
    ordered: list[list[Sense]] = []
    combinations = 1
    for group in groups:
        if not group:
            raise ValidationError("every phrase must offer at least one sense")
        ordered.append(sorted(group, key=lambda s: s.concept_id))
        combinations *= len(group)
    matrix = DistanceMatrix(s for group in ordered for s in group)
    if combinations <= cutoff:
        return _exhaustive(ordered, matrix)
    return _greedy(ordered, matrix)


# --- the full pipeline --------------------------------------------------------


def annotate_message(
    message: Message,
    store: TaxonomyStore,
    gazetteer: Iterable[tuple[str, str]] = (),
    stopwords: frozenset[str] = frozenset(),
    lexicon: Lexicon | None = None,
) -> AnnotatedMessage:
    """Detect entities and noun phrases, then pin down one sense per phrase.

    Distinct normalised surfaces are disambiguated jointly; every
    occurrence of a surface receives the same sense.  Phrases without any
    taxonomy sense keep ``sense=None``, as do named entities.
    """
    lexicon = lexicon or Lexicon.build(store)
    entity_spans = detect_named_entities(message.text, gazetteer)
    noun_spans = extract_noun_phrases(message.text, stopwords, lexicon, entity_spans)

    surfaces: dict[str, list[Span]] = {}
    for span in noun_spans:
        phrase = normalize_phrase(message.text[span.start : span.end])
        surfaces.setdefault(phrase, []).append(span)

    with_senses = {
        phrase: senses
        for phrase in surfaces
        if (senses := store.senses_of(phrase))
    }
    chosen: dict[str, Sense] = {}
    if with_senses:
        keys = sorted(with_senses)
        picked = disambiguate([with_senses[k] for k in keys])
        chosen = dict(zip(keys, picked))

    annotations = [Annotation(span) for span in entity_spans]
    for phrase, spans in surfaces.items():
        for span in spans:
            annotations.append(Annotation(span, chosen.get(phrase)))
    annotations.sort(key=lambda a: a.span.start)
    return AnnotatedMessage(message, tuple(annotations))


# --- persistence --------------------------------------------------------------
#
#   message <id> publisher=<id> co_publishers=<id,...>
#   text <raw text on one line>
#   span=<start>,<end> kind=<kind> sense=<concept id|none>
#
# The span lines are optional (a bare message file has none).


def _parse_message_lines(text: str) -> tuple[Message, list[str]]:
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("message "):
        raise FormatError("expected a 'message' header line and a 'text' line")
    header = lines[0].split()
    fields = dict(t.partition("=")[::2] for t in header[2:] if "=" in t)
    if "publisher" not in fields:
        raise FormatError("message header lacks publisher=")
    if not lines[1].startswith("text "):
        raise FormatError("second line must be 'text <content>'")
    message = Message(
        id=header[1],
        publisher=fields["publisher"],
        co_publishers=tuple(
            x for x in fields.get("co_publishers", "").split(",") if x
        ),
        text=lines[1][len("text ") :],
    )
    return message, lines[2:]


def load_message(path: str | Path) -> Message:
    message, trailing = _parse_message_lines(Path(path).read_text(encoding="utf-8"))
    if trailing:
        raise FormatError("unexpected span lines in a plain message file")
    return message


def serialize_annotated(annotated: AnnotatedMessage) -> str:
    msg = annotated.message
    lines = [
        f"message {msg.id} publisher={msg.publisher} "
        f"co_publishers={','.join(msg.co_publishers)}",
        f"text {msg.text}",
    ]
    for ann in annotated.annotations:
        sense = ann.sense.concept_id if ann.sense is not None else "none"
        lines.append(
            f"span={ann.span.start},{ann.span.end} kind={ann.span.kind} sense={sense}"
        )
    return "\n".join(lines) + "\n"


def parse_annotated(text: str, store: TaxonomyStore) -> AnnotatedMessage:
    message, span_lines = _parse_message_lines(text)
    annotations = []
    for line in span_lines:
        fields = dict(t.partition("=")[::2] for t in line.split() if "=" in t)
        if set(fields) != {"span", "kind", "sense"}:
            raise FormatError(f"malformed span line: {line!r}")
        try:
            start, end = (int(x) for x in fields["span"].split(","))
        except ValueError as exc:
            raise FormatError(f"bad span bounds in {line!r}") from exc
        sense = None
        if fields["sense"] != "none":
            closure = store.ancestors(fields["sense"])
            sense = Sense(fields["sense"], closure)
        annotations.append(Annotation(Span(start, end, fields["kind"]), sense))
    return AnnotatedMessage(message, tuple(annotations))


def load_annotated(path: str | Path, store: TaxonomyStore) -> AnnotatedMessage:
    return parse_annotated(Path(path).read_text(encoding="utf-8"), store)
