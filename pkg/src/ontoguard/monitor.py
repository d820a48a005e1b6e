"""Content monitor: privacy rules, reader resolution, sanitization, metrics.

A publisher states, once, how much each category of contact may learn about
each sensitive topic.  When a reader asks for a message the monitor resolves
the strictest applicable disclosure level across the publisher and every
co-publisher, generalises any annotation that falls below that level to the
level's own term, and caches the resulting variant for identical readers.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotate import AnnotatedMessage, Annotation, Span
from .errors import (
    DuplicateIdError,
    FormatError,
    NotFoundError,
    UnknownReferenceError,
    ValidationError,
)
from .taxonomy import TaxonomyStore

logger = logging.getLogger(__name__)

#: Replacement text for content that must be suppressed outright.
WITHHELD = "[withheld]"

#: A disclosure level: the concept ids a reader category may learn, or
#: ``None`` for full suppression.
AccessLevel = tuple[str, ...] | None


@dataclass(frozen=True)
class PrivacyRule:
    """One ⟨sensitive topic, contact category, access level⟩ statement.

    ``access_levels`` holds the most specific concepts the category may
    learn (several siblings may sit at the same disclosure depth); ``None``
    withholds the topic entirely.
    """

    sensitive_topic: str
    contact_category: str
    access_levels: tuple[str, ...] | None


@dataclass(frozen=True)
class ReaderContext:
    """A reader plus the contact category they hold with each publisher."""

    reader: str
    category_by_user: Mapping[str, str]


@dataclass(frozen=True)
class SanitizedMessage:
    """A per-category variant of an annotated message."""

    source: str
    category_key: tuple[tuple[str, tuple[str, ...] | None], ...]
    text: str
    replacements: tuple[tuple[Span, str], ...]

    def audit_lines(self, original_text: str) -> list[str]:
        return [
            f'span={span.start},{span.end} '
            f'old="{original_text[span.start:span.end]}" new="{label}"'
            for span, label in self.replacements
        ]


@dataclass(frozen=True)
class EvaluationReport:
    """Detection quality against an expert labelling of the same text."""

    expert_count: int
    system_count: int
    intersection: int
    precision: float | None
    recall: float | None
    f_measure: float | None


# --- privacy rules -----------------------------------------------------------


def compile_privacy_rules(
    requirements: Iterable[tuple[str, str, Iterable[str] | None]],
    store: TaxonomyStore,
) -> list[PrivacyRule]:
    """Validate raw ⟨topic, category, levels⟩ triples into rules.

    Every access-level concept must lie inside its topic's branch, and a
    (topic, category) pair may appear only once.
    """
    rules: list[PrivacyRule] = []
    seen: set[tuple[str, str]] = set()
    for topic, category, levels in requirements:
        if topic not in store.concepts:
            raise UnknownReferenceError(f"unknown sensitive topic: {topic!r}")
        if not category:
            raise ValidationError("privacy rule needs a contact category")
        if (topic, category) in seen:
            raise ValidationError(
                f"duplicate privacy rule for topic={topic!r} category={category!r}"
            )
        seen.add((topic, category))
        group: tuple[str, ...] | None = None
        if levels is not None:
            members = tuple(sorted(set(levels)))
            if not members:
                raise ValidationError("access level must name at least one concept")
            for member in members:
                if member not in store.concepts:
                    raise UnknownReferenceError(f"unknown access level: {member!r}")
                if topic not in store.ancestors(member):
                    raise ValidationError(
                        f"access level {member!r} is not under topic {topic!r}"
                    )
            group = members
        rules.append(PrivacyRule(topic, category, group))
    return rules


def parse_privacy_requirements(
    text: str, store: TaxonomyStore
) -> dict[str, tuple[PrivacyRule, ...]]:
    """Parse ``user=.. topic=.. category=.. al=<c1,c2|none>`` lines per user."""
    per_user: dict[str, list[tuple[str, str, tuple[str, ...] | None]]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = dict(t.partition("=")[::2] for t in line.split() if "=" in t)
        if set(fields) != {"user", "topic", "category", "al"}:
            raise FormatError(f"malformed privacy requirement: {line!r}")
        levels: tuple[str, ...] | None
        if fields["al"] == "none":
            levels = None
        else:
            levels = tuple(x for x in fields["al"].split(",") if x)
        per_user.setdefault(fields["user"], []).append(
            (fields["topic"], fields["category"], levels)
        )
    return {
        user: tuple(compile_privacy_rules(triples, store))
        for user, triples in per_user.items()
    }


def load_privacy_requirements(
    path: str | Path, store: TaxonomyStore
) -> dict[str, tuple[PrivacyRule, ...]]:
    return parse_privacy_requirements(
        Path(path).read_text(encoding="utf-8"), store
    )


def parse_contacts(text: str) -> dict[str, dict[str, str]]:
    """Parse ``contact publisher=.. reader=.. category=..`` lines.

    Returns reader -> publisher -> contact category.
    """
    contacts: dict[str, dict[str, str]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        fields = dict(t.partition("=")[::2] for t in parts[1:] if "=" in t)
        if parts[0] != "contact" or set(fields) != {"publisher", "reader", "category"}:
            raise FormatError(f"malformed contact line: {line!r}")
        per_reader = contacts.setdefault(fields["reader"], {})
        if fields["publisher"] in per_reader:
            raise ValidationError(
                f"duplicate contact entry for publisher={fields['publisher']!r} "
                f"reader={fields['reader']!r}"
            )
        per_reader[fields["publisher"]] = fields["category"]
    return contacts


def load_contacts(path: str | Path) -> dict[str, dict[str, str]]:
    return parse_contacts(Path(path).read_text(encoding="utf-8"))


# --- conflict resolution -----------------------------------------------------


def _member_key(member: str, store: TaxonomyStore) -> tuple[int, str]:
    # An ancestor always has a strictly smaller closure than its descendants,
    # so sorting by closure size puts the most general concept first; the id
    # breaks ties between incomparable concepts deterministically.
    return (len(store.ancestors(member)), member)


def _group_key(
    group: tuple[str, ...], store: TaxonomyStore
) -> tuple[tuple[int, str], tuple[str, ...]]:
    return (min(_member_key(m, store) for m in group), group)


def resolve_access_level(
    rules_by_user: Mapping[str, Sequence[PrivacyRule]],
    reader_ctx: ReaderContext,
    publisher: str,
    co_publishers: Sequence[str],
    topic: str,
    store: TaxonomyStore,
) -> tuple[str, ...] | None:
    """Pick the strictest applicable level across all involved users.

    The strictest level is the most general one (the least may be told).
    A missing contact category or missing rule for any involved user is
    treated as full suppression and logged.
    """
    candidates: list[tuple[str, ...]] = []
    for user in (publisher, *co_publishers):
        category = reader_ctx.category_by_user.get(user)
        if category is None:
            logger.warning(
                "reader %r holds no contact category with %r; "
                "withholding topic %r",
                reader_ctx.reader,
                user,
                topic,
            )
            return None
        rule = next(
            (
                r
                for r in rules_by_user.get(user, ())
                if r.sensitive_topic == topic and r.contact_category == category
            ),
            None,
        )
        if rule is None:
            logger.warning(
                "no privacy rule for user=%r topic=%r category=%r; withholding",
                user,
                topic,
                category,
            )
            return None
        if rule.access_levels is None:
            return None
        candidates.append(rule.access_levels)
    return min(candidates, key=lambda group: _group_key(group, store))


def assess_sensitivity(
    annotation: Annotation,
    al: tuple[str, ...] | None,
    store: TaxonomyStore,
) -> bool:
    """True when the annotation's sense must not be shown at this level.

    A sense is sensitive when it lies strictly below any level concept;
    the level concept itself may be shown.  ``al=None`` suppresses all.
    """
    if annotation.sense is None:
        raise ValidationError("annotation carries no sense to assess")
    if al is None:
        return True
    sense = annotation.sense
    return any(
        member in sense.ancestors and member != sense.concept_id for member in al
    )


# --- sanitization ------------------------------------------------------------


def _starts_sentence(text: str, start: int) -> bool:
    i = start - 1
    while i >= 0 and text[i].isspace():
        i -= 1
    return i < 0 or text[i] in ".!?"


def sanitize(
    annotated: AnnotatedMessage,
    effective_al_by_topic: Mapping[str, tuple[str, ...] | None],
    store: TaxonomyStore,
) -> SanitizedMessage:
    """Replace every sensitive annotation with its disclosure-level term.

    An annotation is checked against the level of every topic whose branch
    contains its sense; suppression wins over generalisation, and the most
    general applicable level concept supplies the replacement label.
    """
    text = annotated.message.text
    replacements: list[tuple[Span, str]] = []
    for ann in annotated.annotations:
        if ann.sense is None:
            continue
        sense = ann.sense
        covering = [t for t in effective_al_by_topic if t in sense.ancestors]
        if not covering:
            continue
        if any(effective_al_by_topic[t] is None for t in covering):
            replacements.append((ann.span, WITHHELD))
            continue
        applicable = {
            member
            for t in covering
            for member in effective_al_by_topic[t]  # type: ignore[union-attr]
            if member in sense.ancestors and member != sense.concept_id
        }
        if not applicable:
            continue
        member = min(applicable, key=lambda m: _member_key(m, store))
        label = store.label_of(member).lower()
        if _starts_sentence(text, ann.span.start):
            label = label[0].upper() + label[1:]
        replacements.append((ann.span, label))

    pieces: list[str] = []
    cursor = 0
    for span, label in replacements:
        pieces.append(text[cursor : span.start])
        pieces.append(label)
        cursor = span.end
    pieces.append(text[cursor:])
    key = tuple(sorted(effective_al_by_topic.items()))
    return SanitizedMessage(
        source=annotated.message.id,
        category_key=key,
        text="".join(pieces),
        replacements=tuple(replacements),
    )


class AccessMonitor:
    """Serves per-reader sanitized variants of annotated messages.

    Variants are cached by (message, effective levels); readers that share
    a contact category therefore share the exact same variant object.
    """

    def __init__(
        self,
        store: TaxonomyStore,
        rules_by_user: Mapping[str, Sequence[PrivacyRule]],
        contacts: Mapping[str, Mapping[str, str]],
        messages: Iterable[AnnotatedMessage] = (),
    ) -> None:
        self.store = store
        self.rules_by_user = {u: tuple(rs) for u, rs in rules_by_user.items()}
        self.contacts = {r: dict(m) for r, m in contacts.items()}
        self._messages: dict[str, AnnotatedMessage] = {}
        self._cache: dict[object, SanitizedMessage] = {}
        self._insert_lock = threading.Lock()
        for annotated in messages:
            self.add_message(annotated)

    def add_message(self, annotated: AnnotatedMessage) -> None:
        if annotated.message.id in self._messages:
            raise DuplicateIdError(f"duplicate message id: {annotated.message.id!r}")
        self._messages[annotated.message.id] = annotated

    def annotated(self, message_id: str) -> AnnotatedMessage:
        try:
            return self._messages[message_id]
        except KeyError:
            raise NotFoundError(f"unknown message: {message_id!r}") from None

    def effective_levels(
        self, reader: str, message_id: str
    ) -> dict[str, tuple[str, ...] | None]:
        """Resolve levels for every topic that touches the message.

        Topics none of the message's senses fall under are skipped: they
        can never mark a span sensitive, so resolving them would only
        produce spurious missing-rule warnings.
        """
        annotated = self.annotated(message_id)
        msg = annotated.message
        involved = (msg.publisher, *msg.co_publishers)
        topics = sorted(
            {
                rule.sensitive_topic
                for user in involved
                for rule in self.rules_by_user.get(user, ())
            }
        )
        senses = [a.sense for a in annotated.annotations if a.sense is not None]
        ctx = ReaderContext(reader, self.contacts.get(reader, {}))
        return {
            topic: resolve_access_level(
                self.rules_by_user, ctx, msg.publisher, msg.co_publishers,
                topic, self.store,
            )
            for topic in topics
            if any(topic in sense.ancestors for sense in senses)
        }

    def read_message(self, reader: str, message_id: str) -> SanitizedMessage:
        annotated = self.annotated(message_id)
        effective = self.effective_levels(reader, message_id)
        key = (message_id, tuple(sorted(effective.items())))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        variant = sanitize(annotated, effective, self.store)
        with self._insert_lock:
            return self._cache.setdefault(key, variant)


# --- detection metrics ---------------------------------------------------------


def _span_key(span: Span | Sequence[int]) -> tuple[int, int]:
    if isinstance(span, Span):
        return (span.start, span.end)
    start, end = span
    return (int(start), int(end))


def evaluate(
    system_spans: Iterable[Span | Sequence[int]],
    expert_spans: Iterable[Span | Sequence[int]],
) -> EvaluationReport:
    """Precision/recall/F of detected sensitive terms against expert labels.

    A metric whose denominator is zero is reported as ``None``.
    """
    system = {_span_key(s) for s in system_spans}
    expert = {_span_key(s) for s in expert_spans}
    intersection = len(system & expert)
    precision = 100.0 * intersection / len(system) if system else None
    recall = 100.0 * intersection / len(expert) if expert else None
    f_measure = None
    if precision is not None and recall is not None and precision + recall > 0:
        f_measure = 2 * precision * recall / (precision + recall)
    return EvaluationReport(
        expert_count=len(expert),
        system_count=len(system),
        intersection=intersection,
        precision=precision,
        recall=recall,
        f_measure=f_measure,
    )


def _truncate(value: Fraction, places: int) -> str:
    scaled = value * 10**places
    whole = scaled.numerator // scaled.denominator
    if places == 0:
        return str(whole)
    digits = str(whole).rjust(places + 1, "0")
    integer, fractional = digits[:-places], digits[-places:]
    fractional = fractional.rstrip("0")
    return integer + ("." + fractional if fractional else "")


def paper_style(report: EvaluationReport) -> dict[str, str]:
    """Render the metrics the way the golden tables print them.

    Percentages are truncated (never rounded up): precision and recall to
    two decimals, the F-measure to a whole number.  Exact arithmetic via
    Fraction keeps 700/9 from drifting before truncation.
    """
    precision = (
        Fraction(100 * report.intersection, report.system_count)
        if report.system_count
        else None
    )
    recall = (
        Fraction(100 * report.intersection, report.expert_count)
        if report.expert_count
        else None
    )
    f_measure = None
    if precision is not None and recall is not None and precision + recall > 0:
        f_measure = 2 * precision * recall / (precision + recall)

    def fmt(value: Fraction | None, places: int) -> str:
        return "n/a" if value is None else _truncate(value, places)

    return {
        "precision": fmt(precision, 2),
        "recall": fmt(recall, 2),
        "f_measure": fmt(f_measure, 0),
    }
