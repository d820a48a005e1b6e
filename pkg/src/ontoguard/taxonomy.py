"""Concept taxonomy and resource index backing sense lookup.

Concepts form a DAG (multiple parents allowed).  Resources are titled
entries pinned to one concept each, optionally linked to related resources
and filed under category concepts.  A phrase's candidate senses come from
title lookup, one hop of link expansion, and the ancestor closures of the
concepts involved.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import (
    CycleError,
    DuplicateIdError,
    FormatError,
    UnknownReferenceError,
    ValidationError,
)


@dataclass(frozen=True)
class Concept:
    id: str
    label: str
    parents: frozenset[str] = frozenset()


@dataclass(frozen=True)
class KbResource:
    id: str
    title: str
    concept: str
    links: frozenset[str] = frozenset()
    categories: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Sense:
    """One candidate meaning: a concept plus its full ancestor set."""

    concept_id: str
    ancestors: frozenset[str]


class TaxonomyStore:
    def __init__(
        self, concepts: Iterable[Concept], resources: Iterable[KbResource]
    ) -> None:
        self.concepts: dict[str, Concept] = {}
        for concept in concepts:
            if concept.id in self.concepts:
                raise DuplicateIdError(f"duplicate concept id: {concept.id!r}")
            if not concept.label:
                raise ValidationError(f"concept {concept.id!r} has an empty label")
            self.concepts[concept.id] = concept
        self.resources: dict[str, KbResource] = {}
        for resource in resources:
            if resource.id in self.resources:
                raise DuplicateIdError(f"duplicate resource id: {resource.id!r}")
            if not resource.title:
                raise ValidationError(f"resource {resource.id!r} has an empty title")
            self.resources[resource.id] = resource

        for concept in self.concepts.values():
            for parent in concept.parents:
                if parent not in self.concepts:
                    raise UnknownReferenceError(
                        f"concept {concept.id!r} has unknown parent {parent!r}"
                    )
        for resource in self.resources.values():
            if resource.concept not in self.concepts:
                raise UnknownReferenceError(
                    f"resource {resource.id!r} points at unknown concept "
                    f"{resource.concept!r}"
                )
            for link in resource.links:
                if link not in self.resources:
                    raise UnknownReferenceError(
                        f"resource {resource.id!r} links to unknown resource {link!r}"
                    )
            for category in resource.categories:
                if category not in self.concepts:
                    raise UnknownReferenceError(
                        f"resource {resource.id!r} filed under unknown category "
                        f"{category!r}"
                    )

        # Precompute ancestor closures; this both caches lookups and proves
        # the parent graph acyclic.
        self._ancestors: dict[str, frozenset[str]] = {}
        for concept_id in self.concepts:
            self._close(concept_id, ())
        # The store is immutable, so per-concept senses and per-phrase sense
        # lists can be built once and reused; lookup cost then stays flat no
        # matter how ambiguous a phrase is.
        self._title_index = sorted(
            ((r.title.casefold(), r.id) for r in self.resources.values()),
            key=lambda pair: pair[1],
        )
        self._plain_sense = {
            cid: Sense(cid, self._ancestors[cid]) for cid in self.concepts
        }
        self._sense_cache: dict[str, tuple[Sense, ...]] = {}

    def _close(self, concept_id: str, trail: tuple[str, ...]) -> frozenset[str]:
        cached = self._ancestors.get(concept_id)
        if cached is not None:
            return cached
        if concept_id in trail:
            cycle = " -> ".join(trail + (concept_id,))
            raise CycleError(f"concept parent cycle: {cycle}")
        closure = {concept_id}
        for parent in self.concepts[concept_id].parents:
            closure |= self._close(parent, trail + (concept_id,))
        result = frozenset(closure)
        self._ancestors[concept_id] = result
        return result

    # -- queries ---------------------------------------------------------------

    def ancestors(self, concept_id: str) -> frozenset[str]:
        """Every concept at or above ``concept_id`` (reflexive closure)."""
        try:
            return self._ancestors[concept_id]
        except KeyError:
            raise UnknownReferenceError(f"unknown concept: {concept_id!r}") from None

    def label_of(self, concept_id: str) -> str:
        try:
            return self.concepts[concept_id].label
        except KeyError:
            raise UnknownReferenceError(f"unknown concept: {concept_id!r}") from None

    def lookup_by_title(self, phrase: str) -> list[KbResource]:
        """Resources whose title contains ``phrase``, case-insensitively."""
        if not phrase.strip():
            raise ValidationError("lookup phrase must be non-empty")
        needle = phrase.casefold()
        return [
            self.resources[rid]
            for title, rid in self._title_index
            if needle in title
        ]

    def expand_related(self, found: Iterable[KbResource]) -> list[KbResource]:
        """The input resources plus their direct link targets (one hop)."""
        out: dict[str, KbResource] = {}
        for resource in found:
            out[resource.id] = resource
            for link in resource.links:
                out.setdefault(link, self.resources[link])
        return sorted(out.values(), key=lambda r: r.id)

    def senses_of(self, phrase: str) -> tuple[Sense, ...]:
        """Candidate senses for a phrase, sorted by concept id.

        Resources found by title (plus one link hop) contribute their
        concept; each sense's ancestor set is the concept closure united
        with the closures of every category the contributing resources are
        filed under.  Results are cached per phrase — the store is
        immutable — so repeat queries cost the same however many senses a
        phrase has.
        """
        needle = phrase.casefold()
        cached = self._sense_cache.get(needle)
        if cached is not None:
            return cached
        expanded = self.expand_related(self.lookup_by_title(phrase))
        categories_by_concept: dict[str, set[str]] = {}
        for resource in expanded:
            categories_by_concept.setdefault(resource.concept, set()).update(
                resource.categories
            )
        senses = []
        for concept_id in sorted(categories_by_concept):
            categories = categories_by_concept[concept_id]
            if categories:
                closure = set(self.ancestors(concept_id))
                for category in categories:
                    closure |= self.ancestors(category)
                senses.append(Sense(concept_id, frozenset(closure)))
            else:
                senses.append(self._plain_sense[concept_id])
        result = tuple(senses)
        self._sense_cache[needle] = result
        return result

    def is_strict_descendant(self, concept_id: str, ancestor_id: str) -> bool:
        """True when ``concept_id`` sits strictly below ``ancestor_id``."""
        if ancestor_id not in self.concepts:
            raise UnknownReferenceError(f"unknown concept: {ancestor_id!r}")
        return concept_id != ancestor_id and ancestor_id in self.ancestors(concept_id)


# ---------------------------------------------------------------------------
# fixture file format
#
#   concept <id> "<label>" parents=<id,...>
#   resource <id> title="<text>" concept=<id> links=<id,...> categories=<id,...>
#
# Order does not matter; references are resolved after the whole file is
# read.  '#' starts a comment line.
# ---------------------------------------------------------------------------


def parse_taxonomy(text: str) -> TaxonomyStore:
    concepts: list[Concept] = []
    resources: list[KbResource] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise FormatError(f"line {line_no}: {exc}") from exc
        kind, rest = tokens[0], tokens[1:]
        if kind == "concept":
            if len(rest) != 3 or not rest[2].startswith("parents="):
                raise FormatError(f"line {line_no}: malformed concept line")
            parents = frozenset(p for p in rest[2][len("parents=") :].split(",") if p)
            concepts.append(Concept(rest[0], rest[1], parents))
        elif kind == "resource":
            if not rest:
                raise FormatError(f"line {line_no}: malformed resource line")
            rid = rest[0]
            fields: dict[str, str] = {}
            for token in rest[1:]:
                key, sep, value = token.partition("=")
                if not sep or key in fields:
                    raise FormatError(f"line {line_no}: bad resource field {token!r}")
                fields[key] = value
            missing = {"title", "concept"} - set(fields)
            if missing:
                raise FormatError(f"line {line_no}: resource lacks {sorted(missing)}")
            unknown = set(fields) - {"title", "concept", "links", "categories"}
            if unknown:
                raise FormatError(f"line {line_no}: unknown fields {sorted(unknown)}")
            resources.append(
                KbResource(
                    id=rid,
                    title=fields["title"],
                    concept=fields["concept"],
                    links=frozenset(x for x in fields.get("links", "").split(",") if x),
                    categories=frozenset(
                        x for x in fields.get("categories", "").split(",") if x
                    ),
                )
            )
        else:
            raise FormatError(f"line {line_no}: unknown directive {kind!r}")
    return TaxonomyStore(concepts, resources)


def load_taxonomy(path: str | Path) -> TaxonomyStore:
    return parse_taxonomy(Path(path).read_text(encoding="utf-8"))
