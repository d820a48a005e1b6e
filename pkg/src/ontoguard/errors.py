"""Exception hierarchy shared by all ontoguard modules."""

from __future__ import annotations


class OntoGuardError(Exception):
    """Base class for every domain error raised by this package."""


class DuplicateIdError(OntoGuardError):
    """An id (class, instance, rule target) is already taken."""


class UnknownReferenceError(OntoGuardError):
    """A reference does not resolve to a known class, instance or concept."""


class CycleError(OntoGuardError):
    """An edge would make a taxonomy or parent graph cyclic."""


class ValidationError(OntoGuardError):
    """A value violates a structural invariant."""


class IntegrityError(OntoGuardError):
    """Stored data contradicts itself (duplicates, dangling links)."""


class NotFoundError(OntoGuardError):
    """A requested stored object does not exist."""


class FormatError(OntoGuardError):
    """A fixture or storage file cannot be parsed."""


class AuthorityError(OntoGuardError):
    """A subject lacks the delegation authority required for an operation."""


class DelegationLimitError(OntoGuardError):
    """A delegation would exceed the maximum delegation depth."""


class SignatureError(OntoGuardError):
    """Signing or verification is impossible (missing key or signature)."""
