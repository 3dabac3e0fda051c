"""Exception hierarchy shared by every substrate module."""

from __future__ import annotations


class PrismError(Exception):
    """Base class for all substrate errors."""


class TargetNotFound(PrismError, KeyError):
    pass


class DuplicateId(PrismError, ValueError):
    pass


class InvalidOperation(PrismError, ValueError):
    pass


class EmptyCorpus(PrismError, ValueError):
    pass


class EmptyContent(PrismError, ValueError):
    pass


class SupportMismatch(PrismError, ValueError):
    pass


class InfeasibleDmin(PrismError, ValueError):
    pass


class ExtractorFailure(PrismError, RuntimeError):
    pass


class NotQuiescent(PrismError, RuntimeError):
    pass


class EmptyPopulation(PrismError, ValueError):
    pass


class TraceNotFound(PrismError, KeyError):
    pass


class TraceAlreadyClosed(PrismError, RuntimeError):
    pass


class RewardOutOfRange(PrismError, ValueError):
    pass


class ForkConflict(PrismError, RuntimeError):
    pass


class OutOfOrderTick(PrismError, RuntimeError):
    pass


class NodeNotFound(PrismError, KeyError):
    pass


class IoFailure(PrismError, OSError):
    pass


class CorruptIndex(PrismError, ValueError):
    pass


class SchemaVersionMismatch(PrismError, ValueError):
    pass


class ConfigInvalid(PrismError, ValueError):
    pass
