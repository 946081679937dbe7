"""Exception types shared across the toolkit."""

from __future__ import annotations


class CrowdCoverError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CrowdCoverError):
    """Invalid configuration, schema, manifest, or parameter set."""


class PartialLabelError(CrowdCoverError):
    """An operation needed a label an item does not carry."""


class AnswerSourceError(CrowdCoverError):
    """An answer source could not produce an answer."""


class DuplicateTaskError(AnswerSourceError):
    """The same task was submitted to a source twice; engines never re-ask."""


class UnknownItemError(AnswerSourceError):
    """A task referenced an item id the source does not know."""


class TranscriptMissError(AnswerSourceError):
    """A replayed transcript has no entry for the requested task."""


class CoverageRunError(AnswerSourceError):
    """An engine run aborted mid-flight; carries the partial trace."""

    def __init__(self, message: str, *, trace=(), tasks_issued: int = 0):
        super().__init__(message)
        self.trace = tuple(trace)
        self.tasks_issued = tasks_issued
