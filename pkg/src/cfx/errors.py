"""Shared exception taxonomy.

Two broad families matter to callers: bad inputs (schemas, entities,
constraint files, rule text) and misbehaving classifier backends. The CLI
maps them to distinct exit codes.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class InputError(EngineError):
    """Invalid or inconsistent user-supplied input."""


class BackendError(EngineError):
    """A classifier backend failed to produce a label."""


class NothingToExplainError(InputError):
    """The entity under scrutiny already carries label 0."""
